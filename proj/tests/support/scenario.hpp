/*
 * Copyright 2026 The pagerag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Scripted end-to-end scenarios: a six-page corpus, a strict mock and a
// scenario description from which every expected provider request is derived.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "pagerag/config.hpp"
#include "pagerag/corpus.hpp"
#include "pagerag/pipeline.hpp"
#include "pagerag/prompts.hpp"
#include "pagerag/providers.hpp"
#include "pagerag/vector_index.hpp"

namespace pagerag::testing {

std::filesystem::path source_dir();
std::filesystem::path prompts_dir();
std::filesystem::path cli_path();

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

struct Corpus {
    corpus::Manifest manifest;
    index::VectorIndex index;
};

/// Six pages in three documents, 4-d page vectors. With `page_dir` the pages
/// are written as PNGs and referenced by file:// URIs; otherwise https URIs.
Corpus make_small_corpus(const std::optional<std::filesystem::path>& page_dir = std::nullopt);

struct ScenarioSpec {
    std::string query;
    bool atomic = false;
    std::vector<std::string> subquestions;
    std::vector<pipeline::Route> routes;               // router decision per subquestion
    std::vector<std::vector<std::string>> rewrites;    // rewriter output per subquestion
    std::map<std::string, Matrix> query_embeddings;    // by query text
    std::map<std::pair<int, std::int64_t>, int> grades;  // (subq index, page_id) -> grade; default 0
};

/// Three subquestions: SQ1 routed RAG and keeps one page, SQ2 routed RAG with
/// nothing relevant, SQ3 routed DIRECT.
ScenarioSpec three_subquestion_spec();

std::string rag_answer_text(int subq, const std::vector<std::int64_t>& pages);
std::string direct_answer_text(int subq);
inline const std::string kSynthesisText = "Combined answer: adjust the dose, avoid the interaction, monitor potassium.";

/// Expected mode per subquestion and cited page ids under `config`.
struct Expectation {
    std::vector<pipeline::AnswerMode> modes;
    std::vector<std::int64_t> citations;
    int judge_calls = 0;
};

/// Scripts every request the pipeline will make for `spec` under `config`
/// and returns what the run should produce.
Expectation script_scenario(providers::MockScript& script, const ScenarioSpec& spec, const PipelineConfig& config,
                            const PromptSet& prompts, const Corpus& corpus);

struct Harness {
    Corpus corpus;
    PromptSet prompts;
    std::shared_ptr<providers::MockScript> script;
    std::shared_ptr<providers::MockProvider> mock;
    providers::ProviderSet providers;

    pipeline::PipelineDeps deps(bool test_mode = true) const {
        return {corpus.index, corpus.manifest, providers, prompts, RunEnvironment(test_mode)};
    }
};

std::unique_ptr<Harness> make_harness(const std::optional<std::filesystem::path>& page_dir = std::nullopt);

PipelineConfig config_with(const std::string& ablations);

}  // namespace pagerag::testing
