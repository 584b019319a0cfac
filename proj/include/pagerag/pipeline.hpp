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

// Controllable page-image RAG: plan -> route -> (rewrite -> retrieve ->
// judge)* -> answer* -> synthesize. Every decision lands in the trace;
// provider failures degrade to a safe default and leave a flag, except
// for answer generation, which fails the query.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pagerag/config.hpp"
#include "pagerag/corpus.hpp"
#include "pagerag/prompts.hpp"
#include "pagerag/providers.hpp"
#include "pagerag/trace.hpp"
#include "pagerag/util.hpp"
#include "pagerag/vector_index.hpp"

namespace pagerag::pipeline {

inline constexpr int kMaxSubquestions = 3;
inline constexpr int kMaxRewrites = 2;

enum class Route { RAG, DIRECT };
enum class AnswerMode { RAG, DIRECT, RAG_FALLBACK_DIRECT };
enum class Relevance { Irrelevant = 0, Partial = 1, Relevant = 2 };

std::string_view to_string(Route r);
std::string_view to_string(AnswerMode m);

struct SubQuestion {
    int index = 1;  // 1-based
    std::string text;
    Route route = Route::DIRECT;
};

struct RetrievalQuery {
    int subq_index = 1;
    std::string text;
    int ordinal = 1;  // 1..2
};

struct EvidencePage {
    index::RetrievalCandidate candidate;
    std::optional<Relevance> grade;  // empty when judging was skipped
    std::string judge_rationale;
    bool kept = false;
    std::string image_uri;
};

struct JudgeOutcome {
    std::vector<EvidencePage> pages;  // every candidate, in candidate order
    std::vector<EvidencePage> kept;   // ordered by (-grade, distance, page_id), truncated
};

struct EvidenceRef {
    std::int64_t page_id = 0;
    std::string image_uri;

    bool operator==(const EvidenceRef&) const = default;
};

struct AnswerUnit {
    int subq_index = 1;
    std::string subq_text;
    Route route = Route::DIRECT;
    AnswerMode mode = AnswerMode::DIRECT;
    std::string answer_text;
    std::vector<EvidenceRef> evidence_refs;
};

using trace::Citation;
using trace::FinalAnswer;

struct PipelineDeps {
    const index::VectorIndex& index;
    const corpus::Manifest& manifest;
    const providers::ProviderSet& providers;
    const PromptSet& prompts;
    RunEnvironment env;
};

/// Every embedder call failed for a subquestion; triggers the DIRECT fallback.
class RetrievalFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A control-stage reply that is not the expected JSON object.
class ModelOutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses a control-stage reply; one surrounding markdown code fence is allowed.
nlohmann::json parse_control_reply(std::string_view text);

/// Unrecoverable run error. Carries the finalized (Failed) partial trace.
class PipelineFailure : public std::runtime_error {
public:
    PipelineFailure(const std::string& what, trace::ProcessTrace partial)
        : std::runtime_error(what), trace_(std::move(partial)) {}
    const trace::ProcessTrace& trace() const noexcept { return trace_; }

private:
    trace::ProcessTrace trace_;
};

/// Per-run state shared by the stage operations: dependencies, effective
/// config, event buffer and provider call counters. Thread-safe.
class RunContext {
public:
    RunContext(const PipelineDeps& deps, PipelineConfig config, std::string original_query);

    const PipelineDeps& deps() const noexcept { return deps_; }
    const PipelineConfig& config() const noexcept { return config_; }
    const std::string& query() const noexcept { return query_; }

    void record(trace::Stage stage, std::optional<int> subq, trace::Payload payload);
    void warn(std::optional<int> subq, std::string code, std::string message);
    void degrade(std::optional<int> subq, std::string flag, std::string detail);

    /// Counts the call against the role, then invokes its provider.
    providers::ProviderResponse call(providers::Role role, const providers::ProviderRequest& request);

    std::vector<trace::StageEvent> events() const;
    std::map<std::string, int> provider_calls() const;
    void add_stage_time(trace::Stage stage, std::int64_t ms);
    std::map<std::string, std::int64_t> stage_ms() const;

private:
    const PipelineDeps& deps_;
    PipelineConfig config_;
    std::string query_;
    mutable std::mutex mutex_;
    std::vector<trace::StageEvent> events_;
    std::map<std::string, int> calls_;
    std::map<std::string, std::int64_t> stage_ms_;
};

// Request builders. The pipeline sends exactly these requests, so tests
// and mock scripts can address them by fingerprint.
providers::ProviderRequest planner_request(const PromptSet& p, const PipelineConfig& c, const std::string& query);
providers::ProviderRequest router_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                          const std::string& subq);
providers::ProviderRequest rewriter_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                            const std::string& subq);
providers::ProviderRequest embed_query_request(const std::string& text);
providers::ProviderRequest embed_page_request(const std::string& image_uri);
providers::ProviderRequest judge_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                         const std::string& subq, const std::string& image_uri);
providers::ProviderRequest rag_answer_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                              const std::string& subq, const std::vector<std::string>& image_uris);
providers::ProviderRequest direct_answer_request(const PromptSet& p, const PipelineConfig& c,
                                                 const std::string& query, const std::string& subq);
providers::ProviderRequest synthesis_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                             const std::vector<AnswerUnit>& units);

/// Partial answers as handed to the synthesizer, and the degraded fallback text.
std::string render_subanswers(const std::vector<AnswerUnit>& units);

// Stage operations.
std::vector<SubQuestion> plan(RunContext& ctx);
Route route(RunContext& ctx, const SubQuestion& subq);
std::vector<RetrievalQuery> rewrite(RunContext& ctx, const SubQuestion& subq);
std::vector<index::RetrievalCandidate> retrieve_candidates(RunContext& ctx, const SubQuestion& subq,
                                                           const std::vector<RetrievalQuery>& queries);
JudgeOutcome judge_relevance(RunContext& ctx, const SubQuestion& subq,
                             const std::vector<index::RetrievalCandidate>& candidates);
AnswerUnit answer_subquestion(RunContext& ctx, const SubQuestion& subq, const std::vector<EvidencePage>& kept);
FinalAnswer synthesize(RunContext& ctx, const std::vector<AnswerUnit>& units);

struct PipelineResult {
    FinalAnswer answer;
    trace::ProcessTrace trace;
    std::vector<AnswerUnit> units;
    std::map<std::string, std::int64_t> stage_ms;
    std::int64_t total_ms = 0;
};

/// Runs one query end to end. Throws PipelineFailure on unrecoverable errors.
PipelineResult run_pipeline(const std::string& query, const PipelineConfig& config, const PipelineDeps& deps);

}  // namespace pagerag::pipeline
