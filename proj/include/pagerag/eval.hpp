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

// Rubric-graded evaluation over HealthBench-style JSONL: keyword subset
// selection, per-example scoring, aggregation and the ablation matrix.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pagerag/config.hpp"
#include "pagerag/pipeline.hpp"
#include "pagerag/prompts.hpp"
#include "pagerag/providers.hpp"
#include "pagerag/trace.hpp"

namespace pagerag::eval {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Declaration order is the report column order.
enum class Axis { Accuracy, Completeness, InstructionFollowing, ContextAwareness, CommunicationQuality };
inline constexpr std::array<Axis, 5> kAxes = {Axis::Accuracy, Axis::Completeness, Axis::InstructionFollowing,
                                              Axis::ContextAwareness, Axis::CommunicationQuality};

std::string_view to_string(Axis axis);       // "accuracy", "instruction_following", ...
std::string_view column_title(Axis axis);    // "Accuracy", "Instruction Following", ...
std::optional<Axis> parse_axis(std::string_view name);

enum class Subset { Main, Consensus, Hard };
std::string_view to_string(Subset s);
Subset parse_subset(std::string_view s);

struct Turn {
    std::string role;
    std::string text;
};

struct RubricCriterion {
    std::string text;
    int points = 0;  // nonzero, may be negative
    std::set<Axis> axes;
};

struct EvalExample {
    std::string example_id;
    std::vector<Turn> conversation;
    std::vector<RubricCriterion> rubric;
    std::set<Subset> subset_tags;
    nlohmann::json source;  // the raw record
};

/// Reads line-delimited JSON objects. Blank lines are skipped.
std::vector<nlohmann::json> load_jsonl(const std::filesystem::path& path);

/// Resolves the file for a subset inside a dataset directory: `<subset>.jsonl`
/// first, then the benchmark's published file names.
std::filesystem::path locate_subset_file(const std::filesystem::path& dir, Subset subset);

/// Converts one benchmark record. `line` is used for the fallback id.
EvalExample parse_example(const nlohmann::json& record, Subset subset, std::size_t line = 0);

// --- subset selection ------------------------------------------------------

enum class MatchMode { Substring, WordBoundary };

const std::vector<std::string>& default_keywords();

/// First present of "question", "prompt", "content". A message list is
/// flattened by joining the message contents with newlines.
std::optional<std::string> extract_question_text(const nlohmann::json& record);

bool matches_keywords(std::string_view lowered_text, const std::vector<std::string>& keywords, MatchMode mode);

struct FilterResult {
    std::vector<std::size_t> kept;     // indices into the input, ascending
    std::vector<std::string> warnings; // one per record with no text field
};

FilterResult filter_ophthalmology(std::span<const nlohmann::json> records,
                                  const std::vector<std::string>& keywords = default_keywords(),
                                  MatchMode mode = MatchMode::Substring);

// --- scoring ---------------------------------------------------------------

struct ExampleScore {
    double overall = 0.0;
    std::map<Axis, double> axes;  // only axes with positive points in the rubric
};

/// achieved / max-positive, clamped to [0,1]; per axis the same restricted to
/// criteria tagged with that axis.
ExampleScore score_example(const std::vector<RubricCriterion>& rubric, const std::vector<bool>& met);

/// Role-prefixed turns separated by blank lines.
std::string render_conversation(const std::vector<Turn>& conversation);

providers::ProviderRequest grader_request(const PromptSet& prompts, const EvalExample& example,
                                          const std::string& answer, const RubricCriterion& criterion);

struct GradeResult {
    std::vector<bool> verdicts;
    std::vector<std::size_t> degraded;  // criterion indices graded conservatively
    int calls = 0;
    bool ungradable = false;  // every grader call failed
};

GradeResult grade_with_model(const EvalExample& example, const std::string& answer, providers::Provider& grader,
                             const PromptSet& prompts);

struct AxisReport {
    std::string config_label;
    double overall = 0.0;
    std::map<Axis, double> axes;
    std::size_t n_examples = 0;
    std::size_t ungradable = 0;
    std::size_t failed = 0;
};

/// Mean over examples where each value is defined. Throws on empty input.
AxisReport aggregate(const std::vector<ExampleScore>& scores, std::string label);

/// Markdown table, four decimals; an axis no example defines renders as "n/a".
std::string format_report_table(const std::vector<AxisReport>& reports);

// --- ablation matrix -------------------------------------------------------

struct AblationConfig {
    std::string label;
    PipelineConfig config;
};

/// The full model followed by one row per single-stage ablation.
std::vector<AblationConfig> standard_ablation_configs(const PipelineConfig& base);

struct MatrixOptions {
    std::size_t concurrency = 1;
    double max_failure_rate = 0.10;
};

struct MatrixResult {
    std::vector<AxisReport> reports;
    std::string table;
    std::size_t traces_written = 0;
};

/// Thrown when some config fails on too many examples. Carries what was measured.
class MatrixFailure : public EvalError {
public:
    MatrixFailure(const std::string& what, MatrixResult partial) : EvalError(what), partial_(std::move(partial)) {}
    const MatrixResult& partial() const noexcept { return partial_; }

private:
    MatrixResult partial_;
};

/// Runs, grades and aggregates every example under every config. The grader
/// is taken from deps.providers (Grader role); every trace goes to `store`.
MatrixResult run_ablation_matrix(const std::vector<EvalExample>& subset, const std::vector<AblationConfig>& configs,
                                 const pipeline::PipelineDeps& deps, trace::TraceStore& store,
                                 const MatrixOptions& options = {});

}  // namespace pagerag::eval
