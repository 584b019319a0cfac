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

#include "pagerag/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <thread>

#include "pagerag/util.hpp"

namespace pagerag::eval {

using providers::ProviderError;
using providers::ProviderRequest;

std::string_view to_string(Axis axis) {
    switch (axis) {
        case Axis::Accuracy: return "accuracy";
        case Axis::Completeness: return "completeness";
        case Axis::InstructionFollowing: return "instruction_following";
        case Axis::ContextAwareness: return "context_awareness";
        case Axis::CommunicationQuality: return "communication_quality";
    }
    return "accuracy";
}

std::string_view column_title(Axis axis) {
    switch (axis) {
        case Axis::Accuracy: return "Accuracy";
        case Axis::Completeness: return "Completeness";
        case Axis::InstructionFollowing: return "Instruction Following";
        case Axis::ContextAwareness: return "Context Awareness";
        case Axis::CommunicationQuality: return "Communication Quality";
    }
    return "Accuracy";
}

std::optional<Axis> parse_axis(std::string_view name) {
    if (name.rfind("axis:", 0) == 0) name.remove_prefix(5);
    for (Axis a : kAxes) {
        if (to_string(a) == name) return a;
    }
    return std::nullopt;
}

std::string_view to_string(Subset s) {
    switch (s) {
        case Subset::Main: return "main";
        case Subset::Consensus: return "consensus";
        case Subset::Hard: return "hard";
    }
    return "main";
}

Subset parse_subset(std::string_view s) {
    if (s == "main") return Subset::Main;
    if (s == "consensus") return Subset::Consensus;
    if (s == "hard") return Subset::Hard;
    throw EvalError("unknown subset '" + std::string(s) + "' (expected main, consensus or hard)");
}

// ---------------------------------------------------------------------------
// Loading

std::vector<nlohmann::json> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot open dataset " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw EvalError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!out.back().is_object()) {
            throw EvalError(path.string() + ":" + std::to_string(lineno) + ": record is not a JSON object");
        }
    }
    return out;
}

std::filesystem::path locate_subset_file(const std::filesystem::path& dir, Subset subset) {
    const auto direct = dir / (std::string(to_string(subset)) + ".jsonl");
    if (std::filesystem::is_regular_file(direct)) return direct;

    // Published names: hard_<stamp>.jsonl, consensus_<stamp>.jsonl, <stamp>_oss_eval.jsonl.
    std::vector<std::filesystem::path> matches;
    if (std::filesystem::is_directory(dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
            const std::string name = entry.path().filename().string();
            const bool hit = subset == Subset::Hard        ? name.rfind("hard", 0) == 0
                             : subset == Subset::Consensus ? name.rfind("consensus", 0) == 0
                                                           : name.find("oss_eval") != std::string::npos;
            if (hit) matches.push_back(entry.path());
        }
    }
    if (matches.empty()) {
        throw EvalError("no " + std::string(to_string(subset)) + " dataset file in " + dir.string());
    }
    std::sort(matches.begin(), matches.end());
    return matches.front();
}

EvalExample parse_example(const nlohmann::json& record, Subset subset, std::size_t line) {
    EvalExample ex;
    ex.source = record;
    ex.subset_tags.insert(subset);
    ex.example_id = record.contains("prompt_id") && record["prompt_id"].is_string()
                        ? record["prompt_id"].get<std::string>()
                        : std::string(to_string(subset)) + "-" + std::to_string(line);

    const auto& prompt = record.contains("prompt") ? record["prompt"] : nlohmann::json();
    if (prompt.is_array()) {
        for (const auto& m : prompt) {
            if (!m.is_object() || !m.contains("content") || !m["content"].is_string()) {
                throw EvalError(ex.example_id + ": malformed conversation turn");
            }
            ex.conversation.push_back({m.value("role", "user"), m["content"].get<std::string>()});
        }
    } else if (auto text = extract_question_text(record)) {
        ex.conversation.push_back({"user", *text});
    }
    if (ex.conversation.empty()) throw EvalError(ex.example_id + ": empty conversation");

    if (!record.contains("rubrics") || !record["rubrics"].is_array()) {
        throw EvalError(ex.example_id + ": missing rubrics");
    }
    for (const auto& r : record["rubrics"]) {
        RubricCriterion c;
        if (!r.is_object() || !r.contains("criterion") || !r.contains("points")) {
            throw EvalError(ex.example_id + ": malformed rubric entry");
        }
        c.text = r["criterion"].get<std::string>();
        const double pts = r["points"].get<double>();
        c.points = static_cast<int>(pts);
        if (c.points == 0 || static_cast<double>(c.points) != pts) {
            throw EvalError(ex.example_id + ": rubric points must be a nonzero integer");
        }
        for (const auto& tag : r.value("tags", nlohmann::json::array())) {
            if (!tag.is_string()) continue;
            if (auto axis = parse_axis(tag.get<std::string>()); axis && tag.get<std::string>().rfind("axis:", 0) == 0) {
                c.axes.insert(*axis);
            }
        }
        ex.rubric.push_back(std::move(c));
    }
    if (ex.rubric.empty()) throw EvalError(ex.example_id + ": empty rubric");
    return ex;
}

// ---------------------------------------------------------------------------
// Subset selection

const std::vector<std::string>& default_keywords() {
    static const std::vector<std::string> kw = {
        "ophthalmology", "eye",    "retina",  "glaucoma",  "cataract",  "cornea", "vision",   "intraocular pressure",
        "fundus",        "strabismus", "myopia", "hyperopia", "amblyopia", "macula", "vitreous", "optic nerve"};
    return kw;
}

std::optional<std::string> extract_question_text(const nlohmann::json& record) {
    for (const char* field : {"question", "prompt", "content"}) {
        if (!record.contains(field)) continue;
        const auto& v = record[field];
        if (v.is_string()) return v.get<std::string>();
        if (v.is_array()) {
            std::string joined;
            bool any = false;
            for (const auto& m : v) {
                std::string part;
                if (m.is_string()) {
                    part = m.get<std::string>();
                } else if (m.is_object() && m.contains("content") && m["content"].is_string()) {
                    part = m["content"].get<std::string>();
                } else {
                    continue;
                }
                if (any) joined += '\n';
                joined += part;
                any = true;
            }
            if (any) return joined;
        }
    }
    return std::nullopt;
}

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

}  // namespace

bool matches_keywords(std::string_view text, const std::vector<std::string>& keywords, MatchMode mode) {
    for (const auto& kw : keywords) {
        if (kw.empty()) continue;
        for (auto pos = text.find(kw); pos != std::string_view::npos; pos = text.find(kw, pos + 1)) {
            if (mode == MatchMode::Substring) return true;
            const bool left = pos == 0 || !word_char(text[pos - 1]);
            const auto end = pos + kw.size();
            const bool right = end == text.size() || !word_char(text[end]);
            if (left && right) return true;
        }
    }
    return false;
}

FilterResult filter_ophthalmology(std::span<const nlohmann::json> records, const std::vector<std::string>& keywords,
                                  MatchMode mode) {
    if (keywords.empty()) throw EvalError("keyword list must not be empty");
    std::vector<std::string> lowered;
    lowered.reserve(keywords.size());
    for (const auto& k : keywords) lowered.push_back(to_lower(k));

    FilterResult out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto text = extract_question_text(records[i]);
        if (!text) {
            out.warnings.push_back("record " + std::to_string(i) + " has no question, prompt or content field");
            continue;
        }
        if (matches_keywords(to_lower(*text), lowered, mode)) out.kept.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scoring

ExampleScore score_example(const std::vector<RubricCriterion>& rubric, const std::vector<bool>& met) {
    if (met.size() != rubric.size()) throw EvalError("verdict count does not match rubric size");
    auto ratio = [&](std::optional<Axis> axis) -> std::optional<double> {
        long long achieved = 0;
        long long possible = 0;
        for (std::size_t i = 0; i < rubric.size(); ++i) {
            if (axis && !rubric[i].axes.count(*axis)) continue;
            if (rubric[i].points > 0) possible += rubric[i].points;
            if (met[i]) achieved += rubric[i].points;
        }
        if (possible <= 0) return std::nullopt;
        return std::clamp(static_cast<double>(achieved) / static_cast<double>(possible), 0.0, 1.0);
    };
    ExampleScore s;
    const auto overall = ratio(std::nullopt);
    if (!overall) throw EvalError("rubric has no positive points");
    s.overall = *overall;
    for (Axis a : kAxes) {
        if (auto v = ratio(a)) s.axes[a] = *v;
    }
    return s;
}

std::string render_conversation(const std::vector<Turn>& conversation) {
    std::string out;
    for (const auto& t : conversation) {
        if (!out.empty()) out += "\n\n";
        out += t.role + ": " + t.text;
    }
    return out;
}

ProviderRequest grader_request(const PromptSet& prompts, const EvalExample& example, const std::string& answer,
                               const RubricCriterion& criterion) {
    ProviderRequest r;
    r.kind = providers::RequestKind::CompleteText;
    r.system_prompt = prompts.grader.system;
    r.user_content = render_template(prompts.grader.user, {{"conversation", render_conversation(example.conversation)},
                                                           {"response", answer},
                                                           {"criterion", criterion.text},
                                                           {"points", std::to_string(criterion.points)}});
    r.params = {512, 0.0};
    return r;
}

GradeResult grade_with_model(const EvalExample& example, const std::string& answer, providers::Provider& grader,
                             const PromptSet& prompts) {
    GradeResult g;
    int provider_failures = 0;
    for (std::size_t i = 0; i < example.rubric.size(); ++i) {
        bool verdict = false;
        ++g.calls;
        try {
            const auto reply = grader.invoke(grader_request(prompts, example, answer, example.rubric[i]));
            const auto doc = pipeline::parse_control_reply(reply.text);
            if (!doc.contains("criteria_met") || !doc["criteria_met"].is_boolean()) {
                throw pipeline::ModelOutputError("missing boolean 'criteria_met'");
            }
            verdict = doc["criteria_met"].get<bool>();
        } catch (const ProviderError&) {
            ++provider_failures;
            g.degraded.push_back(i);
        } catch (const pipeline::ModelOutputError&) {
            g.degraded.push_back(i);
        }
        g.verdicts.push_back(verdict);
    }
    g.ungradable = provider_failures == static_cast<int>(example.rubric.size());
    return g;
}

AxisReport aggregate(const std::vector<ExampleScore>& scores, std::string label) {
    if (scores.empty()) throw EvalError("no gradable examples to aggregate for '" + label + "'");
    AxisReport r;
    r.config_label = std::move(label);
    r.n_examples = scores.size();
    double sum = 0.0;
    std::map<Axis, std::pair<double, std::size_t>> axis_sums;
    for (const auto& s : scores) {
        sum += s.overall;
        for (const auto& [a, v] : s.axes) {
            axis_sums[a].first += v;
            ++axis_sums[a].second;
        }
    }
    r.overall = sum / static_cast<double>(scores.size());
    for (const auto& [a, acc] : axis_sums) r.axes[a] = acc.first / static_cast<double>(acc.second);
    return r;
}

std::string format_report_table(const std::vector<AxisReport>& reports) {
    auto cell = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    std::string out = "| Model | Overall Score";
    for (Axis a : kAxes) out += " | " + std::string(column_title(a));
    out += " |\n|---|---";
    for (std::size_t i = 0; i < kAxes.size(); ++i) out += "|---";
    out += "|\n";
    for (const auto& r : reports) {
        out += "| " + r.config_label + " | " + cell(r.overall);
        for (Axis a : kAxes) {
            auto it = r.axes.find(a);
            out += " | " + (it == r.axes.end() ? std::string("n/a") : cell(it->second));
        }
        out += " |\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablation matrix

std::vector<AblationConfig> standard_ablation_configs(const PipelineConfig& base) {
    std::vector<AblationConfig> out;
    PipelineConfig full = base;
    full.ablations = {};
    out.push_back({"full", full});
    for (const char* flag : {"no_rerank", "no_query_rewrite", "no_router"}) {
        PipelineConfig c = full;
        c.ablations = parse_ablations(flag);
        out.push_back({flag, c});
    }
    return out;
}

namespace {

struct ExampleOutcome {
    std::optional<ExampleScore> score;
    bool failed = false;
    bool ungradable = false;
};

}  // namespace

MatrixResult run_ablation_matrix(const std::vector<EvalExample>& subset, const std::vector<AblationConfig>& configs,
                                 const pipeline::PipelineDeps& deps, trace::TraceStore& store,
                                 const MatrixOptions& options) {
    if (subset.empty()) throw EvalError("evaluation subset is empty");
    if (configs.empty()) throw EvalError("no configurations to evaluate");
    auto& grader = deps.providers.get(providers::Role::Grader);

    MatrixResult result;
    std::vector<std::string> failures;
    std::atomic<std::size_t> traces{0};
    for (const auto& cfg : configs) {
        std::vector<ExampleOutcome> outcomes(subset.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < subset.size(); i = next++) {
                const auto& ex = subset[i];
                std::string answer;
                try {
                    auto run = pipeline::run_pipeline(render_conversation(ex.conversation), cfg.config, deps);
                    store.save(run.trace);
                    ++traces;
                    answer = run.answer.text;
                } catch (const pipeline::PipelineFailure& f) {
                    store.save(f.trace());
                    ++traces;
                    outcomes[i].failed = true;
                    continue;
                }
                const auto graded = grade_with_model(ex, answer, grader, deps.prompts);
                if (graded.ungradable) {
                    outcomes[i].ungradable = true;
                    continue;
                }
                outcomes[i].score = score_example(ex.rubric, graded.verdicts);
            }
        };
        const std::size_t n_threads = std::clamp<std::size_t>(options.concurrency, 1, subset.size());
        {
            std::vector<std::jthread> pool;
            for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
            worker();
        }

        std::vector<ExampleScore> scores;
        std::size_t failed = 0;
        std::size_t ungradable = 0;
        for (const auto& o : outcomes) {
            if (o.score) scores.push_back(*o.score);
            failed += o.failed ? 1 : 0;
            ungradable += o.ungradable ? 1 : 0;
        }
        const double rate = static_cast<double>(failed) / static_cast<double>(subset.size());
        if (rate > options.max_failure_rate) {
            failures.push_back(cfg.label + ": " + std::to_string(failed) + "/" + std::to_string(subset.size()) +
                               " examples failed");
        }
        if (scores.empty()) {
            failures.push_back(cfg.label + ": no gradable examples");
            continue;
        }
        auto report = aggregate(scores, cfg.label);
        report.failed = failed;
        report.ungradable = ungradable;
        result.reports.push_back(std::move(report));
    }
    result.traces_written = traces;
    result.table = format_report_table(result.reports);
    if (!failures.empty()) {
        std::string msg = "ablation matrix failed:";
        for (const auto& f : failures) msg += "\n  " + f;
        throw MatrixFailure(msg, std::move(result));
    }
    return result;
}

}  // namespace pagerag::eval
