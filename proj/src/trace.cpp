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

#include "pagerag/trace.hpp"

#include <algorithm>
#include <set>

#include "pagerag/util.hpp"

namespace pagerag::trace {

namespace {

constexpr Stage kStages[] = {Stage::Plan,   Stage::Route,      Stage::Rewrite, Stage::Retrieve, Stage::Judge,
                             Stage::Answer, Stage::Synthesize, Stage::Warning, Stage::Degraded};

int sort_subq(const std::optional<int>& s) { return s.value_or(-1); }

bool event_less(const StageEvent& a, const StageEvent& b) {
    return std::pair{static_cast<int>(a.stage), sort_subq(a.subq_index)} <
           std::pair{static_cast<int>(b.stage), sort_subq(b.subq_index)};
}

Payload citation_json(const Citation& c) {
    return {{"doc_id", c.doc_id}, {"page_index", c.page_index}, {"page_id", c.page_id}, {"image_uri", c.image_uri}};
}

}  // namespace

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Plan: return "Plan";
        case Stage::Route: return "Route";
        case Stage::Rewrite: return "Rewrite";
        case Stage::Retrieve: return "Retrieve";
        case Stage::Judge: return "Judge";
        case Stage::Answer: return "Answer";
        case Stage::Synthesize: return "Synthesize";
        case Stage::Warning: return "Warning";
        case Stage::Degraded: return "Degraded";
    }
    return "Warning";
}

Stage parse_stage(std::string_view s) {
    for (auto st : kStages) {
        if (to_string(st) == s) return st;
    }
    throw TraceError("unknown stage '" + std::string(s) + "'");
}

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
        case Outcome::Running: return "Running";
        case Outcome::Completed: return "Completed";
        case Outcome::Failed: return "Failed";
    }
    return "Running";
}

ProcessTrace::ProcessTrace(std::string trace_id, std::string original_query, Payload config, std::string started_at)
    : trace_id_(std::move(trace_id)),
      original_query_(std::move(original_query)),
      config_(std::move(config)),
      started_at_(std::move(started_at)) {}

void ProcessTrace::append(StageEvent event) {
    if (finalized()) throw TraceError("append to finalized trace " + trace_id_);
    events_.push_back(std::move(event));
}

void ProcessTrace::finalize(Outcome outcome, std::string finished_at) {
    if (finalized()) throw TraceError("trace " + trace_id_ + " is already finalized");
    if (outcome == Outcome::Running) throw TraceError("cannot finalize with outcome Running");
    std::stable_sort(events_.begin(), events_.end(), event_less);
    outcome_ = outcome;
    finished_at_ = std::move(finished_at);
}

void ProcessTrace::set_final_answer(FinalAnswer answer) { final_answer_ = std::move(answer); }

std::vector<const StageEvent*> ProcessTrace::find(Stage stage, std::optional<int> subq_index) const {
    std::vector<const StageEvent*> out;
    for (const auto& e : events_) {
        if (e.stage == stage && (!subq_index || e.subq_index == subq_index)) out.push_back(&e);
    }
    return out;
}

std::string serialize_trace(const ProcessTrace& trace) {
    Payload doc;
    doc["trace_id"] = trace.trace_id();
    doc["original_query"] = trace.original_query();
    doc["config"] = trace.config();
    doc["started_at"] = trace.started_at();
    doc["finished_at"] = trace.finished_at();
    doc["outcome"] = to_string(trace.outcome());
    if (!trace.error().empty()) doc["error"] = trace.error();
    doc["provider_calls"] = trace.provider_calls();
    Payload events = Payload::array();
    for (const auto& e : trace.events()) {
        events.push_back({{"stage", to_string(e.stage)},
                          {"subq_index", e.subq_index ? Payload(*e.subq_index) : Payload(nullptr)},
                          {"payload", e.payload}});
    }
    doc["events"] = std::move(events);
    if (const auto& fa = trace.final_answer()) {
        Payload cites = Payload::array();
        for (const auto& c : fa->citations) cites.push_back(citation_json(c));
        doc["final_answer"] = {{"text", fa->text}, {"citations", std::move(cites)}};
    } else {
        doc["final_answer"] = nullptr;
    }
    return doc.dump(2) + "\n";
}

ProcessTrace parse_trace(std::string_view text) {
    try {
        const auto doc = Payload::parse(text);
        ProcessTrace t(doc.at("trace_id").get<std::string>(), doc.at("original_query").get<std::string>(),
                       doc.at("config"), doc.value("started_at", ""));
        t.finished_at_ = doc.value("finished_at", "");
        const std::string outcome = doc.at("outcome").get<std::string>();
        t.outcome_ = outcome == "Completed" ? Outcome::Completed
                     : outcome == "Failed"  ? Outcome::Failed
                     : outcome == "Running" ? Outcome::Running
                                            : throw TraceError("unknown outcome '" + outcome + "'");
        t.error_ = doc.value("error", "");
        if (doc.contains("provider_calls")) t.provider_calls_ = doc["provider_calls"].get<std::map<std::string, int>>();
        for (const auto& e : doc.at("events")) {
            StageEvent ev;
            ev.stage = parse_stage(e.at("stage").get<std::string>());
            if (!e.at("subq_index").is_null()) ev.subq_index = e["subq_index"].get<int>();
            ev.payload = e.at("payload");
            t.events_.push_back(std::move(ev));
        }
        if (doc.contains("final_answer") && !doc["final_answer"].is_null()) {
            FinalAnswer fa;
            fa.text = doc["final_answer"].at("text").get<std::string>();
            fa.trace_id = t.trace_id_;
            for (const auto& c : doc["final_answer"].at("citations")) {
                fa.citations.push_back({c.at("doc_id").get<std::string>(), c.at("page_index").get<int>(),
                                        c.at("page_id").get<std::int64_t>(), c.at("image_uri").get<std::string>()});
            }
            t.final_answer_ = std::move(fa);
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(std::string("malformed trace: ") + e.what());
    }
}

std::vector<TraceIssue> validate_trace(const ProcessTrace& trace, const corpus::Manifest& manifest) {
    std::vector<TraceIssue> issues;
    auto add = [&](std::optional<int> subq, std::string msg) { issues.push_back({subq, std::move(msg)}); };

    if (!trace.finalized()) {
        add(std::nullopt, "trace is not finalized");
        return issues;
    }
    if (trace.trace_id().empty()) add(std::nullopt, "trace_id is empty");
    const auto& events = trace.events();
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (event_less(events[i], events[i - 1])) {
            add(events[i].subq_index, "events not ordered by (stage, subq_index) at position " + std::to_string(i));
            break;
        }
    }

    auto check_page = [&](std::optional<int> subq, const Payload& page_id, const char* where) {
        if (!page_id.is_number_integer() || !manifest.find(page_id.get<std::int64_t>())) {
            add(subq, std::string(where) + " cites page_id " + page_id.dump() + " absent from the manifest");
        }
    };

    std::map<int, std::set<std::int64_t>> kept_by_subq;
    std::map<int, std::size_t> kept_count;
    for (const auto* e : trace.find(Stage::Retrieve)) {
        for (const auto& c : e->payload.value("candidates", Payload::array())) {
            check_page(e->subq_index, c.value("page_id", Payload()), "Retrieve");
        }
    }
    for (const auto* e : trace.find(Stage::Judge)) {
        const int sq = e->subq_index.value_or(0);
        auto& kept = kept_by_subq[sq];
        for (const auto& p : e->payload.value("pages", Payload::array())) {
            check_page(e->subq_index, p.value("page_id", Payload()), "Judge");
            if (p.value("kept", false) && p.contains("page_id") && p["page_id"].is_number_integer()) {
                kept.insert(p["page_id"].get<std::int64_t>());
            }
        }
        kept_count[sq] = kept.size();
    }

    const int min_kept = trace.config().value("min_kept_evidence", 1);
    std::set<std::int64_t> rag_refs;
    std::map<int, int> answers_per_subq;
    for (const auto* e : trace.find(Stage::Answer)) {
        const int sq = e->subq_index.value_or(0);
        ++answers_per_subq[sq];
        const std::string mode = e->payload.value("mode", "");
        const auto refs = e->payload.value("evidence_refs", Payload::array());
        if (mode == "RAG") {
            if (refs.empty()) add(e->subq_index, "RAG answer without evidence_refs");
            if (!kept_by_subq.count(sq) || kept_by_subq[sq].empty()) {
                add(e->subq_index, "RAG answer without a Judge event keeping evidence");
            }
            for (const auto& r : refs) {
                check_page(e->subq_index, r.value("page_id", Payload()), "Answer");
                if (r.contains("page_id") && r["page_id"].is_number_integer()) {
                    const auto id = r["page_id"].get<std::int64_t>();
                    rag_refs.insert(id);
                    if (kept_by_subq.count(sq) && !kept_by_subq[sq].count(id)) {
                        add(e->subq_index, "RAG answer cites page_id " + std::to_string(id) + " that was not kept");
                    }
                }
            }
        } else if (mode == "RAG_FALLBACK_DIRECT") {
            if (!refs.empty()) add(e->subq_index, "fallback answer carries evidence_refs");
            if (!kept_count.count(sq)) {
                add(e->subq_index, "fallback answer without a preceding Judge event");
            } else if (static_cast<int>(kept_count[sq]) >= min_kept) {
                add(e->subq_index, "fallback answer although the Judge event kept enough evidence");
            }
        } else if (mode == "DIRECT") {
            if (!refs.empty()) add(e->subq_index, "DIRECT answer carries evidence_refs");
        } else {
            add(e->subq_index, "Answer event has unknown mode '" + mode + "'");
        }
    }

    if (trace.outcome() == Outcome::Completed) {
        const auto plans = trace.find(Stage::Plan);
        if (plans.empty()) add(std::nullopt, "completed trace has no Plan event");
        const auto synth = trace.find(Stage::Synthesize);
        if (synth.size() != 1) {
            add(std::nullopt, "completed trace has " + std::to_string(synth.size()) + " Synthesize events, expected 1");
        }
        if (!plans.empty()) {
            for (const auto& sq : plans.back()->payload.value("subquestions", Payload::array())) {
                const int idx = sq.value("index", 0);
                if (answers_per_subq[idx] != 1) {
                    add(idx, "subquestion has " + std::to_string(answers_per_subq[idx]) + " Answer events, expected 1");
                }
            }
        }
        if (!trace.final_answer()) add(std::nullopt, "completed trace has no final_answer");
    }
    if (const auto& fa = trace.final_answer()) {
        for (const auto& c : fa->citations) {
            if (!manifest.find(c.page_id)) {
                add(std::nullopt, "citation page_id " + std::to_string(c.page_id) + " absent from the manifest");
            } else if (!rag_refs.count(c.page_id)) {
                add(std::nullopt, "citation page_id " + std::to_string(c.page_id) + " not in any RAG evidence_refs");
            }
        }
    }
    return issues;
}

// ---------------------------------------------------------------------------
// TraceStore

namespace {

bool safe_trace_id(std::string_view id) {
    return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isxdigit(c) || c == '-';
    });
}

}  // namespace

TraceStore::TraceStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

void TraceStore::save(const ProcessTrace& trace) {
    if (!safe_trace_id(trace.trace_id())) throw TraceError("refusing to store trace id '" + trace.trace_id() + "'");
    std::lock_guard lock(mutex_);
    write_file_atomic(dir_ / (trace.trace_id() + ".json"), serialize_trace(trace));

    const auto index_path = dir_ / "index.json";
    nlohmann::ordered_json index = {{"next_sequence", 0}, {"traces", nlohmann::ordered_json::array()}};
    if (std::filesystem::exists(index_path)) index = nlohmann::ordered_json::parse(read_file(index_path));
    const std::int64_t seq = index.value("next_sequence", std::int64_t{0});
    auto& list = index["traces"];
    for (auto it = list.begin(); it != list.end(); ++it) {
        if ((*it).value("trace_id", "") == trace.trace_id()) {
            list.erase(it);
            break;
        }
    }
    list.push_back({{"trace_id", trace.trace_id()},
                    {"query", trace.original_query()},
                    {"started_at", trace.started_at()},
                    {"outcome", to_string(trace.outcome())},
                    {"sequence", seq}});
    index["next_sequence"] = seq + 1;
    write_file_atomic(index_path, index.dump(2) + "\n");
}

std::optional<std::string> TraceStore::read_raw(const std::string& trace_id) const {
    if (!safe_trace_id(trace_id)) return std::nullopt;
    const auto path = dir_ / (trace_id + ".json");
    std::lock_guard lock(mutex_);
    if (!std::filesystem::is_regular_file(path)) return std::nullopt;
    return read_file(path);
}

std::vector<TraceSummary> TraceStore::list() const {
    std::lock_guard lock(mutex_);
    std::vector<TraceSummary> out;
    const auto index_path = dir_ / "index.json";
    if (!std::filesystem::exists(index_path)) return out;
    const auto index = nlohmann::json::parse(read_file(index_path));
    for (const auto& e : index.value("traces", nlohmann::json::array())) {
        out.push_back({e.value("trace_id", ""), e.value("query", ""), e.value("started_at", ""),
                       e.value("outcome", ""), e.value("sequence", std::int64_t{0})});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sequence > b.sequence; });
    return out;
}

}  // namespace pagerag::trace
