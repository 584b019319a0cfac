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

#include "pagerag/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <unordered_map>

namespace pagerag::pipeline {

using providers::ProviderError;
using providers::ProviderRequest;
using providers::RequestKind;
using providers::Role;
using trace::Payload;
using trace::Stage;

std::string_view to_string(Route r) { return r == Route::RAG ? "RAG" : "DIRECT"; }

std::string_view to_string(AnswerMode m) {
    switch (m) {
        case AnswerMode::RAG: return "RAG";
        case AnswerMode::DIRECT: return "DIRECT";
        case AnswerMode::RAG_FALLBACK_DIRECT: return "RAG_FALLBACK_DIRECT";
    }
    return "DIRECT";
}

// ---------------------------------------------------------------------------
// RunContext

RunContext::RunContext(const PipelineDeps& deps, PipelineConfig config, std::string original_query)
    : deps_(deps), config_(std::move(config)), query_(std::move(original_query)) {}

void RunContext::record(Stage stage, std::optional<int> subq, Payload payload) {
    std::lock_guard lock(mutex_);
    events_.push_back({stage, subq, std::move(payload)});
}

void RunContext::warn(std::optional<int> subq, std::string code, std::string message) {
    record(Stage::Warning, subq, {{"code", std::move(code)}, {"message", std::move(message)}});
}

void RunContext::degrade(std::optional<int> subq, std::string flag, std::string detail) {
    record(Stage::Degraded, subq, {{"flag", std::move(flag)}, {"detail", std::move(detail)}});
}

providers::ProviderResponse RunContext::call(Role role, const ProviderRequest& request) {
    {
        std::lock_guard lock(mutex_);
        ++calls_[std::string(providers::to_string(role))];
    }
    return deps_.providers.get(role).invoke(request);
}

std::vector<trace::StageEvent> RunContext::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

std::map<std::string, int> RunContext::provider_calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

void RunContext::add_stage_time(Stage stage, std::int64_t ms) {
    std::lock_guard lock(mutex_);
    stage_ms_[std::string(trace::to_string(stage))] += ms;
}

std::map<std::string, std::int64_t> RunContext::stage_ms() const {
    std::lock_guard lock(mutex_);
    return stage_ms_;
}

namespace {

class StageTimer {
public:
    StageTimer(RunContext& ctx, Stage stage) : ctx_(ctx), stage_(stage), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        ctx_.add_stage_time(stage_, std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - start_)
                                        .count());
    }

private:
    RunContext& ctx_;
    Stage stage_;
    std::chrono::steady_clock::time_point start_;
};

using ParseError = ModelOutputError;

}  // namespace

// Control stages reply with one JSON object. A surrounding markdown fence is
// tolerated; anything else is a parse failure.
nlohmann::json parse_control_reply(std::string_view text) {
    std::string body = trim(text);
    if (body.rfind("```", 0) == 0) {
        const auto first_nl = body.find('\n');
        const auto last_fence = body.rfind("```");
        if (first_nl == std::string::npos || last_fence <= first_nl) throw ParseError("unterminated code fence");
        body = trim(std::string_view(body).substr(first_nl + 1, last_fence - first_nl - 1));
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw ParseError("reply is not JSON: " + body.substr(0, 120));
    }
    if (!doc.is_object()) throw ParseError("reply is not a JSON object");
    return doc;
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key) || !doc[key].is_array()) throw ParseError(std::string("missing array '") + key + "'");
    std::vector<std::string> out;
    for (const auto& item : doc[key]) {
        if (!item.is_string()) throw ParseError(std::string("non-string entry in '") + key + "'");
        std::string s = trim(item.get<std::string>());
        if (!s.empty()) out.push_back(std::move(s));
    }
    return out;
}

std::string failure_detail(const std::exception& e) {
    if (const auto* pe = dynamic_cast<const ProviderError*>(&e)) {
        return std::string(providers::to_string(pe->code())) + ": " + pe->what();
    }
    return std::string("parse: ") + e.what();
}

ProviderRequest text_request(const PromptTemplate& t, int max_tokens, double temperature,
                             const std::map<std::string, std::string>& vars) {
    ProviderRequest r;
    r.kind = RequestKind::CompleteText;
    r.system_prompt = t.system;
    r.user_content = render_template(t.user, vars);
    r.params = {max_tokens, temperature};
    return r;
}

Payload candidate_json(const index::RetrievalCandidate& c) {
    return {{"page_id", c.page_id}, {"distance", c.distance}, {"rank", c.rank}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Request builders

ProviderRequest planner_request(const PromptSet& p, const PipelineConfig& c, const std::string& query) {
    return text_request(p.planner, c.control_max_output_tokens, c.temperature, {{"query", query}});
}

ProviderRequest router_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                               const std::string& subq) {
    return text_request(p.router, c.control_max_output_tokens, c.temperature, {{"query", query}, {"subquestion", subq}});
}

ProviderRequest rewriter_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                 const std::string& subq) {
    return text_request(p.rewriter, c.control_max_output_tokens, c.temperature,
                        {{"query", query}, {"subquestion", subq}});
}

ProviderRequest embed_query_request(const std::string& text) {
    ProviderRequest r;
    r.kind = RequestKind::EmbedText;
    r.user_content = text;
    return r;
}

ProviderRequest embed_page_request(const std::string& image_uri) {
    ProviderRequest r;
    r.kind = RequestKind::EmbedImage;
    r.image_refs = {image_uri};
    return r;
}

ProviderRequest judge_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                              const std::string& subq, const std::string& image_uri) {
    ProviderRequest r = text_request(p.judge, c.control_max_output_tokens, c.temperature,
                                     {{"query", query}, {"subquestion", subq}});
    r.kind = RequestKind::CompleteMultimodal;
    r.image_refs = {image_uri};
    return r;
}

ProviderRequest rag_answer_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                   const std::string& subq, const std::vector<std::string>& image_uris) {
    ProviderRequest r =
        text_request(p.answer_rag, c.max_output_tokens, c.temperature, {{"query", query}, {"subquestion", subq}});
    r.kind = RequestKind::CompleteMultimodal;
    r.image_refs = image_uris;
    return r;
}

ProviderRequest direct_answer_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                      const std::string& subq) {
    return text_request(p.answer_direct, c.max_output_tokens, c.temperature, {{"query", query}, {"subquestion", subq}});
}

std::string render_subanswers(const std::vector<AnswerUnit>& units) {
    std::string out;
    for (const auto& u : units) {
        if (!out.empty()) out += "\n\n";
        out += "SQ" + std::to_string(u.subq_index) + " (" + std::string(to_string(u.mode)) + "): " + u.subq_text + "\n";
        out += u.answer_text;
    }
    return out;
}

ProviderRequest synthesis_request(const PromptSet& p, const PipelineConfig& c, const std::string& query,
                                  const std::vector<AnswerUnit>& units) {
    return text_request(p.synthesis, c.max_output_tokens, c.temperature,
                        {{"query", query}, {"subanswers", render_subanswers(units)}});
}

// ---------------------------------------------------------------------------
// Stages

std::vector<SubQuestion> plan(RunContext& ctx) {
    StageTimer timer(ctx, Stage::Plan);
    const auto& cfg = ctx.config();
    std::vector<std::string> texts;
    bool atomic = false;
    bool degraded = false;
    std::size_t proposed = 0;
    try {
        const auto reply = ctx.call(Role::Planner, planner_request(ctx.deps().prompts, cfg, ctx.query()));
        const auto doc = parse_control_reply(reply.text);
        if (doc.contains("atomic") && !doc["atomic"].is_boolean()) throw ParseError("'atomic' must be a boolean");
        atomic = doc.value("atomic", false);
        if (!atomic) {
            texts = string_list(doc, "subquestions");
            if (texts.empty()) throw ParseError("planner proposed no subquestions");
        }
    } catch (const ProviderError& e) {
        ctx.degrade(std::nullopt, "planner_degraded", failure_detail(e));
        degraded = true;
    } catch (const ParseError& e) {
        ctx.degrade(std::nullopt, "planner_degraded", failure_detail(e));
        degraded = true;
    }
    if (atomic || degraded) texts = {ctx.query()};
    proposed = texts.size();
    if (texts.size() > static_cast<std::size_t>(kMaxSubquestions)) {
        ctx.warn(std::nullopt, "planner_truncated",
                 "planner proposed " + std::to_string(texts.size()) + " subquestions; keeping the first " +
                     std::to_string(kMaxSubquestions));
        texts.resize(kMaxSubquestions);
    }

    std::vector<SubQuestion> out;
    Payload list = Payload::array();
    for (std::size_t i = 0; i < texts.size(); ++i) {
        out.push_back({static_cast<int>(i + 1), texts[i], Route::DIRECT});
        list.push_back({{"index", i + 1}, {"text", texts[i]}});
    }
    ctx.record(Stage::Plan, std::nullopt,
               {{"atomic", atomic}, {"degraded", degraded}, {"proposed_count", proposed}, {"subquestions", list}});
    return out;
}

Route route(RunContext& ctx, const SubQuestion& subq) {
    StageTimer timer(ctx, Stage::Route);
    if (ctx.config().ablations.no_router) {
        ctx.record(Stage::Route, subq.index, {{"route", "RAG"}, {"forced", true}, {"degraded", false}});
        return Route::RAG;
    }
    Route decision = Route::DIRECT;
    bool degraded = false;
    try {
        const auto reply =
            ctx.call(Role::Router, router_request(ctx.deps().prompts, ctx.config(), ctx.query(), subq.text));
        const auto doc = parse_control_reply(reply.text);
        if (!doc.contains("route") || !doc["route"].is_string()) throw ParseError("missing string 'route'");
        const std::string value = trim(doc["route"].get<std::string>());
        if (value == "RAG" || value == "rag") {
            decision = Route::RAG;
        } else if (value == "DIRECT" || value == "direct") {
            decision = Route::DIRECT;
        } else {
            throw ParseError("unknown route '" + value + "'");
        }
    } catch (const ProviderError& e) {
        ctx.degrade(subq.index, "router_degraded", failure_detail(e));
        degraded = true;
    } catch (const ParseError& e) {
        ctx.degrade(subq.index, "router_degraded", failure_detail(e));
        degraded = true;
    }
    if (degraded) decision = Route::DIRECT;
    ctx.record(Stage::Route, subq.index, {{"route", to_string(decision)}, {"forced", false}, {"degraded", degraded}});
    return decision;
}

std::vector<RetrievalQuery> rewrite(RunContext& ctx, const SubQuestion& subq) {
    StageTimer timer(ctx, Stage::Rewrite);
    std::vector<std::string> texts;
    bool verbatim = ctx.config().ablations.no_query_rewrite;
    bool degraded = false;
    if (!verbatim) {
        try {
            const auto reply =
                ctx.call(Role::Rewriter, rewriter_request(ctx.deps().prompts, ctx.config(), ctx.query(), subq.text));
            texts = string_list(parse_control_reply(reply.text), "queries");
            // An empty list is a valid answer meaning "search as asked".
            if (texts.empty()) verbatim = true;
        } catch (const ProviderError& e) {
            ctx.degrade(subq.index, "rewriter_degraded", failure_detail(e));
            degraded = true;
        } catch (const ParseError& e) {
            ctx.degrade(subq.index, "rewriter_degraded", failure_detail(e));
            degraded = true;
        }
        if (texts.size() > static_cast<std::size_t>(kMaxRewrites)) {
            ctx.warn(subq.index, "rewriter_truncated",
                     "rewriter returned " + std::to_string(texts.size()) + " queries; keeping the first " +
                         std::to_string(kMaxRewrites));
            texts.resize(kMaxRewrites);
        }
    }
    if (verbatim || degraded) texts = {subq.text};

    std::vector<RetrievalQuery> out;
    Payload list = Payload::array();
    for (std::size_t i = 0; i < texts.size(); ++i) {
        out.push_back({subq.index, texts[i], static_cast<int>(i + 1)});
        list.push_back({{"ordinal", i + 1}, {"text", texts[i]}});
    }
    ctx.record(Stage::Rewrite, subq.index,
               {{"verbatim", verbatim || degraded}, {"degraded", degraded}, {"queries", list}});
    return out;
}

std::vector<index::RetrievalCandidate> retrieve_candidates(RunContext& ctx, const SubQuestion& subq,
                                                           const std::vector<RetrievalQuery>& queries) {
    StageTimer timer(ctx, Stage::Retrieve);
    const auto& cfg = ctx.config();
    std::unordered_map<std::int64_t, double> best;
    Payload per_query = Payload::array();
    std::size_t failures = 0;
    for (const auto& q : queries) {
        try {
            const auto resp = ctx.call(Role::Embedder, embed_query_request(q.text));
            if (!resp.embedding) throw ProviderError(providers::ProviderErrc::ProtocolError, "no embedding returned");
            const auto pooled = index::mean_pool(*resp.embedding, index::VectorSource::Query);
            const auto hits = ctx.deps().index.search(pooled, static_cast<std::size_t>(cfg.top_k));
            for (const auto& h : hits) {
                auto [it, inserted] = best.try_emplace(h.page_id, h.distance);
                if (!inserted) it->second = std::min(it->second, h.distance);
            }
            per_query.push_back({{"ordinal", q.ordinal}, {"hits", hits.size()}, {"failed", false}});
        } catch (const std::exception& e) {
            if (!dynamic_cast<const ProviderError*>(&e) && !dynamic_cast<const index::IndexError*>(&e)) throw;
            ++failures;
            ctx.warn(subq.index, "retrieval_query_failed",
                     "query " + std::to_string(q.ordinal) + ": " + std::string(e.what()));
            per_query.push_back({{"ordinal", q.ordinal}, {"hits", 0}, {"failed", true}});
        }
    }
    if (queries.empty() || failures == queries.size()) {
        ctx.record(Stage::Retrieve, subq.index,
                   {{"metric", "squared_l2"},
                    {"top_k", cfg.top_k},
                    {"failed", true},
                    {"queries", per_query},
                    {"candidates", Payload::array()},
                    {"gated_out", Payload::array()}});
        throw RetrievalFailed("every retrieval query failed for SQ" + std::to_string(subq.index));
    }

    std::vector<index::RetrievalCandidate> merged;
    merged.reserve(best.size());
    for (const auto& [id, d] : best) merged.push_back({id, d, 0});
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
        return std::pair{a.distance, a.page_id} < std::pair{b.distance, b.page_id};
    });
    for (std::size_t i = 0; i < merged.size(); ++i) merged[i].rank = static_cast<int>(i + 1);

    Payload gated = Payload::array();
    if (cfg.distance_gate) {
        auto cut = std::find_if(merged.begin(), merged.end(),
                                [&](const auto& c) { return c.distance > *cfg.distance_gate; });
        for (auto it = cut; it != merged.end(); ++it) gated.push_back(candidate_json(*it));
        merged.erase(cut, merged.end());
    }
    Payload cands = Payload::array();
    for (const auto& c : merged) cands.push_back(candidate_json(c));
    ctx.record(Stage::Retrieve, subq.index,
               {{"metric", "squared_l2"},
                {"top_k", cfg.top_k},
                {"failed", false},
                {"queries", per_query},
                {"candidates", cands},
                {"gated_out", gated}});
    return merged;
}

JudgeOutcome judge_relevance(RunContext& ctx, const SubQuestion& subq,
                             const std::vector<index::RetrievalCandidate>& candidates) {
    StageTimer timer(ctx, Stage::Judge);
    const auto& cfg = ctx.config();
    const auto max_keep = static_cast<std::size_t>(cfg.max_evidence_per_subq);
    JudgeOutcome out;
    const bool judged = !cfg.ablations.no_rerank;

    for (const auto& c : candidates) {
        EvidencePage page;
        page.candidate = c;
        const auto* record = ctx.deps().manifest.find(c.page_id);
        if (!record) {
            ctx.warn(subq.index, "unknown_page", "page_id " + std::to_string(c.page_id) + " is not in the manifest");
            out.pages.push_back(std::move(page));
            continue;
        }
        page.image_uri = record->image_uri;
        if (!judged) {
            page.kept = out.kept.size() < max_keep;
            if (page.kept) out.kept.push_back(page);
            out.pages.push_back(std::move(page));
            continue;
        }
        try {
            const auto reply = ctx.call(
                Role::Judge, judge_request(ctx.deps().prompts, cfg, ctx.query(), subq.text, page.image_uri));
            const auto doc = parse_control_reply(reply.text);
            if (!doc.contains("grade") || !doc["grade"].is_number_integer()) throw ParseError("missing integer 'grade'");
            const int g = doc["grade"].get<int>();
            if (g < 0 || g > 2) throw ParseError("grade " + std::to_string(g) + " outside 0..2");
            page.grade = static_cast<Relevance>(g);
            if (doc.contains("rationale") && doc["rationale"].is_string()) page.judge_rationale = doc["rationale"];
        } catch (const ProviderError& e) {
            ctx.degrade(subq.index, "judge_degraded", "page_id " + std::to_string(c.page_id) + ": " + failure_detail(e));
            page.grade = Relevance::Irrelevant;
        } catch (const ParseError& e) {
            ctx.degrade(subq.index, "judge_degraded", "page_id " + std::to_string(c.page_id) + ": " + failure_detail(e));
            page.grade = Relevance::Irrelevant;
        }
        page.kept = static_cast<int>(*page.grade) >= cfg.keep_grade;
        out.pages.push_back(std::move(page));
    }

    if (judged) {
        for (const auto& p : out.pages) {
            if (p.kept) out.kept.push_back(p);
        }
        std::stable_sort(out.kept.begin(), out.kept.end(), [](const EvidencePage& a, const EvidencePage& b) {
            return std::tuple{-static_cast<int>(*a.grade), a.candidate.distance, a.candidate.page_id} <
                   std::tuple{-static_cast<int>(*b.grade), b.candidate.distance, b.candidate.page_id};
        });
        if (out.kept.size() > max_keep) {
            for (std::size_t i = max_keep; i < out.kept.size(); ++i) {
                for (auto& p : out.pages) {
                    if (p.candidate.page_id == out.kept[i].candidate.page_id) p.kept = false;
                }
            }
            out.kept.resize(max_keep);
        }
    }

    Payload pages = Payload::array();
    for (const auto& p : out.pages) {
        pages.push_back({{"page_id", p.candidate.page_id},
                         {"distance", p.candidate.distance},
                         {"grade", p.grade ? Payload(static_cast<int>(*p.grade)) : Payload(nullptr)},
                         {"kept", p.kept},
                         {"rationale", p.judge_rationale}});
    }
    Payload kept_ids = Payload::array();
    for (const auto& p : out.kept) kept_ids.push_back(p.candidate.page_id);
    ctx.record(Stage::Judge, subq.index,
               {{"judged", judged}, {"pages", pages}, {"kept_order", kept_ids}, {"kept_count", out.kept.size()}});
    return out;
}

AnswerUnit answer_subquestion(RunContext& ctx, const SubQuestion& subq, const std::vector<EvidencePage>& kept) {
    StageTimer timer(ctx, Stage::Answer);
    const auto& cfg = ctx.config();
    AnswerUnit unit;
    unit.subq_index = subq.index;
    unit.subq_text = subq.text;
    unit.route = subq.route;

    const bool grounded = subq.route == Route::RAG && static_cast<int>(kept.size()) >= cfg.min_kept_evidence;
    if (grounded) {
        std::vector<std::string> uris;
        for (const auto& p : kept) {
            uris.push_back(p.image_uri);
            unit.evidence_refs.push_back({p.candidate.page_id, p.image_uri});
        }
        unit.mode = AnswerMode::RAG;
        unit.answer_text =
            ctx.call(Role::Generator, rag_answer_request(ctx.deps().prompts, cfg, ctx.query(), subq.text, uris)).text;
    } else {
        unit.mode = subq.route == Route::RAG ? AnswerMode::RAG_FALLBACK_DIRECT : AnswerMode::DIRECT;
        unit.answer_text =
            ctx.call(Role::Generator, direct_answer_request(ctx.deps().prompts, cfg, ctx.query(), subq.text)).text;
    }

    Payload refs = Payload::array();
    for (const auto& r : unit.evidence_refs) refs.push_back({{"page_id", r.page_id}, {"image_uri", r.image_uri}});
    ctx.record(Stage::Answer, subq.index,
               {{"mode", to_string(unit.mode)},
                {"route", to_string(unit.route)},
                {"kept_evidence", kept.size()},
                {"evidence_refs", refs},
                {"answer_text", unit.answer_text}});
    return unit;
}

FinalAnswer synthesize(RunContext& ctx, const std::vector<AnswerUnit>& units) {
    StageTimer timer(ctx, Stage::Synthesize);
    if (units.empty()) throw std::invalid_argument("synthesize needs at least one answer unit");
    FinalAnswer answer;

    std::map<std::int64_t, Citation> by_page;
    for (const auto& u : units) {
        if (u.mode != AnswerMode::RAG) continue;
        for (const auto& r : u.evidence_refs) {
            if (by_page.count(r.page_id)) continue;
            const auto* rec = ctx.deps().manifest.find(r.page_id);
            by_page[r.page_id] = rec ? Citation{rec->doc_id, rec->page_index, r.page_id, r.image_uri}
                                     : Citation{"", 0, r.page_id, r.image_uri};
        }
    }
    for (auto& [_, c] : by_page) answer.citations.push_back(std::move(c));
    std::sort(answer.citations.begin(), answer.citations.end(), [](const Citation& a, const Citation& b) {
        return std::tie(a.doc_id, a.page_index, a.page_id) < std::tie(b.doc_id, b.page_index, b.page_id);
    });

    bool bypassed = false;
    bool degraded = false;
    if (units.size() == 1) {
        answer.text = units.front().answer_text;
        bypassed = true;
    } else {
        try {
            answer.text =
                ctx.call(Role::Generator, synthesis_request(ctx.deps().prompts, ctx.config(), ctx.query(), units)).text;
        } catch (const ProviderError& e) {
            ctx.degrade(std::nullopt, "synthesis_degraded", failure_detail(e));
            answer.text = render_subanswers(units);
            degraded = true;
        }
    }

    Payload cites = Payload::array();
    for (const auto& c : answer.citations) {
        cites.push_back(
            {{"doc_id", c.doc_id}, {"page_index", c.page_index}, {"page_id", c.page_id}, {"image_uri", c.image_uri}});
    }
    ctx.record(Stage::Synthesize, std::nullopt,
               {{"bypassed", bypassed}, {"degraded", degraded}, {"text", answer.text}, {"citations", cites}});
    return answer;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

AnswerUnit process_subquestion(RunContext& ctx, SubQuestion sq) {
    sq.route = route(ctx, sq);
    std::vector<EvidencePage> kept;
    if (sq.route == Route::RAG) {
        const auto queries = rewrite(ctx, sq);
        std::vector<index::RetrievalCandidate> candidates;
        std::string empty_reason;
        try {
            candidates = retrieve_candidates(ctx, sq, queries);
            if (candidates.empty()) empty_reason = "no_candidates";
        } catch (const RetrievalFailed&) {
            empty_reason = "retrieval_failed";
        }
        if (empty_reason.empty()) {
            kept = judge_relevance(ctx, sq, candidates).kept;
        } else {
            ctx.record(Stage::Judge, sq.index,
                       {{"judged", false},
                        {"reason", empty_reason},
                        {"pages", Payload::array()},
                        {"kept_order", Payload::array()},
                        {"kept_count", 0}});
        }
    }
    return answer_subquestion(ctx, sq, kept);
}

}  // namespace

PipelineResult run_pipeline(const std::string& query, const PipelineConfig& config, const PipelineDeps& deps) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    const std::string trimmed = trim(query);
    if (trimmed.empty()) throw ConfigError("query must not be empty");

    const auto config_json = config.to_json();
    trace::ProcessTrace trace(deps.env.make_uuid(query + "\n" + config_json.dump()), query, config_json,
                              deps.env.now_iso8601());
    RunContext ctx(deps, config, query);

    auto assemble = [&](trace::Outcome outcome) {
        for (auto& e : ctx.events()) trace.append(std::move(e));
        trace.set_provider_calls(ctx.provider_calls());
        trace.finalize(outcome, deps.env.now_iso8601());
    };

    try {
        const auto subqs = plan(ctx);
        std::vector<AnswerUnit> units;
        if (config.parallel_subquestions && subqs.size() > 1) {
            std::vector<std::future<AnswerUnit>> futures;
            for (const auto& sq : subqs) {
                futures.push_back(std::async(std::launch::async, [&ctx, sq] { return process_subquestion(ctx, sq); }));
            }
            std::exception_ptr first;
            for (auto& f : futures) {
                try {
                    units.push_back(f.get());
                } catch (...) {
                    if (!first) first = std::current_exception();
                }
            }
            if (first) std::rethrow_exception(first);
        } else {
            for (const auto& sq : subqs) units.push_back(process_subquestion(ctx, sq));
        }
        FinalAnswer answer = synthesize(ctx, units);
        answer.trace_id = trace.trace_id();
        trace.set_final_answer(answer);
        assemble(trace::Outcome::Completed);

        PipelineResult result{std::move(answer), std::move(trace), std::move(units), ctx.stage_ms(), 0};
        result.total_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        return result;
    } catch (const std::exception& e) {
        trace.set_error(e.what());
        assemble(trace::Outcome::Failed);
        throw PipelineFailure(e.what(), std::move(trace));
    }
}

}  // namespace pagerag::pipeline
