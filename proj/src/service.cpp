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

#include "pagerag/service.hpp"

#include <charconv>

#include <httplib.h>

namespace pagerag::service {

namespace {

using Json = nlohmann::ordered_json;

HttpResponse json_response(int status, const Json& body) { return {status, body.dump(2) + "\n", "application/json", {}}; }

HttpResponse error_response(int status, std::string code, std::string message, Json extra = Json::object()) {
    Json err = {{"code", std::move(code)}, {"message", std::move(message)}};
    for (auto& [k, v] : extra.items()) err[k] = v;
    return json_response(status, {{"error", err}});
}

Json citation_json(const trace::Citation& c) {
    return {{"doc_id", c.doc_id}, {"page_index", c.page_index}, {"page_id", c.page_id}, {"image_uri", c.image_uri}};
}

}  // namespace

Engine::Engine(index::VectorIndex index, corpus::Manifest manifest, providers::ProviderSet providers, PromptSet prompts,
               AppConfig config, RunEnvironment env)
    : index_(std::move(index)),
      manifest_(std::move(manifest)),
      providers_(std::move(providers)),
      prompts_(std::move(prompts)),
      config_(std::move(config)),
      env_(env),
      store_(config_.traces_dir) {}

pipeline::PipelineDeps Engine::deps() const { return {index_, manifest_, providers_, prompts_, env_}; }

HttpResponse Engine::handle_query(const std::string& body) {
    Json req;
    try {
        req = Json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, "invalid_json", e.what());
    }
    if (!req.is_object()) return error_response(400, "invalid_request", "request body must be a JSON object");
    for (const auto& [key, _] : req.items()) {
        if (key != "query" && key != "config_overrides" && key != "client_tag") {
            return error_response(400, "invalid_request", "unknown field '" + key + "'", {{"field", key}});
        }
    }
    if (!req.contains("query") || !req["query"].is_string()) {
        return error_response(400, "invalid_request", "'query' must be a string", {{"field", "query"}});
    }
    const std::string query = req["query"].get<std::string>();
    if (trim(query).empty()) {
        return error_response(400, "invalid_request", "'query' must not be empty", {{"field", "query"}});
    }
    if (req.contains("client_tag") && !req["client_tag"].is_string()) {
        return error_response(400, "invalid_request", "'client_tag' must be a string", {{"field", "client_tag"}});
    }

    PipelineConfig cfg = config_.pipeline;
    if (req.contains("config_overrides")) {
        try {
            cfg.apply_overrides(nlohmann::json::parse(req["config_overrides"].dump()));
        } catch (const ConfigError& e) {
            return error_response(400, "invalid_config", e.what(), {{"field", "config_overrides"}});
        }
    }

    try {
        auto result = pipeline::run_pipeline(query, cfg, deps());
        store_.save(result.trace);
        Json cites = Json::array();
        for (const auto& c : result.answer.citations) cites.push_back(citation_json(c));
        Json stages = Json::object();
        for (const auto& [k, v] : result.stage_ms) stages[k] = v;
        Json out = {{"final_answer", {{"text", result.answer.text}, {"citations", cites}}},
                    {"trace_id", result.answer.trace_id},
                    {"timing", {{"total_ms", result.total_ms}, {"per_stage_ms", stages}}}};
        if (req.contains("client_tag")) out["client_tag"] = req["client_tag"];
        return json_response(200, out);
    } catch (const pipeline::PipelineFailure& f) {
        try {
            store_.save(f.trace());
        } catch (const std::exception& e) {
            return error_response(500, "pipeline_failed", std::string(f.what()) + "; trace not stored: " + e.what());
        }
        return error_response(500, "pipeline_failed", f.what(), {{"trace_id", f.trace().trace_id()}});
    } catch (const std::exception& e) {
        return error_response(500, "internal_error", e.what());
    }
}

HttpResponse Engine::list_traces() const {
    Json items = Json::array();
    for (const auto& s : store_.list()) {
        items.push_back({{"trace_id", s.trace_id},
                         {"query", s.query},
                         {"started_at", s.started_at},
                         {"outcome", s.outcome},
                         {"sequence", s.sequence}});
    }
    return json_response(200, {{"traces", items}});
}

HttpResponse Engine::get_trace(const std::string& trace_id) const {
    auto raw = store_.read_raw(trace_id);
    if (!raw) return error_response(404, "not_found", "no trace with id '" + trace_id + "'");
    return {200, std::move(*raw), "application/json", {}};
}

HttpResponse Engine::get_page_image(const std::string& doc_id, const std::string& page_index,
                                    const std::string& if_none_match) const {
    int idx = 0;
    const auto [ptr, ec] = std::from_chars(page_index.data(), page_index.data() + page_index.size(), idx);
    if (ec != std::errc() || ptr != page_index.data() + page_index.size()) {
        return error_response(404, "not_found", "page index '" + page_index + "' is not an integer");
    }
    const auto* rec = manifest_.find(doc_id, idx);
    if (!rec) return error_response(404, "not_found", "no page " + doc_id + "/" + page_index);

    providers::FetchedResource res;
    try {
        res = providers::fetch_uri(rec->image_uri);
    } catch (const std::exception& e) {
        return error_response(502, "page_unreadable", e.what(), {{"uri", rec->image_uri}});
    }
    const std::string etag = "\"" + sha256_hex(res.bytes).substr(0, 32) + "\"";
    HttpResponse r;
    r.headers["ETag"] = etag;
    r.headers["Cache-Control"] = "public, max-age=3600";
    if (!if_none_match.empty()) {
        // A list of validators or "*" may be sent.
        for (std::size_t pos = 0; pos < if_none_match.size();) {
            auto comma = if_none_match.find(',', pos);
            if (comma == std::string::npos) comma = if_none_match.size();
            std::string tag = trim(std::string_view(if_none_match).substr(pos, comma - pos));
            if (tag.rfind("W/", 0) == 0) tag = tag.substr(2);
            if (tag == etag || tag == "*") {
                r.status = 304;
                r.content_type.clear();
                return r;
            }
            pos = comma + 1;
        }
    }
    r.status = 200;
    r.body = std::move(res.bytes);
    r.content_type = res.content_type;
    return r;
}

HttpResponse Engine::healthz() const {
    const bool consistent = index_.count() == manifest_.pages.size();
    return json_response(consistent ? 200 : 503, {{"status", consistent ? "ok" : "inconsistent"},
                                                  {"index_count", index_.count()},
                                                  {"manifest_pages", manifest_.pages.size()},
                                                  {"consistent", consistent}});
}

// ---------------------------------------------------------------------------
// Routes

namespace {

void send(httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    if (r.status != 304) res.set_content(r.body, r.content_type);
}

}  // namespace

void register_routes(httplib::Server& server, Engine& engine, const std::optional<std::filesystem::path>& ui_dir) {
    server.Post("/v1/query", [&engine](const httplib::Request& req, httplib::Response& res) {
        send(res, engine.handle_query(req.body));
    });
    server.Get("/v1/traces", [&engine](const httplib::Request&, httplib::Response& res) {
        send(res, engine.list_traces());
    });
    server.Get(R"(/v1/traces/([^/]+))", [&engine](const httplib::Request& req, httplib::Response& res) {
        send(res, engine.get_trace(req.matches[1]));
    });
    server.Get(R"(/v1/pages/([^/]+)/([^/]+))", [&engine](const httplib::Request& req, httplib::Response& res) {
        send(res, engine.get_page_image(req.matches[1], req.matches[2], req.get_header_value("If-None-Match")));
    });
    server.Get("/healthz", [&engine](const httplib::Request&, httplib::Response& res) { send(res, engine.healthz()); });
    if (ui_dir && std::filesystem::is_directory(*ui_dir)) server.set_mount_point("/ui", ui_dir->string());
}

std::pair<std::string, int> parse_listen(const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw ConfigError("listen address must be host:port, got '" + listen + "'");
    std::string host = listen.substr(0, colon);
    if (host.empty()) host = "0.0.0.0";
    int port = 0;
    const std::string p = listen.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
    if (ec != std::errc() || ptr != p.data() + p.size() || port <= 0 || port > 65535) {
        throw ConfigError("invalid port in listen address '" + listen + "'");
    }
    return {host, port};
}

void serve(Engine& engine, const std::string& listen, const std::optional<std::filesystem::path>& ui_dir) {
    const auto [host, port] = parse_listen(listen);
    httplib::Server server;
    const auto workers = static_cast<std::size_t>(std::max(1, engine.config().max_concurrent_requests));
    server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    register_routes(server, engine, ui_dir);
    if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + listen);
}

}  // namespace pagerag::service
