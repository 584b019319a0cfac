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

#include "pagerag/config.hpp"

#include <cstdlib>
#include <set>

#include <toml.hpp>

#include "pagerag/util.hpp"

namespace pagerag {

Ablations parse_ablations(std::string_view list) {
    Ablations a;
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto comma = list.find(',', start);
        const std::string item = trim(list.substr(start, comma == std::string_view::npos ? list.npos : comma - start));
        if (item == "no_rerank") {
            a.no_rerank = true;
        } else if (item == "no_query_rewrite") {
            a.no_query_rewrite = true;
        } else if (item == "no_router") {
            a.no_router = true;
        } else if (!item.empty() && item != "full" && item != "none") {
            throw ConfigError("unknown ablation '" + item + "' (expected no_rerank, no_query_rewrite, no_router)");
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return a;
}

std::string ablation_label(const Ablations& a) {
    std::string label;
    auto add = [&label](const char* s) { label += label.empty() ? s : std::string("+") + s; };
    if (a.no_rerank) add("no_rerank");
    if (a.no_query_rewrite) add("no_query_rewrite");
    if (a.no_router) add("no_router");
    return label.empty() ? "full" : label;
}

void PipelineConfig::validate() const {
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
    if (max_evidence_per_subq < 1) throw ConfigError("max_evidence_per_subq must be >= 1");
    if (min_kept_evidence < 1) throw ConfigError("min_kept_evidence must be >= 1");
    if (keep_grade < 1 || keep_grade > 2) throw ConfigError("keep_grade must be 1 or 2");
    if (distance_gate && !(*distance_gate >= 0.0)) throw ConfigError("distance_gate must be >= 0");
    if (max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
    if (control_max_output_tokens < 1) throw ConfigError("control_max_output_tokens must be >= 1");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
}

nlohmann::ordered_json PipelineConfig::to_json() const {
    nlohmann::ordered_json j;
    j["top_k"] = top_k;
    j["max_evidence_per_subq"] = max_evidence_per_subq;
    j["min_kept_evidence"] = min_kept_evidence;
    j["keep_grade"] = keep_grade;
    j["distance_gate"] = distance_gate ? nlohmann::ordered_json(*distance_gate) : nlohmann::ordered_json(nullptr);
    j["parallel_subquestions"] = parallel_subquestions;
    j["max_output_tokens"] = max_output_tokens;
    j["control_max_output_tokens"] = control_max_output_tokens;
    j["temperature"] = temperature;
    j["ablations"] = {{"no_rerank", ablations.no_rerank},
                      {"no_query_rewrite", ablations.no_query_rewrite},
                      {"no_router", ablations.no_router}};
    return j;
}

void PipelineConfig::apply_overrides(const nlohmann::json& overrides) {
    if (overrides.is_null()) return;
    if (!overrides.is_object()) throw ConfigError("config_overrides must be an object");
    PipelineConfig next = *this;
    try {
        for (const auto& [key, value] : overrides.items()) {
            if (key == "top_k") {
                next.top_k = value.get<int>();
            } else if (key == "max_evidence_per_subq") {
                next.max_evidence_per_subq = value.get<int>();
            } else if (key == "min_kept_evidence") {
                next.min_kept_evidence = value.get<int>();
            } else if (key == "keep_grade") {
                next.keep_grade = value.get<int>();
            } else if (key == "distance_gate") {
                next.distance_gate = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
            } else if (key == "parallel_subquestions") {
                next.parallel_subquestions = value.get<bool>();
            } else if (key == "max_output_tokens") {
                next.max_output_tokens = value.get<int>();
            } else if (key == "control_max_output_tokens") {
                next.control_max_output_tokens = value.get<int>();
            } else if (key == "temperature") {
                next.temperature = value.get<double>();
            } else if (key == "ablations") {
                if (!value.is_object()) throw ConfigError("ablations must be an object");
                for (const auto& [flag, on] : value.items()) {
                    if (flag == "no_rerank") {
                        next.ablations.no_rerank = on.get<bool>();
                    } else if (flag == "no_query_rewrite") {
                        next.ablations.no_query_rewrite = on.get<bool>();
                    } else if (flag == "no_router") {
                        next.ablations.no_router = on.get<bool>();
                    } else {
                        throw ConfigError("unknown ablation '" + flag + "'");
                    }
                }
            } else {
                throw ConfigError("unknown config field '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config override: ") + e.what());
    }
    next.validate();
    *this = next;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
        return std::nullopt;
    };
}

namespace {

std::string key_env_for(providers::Role role) {
    std::string name = providers::env_var_for(role);
    return name.substr(0, name.size() - 4) + "_KEY";
}

void read_endpoint(const toml::table& t, providers::EndpointConfig& ep, const EnvLookup& env) {
    if (auto v = t["url"].value<std::string>()) ep.url = *v;
    if (auto v = t["api_key_env"].value<std::string>()) {
        if (auto key = env(*v)) ep.api_key = *key;
    }
    if (auto v = t["dialect"].value<std::string>()) ep.dialect = providers::parse_dialect(*v);
    if (auto v = t["model"].value<std::string>()) ep.model = *v;
    if (auto v = t["completion_timeout_ms"].value<int>()) ep.completion_timeout_ms = *v;
    if (auto v = t["embedding_timeout_ms"].value<int>()) ep.embedding_timeout_ms = *v;
    if (auto v = t["max_retries"].value<int>()) ep.max_retries = *v;
    if (auto v = t["backoff_ms"].value<int>()) ep.backoff_ms = *v;
    if (auto v = t["max_in_flight"].value<int>()) ep.max_in_flight = *v;
}

void apply_env(AppConfig& cfg, const EnvLookup& env) {
    for (auto role : providers::kAllRoles) {
        auto& ep = cfg.endpoints[role];
        if (auto url = env(providers::env_var_for(role))) ep.url = *url;
        if (auto key = env(key_env_for(role))) ep.api_key = *key;
    }
}

}  // namespace

AppConfig default_app_config(const EnvLookup& env) {
    AppConfig cfg;
    apply_env(cfg, env);
    return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path, const EnvLookup& env) {
    toml::table doc;
    try {
        doc = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        throw ConfigError(path.string() + ": " + std::string(e.description()));
    }
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    AppConfig cfg;
    auto& p = cfg.pipeline;
    if (auto t = doc["pipeline"].as_table()) {
        static const std::set<std::string> known = {"top_k",
                                                    "max_evidence_per_subq",
                                                    "min_kept_evidence",
                                                    "keep_grade",
                                                    "distance_gate",
                                                    "parallel_subquestions",
                                                    "max_output_tokens",
                                                    "control_max_output_tokens",
                                                    "temperature"};
        for (const auto& [k, _] : *t) {
            if (!known.count(std::string(k.str()))) throw ConfigError("unknown [pipeline] key '" + std::string(k.str()) + "'");
        }
        p.top_k = (*t)["top_k"].value_or(p.top_k);
        p.max_evidence_per_subq = (*t)["max_evidence_per_subq"].value_or(p.max_evidence_per_subq);
        p.min_kept_evidence = (*t)["min_kept_evidence"].value_or(p.min_kept_evidence);
        p.keep_grade = (*t)["keep_grade"].value_or(p.keep_grade);
        if (auto g = (*t)["distance_gate"].value<double>()) p.distance_gate = *g;
        p.parallel_subquestions = (*t)["parallel_subquestions"].value_or(p.parallel_subquestions);
        p.max_output_tokens = (*t)["max_output_tokens"].value_or(p.max_output_tokens);
        p.control_max_output_tokens = (*t)["control_max_output_tokens"].value_or(p.control_max_output_tokens);
        p.temperature = (*t)["temperature"].value_or(p.temperature);
    }
    if (auto t = doc["ablations"].as_table()) {
        p.ablations.no_rerank = (*t)["no_rerank"].value_or(false);
        p.ablations.no_query_rewrite = (*t)["no_query_rewrite"].value_or(false);
        p.ablations.no_router = (*t)["no_router"].value_or(false);
    }
    p.validate();

    if (auto dir = doc["prompts"]["dir"].value<std::string>()) cfg.prompts_dir = base / *dir;
    if (auto dir = doc["traces"]["dir"].value<std::string>()) cfg.traces_dir = base / *dir;
    cfg.max_concurrent_requests = doc["service"]["max_concurrent_requests"].value_or(cfg.max_concurrent_requests);

    try {
        for (auto role : providers::kAllRoles) {
            auto& ep = cfg.endpoints[role];
            if (auto d = doc["providers"]["default"].as_table()) read_endpoint(*d, ep, env);
            if (auto r = doc["providers"][std::string(providers::to_string(role))].as_table()) read_endpoint(*r, ep, env);
        }
    } catch (const providers::ProviderError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    apply_env(cfg, env);
    return cfg;
}

providers::ProviderSet make_http_providers(const AppConfig& config) {
    providers::ProviderSet set;
    std::map<std::string, std::shared_ptr<providers::Provider>> by_url;
    for (const auto& [role, ep] : config.endpoints) {
        if (ep.url.empty()) continue;
        auto& shared = by_url[ep.url + "|" + ep.model + "|" + ep.api_key];
        if (!shared) shared = std::make_shared<providers::HttpProvider>(ep);
        set.set(role, shared);
    }
    return set;
}

}  // namespace pagerag
