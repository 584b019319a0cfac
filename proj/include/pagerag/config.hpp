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

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pagerag/providers.hpp"

namespace pagerag {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Ablations {
    bool no_rerank = false;
    bool no_query_rewrite = false;
    bool no_router = false;

    bool operator==(const Ablations&) const = default;
};

/// Parses a comma separated flag list such as "no_rerank,no_router".
Ablations parse_ablations(std::string_view list);
/// "full" when nothing is ablated, otherwise the flags joined by '+'.
std::string ablation_label(const Ablations& a);

struct PipelineConfig {
    int top_k = 5;
    int max_evidence_per_subq = 3;
    int min_kept_evidence = 1;
    int keep_grade = 2;                   // judge grade needed to keep a page
    std::optional<double> distance_gate;  // squared-L2 ceiling, disabled when empty
    bool parallel_subquestions = false;
    int max_output_tokens = 1024;
    int control_max_output_tokens = 512;  // planner, router, rewriter, judge
    double temperature = 0.0;
    Ablations ablations;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    /// Applies the fields present in `overrides`; unknown fields are rejected.
    void apply_overrides(const nlohmann::json& overrides);

    bool operator==(const PipelineConfig&) const = default;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Everything read from pipeline.toml plus the environment.
struct AppConfig {
    PipelineConfig pipeline;
    std::filesystem::path prompts_dir;
    std::filesystem::path traces_dir = "traces";
    int max_concurrent_requests = 8;
    std::map<providers::Role, providers::EndpointConfig> endpoints;
};

/// Loads the TOML file; relative paths resolve against the file's directory.
/// Environment: <ROLE>_URL and <ROLE>_KEY override [providers.<role>].
AppConfig load_app_config(const std::filesystem::path& path, const EnvLookup& env = process_env());

/// Defaults only, with endpoints taken from the environment.
AppConfig default_app_config(const EnvLookup& env = process_env());

/// HTTP providers for every role with a URL, sharing a client per distinct URL.
providers::ProviderSet make_http_providers(const AppConfig& config);

}  // namespace pagerag
