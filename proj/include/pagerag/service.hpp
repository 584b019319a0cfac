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

// HTTP surface over one loaded corpus. Handlers are plain functions of
// (request, engine state) so they can be tested without a socket.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "pagerag/config.hpp"
#include "pagerag/corpus.hpp"
#include "pagerag/pipeline.hpp"
#include "pagerag/prompts.hpp"
#include "pagerag/providers.hpp"
#include "pagerag/trace.hpp"
#include "pagerag/util.hpp"
#include "pagerag/vector_index.hpp"

namespace httplib {
class Server;
}

namespace pagerag::service {

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::map<std::string, std::string> headers;
};

class Engine {
public:
    Engine(index::VectorIndex index, corpus::Manifest manifest, providers::ProviderSet providers, PromptSet prompts,
           AppConfig config, RunEnvironment env);

    /// Body: {"query": str, "config_overrides"?: {...}, "client_tag"?: str}.
    HttpResponse handle_query(const std::string& body);
    HttpResponse list_traces() const;
    HttpResponse get_trace(const std::string& trace_id) const;
    HttpResponse get_page_image(const std::string& doc_id, const std::string& page_index,
                                const std::string& if_none_match) const;
    HttpResponse healthz() const;

    pipeline::PipelineDeps deps() const;
    const AppConfig& config() const noexcept { return config_; }
    trace::TraceStore& traces() noexcept { return store_; }

private:
    index::VectorIndex index_;
    corpus::Manifest manifest_;
    providers::ProviderSet providers_;
    PromptSet prompts_;
    AppConfig config_;
    RunEnvironment env_;
    trace::TraceStore store_;
};

/// Installs every route. `ui_dir`, when it exists, is served under /ui.
void register_routes(httplib::Server& server, Engine& engine, const std::optional<std::filesystem::path>& ui_dir);

/// "host:port" or ":port"; port 0 is rejected.
std::pair<std::string, int> parse_listen(const std::string& listen);

/// Blocks until the server stops. Worker threads are capped at
/// max_concurrent_requests.
void serve(Engine& engine, const std::string& listen, const std::optional<std::filesystem::path>& ui_dir);

}  // namespace pagerag::service
