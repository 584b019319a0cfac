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

#include <httplib.h>

#include <chrono>
#include <semaphore>
#include <thread>

#include <json.hpp>

#include "pagerag/providers.hpp"
#include "pagerag/util.hpp"

namespace pagerag::providers {

using json = nlohmann::json;

namespace {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ProviderError(ProviderErrc::Unconfigured, "endpoint URL '" + url + "' has no scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string excerpt(const std::string& body) { return body.size() <= 512 ? body : body.substr(0, 512) + "..."; }

bool retriable_status(int status) { return status == 408 || status == 429 || status >= 500; }

// Remote images pass by reference; local ones are inlined since the endpoint
// cannot resolve file:// URIs.
std::string transport_image(const std::string& uri) {
    if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0 || uri.rfind("data:", 0) == 0) return uri;
    const auto res = fetch_uri(uri);
    return "data:" + res.content_type + ";base64," +
           base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(res.bytes.data()), res.bytes.size()));
}

json native_body(const ProviderRequest& r, const EndpointConfig& cfg) {
    json images = json::array();
    for (const auto& ref : r.image_refs) images.push_back(transport_image(ref));
    json body = {{"kind", to_string(r.kind)},
                 {"system_prompt", r.system_prompt},
                 {"user_content", r.user_content},
                 {"image_refs", images},
                 {"params", {{"max_output_tokens", r.params.max_output_tokens}, {"temperature", r.params.temperature}}}};
    if (!cfg.model.empty()) body["model"] = cfg.model;
    return body;
}

json openai_body(const ProviderRequest& r, const EndpointConfig& cfg) {
    if (r.kind == RequestKind::EmbedImage) {
        throw ProviderError(ProviderErrc::Unconfigured, "openai dialect cannot embed images; use a native endpoint");
    }
    if (r.kind == RequestKind::EmbedText) return {{"model", cfg.model}, {"input", r.user_content}};
    json user;
    if (r.image_refs.empty()) {
        user = r.user_content;
    } else {
        user = json::array({{{"type", "text"}, {"text", r.user_content}}});
        for (const auto& ref : r.image_refs) {
            user.push_back({{"type", "image_url"}, {"image_url", {{"url", transport_image(ref)}}}});
        }
    }
    json messages = json::array();
    if (!r.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", r.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", user}});
    return {{"model", cfg.model},
            {"messages", messages},
            {"temperature", r.params.temperature},
            {"max_completion_tokens", r.params.max_output_tokens}};
}

void parse_payload(const ProviderRequest& r, Dialect dialect, const std::string& body, ProviderResponse& out) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrc::ProtocolError, "upstream payload is not valid JSON", 1, excerpt(body));
    }
    try {
        if (is_completion(r.kind)) {
            out.text = dialect == Dialect::OpenAI
                           ? doc.at("choices").at(0).at("message").at("content").get<std::string>()
                           : doc.at("text").get<std::string>();
            if (trim(out.text).empty()) throw ProviderError(ProviderErrc::EmptyResponse, "empty completion text");
        } else if (dialect == Dialect::OpenAI) {
            out.embedding = index::SeqEmbedding::from_rows({doc.at("data").at(0).at("embedding").get<std::vector<float>>()});
        } else {
            out.embedding = index::SeqEmbedding::from_rows(doc.at("embedding").get<std::vector<std::vector<float>>>());
        }
    } catch (const json::exception& e) {
        throw ProviderError(ProviderErrc::ProtocolError, std::string("unexpected upstream payload: ") + e.what(), 1,
                            excerpt(body));
    } catch (const index::IndexError& e) {
        throw ProviderError(ProviderErrc::ProtocolError, std::string("malformed embedding: ") + e.what(), 1,
                            excerpt(body));
    }
    if (out.embedding && out.embedding->rows() == 0) {
        throw ProviderError(ProviderErrc::ProtocolError, "upstream returned an empty embedding", 1, excerpt(body));
    }
}

}  // namespace

Dialect parse_dialect(std::string_view s) {
    if (s == "native") return Dialect::Native;
    if (s == "openai") return Dialect::OpenAI;
    throw ProviderError(ProviderErrc::Unconfigured, "unknown dialect '" + std::string(s) + "'");
}

struct HttpProvider::Limiter {
    explicit Limiter(int n) : slots(std::max(1, n)) {}
    std::counting_semaphore<1024> slots;
};

HttpProvider::HttpProvider(EndpointConfig config)
    : config_(std::move(config)), limiter_(std::make_unique<Limiter>(config_.max_in_flight)) {
    if (config_.url.empty()) throw ProviderError(ProviderErrc::Unconfigured, "endpoint URL is empty");
    split_url(config_.url);
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::id() const { return config_.url; }

ProviderResponse HttpProvider::invoke(const ProviderRequest& request) {
    validate_request(request);
    const auto [base, path] = split_url(config_.url);
    const json body = config_.dialect == Dialect::OpenAI ? openai_body(request, config_) : native_body(request, config_);
    const std::string payload = body.dump();
    const int timeout_ms = is_completion(request.kind) ? config_.completion_timeout_ms : config_.embedding_timeout_ms;

    limiter_->slots.acquire();
    struct Release {
        Limiter& l;
        ~Release() { l.slots.release(); }
    } release{*limiter_};

    const auto started = std::chrono::steady_clock::now();
    std::string last_failure;
    bool last_was_transport = true;
    const int budget = std::max(0, config_.max_retries) + 1;
    for (int attempt = 1; attempt <= budget; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms) * (1 << std::min(attempt - 2, 10)));
        }
        httplib::Client client(base);
        client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
        client.set_write_timeout(std::chrono::milliseconds(timeout_ms));
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_failure = httplib::to_string(res.error());
            last_was_transport = true;
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw ProviderError(ProviderErrc::AuthError, "authentication rejected (" + std::to_string(res->status) + ")",
                                attempt, excerpt(res->body));
        }
        if (retriable_status(res->status)) {
            last_failure = "HTTP " + std::to_string(res->status);
            last_was_transport = false;
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw ProviderError(ProviderErrc::ProtocolError, "upstream returned HTTP " + std::to_string(res->status),
                                attempt, excerpt(res->body));
        }
        ProviderResponse out;
        try {
            parse_payload(request, config_.dialect, res->body, out);
        } catch (const ProviderError& e) {
            throw ProviderError(e.code(), e.what(), attempt, e.body_excerpt());
        }
        out.provider_id = config_.url;
        out.attempts = attempt;
        out.latency_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        return out;
    }
    const std::string msg = config_.url + ": " + last_failure + " after " + std::to_string(budget) + " attempts";
    throw ProviderError(last_was_transport ? ProviderErrc::Timeout : ProviderErrc::Upstream, msg, budget);
}

std::string content_type_for(std::string_view uri) {
    auto ends_with = [&](std::string_view ext) {
        return uri.size() >= ext.size() && to_lower(uri.substr(uri.size() - ext.size())) == ext;
    };
    if (ends_with(".png")) return "image/png";
    if (ends_with(".jpg") || ends_with(".jpeg")) return "image/jpeg";
    if (ends_with(".webp")) return "image/webp";
    if (ends_with(".ppm") || ends_with(".pgm") || ends_with(".pnm")) return "image/x-portable-anymap";
    return "application/octet-stream";
}

FetchedResource fetch_uri(const std::string& uri, int timeout_ms) {
    if (auto path = file_uri_to_path(uri)) {
        try {
            return {read_file(*path), content_type_for(uri)};
        } catch (const std::exception& e) {
            throw ProviderError(ProviderErrc::ProtocolError, "cannot read " + uri + ": " + e.what());
        }
    }
    if (uri.rfind("http://", 0) != 0 && uri.rfind("https://", 0) != 0) {
        throw ProviderError(ProviderErrc::InvalidRequest, "unsupported URI scheme: " + uri);
    }
    const auto [base, path] = split_url(uri);
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_follow_location(true);
    auto res = client.Get(path);
    if (!res) throw ProviderError(ProviderErrc::Timeout, "fetch " + uri + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw ProviderError(ProviderErrc::ProtocolError, "fetch " + uri + ": HTTP " + std::to_string(res->status));
    }
    std::string ct = res->get_header_value("Content-Type");
    return {std::move(res->body), ct.empty() ? content_type_for(uri) : ct};
}

}  // namespace pagerag::providers
