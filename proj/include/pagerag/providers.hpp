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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pagerag/vector_index.hpp"

namespace pagerag::providers {

enum class RequestKind { CompleteText, CompleteMultimodal, EmbedText, EmbedImage };

std::string_view to_string(RequestKind kind);
RequestKind parse_request_kind(std::string_view s);
bool is_completion(RequestKind kind);
bool requires_images(RequestKind kind);

struct RequestParams {
    int max_output_tokens = 1024;
    double temperature = 0.0;

    bool operator==(const RequestParams&) const = default;
};

struct ProviderRequest {
    RequestKind kind = RequestKind::CompleteText;
    std::string system_prompt;
    std::string user_content;
    std::vector<std::string> image_refs;
    RequestParams params;

    bool operator==(const ProviderRequest&) const = default;
};

struct ProviderResponse {
    std::string text;
    std::optional<index::SeqEmbedding> embedding;
    std::int64_t latency_ms = 0;
    std::string provider_id;
    int attempts = 1;
};

enum class ProviderErrc {
    InvalidRequest,
    Unconfigured,
    Timeout,        // transport failures, retry budget exhausted
    Upstream,       // retriable HTTP status, retry budget exhausted
    ProtocolError,  // malformed payload or non-retriable status
    AuthError,
    EmptyResponse,
    Unscripted,     // non-strict mock without an entry
};

std::string_view to_string(ProviderErrc code);
ProviderErrc parse_provider_errc(std::string_view s);

class ProviderError : public std::runtime_error {
public:
    ProviderError(ProviderErrc code, const std::string& what, int attempts = 1, std::string body_excerpt = {})
        : std::runtime_error(what), code_(code), attempts_(attempts), body_excerpt_(std::move(body_excerpt)) {}

    ProviderErrc code() const noexcept { return code_; }
    int attempts() const noexcept { return attempts_; }
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

private:
    ProviderErrc code_;
    int attempts_;
    std::string body_excerpt_;
};

/// Raised by a strict mock for a request it was not scripted for. Not a
/// ProviderError, so pipeline degradation paths never swallow it.
class UnscriptedRequest : public std::logic_error {
public:
    explicit UnscriptedRequest(std::string fp)
        : std::logic_error("strict mock: unscripted request " + fp), fingerprint_(std::move(fp)) {}
    const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    std::string fingerprint_;
};

/// Throws ProviderError(InvalidRequest) when image_refs disagree with kind.
void validate_request(const ProviderRequest& request);

/// "<Kind>:<32 hex>" over a length-prefixed serialization of every field,
/// image order included.
std::string fingerprint(const ProviderRequest& request);

class Provider {
public:
    virtual ~Provider() = default;
    virtual ProviderResponse invoke(const ProviderRequest& request) = 0;
    virtual std::string id() const = 0;
};

enum class Role { Planner, Router, Rewriter, Judge, Generator, Embedder, Grader };
inline constexpr std::array kAllRoles = {Role::Planner,   Role::Router,   Role::Rewriter, Role::Judge,
                                         Role::Generator, Role::Embedder, Role::Grader};

std::string_view to_string(Role role);
/// Environment variable carrying the endpoint URL for a role, e.g. PLANNER_URL.
std::string env_var_for(Role role);

/// Per-role provider table. Roles may alias the same provider.
class ProviderSet {
public:
    void set(Role role, std::shared_ptr<Provider> provider);
    void set_all(const std::shared_ptr<Provider>& provider);
    bool has(Role role) const;
    Provider& get(Role role) const;

private:
    std::map<Role, std::shared_ptr<Provider>> providers_;
};

// ---------------------------------------------------------------------------
// Scripted mock

struct MockEntry {
    std::optional<std::string> text;
    std::optional<index::SeqEmbedding> embedding;
    std::optional<ProviderErrc> error;
    std::string error_message;
};

/// Canned responses keyed by request fingerprint.
class MockScript {
public:
    bool strict_mode = true;

    void add(const ProviderRequest& request, MockEntry entry);
    void add_text(const ProviderRequest& request, std::string text);
    void add_embedding(const ProviderRequest& request, index::SeqEmbedding embedding);
    void add_error(const ProviderRequest& request, ProviderErrc code, std::string message = {});
    void add_fingerprint(std::string fp, MockEntry entry);

    const MockEntry* find(const std::string& fp) const;
    std::size_t size() const noexcept { return entries_.size(); }

    /// {"strict": bool, "entries": [{"fingerprint" | "request", "response": {...}}]}
    static MockScript parse(std::string_view text);
    static MockScript load(const std::filesystem::path& path);
    std::string serialize() const;

private:
    std::map<std::string, MockEntry> entries_;
};

struct CallRecord {
    std::string fingerprint;
    RequestKind kind;
    std::string system_prompt;
};

class MockProvider : public Provider {
public:
    explicit MockProvider(std::shared_ptr<const MockScript> script, std::string id = "mock");

    ProviderResponse invoke(const ProviderRequest& request) override;
    std::string id() const override { return id_; }

    std::vector<CallRecord> calls() const;
    std::vector<std::string> unscripted() const;
    void reset_log();

private:
    std::shared_ptr<const MockScript> script_;
    std::string id_;
    mutable std::mutex mutex_;
    std::vector<CallRecord> calls_;
    std::vector<std::string> unscripted_;
};

// ---------------------------------------------------------------------------
// HTTP

enum class Dialect { Native, OpenAI };

struct EndpointConfig {
    std::string url;
    std::string api_key;
    Dialect dialect = Dialect::Native;
    std::string model;
    int completion_timeout_ms = 60000;
    int embedding_timeout_ms = 30000;
    int max_retries = 3;
    int backoff_ms = 250;
    int max_in_flight = 4;
};

Dialect parse_dialect(std::string_view s);

/// Client for one configured endpoint. Retries transport failures and
/// 408/429/5xx with exponential backoff; never retries other statuses.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(EndpointConfig config);
    ~HttpProvider() override;

    ProviderResponse invoke(const ProviderRequest& request) override;
    std::string id() const override;

    const EndpointConfig& config() const noexcept { return config_; }

private:
    struct Limiter;
    EndpointConfig config_;
    std::unique_ptr<Limiter> limiter_;
};

struct FetchedResource {
    std::string bytes;
    std::string content_type;
};

/// Reads file:// or fetches http(s):// URIs. Throws ProviderError on failure.
FetchedResource fetch_uri(const std::string& uri, int timeout_ms = 30000);

/// Content type guessed from the file extension of a URI or path.
std::string content_type_for(std::string_view uri);

}  // namespace pagerag::providers
