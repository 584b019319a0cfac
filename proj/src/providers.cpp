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

#include "pagerag/providers.hpp"

#include <cstdio>

#include <json.hpp>

#include "pagerag/util.hpp"

namespace pagerag::providers {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(RequestKind kind) {
    switch (kind) {
        case RequestKind::CompleteText: return "CompleteText";
        case RequestKind::CompleteMultimodal: return "CompleteMultimodal";
        case RequestKind::EmbedText: return "EmbedText";
        case RequestKind::EmbedImage: return "EmbedImage";
    }
    return "CompleteText";
}

RequestKind parse_request_kind(std::string_view s) {
    for (auto k : {RequestKind::CompleteText, RequestKind::CompleteMultimodal, RequestKind::EmbedText,
                   RequestKind::EmbedImage}) {
        if (to_string(k) == s) return k;
    }
    throw ProviderError(ProviderErrc::InvalidRequest, "unknown request kind '" + std::string(s) + "'");
}

bool is_completion(RequestKind kind) {
    return kind == RequestKind::CompleteText || kind == RequestKind::CompleteMultimodal;
}

bool requires_images(RequestKind kind) {
    return kind == RequestKind::CompleteMultimodal || kind == RequestKind::EmbedImage;
}

std::string_view to_string(ProviderErrc code) {
    switch (code) {
        case ProviderErrc::InvalidRequest: return "invalid_request";
        case ProviderErrc::Unconfigured: return "unconfigured";
        case ProviderErrc::Timeout: return "timeout";
        case ProviderErrc::Upstream: return "upstream";
        case ProviderErrc::ProtocolError: return "protocol_error";
        case ProviderErrc::AuthError: return "auth_error";
        case ProviderErrc::EmptyResponse: return "empty_response";
        case ProviderErrc::Unscripted: return "unscripted";
    }
    return "unknown";
}

ProviderErrc parse_provider_errc(std::string_view s) {
    for (auto c : {ProviderErrc::InvalidRequest, ProviderErrc::Unconfigured, ProviderErrc::Timeout,
                   ProviderErrc::Upstream, ProviderErrc::ProtocolError, ProviderErrc::AuthError,
                   ProviderErrc::EmptyResponse, ProviderErrc::Unscripted}) {
        if (to_string(c) == s) return c;
    }
    throw ProviderError(ProviderErrc::InvalidRequest, "unknown provider error code '" + std::string(s) + "'");
}

void validate_request(const ProviderRequest& request) {
    if (requires_images(request.kind) == request.image_refs.empty()) {
        throw ProviderError(ProviderErrc::InvalidRequest,
                            std::string(to_string(request.kind)) +
                                (request.image_refs.empty() ? " requires image_refs" : " must not carry image_refs"));
    }
    if (request.params.temperature < 0.0) {
        throw ProviderError(ProviderErrc::InvalidRequest, "temperature must be >= 0");
    }
    if (request.kind == RequestKind::EmbedText && request.user_content.empty()) {
        throw ProviderError(ProviderErrc::InvalidRequest, "EmbedText requires non-empty user_content");
    }
}

std::string fingerprint(const ProviderRequest& request) {
    std::string buf = "pagerag-fp-v1\n";
    auto field = [&buf](std::string_view s) {
        buf += std::to_string(s.size());
        buf += ':';
        buf += s;
        buf += '\n';
    };
    field(to_string(request.kind));
    field(request.system_prompt);
    field(request.user_content);
    buf += std::to_string(request.image_refs.size()) + "\n";
    for (const auto& ref : request.image_refs) field(ref);
    char temp[64];
    std::snprintf(temp, sizeof(temp), "%.17g", request.params.temperature);
    buf += "max_output_tokens=" + std::to_string(request.params.max_output_tokens) + "\n";
    buf += std::string("temperature=") + temp + "\n";
    return std::string(to_string(request.kind)) + ":" + sha256_hex(buf).substr(0, 32);
}

std::string_view to_string(Role role) {
    switch (role) {
        case Role::Planner: return "planner";
        case Role::Router: return "router";
        case Role::Rewriter: return "rewriter";
        case Role::Judge: return "judge";
        case Role::Generator: return "generator";
        case Role::Embedder: return "embedder";
        case Role::Grader: return "grader";
    }
    return "unknown";
}

std::string env_var_for(Role role) {
    std::string name(to_string(role));
    for (auto& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name + "_URL";
}

void ProviderSet::set(Role role, std::shared_ptr<Provider> provider) { providers_[role] = std::move(provider); }

void ProviderSet::set_all(const std::shared_ptr<Provider>& provider) {
    for (auto role : kAllRoles) providers_[role] = provider;
}

bool ProviderSet::has(Role role) const {
    auto it = providers_.find(role);
    return it != providers_.end() && it->second;
}

Provider& ProviderSet::get(Role role) const {
    auto it = providers_.find(role);
    if (it == providers_.end() || !it->second) {
        throw ProviderError(ProviderErrc::Unconfigured,
                            "no provider configured for role " + std::string(to_string(role)) + " (set " +
                                env_var_for(role) + ")");
    }
    return *it->second;
}

// ---------------------------------------------------------------------------
// MockScript

namespace {

ProviderRequest request_from_json(const json& j) {
    ProviderRequest r;
    r.kind = parse_request_kind(j.at("kind").get<std::string>());
    r.system_prompt = j.value("system_prompt", "");
    r.user_content = j.value("user_content", "");
    r.image_refs = j.value("image_refs", std::vector<std::string>{});
    if (j.contains("params")) {
        r.params.max_output_tokens = j["params"].value("max_output_tokens", r.params.max_output_tokens);
        r.params.temperature = j["params"].value("temperature", r.params.temperature);
    }
    return r;
}

MockEntry entry_from_json(const json& j) {
    MockEntry e;
    if (j.contains("text")) e.text = j["text"].get<std::string>();
    if (j.contains("embedding")) {
        e.embedding = index::SeqEmbedding::from_rows(j["embedding"].get<std::vector<std::vector<float>>>());
    }
    if (j.contains("error")) {
        e.error = parse_provider_errc(j["error"].get<std::string>());
        e.error_message = j.value("message", "");
    }
    if (!e.text && !e.embedding && !e.error) {
        throw ProviderError(ProviderErrc::InvalidRequest, "mock response needs one of text, embedding, error");
    }
    return e;
}

}  // namespace

void MockScript::add(const ProviderRequest& request, MockEntry entry) {
    entries_[fingerprint(request)] = std::move(entry);
}

void MockScript::add_text(const ProviderRequest& request, std::string text) {
    MockEntry e;
    e.text = std::move(text);
    add(request, std::move(e));
}

void MockScript::add_embedding(const ProviderRequest& request, index::SeqEmbedding embedding) {
    MockEntry e;
    e.embedding = std::move(embedding);
    add(request, std::move(e));
}

void MockScript::add_error(const ProviderRequest& request, ProviderErrc code, std::string message) {
    MockEntry e;
    e.error = code;
    e.error_message = std::move(message);
    add(request, std::move(e));
}

void MockScript::add_fingerprint(std::string fp, MockEntry entry) { entries_[std::move(fp)] = std::move(entry); }

const MockEntry* MockScript::find(const std::string& fp) const {
    auto it = entries_.find(fp);
    return it == entries_.end() ? nullptr : &it->second;
}

MockScript MockScript::parse(std::string_view text) {
    try {
        const auto doc = json::parse(text);
        MockScript script;
        script.strict_mode = doc.value("strict", true);
        for (const auto& e : doc.at("entries")) {
            std::string fp;
            if (e.contains("fingerprint")) {
                fp = e["fingerprint"].get<std::string>();
            } else {
                fp = fingerprint(request_from_json(e.at("request")));
            }
            script.add_fingerprint(std::move(fp), entry_from_json(e.at("response")));
        }
        return script;
    } catch (const json::exception& e) {
        throw ProviderError(ProviderErrc::InvalidRequest, std::string("malformed mock script: ") + e.what());
    }
}

MockScript MockScript::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string MockScript::serialize() const {
    ojson doc;
    doc["strict"] = strict_mode;
    ojson entries = ojson::array();
    for (const auto& [fp, e] : entries_) {
        ojson resp;
        if (e.text) resp["text"] = *e.text;
        if (e.embedding) {
            ojson rows = ojson::array();
            for (std::size_t i = 0; i < e.embedding->rows(); ++i) {
                const auto r = e.embedding->row(i);
                rows.push_back(std::vector<float>(r.begin(), r.end()));
            }
            resp["embedding"] = std::move(rows);
        }
        if (e.error) {
            resp["error"] = to_string(*e.error);
            resp["message"] = e.error_message;
        }
        entries.push_back({{"fingerprint", fp}, {"response", std::move(resp)}});
    }
    doc["entries"] = std::move(entries);
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// MockProvider

MockProvider::MockProvider(std::shared_ptr<const MockScript> script, std::string id)
    : script_(std::move(script)), id_(std::move(id)) {}

ProviderResponse MockProvider::invoke(const ProviderRequest& request) {
    validate_request(request);
    const std::string fp = fingerprint(request);
    {
        std::lock_guard lock(mutex_);
        calls_.push_back({fp, request.kind, request.system_prompt});
    }
    const MockEntry* entry = script_->find(fp);
    if (!entry) {
        {
            std::lock_guard lock(mutex_);
            unscripted_.push_back(fp);
        }
        if (script_->strict_mode) throw UnscriptedRequest(fp);
        throw ProviderError(ProviderErrc::Unscripted, "mock has no entry for " + fp);
    }
    if (entry->error) {
        throw ProviderError(*entry->error,
                            entry->error_message.empty() ? "scripted " + std::string(to_string(*entry->error))
                                                         : entry->error_message);
    }
    ProviderResponse resp;
    resp.provider_id = id_;
    if (is_completion(request.kind)) {
        if (!entry->text) throw ProviderError(ProviderErrc::ProtocolError, "mock entry " + fp + " has no text");
        if (entry->text->empty()) throw ProviderError(ProviderErrc::EmptyResponse, "empty completion text");
        resp.text = *entry->text;
    } else {
        if (!entry->embedding) {
            throw ProviderError(ProviderErrc::ProtocolError, "mock entry " + fp + " has no embedding");
        }
        resp.embedding = *entry->embedding;
    }
    return resp;
}

std::vector<CallRecord> MockProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::vector<std::string> MockProvider::unscripted() const {
    std::lock_guard lock(mutex_);
    return unscripted_;
}

void MockProvider::reset_log() {
    std::lock_guard lock(mutex_);
    calls_.clear();
    unscripted_.clear();
}

}  // namespace pagerag::providers
