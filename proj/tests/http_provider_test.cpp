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

#include <atomic>
#include <functional>
#include <thread>

#include <gtest/gtest.h>

#include "pagerag/providers.hpp"
#include "pagerag/util.hpp"
#include "scenario.hpp"

namespace pagerag::providers {
namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

class LocalServer {
public:
    explicit LocalServer(Handler h) {
        server_.Post("/v1/invoke", [this, h](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            h(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/invoke"; }
    int hits() const { return hits_; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<int> hits_{0};
};

EndpointConfig fast(const std::string& url) {
    EndpointConfig c;
    c.url = url;
    c.max_retries = 2;
    c.backoff_ms = 1;
    c.completion_timeout_ms = 2000;
    c.embedding_timeout_ms = 2000;
    return c;
}

ProviderRequest text_req() {
    ProviderRequest r;
    r.kind = RequestKind::CompleteText;
    r.system_prompt = "sys";
    r.user_content = "hello";
    return r;
}

ProviderError invoke_error(HttpProvider& p, const ProviderRequest& r) {
    try {
        p.invoke(r);
    } catch (const ProviderError& e) {
        return e;
    }
    ADD_FAILURE() << "expected ProviderError";
    return ProviderError(ProviderErrc::InvalidRequest, "none");
}

TEST(HttpProvider, NativeCompletionRoundTrip) {
    nlohmann::json seen;
    std::string auth;
    LocalServer srv([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"text": "ok from server"})", "application/json");
    });
    auto cfg = fast(srv.url());
    cfg.api_key = "secret";
    cfg.model = "m-1";
    HttpProvider p(cfg);
    const auto resp = p.invoke(text_req());
    EXPECT_EQ(resp.text, "ok from server");
    EXPECT_EQ(resp.attempts, 1);
    EXPECT_EQ(seen["kind"], "CompleteText");
    EXPECT_EQ(seen["system_prompt"], "sys");
    EXPECT_EQ(seen["user_content"], "hello");
    EXPECT_EQ(seen["model"], "m-1");
    EXPECT_EQ(seen["params"]["max_output_tokens"], 1024);
    EXPECT_EQ(auth, "Bearer secret");
}

TEST(HttpProvider, NativeEmbeddingAndInlinedLocalImage) {
    testing::TempDir dir;
    write_file_atomic(dir.path() / "p.png", "PNGBYTES");
    nlohmann::json seen;
    LocalServer srv([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"embedding": [[1, 2], [3, 4], [5, 6]]})", "application/json");
    });
    HttpProvider p(fast(srv.url()));
    ProviderRequest r;
    r.kind = RequestKind::EmbedImage;
    r.image_refs = {file_uri(dir.path() / "p.png"), "https://cdn.example.org/x.png"};
    const auto resp = p.invoke(r);
    ASSERT_TRUE(resp.embedding.has_value());
    EXPECT_EQ(resp.embedding->rows(), 3u);
    EXPECT_EQ(resp.embedding->dim(), 2u);
    EXPECT_EQ(seen["image_refs"][0], "data:image/png;base64,UE5HQllURVM=");
    EXPECT_EQ(seen["image_refs"][1], "https://cdn.example.org/x.png");
}

TEST(HttpProvider, OpenAiDialect) {
    nlohmann::json seen;
    LocalServer srv([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        if (seen.contains("input")) {
            res.set_content(R"({"data": [{"embedding": [0.5, 0.25]}]})", "application/json");
        } else {
            res.set_content(R"({"choices": [{"message": {"content": "chat reply"}}]})", "application/json");
        }
    });
    auto cfg = fast(srv.url());
    cfg.dialect = Dialect::OpenAI;
    cfg.model = "gpt-x";
    HttpProvider p(cfg);
    EXPECT_EQ(p.invoke(text_req()).text, "chat reply");
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_EQ(seen["messages"][1]["content"], "hello");

    ProviderRequest e;
    e.kind = RequestKind::EmbedText;
    e.user_content = "q";
    const auto resp = p.invoke(e);
    ASSERT_TRUE(resp.embedding.has_value());
    EXPECT_EQ(resp.embedding->rows(), 1u);

    ProviderRequest img;
    img.kind = RequestKind::EmbedImage;
    img.image_refs = {"https://x/y.png"};
    EXPECT_EQ(invoke_error(p, img).code(), ProviderErrc::Unconfigured);
}

TEST(HttpProvider, RetriesTransientStatusThenSucceeds) {
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) {
            res.status = calls == 1 ? 503 : 429;
            return;
        }
        res.set_content(R"({"text": "third time"})", "application/json");
    });
    HttpProvider p(fast(srv.url()));
    const auto resp = p.invoke(text_req());
    EXPECT_EQ(resp.text, "third time");
    EXPECT_EQ(resp.attempts, 3);
}

TEST(HttpProvider, ExhaustedRetriesReportUpstream) {
    LocalServer srv([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    HttpProvider p(fast(srv.url()));
    const auto e = invoke_error(p, text_req());
    EXPECT_EQ(e.code(), ProviderErrc::Upstream);
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_EQ(srv.hits(), 3);
}

TEST(HttpProvider, AuthFailureIsNotRetried) {
    LocalServer srv([](const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    HttpProvider p(fast(srv.url()));
    const auto e = invoke_error(p, text_req());
    EXPECT_EQ(e.code(), ProviderErrc::AuthError);
    EXPECT_EQ(e.body_excerpt(), "bad key");
    EXPECT_EQ(srv.hits(), 1);
}

TEST(HttpProvider, ClientErrorIsProtocolError) {
    LocalServer srv([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    HttpProvider p(fast(srv.url()));
    EXPECT_EQ(invoke_error(p, text_req()).code(), ProviderErrc::ProtocolError);
    EXPECT_EQ(srv.hits(), 1);
}

TEST(HttpProvider, MalformedPayloadKeepsExcerpt) {
    LocalServer srv([](const httplib::Request&, httplib::Response& res) {
        res.set_content("<html>oops</html>", "text/html");
    });
    HttpProvider p(fast(srv.url()));
    const auto e = invoke_error(p, text_req());
    EXPECT_EQ(e.code(), ProviderErrc::ProtocolError);
    EXPECT_EQ(e.body_excerpt(), "<html>oops</html>");
}

TEST(HttpProvider, WrongShapeAndEmptyText) {
    LocalServer srv([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(body["user_content"] == "empty" ? R"({"text": "  "})" : R"({"answer": "x"})",
                        "application/json");
    });
    HttpProvider p(fast(srv.url()));
    EXPECT_EQ(invoke_error(p, text_req()).code(), ProviderErrc::ProtocolError);
    auto r = text_req();
    r.user_content = "empty";
    EXPECT_EQ(invoke_error(p, r).code(), ProviderErrc::EmptyResponse);
}

TEST(HttpProvider, UnreachableEndpointTimesOut) {
    int port = 0;
    {
        httplib::Server s;
        port = s.bind_to_any_port("127.0.0.1");
    }  // closed again: nothing listens there now
    auto cfg = fast("http://127.0.0.1:" + std::to_string(port) + "/v1/invoke");
    cfg.max_retries = 1;
    HttpProvider p(cfg);
    const auto e = invoke_error(p, text_req());
    EXPECT_EQ(e.code(), ProviderErrc::Timeout);
    EXPECT_EQ(e.attempts(), 2);
}

TEST(HttpProvider, InFlightLimitIsRespected) {
    std::atomic<int> current{0}, peak{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& res) {
        const int now = ++current;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        --current;
        res.set_content(R"({"text": "ok"})", "application/json");
    });
    auto cfg = fast(srv.url());
    cfg.max_in_flight = 2;
    HttpProvider p(cfg);
    std::vector<std::jthread> threads;
    for (int i = 0; i < 6; ++i) threads.emplace_back([&] { p.invoke(text_req()); });
    threads.clear();
    EXPECT_LE(peak.load(), 2);
    EXPECT_EQ(srv.hits(), 6);
}

TEST(HttpProvider, RejectsBadConfig) {
    EXPECT_THROW(HttpProvider(EndpointConfig{}), ProviderError);
    EndpointConfig c;
    c.url = "no-scheme";
    EXPECT_THROW(HttpProvider{c}, ProviderError);
}

TEST(FetchUri, LocalAndMissing) {
    testing::TempDir dir;
    write_file_atomic(dir.path() / "a.png", "abc");
    const auto res = fetch_uri(file_uri(dir.path() / "a.png"));
    EXPECT_EQ(res.bytes, "abc");
    EXPECT_EQ(res.content_type, "image/png");
    EXPECT_THROW(fetch_uri(file_uri(dir.path() / "nope.png")), ProviderError);
    EXPECT_THROW(fetch_uri("ftp://x/y"), ProviderError);
}

}  // namespace
}  // namespace pagerag::providers
