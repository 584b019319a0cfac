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

#include <gtest/gtest.h>

#include "pagerag/providers.hpp"

namespace pagerag::providers {
namespace {

ProviderRequest text_req(std::string sys, std::string user) {
    ProviderRequest r;
    r.kind = RequestKind::CompleteText;
    r.system_prompt = std::move(sys);
    r.user_content = std::move(user);
    return r;
}

ProviderErrc error_code(Provider& p, const ProviderRequest& r) {
    try {
        p.invoke(r);
    } catch (const ProviderError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no ProviderError";
    return ProviderErrc::InvalidRequest;
}

// Expected values come from an independent Python hashlib implementation of
// the canonical request encoding.
TEST(Fingerprint, MatchesReferenceEncoding) {
    EXPECT_EQ(fingerprint(text_req("sys", "hello")), "CompleteText:a5bfeeb25956462885274d08edd11336");

    ProviderRequest mm;
    mm.kind = RequestKind::CompleteMultimodal;
    mm.system_prompt = "Judge pages.";
    mm.user_content = "Is this relevant?";
    mm.image_refs = {"https://x.org/a.png", "file:///tmp/b%20c.png"};
    mm.params = {256, 0.7};
    EXPECT_EQ(fingerprint(mm), "CompleteMultimodal:0cb47129fe3af899e4906b6bac5b4f75");

    ProviderRequest et;
    et.kind = RequestKind::EmbedText;
    et.user_content = "acetazolamide dosing";
    EXPECT_EQ(fingerprint(et), "EmbedText:189db56d622e06ec18853e9291f01768");

    ProviderRequest ei;
    ei.kind = RequestKind::EmbedImage;
    ei.image_refs = {"https://x.org/a.png"};
    EXPECT_EQ(fingerprint(ei), "EmbedImage:b90db1fb236a035a0b9250e8432cacb1");
}

TEST(Fingerprint, SensitiveToEveryField) {
    const auto base = text_req("a", "b");
    auto other = base;
    other.params.max_output_tokens = 1;
    EXPECT_NE(fingerprint(base), fingerprint(other));
    other = base;
    other.params.temperature = 0.1;
    EXPECT_NE(fingerprint(base), fingerprint(other));
    // Length prefixes keep field boundaries unambiguous.
    EXPECT_NE(fingerprint(text_req("ab", "")), fingerprint(text_req("a", "b")));
}

TEST(Validate, ImagesMustMatchKind) {
    ProviderRequest r = text_req("s", "u");
    EXPECT_NO_THROW(validate_request(r));
    r.image_refs = {"https://x/y.png"};
    EXPECT_THROW(validate_request(r), ProviderError);
    r.kind = RequestKind::CompleteMultimodal;
    EXPECT_NO_THROW(validate_request(r));
    r.image_refs.clear();
    EXPECT_THROW(validate_request(r), ProviderError);

    ProviderRequest e;
    e.kind = RequestKind::EmbedText;
    EXPECT_THROW(validate_request(e), ProviderError);
}

TEST(Mock, ReturnsScriptedResponses) {
    auto script = std::make_shared<MockScript>();
    script->add_text(text_req("s", "u"), "answer");
    ProviderRequest emb;
    emb.kind = RequestKind::EmbedText;
    emb.user_content = "q";
    script->add_embedding(emb, index::SeqEmbedding::from_rows({{1, 2}, {3, 4}}));
    MockProvider mock(script, "m1");

    EXPECT_EQ(mock.invoke(text_req("s", "u")).text, "answer");
    const auto resp = mock.invoke(emb);
    ASSERT_TRUE(resp.embedding.has_value());
    EXPECT_EQ(resp.embedding->rows(), 2u);
    EXPECT_EQ(resp.provider_id, "m1");
    ASSERT_EQ(mock.calls().size(), 2u);
    EXPECT_EQ(mock.calls()[0].kind, RequestKind::CompleteText);
    EXPECT_EQ(mock.calls()[0].system_prompt, "s");
}

TEST(Mock, StrictUnscriptedIsNotAProviderError) {
    auto script = std::make_shared<MockScript>();
    MockProvider mock(script);
    try {
        mock.invoke(text_req("s", "never scripted"));
        FAIL();
    } catch (const ProviderError&) {
        FAIL() << "strict mock must not raise a recoverable error";
    } catch (const UnscriptedRequest& e) {
        EXPECT_EQ(e.fingerprint(), fingerprint(text_req("s", "never scripted")));
    }
    EXPECT_EQ(mock.unscripted().size(), 1u);
}

TEST(Mock, LenientUnscriptedIsRecoverable) {
    auto script = std::make_shared<MockScript>();
    script->strict_mode = false;
    MockProvider mock(script);
    EXPECT_EQ(error_code(mock, text_req("s", "x")), ProviderErrc::Unscripted);
}

TEST(Mock, ScriptedErrorsAndEmptyText) {
    auto script = std::make_shared<MockScript>();
    script->add_error(text_req("s", "boom"), ProviderErrc::Timeout, "slow");
    script->add_text(text_req("s", "empty"), "");
    MockProvider mock(script);
    EXPECT_EQ(error_code(mock, text_req("s", "boom")), ProviderErrc::Timeout);
    EXPECT_EQ(error_code(mock, text_req("s", "empty")), ProviderErrc::EmptyResponse);
}

TEST(Mock, ScriptFileRoundTrip) {
    MockScript script;
    script.strict_mode = false;
    script.add_text(text_req("s", "u"), "hi");
    script.add_error(text_req("s", "e"), ProviderErrc::Upstream, "down");
    ProviderRequest emb;
    emb.kind = RequestKind::EmbedText;
    emb.user_content = "q";
    script.add_embedding(emb, index::SeqEmbedding::from_rows({{0.5f, 1}}));

    const auto back = MockScript::parse(script.serialize());
    EXPECT_FALSE(back.strict_mode);
    EXPECT_EQ(back.size(), 3u);
    EXPECT_EQ(back.serialize(), script.serialize());
    EXPECT_EQ(*back.find(fingerprint(text_req("s", "u")))->text, "hi");
}

TEST(Mock, ScriptByRequestDescription) {
    const auto script = MockScript::parse(R"({"entries": [
        {"request": {"kind": "CompleteText", "system_prompt": "s", "user_content": "u"},
         "response": {"text": "from request"}}]})");
    EXPECT_TRUE(script.strict_mode);
    ASSERT_NE(script.find(fingerprint(text_req("s", "u"))), nullptr);
    EXPECT_THROW(MockScript::parse(R"({"entries": [{"fingerprint": "x", "response": {}}]})"), ProviderError);
    EXPECT_THROW(MockScript::parse("not json"), ProviderError);
}

TEST(ProviderSet, UnconfiguredRoleNamesEnvVar) {
    ProviderSet set;
    EXPECT_FALSE(set.has(Role::Judge));
    try {
        set.get(Role::Judge);
        FAIL();
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.code(), ProviderErrc::Unconfigured);
        EXPECT_NE(std::string(e.what()).find("JUDGE_URL"), std::string::npos);
    }
    set.set_all(std::make_shared<MockProvider>(std::make_shared<MockScript>()));
    for (Role r : kAllRoles) EXPECT_TRUE(set.has(r));
}

}  // namespace
}  // namespace pagerag::providers
