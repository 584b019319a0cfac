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

#include <atomic>
#include <random>

#include <gtest/gtest.h>

#include "pagerag/eval.hpp"
#include "pagerag/util.hpp"
#include "scenario.hpp"

namespace pagerag::eval {
namespace {

using nlohmann::json;
using providers::ProviderErrc;

RubricCriterion crit(int points, std::set<Axis> axes = {}, std::string text = "c") {
    return {std::move(text), points, std::move(axes)};
}

// Grades by rule instead of by script: a criterion "contains: X" is met when
// the graded response contains X; "offline" makes the call fail.
class RuleGrader : public providers::Provider {
public:
    providers::ProviderResponse invoke(const providers::ProviderRequest& r) override {
        ++calls;
        const auto& u = r.user_content;
        const auto resp_at = u.find("Response to grade:\n") + 19;
        const auto resp_end = u.find("\n\nRubric criterion");
        const std::string response = u.substr(resp_at, resp_end - resp_at);
        const std::string criterion = u.substr(u.find(":\n", resp_end) + 2);
        if (criterion == "offline") throw providers::ProviderError(ProviderErrc::Timeout, "grader offline");
        if (criterion == "chatty") return {"I think it is met.", std::nullopt, 0, "rule", 1};
        const bool met = criterion.rfind("contains: ", 0) == 0 && response.find(criterion.substr(10)) != std::string::npos;
        return {json{{"explanation", "rule"}, {"criteria_met", met}}.dump(), std::nullopt, 0, "rule", 1};
    }
    std::string id() const override { return "rule"; }
    std::atomic<int> calls{0};
};

TEST(Score, FixtureFromDefinition) {
    // +5 met, +3 unmet, -2 met: (5 - 2) / 8.
    const std::vector<RubricCriterion> rubric = {crit(5), crit(3), crit(-2)};
    const auto s = score_example(rubric, {true, false, true});
    EXPECT_DOUBLE_EQ(s.overall, 0.375);
    EXPECT_DOUBLE_EQ(s.overall, testing::rubric_score_oracle({{5, true}, {3, false}, {-2, true}}));
}

TEST(Score, ClampsToUnitInterval) {
    const std::vector<RubricCriterion> rubric = {crit(2), crit(-5)};
    EXPECT_DOUBLE_EQ(score_example(rubric, {false, true}).overall, 0.0);
    EXPECT_DOUBLE_EQ(score_example(rubric, {true, false}).overall, 1.0);
    EXPECT_THROW(score_example({crit(-1)}, {true}), EvalError);
    EXPECT_THROW(score_example(rubric, {true}), EvalError);
}

TEST(Score, AxesUsePositivePointsOfTaggedCriteria) {
    const std::vector<RubricCriterion> rubric = {crit(4, {Axis::Accuracy}), crit(2, {Axis::Accuracy, Axis::Completeness}),
                                                 crit(-3, {Axis::CommunicationQuality}), crit(6)};
    const auto s = score_example(rubric, {true, false, true, true});
    EXPECT_DOUBLE_EQ(s.overall, 7.0 / 12.0);
    EXPECT_DOUBLE_EQ(s.axes.at(Axis::Accuracy), 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(s.axes.at(Axis::Completeness), 0.0);
    // Only negative points on this axis: undefined, not zero.
    EXPECT_FALSE(s.axes.count(Axis::CommunicationQuality));
    EXPECT_FALSE(s.axes.count(Axis::ContextAwareness));
}

TEST(Score, MatchesOracleAndIsMonotone) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<RubricCriterion> rubric;
        std::vector<std::pair<int, bool>> oracle_in;
        std::vector<bool> met;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            int pts = static_cast<int>(rng() % 21) - 10;
            if (pts == 0 || i == 0) pts = 1 + static_cast<int>(rng() % 10);
            rubric.push_back(crit(pts));
            met.push_back(rng() % 2 == 0);
            oracle_in.push_back({pts, met.back()});
        }
        const double base = score_example(rubric, met).overall;
        ASSERT_NEAR(base, testing::rubric_score_oracle(oracle_in), 1e-12);
        // Flipping a positive criterion to met never lowers the score.
        for (int i = 0; i < n; ++i) {
            if (rubric[i].points > 0 && !met[i]) {
                auto more = met;
                more[i] = true;
                ASSERT_GE(score_example(rubric, more).overall, base);
            }
        }
    }
}

TEST(Aggregate, MeanPerDefinedValue) {
    std::vector<ExampleScore> scores = {{0.5, {{Axis::Accuracy, 1.0}}}, {0.25, {}}, {1.0, {{Axis::Accuracy, 0.0}}}};
    const auto r = aggregate(scores, "full");
    EXPECT_NEAR(r.overall, testing::spreadsheet_mean({0.5, 0.25, 1.0}), 1e-12);
    EXPECT_DOUBLE_EQ(r.axes.at(Axis::Accuracy), 0.5);
    EXPECT_FALSE(r.axes.count(Axis::Completeness));
    EXPECT_EQ(r.n_examples, 3u);
    EXPECT_THROW(aggregate({}, "x"), EvalError);
}

TEST(Report, ExactTableLayout) {
    AxisReport a;
    a.config_label = "full";
    a.overall = 2.0 / 3.0;
    a.axes = {{Axis::Accuracy, 0.5}, {Axis::Completeness, 1.0}, {Axis::InstructionFollowing, 0.123456},
              {Axis::ContextAwareness, 0.0}, {Axis::CommunicationQuality, 0.99995}};
    AxisReport b;
    b.config_label = "no_rerank";
    b.overall = 0.375;
    EXPECT_EQ(format_report_table({a, b}),
              "| Model | Overall Score | Accuracy | Completeness | Instruction Following | Context Awareness | "
              "Communication Quality |\n"
              "|---|---|---|---|---|---|---|\n"
              "| full | 0.6667 | 0.5000 | 1.0000 | 0.1235 | 0.0000 | 1.0000 |\n"
              "| no_rerank | 0.3750 | n/a | n/a | n/a | n/a | n/a |\n");
}

TEST(Axes, NamesAndParsing) {
    EXPECT_EQ(to_string(Axis::InstructionFollowing), "instruction_following");
    EXPECT_EQ(column_title(Axis::ContextAwareness), "Context Awareness");
    EXPECT_EQ(parse_axis("axis:communication_quality"), Axis::CommunicationQuality);
    EXPECT_EQ(parse_axis("accuracy"), Axis::Accuracy);
    EXPECT_FALSE(parse_axis("theme:emergency").has_value());
    EXPECT_EQ(parse_subset("hard"), Subset::Hard);
    EXPECT_THROW(parse_subset("easy"), EvalError);
}

json record(const std::string& question) {
    return {{"prompt_id", "id-" + question.substr(0, 3)},
            {"prompt", {{{"role", "user"}, {"content", question}}}},
            {"rubrics", {{{"criterion", "x"}, {"points", 1}}}}};
}

TEST(Filter, KeywordSelection) {
    const std::vector<json> recs = {
        {{"question", "I have a headache"}},
        {{"prompt", "My GLAUCOMA worsened"}},
        {{"content", "Is myopia progression reversible?"}},
        {{"id", 4}},
        record("Red eye after swimming"),
        {{"question", "My eyebrow itches"}},
    };
    const auto sub = filter_ophthalmology(recs);
    EXPECT_EQ(sub.kept, (std::vector<std::size_t>{1, 2, 4, 5}));  // "eyebrow" contains "eye"
    ASSERT_EQ(sub.warnings.size(), 1u);
    EXPECT_NE(sub.warnings[0].find("record 3"), std::string::npos);

    const auto word = filter_ophthalmology(recs, default_keywords(), MatchMode::WordBoundary);
    EXPECT_EQ(word.kept, (std::vector<std::size_t>{1, 2, 4}));

    EXPECT_THROW(filter_ophthalmology(recs, {}), EvalError);
    EXPECT_EQ(filter_ophthalmology(recs, {"HEADACHE"}).kept, (std::vector<std::size_t>{0}));
}

TEST(Filter, KeywordListAndMatching) {
    EXPECT_EQ(default_keywords().size(), 16u);
    EXPECT_TRUE(matches_keywords("raised intraocular pressure", default_keywords(), MatchMode::WordBoundary));
    EXPECT_FALSE(matches_keywords("the retinal layer", {"retina"}, MatchMode::WordBoundary));
    EXPECT_TRUE(matches_keywords("the retinal layer", {"retina"}, MatchMode::Substring));
    EXPECT_TRUE(matches_keywords("retina.", {"retina"}, MatchMode::WordBoundary));
    EXPECT_EQ(extract_question_text(json{{"prompt", {{{"role", "system"}, {"content", "a"}}, {{"content", "b"}}}}}),
              "a\nb");
    EXPECT_FALSE(extract_question_text(json{{"prompt", 3}}).has_value());
}

TEST(Dataset, ParseExample) {
    const json rec = {{"prompt_id", "p-1"},
                      {"prompt", {{{"role", "user"}, {"content", "Q1"}}, {{"role", "assistant"}, {"content", "A1"}},
                                  {{"role", "user"}, {"content", "Q2"}}}},
                      {"rubrics",
                       {{{"criterion", "mentions dose"}, {"points", 5}, {"tags", {"axis:accuracy", "level:example"}}},
                        {{"criterion", "is rude"}, {"points", -2.0}, {"tags", {"axis:communication_quality"}}},
                        {{"criterion", "tag without prefix"}, {"points", 1}, {"tags", {"completeness"}}}}}};
    const auto ex = parse_example(rec, Subset::Main, 7);
    EXPECT_EQ(ex.example_id, "p-1");
    ASSERT_EQ(ex.conversation.size(), 3u);
    EXPECT_EQ(render_conversation(ex.conversation), "user: Q1\n\nassistant: A1\n\nuser: Q2");
    ASSERT_EQ(ex.rubric.size(), 3u);
    EXPECT_EQ(ex.rubric[1].points, -2);
    EXPECT_EQ(ex.rubric[0].axes, (std::set<Axis>{Axis::Accuracy}));
    EXPECT_TRUE(ex.rubric[2].axes.empty());

    auto no_id = rec;
    no_id.erase("prompt_id");
    EXPECT_EQ(parse_example(no_id, Subset::Hard, 12).example_id, "hard-12");

    auto bad = rec;
    bad["rubrics"][0]["points"] = 0;
    EXPECT_THROW(parse_example(bad, Subset::Main), EvalError);
    bad["rubrics"][0]["points"] = 1.5;
    EXPECT_THROW(parse_example(bad, Subset::Main), EvalError);
    EXPECT_THROW(parse_example(json{{"prompt", "q"}}, Subset::Main), EvalError);
}

TEST(Dataset, JsonlAndFileLocation) {
    testing::TempDir dir;
    write_file_atomic(dir.path() / "hard_2025-05-08-21-00-10.jsonl", "{\"a\": 1}\n\n{\"a\": 2}\n");
    write_file_atomic(dir.path() / "2025-05-07-06-14-12_oss_eval.jsonl", "{\"a\": 3}\n");
    write_file_atomic(dir.path() / "consensus.jsonl", "{\"a\": 4}\nnot json\n");

    const auto hard = locate_subset_file(dir.path(), Subset::Hard);
    EXPECT_EQ(load_jsonl(hard).size(), 2u);
    EXPECT_EQ(load_jsonl(locate_subset_file(dir.path(), Subset::Main))[0]["a"], 3);
    try {
        load_jsonl(locate_subset_file(dir.path(), Subset::Consensus));
        FAIL();
    } catch (const EvalError& e) {
        EXPECT_NE(std::string(e.what()).find("consensus.jsonl:2"), std::string::npos) << e.what();
    }
    testing::TempDir empty;
    EXPECT_THROW(locate_subset_file(empty.path(), Subset::Main), EvalError);
}

TEST(Grading, OneCallPerCriterionWithConservativeFailures) {
    const auto prompts = PromptSet::load(testing::prompts_dir());
    EvalExample ex;
    ex.conversation = {{"user", "q"}};
    ex.rubric = {crit(5, {}, "contains: dose"), crit(3, {}, "contains: missing"), crit(2, {}, "offline"),
                 crit(1, {}, "chatty")};
    RuleGrader grader;
    const auto g = grade_with_model(ex, "reduce the dose", grader, prompts);
    EXPECT_EQ(g.calls, 4);
    EXPECT_EQ(grader.calls.load(), 4);
    EXPECT_EQ(g.verdicts, (std::vector<bool>{true, false, false, false}));
    EXPECT_EQ(g.degraded, (std::vector<std::size_t>{2, 3}));
    EXPECT_FALSE(g.ungradable);

    ex.rubric = {crit(5, {}, "offline"), crit(-1, {}, "offline")};
    EXPECT_TRUE(grade_with_model(ex, "x", grader, prompts).ungradable);
}

TEST(Grading, RequestIsDeterministic) {
    const auto prompts = PromptSet::load(testing::prompts_dir());
    EvalExample ex;
    ex.conversation = {{"user", "q"}};
    const auto r = grader_request(prompts, ex, "answer", crit(-4, {}, "recommends stopping drops"));
    EXPECT_EQ(r.params.max_output_tokens, 512);
    EXPECT_EQ(r.params.temperature, 0.0);
    EXPECT_NE(r.user_content.find("Rubric criterion (-4 points):\nrecommends stopping drops"), std::string::npos);
    EXPECT_EQ(providers::fingerprint(r), providers::fingerprint(grader_request(prompts, ex, "answer", crit(-4, {}, "recommends stopping drops"))));
}

TEST(Matrix, StandardConfigs) {
    const auto cfgs = standard_ablation_configs(testing::config_with("no_router"));
    ASSERT_EQ(cfgs.size(), 4u);
    EXPECT_EQ(cfgs[0].label, "full");
    EXPECT_EQ(cfgs[0].config.ablations, Ablations{});
    EXPECT_EQ(cfgs[1].label, "no_rerank");
    EXPECT_TRUE(cfgs[1].config.ablations.no_rerank);
    EXPECT_FALSE(cfgs[1].config.ablations.no_router);
    EXPECT_EQ(cfgs[2].label, "no_query_rewrite");
    EXPECT_EQ(cfgs[3].label, "no_router");
}

// Three single-question examples answered from page 0 when reranking is on
// and from pages [0,1,3] without it; the rubric rewards citing page 0 alone.
struct MatrixFixture : ::testing::Test {
    std::unique_ptr<testing::Harness> h = testing::make_harness();
    std::shared_ptr<RuleGrader> grader = std::make_shared<RuleGrader>();
    std::vector<EvalExample> examples;
    std::vector<AblationConfig> configs = {{"full", testing::config_with("")},
                                           {"no_rerank", testing::config_with("no_rerank")}};
    testing::TempDir dir;

    void SetUp() override {
        h->providers.set(providers::Role::Grader, grader);
        for (int i = 1; i <= 3; ++i) {
            EvalExample ex;
            ex.example_id = "ex" + std::to_string(i);
            ex.conversation = {{"user", "Glaucoma question number " + std::to_string(i)}};
            ex.rubric = {crit(5, {Axis::Accuracy}, "contains: grounded answer"),
                         crit(3, {Axis::Completeness}, "contains: pages [0]"),
                         crit(-2, {Axis::Accuracy}, "contains: ,1")};
            examples.push_back(ex);
            for (const auto& c : configs) script(ex, c.config);
        }
    }

    testing::ScenarioSpec spec_for(const EvalExample& ex) const {
        testing::ScenarioSpec s;
        s.query = render_conversation(ex.conversation);
        s.atomic = true;
        s.routes = {pipeline::Route::RAG};
        s.rewrites = {{"glaucoma dosing"}};
        s.query_embeddings = {{"glaucoma dosing", {{1, 0, 0, 0}}}};
        s.grades = {{{1, 0}, 2}};
        return s;
    }

    void script(const EvalExample& ex, const PipelineConfig& cfg) {
        testing::script_scenario(*h->script, spec_for(ex), cfg, h->prompts, h->corpus);
    }
};

TEST_F(MatrixFixture, TwoConfigsThreeExamples) {
    trace::TraceStore store(dir.path() / "traces");
    const auto res = run_ablation_matrix(examples, configs, h->deps(), store);
    EXPECT_TRUE(h->mock->unscripted().empty());
    EXPECT_EQ(res.traces_written, 6u);
    EXPECT_EQ(store.list().size(), 6u);
    EXPECT_EQ(grader->calls.load(), 18);
    ASSERT_EQ(res.reports.size(), 2u);
    EXPECT_EQ(res.reports[0].config_label, "full");
    EXPECT_DOUBLE_EQ(res.reports[0].overall, 1.0);
    EXPECT_DOUBLE_EQ(res.reports[1].overall, 0.375);
    EXPECT_DOUBLE_EQ(res.reports[1].axes.at(Axis::Accuracy), 0.6);
    EXPECT_DOUBLE_EQ(res.reports[1].axes.at(Axis::Completeness), 0.0);
    EXPECT_EQ(res.table,
              "| Model | Overall Score | Accuracy | Completeness | Instruction Following | Context Awareness | "
              "Communication Quality |\n"
              "|---|---|---|---|---|---|---|\n"
              "| full | 1.0000 | 1.0000 | 1.0000 | n/a | n/a | n/a |\n"
              "| no_rerank | 0.3750 | 0.6000 | 0.0000 | n/a | n/a | n/a |\n");

    testing::TempDir other;
    trace::TraceStore store2(other.path());
    MatrixOptions opts;
    opts.concurrency = 3;
    EXPECT_EQ(run_ablation_matrix(examples, configs, h->deps(), store2, opts).table, res.table);
}

TEST_F(MatrixFixture, FailureRateGuard) {
    const auto& cfg = configs[0].config;
    const auto q = render_conversation(examples[1].conversation);
    h->script->add_error(pipeline::rag_answer_request(h->prompts, cfg, q, q,
                                                      {h->corpus.manifest.find(0)->image_uri}),
                         ProviderErrc::Upstream, "generator down");
    trace::TraceStore store(dir.path());
    try {
        run_ablation_matrix(examples, configs, h->deps(), store);
        FAIL() << "expected MatrixFailure";
    } catch (const MatrixFailure& f) {
        EXPECT_NE(std::string(f.what()).find("full: 1/3"), std::string::npos) << f.what();
        EXPECT_EQ(std::string(f.what()).find("no_rerank"), std::string::npos);
        ASSERT_EQ(f.partial().reports.size(), 2u);
        EXPECT_EQ(f.partial().reports[0].failed, 1u);
        EXPECT_EQ(f.partial().reports[0].n_examples, 2u);
        EXPECT_EQ(f.partial().traces_written, 6u);
    }
    // A looser limit accepts the same run.
    MatrixOptions lenient;
    lenient.max_failure_rate = 0.34;
    EXPECT_NO_THROW(run_ablation_matrix(examples, configs, h->deps(), store, lenient));
}

TEST_F(MatrixFixture, UngradableExamplesAreCountedNotScored) {
    examples[0].rubric = {crit(5, {}, "offline")};
    trace::TraceStore store(dir.path());
    const auto res = run_ablation_matrix(examples, configs, h->deps(), store);
    EXPECT_EQ(res.reports[0].ungradable, 1u);
    EXPECT_EQ(res.reports[0].n_examples, 2u);
}

TEST_F(MatrixFixture, RejectsEmptyInputs) {
    trace::TraceStore store(dir.path());
    EXPECT_THROW(run_ablation_matrix({}, configs, h->deps(), store), EvalError);
    EXPECT_THROW(run_ablation_matrix(examples, {}, h->deps(), store), EvalError);
}

}  // namespace
}  // namespace pagerag::eval
