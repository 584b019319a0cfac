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

#include "pagerag/corpus.hpp"
#include "pagerag/image.hpp"
#include "pagerag/util.hpp"
#include "scenario.hpp"

namespace pagerag::corpus {
namespace {

using testing::TempDir;

std::vector<PageRecord> synthetic_records(const std::vector<int>& pages_per_doc) {
    std::vector<PageRecord> out;
    for (std::size_t d = 0; d < pages_per_doc.size(); ++d) {
        char doc[16];
        std::snprintf(doc, sizeof doc, "doc-%04zu", d);
        for (int p = 0; p < pages_per_doc[d]; ++p) {
            PageRecord r;
            r.doc_id = doc;
            r.page_index = p;
            r.image_uri = "https://example.org/" + std::string(doc) + "/" + std::to_string(p) + ".png";
            r.raw_width = 100;
            r.raw_height = 140;
            r.norm_width = 5390;
            r.norm_height = 7940;
            out.push_back(r);
        }
    }
    return out;
}

TEST(Canvas, ParsesAndRejects) {
    EXPECT_EQ(parse_canvas("5390x7940"), (Canvas{5390, 7940}));
    EXPECT_EQ(parse_canvas("12X34"), (Canvas{12, 34}));
    EXPECT_THROW(parse_canvas("5390"), std::exception);
    EXPECT_THROW(parse_canvas("0x10"), std::exception);
    EXPECT_THROW(parse_canvas("ax10"), std::exception);
}

TEST(Rational, RoundsHalfUp) {
    EXPECT_EQ((Rational{7001, 305}.to_fixed(2)), "22.95");
    EXPECT_EQ((Rational{5, 2}.to_fixed(2)), "2.50");
    EXPECT_EQ((Rational{1, 8}.to_fixed(2)), "0.13");
    EXPECT_EQ((Rational{2, 3}.to_fixed(0)), "1");
}

// Expected boxes were computed with exact fractions in Python.
TEST(FitToCanvas, FrozenGeometry) {
    const Canvas c{5390, 7940};
    EXPECT_EQ(fit_to_canvas(5908, 8063, c), (ContentBox{0, 292, 5390, 7356}));
    EXPECT_EQ(fit_to_canvas(100, 100, c), (ContentBox{0, 1275, 5390, 5390}));
    EXPECT_EQ(fit_to_canvas(8000, 100, c), (ContentBox{0, 3936, 5390, 67}));
    EXPECT_EQ(fit_to_canvas(1, 10000, c), (ContentBox{2694, 0, 1, 7940}));
    EXPECT_EQ(fit_to_canvas(10, 13, Canvas{20, 25}), (ContentBox{0, 0, 19, 25}));
    EXPECT_EQ(fit_to_canvas(5390, 7940, c), (ContentBox{0, 0, 5390, 7940}));
}

TEST(Normalize, PadsWithWhiteAndCenters) {
    std::mt19937_64 rng(3);
    const Image src = testing::random_dark_image(30, 20, rng);
    const Canvas c{50, 60};
    const Image out = normalize_page_image(src, c);
    ASSERT_EQ(out.width, 50);
    ASSERT_EQ(out.height, 60);
    const auto box = fit_to_canvas(30, 20, c);
    EXPECT_EQ(box, (ContentBox{0, 13, 50, 33}));
    const auto nw = testing::non_white_box(out);
    EXPECT_EQ(nw.x0, box.x);
    EXPECT_EQ(nw.y0, box.y);
    EXPECT_EQ(nw.x1, box.x + box.width - 1);
    EXPECT_EQ(nw.y1, box.y + box.height - 1);
    EXPECT_EQ(normalize_page_image(out, c), out);
}

TEST(Normalize, GrayscaleStaysGray) {
    Image src(10, 10, 1, 0);
    const Image out = normalize_page_image(src, Canvas{20, 30});
    EXPECT_EQ(out.channels, 1);
    EXPECT_EQ(out.at(0, 0, 0), 255);
    EXPECT_EQ(out.at(10, 15, 0), 0);
}

TEST(Manifest, StatsFromPaperScaleCorpus) {
    std::vector<int> ppd(305, 22);
    for (int i = 0; i < 291; ++i) ppd[i] = 23;  // 291*23 + 14*22 = 7001
    const auto m = build_manifest(synthetic_records(ppd), Canvas{});
    EXPECT_EQ(m.stats.doc_count, 305);
    EXPECT_EQ(m.stats.page_count, 7001);
    EXPECT_EQ(m.stats.avg_pages_per_doc.to_fixed(2), "22.95");
    EXPECT_TRUE(validate_manifest(m).empty());
}

TEST(Manifest, SmallStats) {
    EXPECT_EQ(build_manifest(synthetic_records({2, 3}), Canvas{}).stats.avg_pages_per_doc.to_fixed(2), "2.50");
    EXPECT_EQ(build_manifest(synthetic_records({1}), Canvas{}).stats.avg_pages_per_doc.to_fixed(2), "1.00");
}

TEST(Manifest, SortsAndAssignsDenseIds) {
    auto recs = synthetic_records({2, 2});
    std::reverse(recs.begin(), recs.end());
    const auto m = build_manifest(recs, Canvas{});
    for (std::size_t i = 0; i < m.pages.size(); ++i) EXPECT_EQ(m.pages[i].page_id, static_cast<std::int64_t>(i));
    EXPECT_EQ(m.pages[0].doc_id, "doc-0000");
    EXPECT_EQ(m.pages[0].page_index, 0);
    EXPECT_EQ(m.find("doc-0001", 1)->page_id, 3);
    EXPECT_EQ(m.find(2)->doc_id, "doc-0001");
    EXPECT_EQ(m.find(99), nullptr);
}

TEST(Manifest, RejectsDuplicatesAndMixedCanvas) {
    auto recs = synthetic_records({2});
    recs.push_back(recs[0]);
    EXPECT_THROW(build_manifest(recs, Canvas{}), ManifestError);
    auto mixed = synthetic_records({2});
    mixed[1].norm_width = 100;
    EXPECT_THROW(build_manifest(mixed, Canvas{}), ManifestError);
}

TEST(Manifest, EachMutationYieldsExactlyOneIssue) {
    const auto good = build_manifest(synthetic_records({3, 2}), Canvas{});
    ASSERT_TRUE(validate_manifest(good).empty());

    struct Case {
        const char* invariant;
        std::function<void(Manifest&)> mutate;
    };
    const std::vector<Case> cases = {
        {"canvas_size", [](Manifest& m) { m.pages[1].norm_height = 10; }},
        {"raw_size_positive", [](Manifest& m) { m.pages[0].raw_width = 0; }},
        {"image_uri_nonempty", [](Manifest& m) { m.pages[2].image_uri.clear(); }},
        {"image_uri_syntax", [](Manifest& m) { m.pages[2].image_uri = "no scheme here"; }},
        {"page_id_dense", [](Manifest& m) { m.pages[4].page_id = 40; }},
        {"stats_page_count", [](Manifest& m) { m.stats.page_count = 6; }},
        {"stats_doc_count", [](Manifest& m) { m.stats.doc_count = 3; }},
        {"stats_avg_pages", [](Manifest& m) { m.stats.avg_pages_per_doc = {3, 1}; }},
    };
    for (const auto& c : cases) {
        Manifest m = good;
        c.mutate(m);
        const auto issues = validate_manifest(m);
        ASSERT_EQ(issues.size(), 1u) << c.invariant;
        EXPECT_EQ(issues[0].invariant, c.invariant);
    }
}

TEST(Manifest, SerializeParseRoundTrip) {
    auto recs = synthetic_records({2, 1});
    recs[1].source_category = SourceCategory::ProvincialSociety;
    const auto m = build_manifest(recs, Canvas{}, "2026-01-02T03:04:05.000Z");
    const std::string text = serialize_manifest(m);
    const auto back = parse_manifest(text);
    EXPECT_EQ(back.pages, m.pages);
    EXPECT_EQ(back.stats.page_count, 3);
    EXPECT_EQ(back.stats.avg_pages_per_doc.to_fixed(2), "1.50");
    EXPECT_EQ(back.created_at, m.created_at);
    EXPECT_EQ(serialize_manifest(back), text);

    const auto doc = nlohmann::json::parse(text);
    EXPECT_DOUBLE_EQ(doc["stats"]["avg_pages_per_doc"].get<double>(), 1.5);
    EXPECT_EQ(doc["pages"][1]["source_category"], "ProvincialSociety");
    EXPECT_THROW(parse_manifest("{\"pages\": 3}"), ManifestError);
}

TEST(Ingest, NormalizesPagesAndWritesManifest) {
    TempDir dir;
    std::mt19937_64 rng(11);
    std::filesystem::create_directories(dir.path() / "raw");
    write_png(testing::random_dark_image(40, 30, rng), dir.path() / "raw" / "a1.png");
    write_png(testing::random_dark_image(20, 50, rng), dir.path() / "raw" / "a2.png");
    write_png(testing::random_dark_image(33, 33, rng), dir.path() / "raw" / "b1.png");
    write_file_atomic(dir.path() / "meta.json", R"([
        {"file": "a2.png", "doc_id": "aao/ppp", "page_index": 2, "source_category": "GlobalAuthority"},
        {"file": "a1.png", "doc_id": "aao/ppp", "page_index": 1, "source_category": "GlobalAuthority"},
        {"file": "b1.png", "doc_id": "nice", "page_index": 1, "source_category": "GovernmentNational",
         "image_uri": "https://cdn.example.org/nice/1.png"}
    ])");
    IngestOptions opt{dir.path() / "raw", dir.path() / "meta.json", dir.path() / "pages", Canvas{60, 80}, 3, "t0"};
    const auto m = ingest_corpus(opt);
    ASSERT_EQ(m.pages.size(), 3u);
    EXPECT_TRUE(validate_manifest(m).empty());
    EXPECT_EQ(m.pages[0].doc_id, "aao/ppp");
    EXPECT_EQ(m.pages[0].page_index, 1);
    EXPECT_EQ(m.pages[0].raw_width, 40);
    EXPECT_EQ(m.pages[2].image_uri, "https://cdn.example.org/nice/1.png");
    EXPECT_EQ(m.stats.avg_pages_per_doc.to_fixed(2), "1.50");

    const auto path = file_uri_to_path(m.pages[1].image_uri);
    ASSERT_TRUE(path.has_value());
    const Image page = read_image(*path);
    EXPECT_EQ(page.width, 60);
    EXPECT_EQ(page.height, 80);
}

TEST(Ingest, UnreadablePageNamesTheFile) {
    TempDir dir;
    std::filesystem::create_directories(dir.path() / "raw");
    write_file_atomic(dir.path() / "raw" / "broken.png", "garbage");
    write_file_atomic(dir.path() / "meta.json", R"([{"file": "broken.png", "doc_id": "d", "page_index": 0}])");
    IngestOptions opt{dir.path() / "raw", dir.path() / "meta.json", dir.path() / "pages", Canvas{60, 80}, 1, ""};
    try {
        ingest_corpus(opt);
        FAIL() << "expected IngestError";
    } catch (const IngestError& e) {
        EXPECT_EQ(e.file().filename(), "broken.png");
    }
}

TEST(Ingest, DuplicatePagesAreRejected) {
    TempDir dir;
    std::mt19937_64 rng(2);
    std::filesystem::create_directories(dir.path() / "raw");
    write_png(testing::random_dark_image(8, 8, rng), dir.path() / "raw" / "x.png");
    write_file_atomic(dir.path() / "meta.json", R"([
        {"file": "x.png", "doc_id": "d", "page_index": 0},
        {"file": "x.png", "doc_id": "d", "page_index": 0}])");
    IngestOptions opt{dir.path() / "raw", dir.path() / "meta.json", dir.path() / "pages", Canvas{10, 10}, 2, ""};
    EXPECT_THROW(ingest_corpus(opt), IngestError);
}

}  // namespace
}  // namespace pagerag::corpus
