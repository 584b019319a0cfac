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

#include "pagerag/corpus.hpp"

#include <cctype>
#include <algorithm>
#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "pagerag/util.hpp"

namespace pagerag::corpus {

using ojson = nlohmann::ordered_json;

std::string_view to_string(SourceCategory c) {
    switch (c) {
        case SourceCategory::GlobalAuthority: return "GlobalAuthority";
        case SourceCategory::GovernmentNational: return "GovernmentNational";
        case SourceCategory::ProvincialSociety: return "ProvincialSociety";
        case SourceCategory::OtherExpertConsensus: return "OtherExpertConsensus";
    }
    return "OtherExpertConsensus";
}

SourceCategory parse_source_category(std::string_view s) {
    for (auto c : {SourceCategory::GlobalAuthority, SourceCategory::GovernmentNational,
                   SourceCategory::ProvincialSociety, SourceCategory::OtherExpertConsensus}) {
        if (to_string(c) == s) return c;
    }
    throw ManifestError("unknown source_category '" + std::string(s) + "'");
}

Canvas parse_canvas(std::string_view text) {
    const auto x = text.find_first_of("xX");
    Canvas c{0, 0};
    if (x != std::string_view::npos) {
        auto [p1, e1] = std::from_chars(text.data(), text.data() + x, c.width);
        auto [p2, e2] = std::from_chars(text.data() + x + 1, text.data() + text.size(), c.height);
        if (e1 == std::errc{} && e2 == std::errc{} && p1 == text.data() + x &&
            p2 == text.data() + text.size() && c.width > 0 && c.height > 0) {
            return c;
        }
    }
    throw ManifestError("invalid canvas '" + std::string(text) + "', expected WIDTHxHEIGHT");
}

std::string Rational::to_fixed(int decimals) const {
    std::int64_t scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    const std::int64_t rounded = (2 * num * scale + den) / (2 * den);
    std::string out = std::to_string(rounded / scale);
    if (decimals > 0) {
        std::string frac = std::to_string(rounded % scale);
        out += '.';
        out.append(static_cast<std::size_t>(decimals) - frac.size(), '0');
        out += frac;
    }
    return out;
}

const PageRecord* Manifest::find(std::int64_t page_id) const {
    if (page_id >= 0 && static_cast<std::size_t>(page_id) < pages.size() && pages[page_id].page_id == page_id) {
        return &pages[page_id];
    }
    for (const auto& p : pages) {
        if (p.page_id == page_id) return &p;
    }
    return nullptr;
}

const PageRecord* Manifest::find(std::string_view doc_id, int page_index) const {
    auto it = std::lower_bound(pages.begin(), pages.end(), std::pair{doc_id, page_index},
                               [](const PageRecord& p, const auto& key) {
                                   return std::pair<std::string_view, int>{p.doc_id, p.page_index} < key;
                               });
    if (it != pages.end() && it->doc_id == doc_id && it->page_index == page_index) return &*it;
    for (const auto& p : pages) {  // unsorted manifests
        if (p.doc_id == doc_id && p.page_index == page_index) return &p;
    }
    return nullptr;
}

ContentBox fit_to_canvas(int width, int height, Canvas canvas) {
    const std::int64_t w = width, h = height, cw = canvas.width, ch = canvas.height;
    std::int64_t content_w = 0;
    std::int64_t content_h = 0;
    // Integer comparison of cw/w against ch/h picks the binding dimension.
    if (cw * h <= ch * w) {
        content_w = cw;
        content_h = (2 * h * cw + w) / (2 * w);
    } else {
        content_h = ch;
        content_w = (2 * w * ch + h) / (2 * h);
    }
    content_w = std::clamp<std::int64_t>(content_w, 1, cw);
    content_h = std::clamp<std::int64_t>(content_h, 1, ch);
    return ContentBox{static_cast<int>((cw - content_w) / 2), static_cast<int>((ch - content_h) / 2),
                      static_cast<int>(content_w), static_cast<int>(content_h)};
}

Image normalize_page_image(const Image& image, Canvas canvas) {
    if (image.width < 1 || image.height < 1) throw ImageError("<image>", "zero-dimension image");
    if (canvas.width < 1 || canvas.height < 1) throw ManifestError("canvas must be at least 1x1");
    if (image.width == canvas.width && image.height == canvas.height) return image;

    const ContentBox box = fit_to_canvas(image.width, image.height, canvas);
    const Image content = resample(image, box.width, box.height);
    Image out(canvas.width, canvas.height, image.channels, 255);
    const std::size_t row_bytes = content.row_stride();
    for (int y = 0; y < box.height; ++y) {
        std::copy_n(content.pixels.data() + static_cast<std::size_t>(y) * row_bytes, row_bytes,
                    out.pixels.data() + static_cast<std::size_t>(box.y + y) * out.row_stride() +
                        static_cast<std::size_t>(box.x) * out.channels);
    }
    return out;
}

namespace {

std::string record_name(const PageRecord& p) { return p.doc_id + "#" + std::to_string(p.page_index); }

ManifestStats compute_stats(const std::vector<PageRecord>& pages) {
    std::set<std::string_view> docs;
    for (const auto& p : pages) docs.insert(p.doc_id);
    ManifestStats s;
    s.doc_count = static_cast<std::int64_t>(docs.size());
    s.page_count = static_cast<std::int64_t>(pages.size());
    s.avg_pages_per_doc = Rational{s.page_count, std::max<std::int64_t>(1, s.doc_count)};
    return s;
}

}  // namespace

Manifest build_manifest(std::vector<PageRecord> records, Canvas canvas, std::string created_at) {
    if (records.empty()) throw ManifestError("cannot build a manifest from zero records");
    std::sort(records.begin(), records.end(), [](const PageRecord& a, const PageRecord& b) {
        return std::tie(a.doc_id, a.page_index) < std::tie(b.doc_id, b.page_index);
    });
    std::vector<std::string> duplicates;
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].doc_id == records[i - 1].doc_id && records[i].page_index == records[i - 1].page_index &&
            (duplicates.empty() || duplicates.back() != record_name(records[i]))) {
            duplicates.push_back(record_name(records[i]));
        }
    }
    if (!duplicates.empty()) {
        std::string msg = "duplicate (doc_id, page_index):";
        for (const auto& d : duplicates) msg += " " + d;
        throw ManifestError(msg);
    }
    for (const auto& r : records) {
        if (r.norm_width != canvas.width || r.norm_height != canvas.height) {
            throw ManifestError("mixed canvas sizes: " + record_name(r) + " is " + std::to_string(r.norm_width) +
                                "x" + std::to_string(r.norm_height) + ", manifest canvas is " +
                                std::to_string(canvas.width) + "x" + std::to_string(canvas.height));
        }
    }
    for (std::size_t i = 0; i < records.size(); ++i) records[i].page_id = static_cast<std::int64_t>(i);

    Manifest m;
    m.stats = compute_stats(records);
    m.pages = std::move(records);
    m.canvas = canvas;
    m.created_at = std::move(created_at);
    return m;
}

std::vector<ManifestIssue> validate_manifest(const Manifest& manifest) {
    std::vector<ManifestIssue> issues;
    auto add = [&](std::string record, std::string invariant, std::string message) {
        issues.push_back({std::move(record), std::move(invariant), std::move(message)});
    };

    std::map<std::pair<std::string, int>, int> seen;
    for (std::size_t i = 0; i < manifest.pages.size(); ++i) {
        const auto& p = manifest.pages[i];
        const std::string name = record_name(p);
        if (p.norm_width != manifest.canvas.width || p.norm_height != manifest.canvas.height) {
            add(name, "canvas_size", "normalized size " + std::to_string(p.norm_width) + "x" +
                                         std::to_string(p.norm_height) + " differs from canvas");
        }
        if (p.raw_width <= 0 || p.raw_height <= 0) add(name, "raw_size_positive", "raw dimensions must be > 0");
        if (p.page_index < 0) add(name, "page_index_nonnegative", "page_index must be >= 0");
        if (p.image_uri.empty()) {
            add(name, "image_uri_nonempty", "image_uri is empty");
        } else if (!is_valid_uri(p.image_uri)) {
            add(name, "image_uri_syntax", "image_uri '" + p.image_uri + "' is not a valid URI");
        }
        if (p.page_id != static_cast<std::int64_t>(i)) {
            add(name, "page_id_dense", "page_id " + std::to_string(p.page_id) + " at position " + std::to_string(i));
        }
        if (++seen[{p.doc_id, p.page_index}] == 2) {
            add(name, "unique_doc_page", "duplicate (doc_id, page_index) " + name);
        }
        if (i > 0) {
            const auto& prev = manifest.pages[i - 1];
            if (std::tie(prev.doc_id, prev.page_index) > std::tie(p.doc_id, p.page_index)) {
                add(name, "sorted_order", "pages not sorted by (doc_id, page_index)");
            }
        }
    }

    const ManifestStats actual = compute_stats(manifest.pages);
    if (manifest.stats.page_count != actual.page_count) {
        add("manifest", "stats_page_count",
            "stats.page_count " + std::to_string(manifest.stats.page_count) + " != pages.length " +
                std::to_string(actual.page_count));
    }
    if (manifest.stats.doc_count != actual.doc_count) {
        add("manifest", "stats_doc_count",
            "stats.doc_count " + std::to_string(manifest.stats.doc_count) + " != distinct documents " +
                std::to_string(actual.doc_count));
    }
    if (manifest.stats.avg_pages_per_doc.to_fixed(2) != actual.avg_pages_per_doc.to_fixed(2)) {
        add("manifest", "stats_avg_pages",
            "stats.avg_pages_per_doc " + manifest.stats.avg_pages_per_doc.to_fixed(2) + " != " +
                actual.avg_pages_per_doc.to_fixed(2));
    }
    if (manifest.pages.empty()) add("manifest", "nonempty", "manifest has no pages");
    return issues;
}

std::string serialize_manifest(const Manifest& manifest) {
    ojson doc;
    doc["canvas"] = {{"width", manifest.canvas.width}, {"height", manifest.canvas.height}};
    doc["stats"] = {{"doc_count", manifest.stats.doc_count},
                    {"page_count", manifest.stats.page_count},
                    {"avg_pages_per_doc", std::stod(manifest.stats.avg_pages_per_doc.to_fixed(2))}};
    doc["created_at"] = manifest.created_at;
    ojson pages = ojson::array();
    for (const auto& p : manifest.pages) {
        pages.push_back({{"doc_id", p.doc_id},
                         {"page_index", p.page_index},
                         {"page_id", p.page_id},
                         {"image_uri", p.image_uri},
                         {"raw_width", p.raw_width},
                         {"raw_height", p.raw_height},
                         {"norm_width", p.norm_width},
                         {"norm_height", p.norm_height},
                         {"source_category", to_string(p.source_category)}});
    }
    doc["pages"] = std::move(pages);
    return doc.dump(2) + "\n";
}

Manifest parse_manifest(std::string_view text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        Manifest m;
        m.canvas.width = doc.at("canvas").at("width").get<int>();
        m.canvas.height = doc.at("canvas").at("height").get<int>();
        const auto& stats = doc.at("stats");
        m.stats.doc_count = stats.at("doc_count").get<std::int64_t>();
        m.stats.page_count = stats.at("page_count").get<std::int64_t>();
        m.stats.avg_pages_per_doc = Rational{std::llround(stats.at("avg_pages_per_doc").get<double>() * 100), 100};
        m.created_at = doc.value("created_at", "");
        for (const auto& e : doc.at("pages")) {
            PageRecord p;
            p.doc_id = e.at("doc_id").get<std::string>();
            p.page_index = e.at("page_index").get<int>();
            p.page_id = e.at("page_id").get<std::int64_t>();
            p.image_uri = e.at("image_uri").get<std::string>();
            p.raw_width = e.at("raw_width").get<int>();
            p.raw_height = e.at("raw_height").get<int>();
            p.norm_width = e.value("norm_width", m.canvas.width);
            p.norm_height = e.value("norm_height", m.canvas.height);
            p.source_category = parse_source_category(e.at("source_category").get<std::string>());
            m.pages.push_back(std::move(p));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(std::string("malformed manifest: ") + e.what());
    }
}

Manifest load_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_manifest(manifest));
}

namespace {

struct MetaEntry {
    std::filesystem::path file;
    std::string doc_id;
    int page_index = 0;
    SourceCategory category = SourceCategory::OtherExpertConsensus;
    std::optional<std::string> image_uri;
};

std::vector<MetaEntry> read_meta(const std::filesystem::path& meta_file, const std::filesystem::path& images_dir) {
    std::string text;
    try {
        text = read_file(meta_file);
    } catch (const std::exception& e) {
        throw IngestError(meta_file, e.what());
    }
    std::vector<MetaEntry> entries;
    try {
        for (const auto& e : nlohmann::json::parse(text)) {
            MetaEntry m;
            m.file = images_dir / e.at("file").get<std::string>();
            m.doc_id = e.at("doc_id").get<std::string>();
            m.page_index = e.at("page_index").get<int>();
            m.category = parse_source_category(e.value("source_category", "OtherExpertConsensus"));
            if (e.contains("image_uri")) m.image_uri = e.at("image_uri").get<std::string>();
            entries.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(meta_file, std::string("malformed meta file: ") + e.what());
    } catch (const ManifestError& e) {
        throw IngestError(meta_file, e.what());
    }
    if (entries.empty()) throw IngestError(meta_file, "meta file lists no pages");
    return entries;
}

std::string safe_component(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        out.push_back(std::isalnum(c) || c == '-' || c == '_' || c == '.' ? static_cast<char>(c) : '_');
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

}  // namespace

Manifest ingest_corpus(const IngestOptions& options) {
    const auto entries = read_meta(options.meta_file, options.images_dir);
    std::filesystem::create_directories(options.pages_out_dir);

    std::vector<PageRecord> records(entries.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::optional<IngestError> first_error;

    auto worker = [&]() {
        for (std::size_t i = next++; i < entries.size(); i = next++) {
            {
                std::lock_guard lock(error_mutex);
                if (first_error) return;
            }
            const auto& e = entries[i];
            try {
                const Image raw = read_image(e.file);
                const Image norm = normalize_page_image(raw, options.canvas);
                const auto out = options.pages_out_dir / safe_component(e.doc_id) /
                                 (std::to_string(e.page_index) + ".png");
                std::filesystem::create_directories(out.parent_path());
                write_png(norm, out);
                PageRecord& r = records[i];
                r.doc_id = e.doc_id;
                r.page_index = e.page_index;
                r.image_uri = e.image_uri.value_or(file_uri(out));
                r.raw_width = raw.width;
                r.raw_height = raw.height;
                r.norm_width = norm.width;
                r.norm_height = norm.height;
                r.source_category = e.category;
            } catch (const std::exception& ex) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error.emplace(e.file, ex.what());
            }
        }
    };

    const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(entries.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (first_error) throw *first_error;

    try {
        return build_manifest(std::move(records), options.canvas, options.created_at);
    } catch (const ManifestError& e) {
        throw IngestError(options.meta_file, e.what());
    }
}

}  // namespace pagerag::corpus
