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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pagerag/image.hpp"

namespace pagerag::corpus {

enum class SourceCategory { GlobalAuthority, GovernmentNational, ProvincialSociety, OtherExpertConsensus };

std::string_view to_string(SourceCategory c);
SourceCategory parse_source_category(std::string_view s);

struct Canvas {
    int width = 5390;
    int height = 7940;

    bool operator==(const Canvas&) const = default;
};

/// Parses "WIDTHxHEIGHT".
Canvas parse_canvas(std::string_view text);

/// Exact fraction; rendered with round-half-up.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    std::string to_fixed(int decimals) const;
    bool operator==(const Rational& o) const { return num * o.den == o.num * den; }
};

/// One guideline page: the atomic retrieval and citation unit.
struct PageRecord {
    std::string doc_id;
    int page_index = 0;
    std::int64_t page_id = -1;  // assigned by build_manifest
    std::string image_uri;
    int raw_width = 0;
    int raw_height = 0;
    int norm_width = 0;
    int norm_height = 0;
    SourceCategory source_category = SourceCategory::OtherExpertConsensus;

    bool operator==(const PageRecord&) const = default;
};

struct ManifestStats {
    std::int64_t doc_count = 0;
    std::int64_t page_count = 0;
    Rational avg_pages_per_doc;
};

struct Manifest {
    std::vector<PageRecord> pages;
    ManifestStats stats;
    Canvas canvas;
    std::string created_at;

    const PageRecord* find(std::int64_t page_id) const;
    const PageRecord* find(std::string_view doc_id, int page_index) const;
};

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IngestError : public std::runtime_error {
public:
    IngestError(std::filesystem::path file, const std::string& what)
        : std::runtime_error(file.string() + ": " + what), file_(std::move(file)) {}
    const std::filesystem::path& file() const noexcept { return file_; }

private:
    std::filesystem::path file_;
};

/// Placement of the scaled page inside the canvas.
struct ContentBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool operator==(const ContentBox&) const = default;
};

/// Scale s = min(cw / w, ch / h), content rounded to the nearest pixel
/// (at least 1), centered with the odd pixel of padding on the bottom/right.
ContentBox fit_to_canvas(int width, int height, Canvas canvas);

/// Resize-and-pad onto a pure white canvas. Never rotates, crops or filters.
Image normalize_page_image(const Image& image, Canvas canvas);

/// Sorts by (doc_id, page_index), assigns dense page ids and computes stats.
Manifest build_manifest(std::vector<PageRecord> records, Canvas canvas, std::string created_at = {});

struct ManifestIssue {
    std::string record;     // "doc_id#page_index", or "manifest"
    std::string invariant;  // short machine-readable tag
    std::string message;
};

std::vector<ManifestIssue> validate_manifest(const Manifest& manifest);

std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct IngestOptions {
    std::filesystem::path images_dir;
    std::filesystem::path meta_file;
    std::filesystem::path pages_out_dir;
    Canvas canvas;
    unsigned jobs = 2;
    std::string created_at;
};

/// Normalizes every page listed in the meta file into pages_out_dir and
/// returns the manifest. Any unreadable page aborts the run naming the file.
///
/// Meta file: JSON array of {"file", "doc_id", "page_index",
/// "source_category", optional "image_uri"}. When image_uri is given it
/// replaces the file:// URI of the written page (e.g. an object-store URL).
Manifest ingest_corpus(const IngestOptions& options);

}  // namespace pagerag::corpus
