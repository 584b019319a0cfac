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
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pagerag::index {

/// Token-level embedding matrix as emitted by the retriever, row-major.
class SeqEmbedding {
public:
    SeqEmbedding() = default;
    SeqEmbedding(std::size_t rows, std::size_t dim, std::vector<float> values);
    static SeqEmbedding from_rows(const std::vector<std::vector<float>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    const std::vector<float>& values() const noexcept { return values_; }

    bool operator==(const SeqEmbedding&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> values_;
};

enum class VectorSource { Page, Query };

/// One fixed-length vector per page or query. Deliberately not unit-normalized.
struct PooledVector {
    std::vector<float> values;
    VectorSource source = VectorSource::Page;
};

struct RetrievalCandidate {
    std::int64_t page_id = 0;
    double distance = 0.0;  // squared L2
    int rank = 0;

    bool operator==(const RetrievalCandidate&) const = default;
};

enum class IndexErrc {
    EmptyInput,
    NonFinite,
    DimensionMismatch,
    DuplicateId,
    EmptyIndex,
    InvalidK,
    Io,
    CorruptHeader,
    Truncated,
    UnsupportedVersion,
};

std::string_view to_string(IndexErrc code);

class IndexError : public std::runtime_error {
public:
    IndexError(IndexErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    IndexErrc code() const noexcept { return code_; }

private:
    IndexErrc code_;
};

/// Column mean over tokens, accumulated in double.
PooledVector mean_pool(const SeqEmbedding& seq, VectorSource source = VectorSource::Page);

/// Flat exact-L2 index; immutable once built, safe for concurrent readers.
class VectorIndex {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    VectorIndex() = default;

    std::size_t dim() const noexcept { return dim_; }
    std::size_t count() const noexcept { return ids_.size(); }
    const std::vector<std::int64_t>& ids() const noexcept { return ids_; }
    std::span<const float> vector(std::size_t row) const { return {data_.data() + row * dim_, dim_}; }

    /// Exact scan over every row; ties broken by smaller page_id.
    std::vector<RetrievalCandidate> search(std::span<const float> query, std::size_t k) const;
    std::vector<RetrievalCandidate> search(const PooledVector& query, std::size_t k) const {
        return search(std::span<const float>(query.values), k);
    }

    bool operator==(const VectorIndex&) const = default;

private:
    friend VectorIndex build_index(const std::vector<std::pair<std::int64_t, PooledVector>>& pooled);
    friend VectorIndex load_index(const std::filesystem::path& path);
    friend VectorIndex decode_index(std::span<const std::uint8_t> bytes);

    std::size_t dim_ = 0;
    std::vector<std::int64_t> ids_;
    std::vector<float> data_;
};

VectorIndex build_index(const std::vector<std::pair<std::int64_t, PooledVector>>& pooled);

// Binary layout, little-endian: magic "PGRAGIDX", u32 version, u32 dim,
// u64 count, count x u64 ids, count*dim x f32 row-major.
std::vector<std::uint8_t> encode_index(const VectorIndex& index);
VectorIndex decode_index(std::span<const std::uint8_t> bytes);
void persist_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace pagerag::index
