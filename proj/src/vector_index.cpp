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

#include "pagerag/vector_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "pagerag/util.hpp"

namespace pagerag::index {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'R', 'A', 'G', 'I', 'D', 'X'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::string_view to_string(IndexErrc code) {
    switch (code) {
        case IndexErrc::EmptyInput: return "empty_input";
        case IndexErrc::NonFinite: return "non_finite";
        case IndexErrc::DimensionMismatch: return "dimension_mismatch";
        case IndexErrc::DuplicateId: return "duplicate_id";
        case IndexErrc::EmptyIndex: return "empty_index";
        case IndexErrc::InvalidK: return "invalid_k";
        case IndexErrc::Io: return "io";
        case IndexErrc::CorruptHeader: return "corrupt_header";
        case IndexErrc::Truncated: return "truncated";
        case IndexErrc::UnsupportedVersion: return "unsupported_version";
    }
    return "unknown";
}

SeqEmbedding::SeqEmbedding(std::size_t rows, std::size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
    if (values_.size() != rows_ * dim_) {
        throw IndexError(IndexErrc::DimensionMismatch,
                         "embedding has " + std::to_string(values_.size()) + " values, expected " +
                             std::to_string(rows_) + "x" + std::to_string(dim_));
    }
}

SeqEmbedding SeqEmbedding::from_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) return SeqEmbedding{};
    const std::size_t dim = rows.front().size();
    std::vector<float> values;
    values.reserve(rows.size() * dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim) {
            throw IndexError(IndexErrc::DimensionMismatch, "embedding row " + std::to_string(i) + " has dimension " +
                                                               std::to_string(rows[i].size()) + ", expected " +
                                                               std::to_string(dim));
        }
        values.insert(values.end(), rows[i].begin(), rows[i].end());
    }
    return SeqEmbedding(rows.size(), dim, std::move(values));
}

PooledVector mean_pool(const SeqEmbedding& seq, VectorSource source) {
    if (seq.rows() == 0 || seq.dim() == 0) throw IndexError(IndexErrc::EmptyInput, "cannot pool an empty sequence");
    std::vector<double> sums(seq.dim(), 0.0);
    for (std::size_t i = 0; i < seq.rows(); ++i) {
        const auto row = seq.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (!std::isfinite(row[j])) {
                throw IndexError(IndexErrc::NonFinite, "non-finite value in embedding row " + std::to_string(i) +
                                                           ", column " + std::to_string(j));
            }
            sums[j] += row[j];
        }
    }
    PooledVector out;
    out.source = source;
    out.values.resize(seq.dim());
    const double n = static_cast<double>(seq.rows());
    for (std::size_t j = 0; j < sums.size(); ++j) out.values[j] = static_cast<float>(sums[j] / n);
    return out;
}

VectorIndex build_index(const std::vector<std::pair<std::int64_t, PooledVector>>& pooled) {
    if (pooled.empty()) throw IndexError(IndexErrc::EmptyInput, "cannot build an index from zero vectors");
    VectorIndex index;
    index.dim_ = pooled.front().second.values.size();
    if (index.dim_ == 0) throw IndexError(IndexErrc::EmptyInput, "vectors must have dimension >= 1");
    index.ids_.reserve(pooled.size());
    index.data_.reserve(pooled.size() * index.dim_);
    std::unordered_set<std::int64_t> seen;
    for (const auto& [id, vec] : pooled) {
        if (vec.values.size() != index.dim_) {
            throw IndexError(IndexErrc::DimensionMismatch,
                             "page_id " + std::to_string(id) + " has dimension " + std::to_string(vec.values.size()) +
                                 ", index dimension is " + std::to_string(index.dim_));
        }
        if (!seen.insert(id).second) {
            throw IndexError(IndexErrc::DuplicateId, "duplicate page_id " + std::to_string(id));
        }
        for (float v : vec.values) {
            if (!std::isfinite(v)) {
                throw IndexError(IndexErrc::NonFinite, "non-finite value in vector for page_id " + std::to_string(id));
            }
        }
        index.ids_.push_back(id);
        index.data_.insert(index.data_.end(), vec.values.begin(), vec.values.end());
    }
    return index;
}

std::vector<RetrievalCandidate> VectorIndex::search(std::span<const float> query, std::size_t k) const {
    if (ids_.empty()) throw IndexError(IndexErrc::EmptyIndex, "search on an empty index");
    if (query.size() != dim_) {
        throw IndexError(IndexErrc::DimensionMismatch, "query dimension " + std::to_string(query.size()) +
                                                           " != index dimension " + std::to_string(dim_));
    }
    if (k == 0) throw IndexError(IndexErrc::InvalidK, "k must be >= 1");
    for (float v : query) {
        if (!std::isfinite(v)) throw IndexError(IndexErrc::NonFinite, "non-finite value in query vector");
    }

    std::vector<std::pair<double, std::int64_t>> scored(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        const float* row = data_.data() + r * dim_;
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double d = static_cast<double>(query[j]) - static_cast<double>(row[j]);
            acc += d * d;
        }
        scored[r] = {acc, ids_[r]};
    }
    const std::size_t m = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(m), scored.end());

    std::vector<RetrievalCandidate> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        out[i] = RetrievalCandidate{scored[i].second, scored[i].first, static_cast<int>(i + 1)};
    }
    return out;
}

std::vector<std::uint8_t> encode_index(const VectorIndex& index) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + index.count() * 8 + index.count() * index.dim() * 4);
    for (const char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, VectorIndex::kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(index.dim()));
    put_u64(out, index.count());
    for (auto id : index.ids()) put_u64(out, static_cast<std::uint64_t>(id));
    for (std::size_t r = 0; r < index.count(); ++r) {
        for (float v : index.vector(r)) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

VectorIndex decode_index(std::span<const std::uint8_t> bytes) {
    const std::size_t magic_len = std::min(bytes.size(), sizeof(kMagic));
    if (magic_len > 0 && std::memcmp(bytes.data(), kMagic, magic_len) != 0) {
        throw IndexError(IndexErrc::CorruptHeader, "bad magic: not an index file");
    }
    if (bytes.size() < kHeaderSize) {
        throw IndexError(IndexErrc::Truncated, "truncated: header needs " + std::to_string(kHeaderSize) +
                                                   " bytes, file has " + std::to_string(bytes.size()));
    }
    const std::uint32_t version = get_u32(bytes.data() + 8);
    if (version != VectorIndex::kFormatVersion) {
        throw IndexError(IndexErrc::UnsupportedVersion, "unsupported version " + std::to_string(version));
    }
    const std::uint32_t dim = get_u32(bytes.data() + 12);
    const std::uint64_t count = get_u64(bytes.data() + 16);
    if (dim == 0) throw IndexError(IndexErrc::CorruptHeader, "corrupt header: dim is 0");
    const std::uint64_t body = bytes.size() - kHeaderSize;
    const std::uint64_t per_row = 8 + 4ull * dim;
    if (count > body / per_row) {
        throw IndexError(IndexErrc::Truncated, "truncated: header declares " + std::to_string(count) +
                                                   " vectors but the body is " + std::to_string(body) + " bytes");
    }
    if (count * per_row != body) {
        throw IndexError(IndexErrc::CorruptHeader, "corrupt header: trailing bytes after " + std::to_string(count) +
                                                       " vectors");
    }

    VectorIndex index;
    index.dim_ = dim;
    index.ids_.resize(count);
    index.data_.resize(count * dim);
    const std::uint8_t* p = bytes.data() + kHeaderSize;
    std::unordered_set<std::int64_t> seen;
    for (std::uint64_t i = 0; i < count; ++i, p += 8) {
        index.ids_[i] = static_cast<std::int64_t>(get_u64(p));
        if (!seen.insert(index.ids_[i]).second) {
            throw IndexError(IndexErrc::CorruptHeader, "corrupt index: duplicate id " + std::to_string(index.ids_[i]));
        }
    }
    for (auto& v : index.data_) {
        v = std::bit_cast<float>(get_u32(p));
        p += 4;
    }
    return index;
}

void persist_index(const VectorIndex& index, const std::filesystem::path& path) {
    const auto bytes = encode_index(index);
    try {
        write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    } catch (const std::exception& e) {
        throw IndexError(IndexErrc::Io, e.what());
    }
}

VectorIndex load_index(const std::filesystem::path& path) {
    std::string raw;
    try {
        raw = read_file(path);
    } catch (const std::exception& e) {
        throw IndexError(IndexErrc::Io, e.what());
    }
    return decode_index(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

}  // namespace pagerag::index
