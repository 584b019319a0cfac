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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pagerag {

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::span<const std::uint8_t> data);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// URIs. Local files are addressed as file:// URIs with percent-encoding.
std::string file_uri(const std::filesystem::path& path);
bool is_valid_uri(std::string_view uri);
std::optional<std::filesystem::path> file_uri_to_path(std::string_view uri);

/// Wall clock and id source. Test mode pins time to the epoch and derives
/// ids from a seed so repeated runs serialize identically.
class RunEnvironment {
public:
    explicit RunEnvironment(bool test_mode = false) : test_mode_(test_mode) {}

    bool test_mode() const noexcept { return test_mode_; }
    std::string now_iso8601() const;
    std::int64_t now_ms() const;
    /// RFC 4122 layout. Random v4 normally; name-based on the seed in test mode.
    std::string make_uuid(std::string_view seed) const;

private:
    bool test_mode_;
};

}  // namespace pagerag
