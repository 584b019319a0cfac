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
#include <stdexcept>
#include <string>
#include <vector>

namespace pagerag {

/// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0);

    std::size_t row_stride() const { return static_cast<std::size_t>(width) * channels; }

    std::uint8_t& at(int x, int y, int c) {
        return pixels[static_cast<std::size_t>(y) * row_stride() + static_cast<std::size_t>(x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[static_cast<std::size_t>(y) * row_stride() + static_cast<std::size_t>(x) * channels + c];
    }

    bool operator==(const Image&) const = default;
};

class ImageError : public std::runtime_error {
public:
    ImageError(std::filesystem::path path, const std::string& what)
        : std::runtime_error(path.string() + ": " + what), path_(std::move(path)) {}
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

/// Reads PNG or binary PNM (P5/P6). Alpha is composited onto white.
Image read_image(const std::filesystem::path& path);

/// Header-only probe; cheaper than read_image for manifest geometry.
std::pair<int, int> read_image_size(const std::filesystem::path& path);

void write_png(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);

/// Separable resample to exactly out_w x out_h. Box-area filter on
/// reduction, linear on enlargement, exact copy when sizes match.
Image resample(const Image& src, int out_w, int out_h);

}  // namespace pagerag
