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

#include "pagerag/image.hpp"

#include <png.h>

#include <cctype>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

namespace pagerag {

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

namespace {

bool has_png_signature(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

struct PnmHeader {
    int channels = 0;
    int width = 0;
    int height = 0;
    int maxval = 0;
};

// Reads the whitespace/comment separated header of a binary PNM and leaves
// the stream positioned at the first raster byte.
PnmHeader read_pnm_header(std::istream& in, const std::filesystem::path& path) {
    char magic[2] = {};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
        throw ImageError(path, "unsupported image format (expected PNG or binary PNM)");
    }
    PnmHeader h;
    h.channels = magic[1] == '6' ? 3 : 1;
    auto next_int = [&]() {
        int c = in.get();
        while (c != EOF) {
            if (c == '#') {
                while (c != EOF && c != '\n') c = in.get();
            } else if (std::isspace(c)) {
                c = in.get();
            } else {
                break;
            }
        }
        if (c == EOF || !std::isdigit(c)) throw ImageError(path, "malformed PNM header");
        long v = 0;
        while (c != EOF && std::isdigit(c)) {
            v = v * 10 + (c - '0');
            if (v > (1L << 30)) throw ImageError(path, "PNM dimension overflow");
            c = in.get();
        }
        // exactly one whitespace byte separates the header from the raster
        return static_cast<int>(v);
    };
    h.width = next_int();
    h.height = next_int();
    h.maxval = next_int();
    if (h.maxval != 255) throw ImageError(path, "only 8-bit PNM is supported");
    return h;
}

struct AxisPlan {
    std::vector<int> first;       // first source index per output index
    std::vector<int> count;       // number of taps
    std::vector<float> weights;   // flattened, offsets[o] into weights
    std::vector<std::size_t> offsets;
};

AxisPlan plan_axis(int in, int out) {
    AxisPlan plan;
    plan.first.resize(out);
    plan.count.resize(out);
    plan.offsets.resize(out);
    if (out < in) {
        const double ratio = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            const double start = o * ratio;
            const double end = (o + 1) * ratio;
            const int lo = static_cast<int>(std::floor(start));
            const int hi = std::min(in, static_cast<int>(std::ceil(end)));
            plan.first[o] = lo;
            plan.offsets[o] = plan.weights.size();
            int n = 0;
            for (int i = lo; i < hi; ++i) {
                const double overlap = std::min(end, i + 1.0) - std::max(start, static_cast<double>(i));
                if (overlap <= 0.0) continue;
                if (n == 0) plan.first[o] = i;
                plan.weights.push_back(static_cast<float>(overlap / ratio));
                ++n;
            }
            plan.count[o] = n;
        }
    } else {
        const double ratio = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            const double src = std::max(0.0, (o + 0.5) * ratio - 0.5);
            int i0 = static_cast<int>(std::floor(src));
            i0 = std::min(i0, in - 1);
            const float frac = static_cast<float>(src - i0);
            plan.first[o] = i0;
            plan.offsets[o] = plan.weights.size();
            if (i0 + 1 < in && frac > 0.0f) {
                plan.weights.push_back(1.0f - frac);
                plan.weights.push_back(frac);
                plan.count[o] = 2;
            } else {
                plan.weights.push_back(1.0f);
                plan.count[o] = 1;
            }
        }
    }
    return plan;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ImageError(path, "not a readable file");
    if (has_png_signature(path)) {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_file(&png, path.c_str())) {
            throw ImageError(path, std::string("PNG decode failed: ") + png.message);
        }
        const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
        png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
        if (png.width == 0 || png.height == 0) {
            png_image_free(&png);
            throw ImageError(path, "zero-dimension image");
        }
        Image img(static_cast<int>(png.width), static_cast<int>(png.height), color ? 3 : 1);
        png_color white{255, 255, 255};
        if (!png_image_finish_read(&png, &white, img.pixels.data(), 0, nullptr)) {
            std::string msg = png.message;
            png_image_free(&png);
            throw ImageError(path, "PNG decode failed: " + msg);
        }
        return img;
    }
    std::ifstream in(path, std::ios::binary);
    const PnmHeader h = read_pnm_header(in, path);
    if (h.width <= 0 || h.height <= 0) throw ImageError(path, "zero-dimension image");
    Image img(h.width, h.height, h.channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) throw ImageError(path, "truncated raster");
    return img;
}

std::pair<int, int> read_image_size(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ImageError(path, "not a readable file");
    if (has_png_signature(path)) {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_file(&png, path.c_str())) {
            throw ImageError(path, std::string("PNG decode failed: ") + png.message);
        }
        std::pair<int, int> size{static_cast<int>(png.width), static_cast<int>(png.height)};
        png_image_free(&png);
        if (size.first <= 0 || size.second <= 0) throw ImageError(path, "zero-dimension image");
        return size;
    }
    std::ifstream in(path, std::ios::binary);
    const PnmHeader h = read_pnm_header(in, path);
    if (h.width <= 0 || h.height <= 0) throw ImageError(path, "zero-dimension image");
    return {h.width, h.height};
}

namespace {

png_image make_png_descriptor(const Image& image) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    return png;
}

}  // namespace

void write_png(const Image& image, const std::filesystem::path& path) {
    png_image png = make_png_descriptor(image);
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw ImageError(path, std::string("PNG encode failed: ") + png.message);
    }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    png_image png = make_png_descriptor(image);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw ImageError("<memory>", std::string("PNG encode failed: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw ImageError("<memory>", std::string("PNG encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

Image resample(const Image& src, int out_w, int out_h) {
    if (out_w == src.width && out_h == src.height) return src;
    const int ch = src.channels;
    const AxisPlan xs = plan_axis(src.width, out_w);
    const AxisPlan ys = plan_axis(src.height, out_h);

    Image dst(out_w, out_h, ch);
    const std::size_t hrow = static_cast<std::size_t>(out_w) * ch;

    // Horizontally resampled source rows; tap windows advance monotonically
    // with the output row so only a sliding window is kept.
    std::deque<std::pair<int, std::vector<float>>> rows;
    auto horizontal = [&](int y) {
        std::vector<float> row(hrow);
        const std::uint8_t* in = src.pixels.data() + static_cast<std::size_t>(y) * src.row_stride();
        for (int o = 0; o < out_w; ++o) {
            const float* w = xs.weights.data() + xs.offsets[o];
            for (int c = 0; c < ch; ++c) {
                float acc = 0.0f;
                for (int t = 0; t < xs.count[o]; ++t) {
                    acc += w[t] * in[static_cast<std::size_t>(xs.first[o] + t) * ch + c];
                }
                row[static_cast<std::size_t>(o) * ch + c] = acc;
            }
        }
        return row;
    };

    std::vector<float> acc(hrow);
    for (int o = 0; o < out_h; ++o) {
        const int lo = ys.first[o];
        const int hi = lo + ys.count[o] - 1;
        while (!rows.empty() && rows.front().first < lo) rows.pop_front();
        int next = rows.empty() ? lo : rows.back().first + 1;
        for (; next <= hi; ++next) rows.emplace_back(next, horizontal(next));

        std::fill(acc.begin(), acc.end(), 0.0f);
        const float* w = ys.weights.data() + ys.offsets[o];
        for (int t = 0; t < ys.count[o]; ++t) {
            const auto& row = rows[static_cast<std::size_t>(lo + t - rows.front().first)].second;
            for (std::size_t i = 0; i < hrow; ++i) acc[i] += w[t] * row[i];
        }
        std::uint8_t* out = dst.pixels.data() + static_cast<std::size_t>(o) * hrow;
        for (std::size_t i = 0; i < hrow; ++i) {
            out[i] = static_cast<std::uint8_t>(std::clamp(acc[i] + 0.5f, 0.0f, 255.0f));
        }
    }
    return dst;
}

}  // namespace pagerag
