#include "horai/pngplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "horai/error.hpp"

namespace horai {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& pixels, int width,
                    int height) {
    if (width <= 0 || height <= 0 ||
        pixels.size() != static_cast<std::size_t>(width) * height * 3)
        throw ConfigError("write_png_rgb8: pixel buffer does not match dimensions");

    // One filter byte (0 = none) per scanline.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * 3));
    for (int r = 0; r < height; ++r) {
        raw.push_back(0);
        const std::uint8_t* row = pixels.data() + static_cast<std::size_t>(r) * width * 3;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * 3);
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw InternalError("png deflate failed");
    comp.resize(comp_size);

    std::vector<std::uint8_t> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(width));
    put_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(file, "IHDR", ihdr);
    put_chunk(file, "IDAT", comp);
    put_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
}

void SeriesPlot::add(const std::vector<float>& values, Rgb color, int x_offset) {
    lines_.push_back({values, color, x_offset});
}

void SeriesPlot::save(const std::string& path) const {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(width_) * height_ * 3, 255);

    float lo = 0.0f, hi = 1.0f;
    int max_x = 1;
    bool first = true;
    for (const auto& line : lines_) {
        for (float v : line.values) {
            if (first) {
                lo = hi = v;
                first = false;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        max_x = std::max(max_x, line.x_offset + static_cast<int>(line.values.size()) - 1);
    }
    const float span = hi > lo ? hi - lo : 1.0f;

    auto set_px = [&](int x, int y, Rgb c) {
        if (x < 0 || x >= width_ || y < 0 || y >= height_) return;
        std::uint8_t* p = px.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    };
    auto draw = [&](int x0, int y0, int x1, int y1, Rgb c) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set_px(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    };

    for (const auto& line : lines_) {
        if (line.values.size() < 2) continue;
        auto to_xy = [&](int i) {
            const int x = static_cast<int>(std::lround(
                static_cast<double>(line.x_offset + i) * (width_ - 1) / max_x));
            const float norm = (line.values[static_cast<std::size_t>(i)] - lo) / span;
            const int y = height_ - 1 -
                          static_cast<int>(std::lround(static_cast<double>(norm) * (height_ - 1)));
            return std::pair<int, int>(x, y);
        };
        auto [px0, py0] = to_xy(0);
        for (int i = 1; i < static_cast<int>(line.values.size()); ++i) {
            auto [x, y] = to_xy(i);
            draw(px0, py0, x, y, line.color);
            px0 = x;
            py0 = y;
        }
    }
    write_png_rgb8(path, px, width_, height_);
}

}  // namespace horai
