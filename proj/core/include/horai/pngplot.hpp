#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace horai {

using Rgb = std::array<std::uint8_t, 3>;

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& pixels, int width,
                    int height);

// Minimal multi-series line chart; enough to eyeball forecasts against truth.
class SeriesPlot {
  public:
    SeriesPlot(int width = 800, int height = 300) : width_(width), height_(height) {}

    // x_offset shifts the polyline right, in sample units.
    void add(const std::vector<float>& values, Rgb color, int x_offset = 0);
    void save(const std::string& path) const;

  private:
    struct Line {
        std::vector<float> values;
        Rgb color;
        int x_offset;
    };
    int width_, height_;
    std::vector<Line> lines_;
};

}  // namespace horai
