#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace teleguard::eval {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB raster, row-major from the top-left.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image(int w, int h, Rgb background = {255, 255, 255});
  void set(int x, int y, Rgb c);
  void line(double x0, double y0, double x1, double y1, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
};

struct Series {
  std::vector<double> values;
  Rgb color = {0, 0, 0};
};

struct Bar {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  Rgb color = {80, 80, 80};
};

// Palette entry i (cycled).
Rgb palette(std::size_t i);

// Series plotted against their index over a shared x range, on [y_min, y_max].
Image line_chart(std::span<const Series> series, double y_min, double y_max, int width = 640,
                 int height = 320);
// One bar per entry with an interval whisker from lo to hi.
Image bar_chart(std::span<const Bar> bars, double y_min, double y_max, int width = 480,
                int height = 320);

// No timestamps or text chunks, so identical images give identical bytes.
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace teleguard::eval
