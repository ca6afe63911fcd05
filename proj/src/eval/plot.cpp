#include "teleguard/eval/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace teleguard::eval {
namespace {

constexpr int kMargin = 24;
constexpr Rgb kAxis = {0, 0, 0};
constexpr Rgb kGrid = {225, 225, 225};

void draw_frame(Image& img, int grid_lines) {
  const int x0 = kMargin, x1 = img.width - kMargin, y0 = kMargin, y1 = img.height - kMargin;
  for (int k = 1; k < grid_lines; ++k) {
    const double y = y1 - (y1 - y0) * static_cast<double>(k) / grid_lines;
    img.line(x0, y, x1, y, kGrid);
  }
  img.line(x0, y0, x0, y1, kAxis);
  img.line(x0, y1, x1, y1, kAxis);
}

}  // namespace

Image::Image(int w, int h, Rgb background) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = background[0];
    pixels[i + 1] = background[1];
    pixels[i + 2] = background[2];
  }
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t at = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[at] = c[0];
  pixels[at + 1] = c[1];
  pixels[at + 2] = c[2];
}

void Image::line(double x0, double y0, double x1, double y1, Rgb c) {
  const double steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
  const int n = static_cast<int>(std::ceil(steps));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
        static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) set(x, y, c);
}

Rgb palette(std::size_t i) {
  static constexpr std::array<Rgb, 6> colors = {{
      {31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}, {23, 190, 207},
  }};
  return colors[i % colors.size()];
}

Image line_chart(std::span<const Series> series, double y_min, double y_max, int width,
                 int height) {
  Image img(width, height);
  draw_frame(img, 4);
  std::size_t longest = 0;
  for (const auto& s : series) longest = std::max(longest, s.values.size());
  if (longest < 2 || !(y_max > y_min)) return img;
  const double x0 = kMargin, x1 = width - kMargin, y0 = kMargin, y1 = height - kMargin;
  auto px = [&](std::size_t i) { return x0 + (x1 - x0) * static_cast<double>(i) / (longest - 1); };
  auto py = [&](double v) {
    const double t = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
    return y1 - (y1 - y0) * t;
  };
  for (const auto& s : series) {
    for (std::size_t i = 1; i < s.values.size(); ++i) {
      img.line(px(i - 1), py(s.values[i - 1]), px(i), py(s.values[i]), s.color);
    }
  }
  return img;
}

Image bar_chart(std::span<const Bar> bars, double y_min, double y_max, int width, int height) {
  Image img(width, height);
  draw_frame(img, 4);
  if (bars.empty() || !(y_max > y_min)) return img;
  const double x0 = kMargin, x1 = width - kMargin, y0 = kMargin, y1 = height - kMargin;
  auto py = [&](double v) {
    const double t = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
    return static_cast<int>(std::lround(y1 - (y1 - y0) * t));
  };
  const double slot = (x1 - x0) / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const int left = static_cast<int>(std::lround(x0 + slot * (i + 0.2)));
    const int right = static_cast<int>(std::lround(x0 + slot * (i + 0.8)));
    img.fill_rect(left, py(bars[i].value), right, static_cast<int>(y1) - 1, bars[i].color);
    const double mid = 0.5 * (left + right);
    img.line(mid, py(bars[i].lo), mid, py(bars[i].hi), kAxis);
    img.line(mid - 6, py(bars[i].lo), mid + 6, py(bars[i].lo), kAxis);
    img.line(mid - 6, py(bars[i].hi), mid + 6, py(bars[i].hi), kAxis);
  }
  return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("error encoding image: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace teleguard::eval
