#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace gsurf {

// Dense row-major H x W x C raster of doubles, channels interleaved.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> v;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        v(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c = 0) {
    return v[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return v[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
};

// Per-pixel boolean raster (validity masks, coverage flags).
struct Bitmap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> v;

  Bitmap() = default;
  Bitmap(int h, int w, bool fill = false)
      : height(h), width(w),
        v(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : v) n += b ? 1 : 0;
    return n;
  }
};

}  // namespace gsurf
