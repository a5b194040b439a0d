#pragma once

#include <string>
#include <vector>

#include "nrroom/errors.hpp"
#include "nrroom/vec.hpp"

namespace nrroom {

// Row-major float image, linear color space in memory.
struct Image {
  int w = 0, h = 0, c = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w_, int h_, int c_) : w(w_), h(h_), c(c_), data(static_cast<std::size_t>(w_) * h_ * c_, 0.0f) {}

  float& at(int x, int y, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  float at(int x, int y, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }

  Vec3 rgb(int x, int y) const {
    if (c == 1) {
      double v = at(x, y, 0);
      return {v, v, v};
    }
    return {at(x, y, 0), at(x, y, 1), at(x, y, 2)};
  }
  void set_rgb(int x, int y, const Vec3& v) {
    at(x, y, 0) = static_cast<float>(v.x);
    if (c >= 3) {
      at(x, y, 1) = static_cast<float>(v.y);
      at(x, y, 2) = static_cast<float>(v.z);
    }
  }
};

// PNG: 8-bit gray/RGB/RGBA, no interlacing. Gamma 2.2 is applied on write
// and removed on load so in-memory values stay linear.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// IMGF float binary: magic "IMGF", W u32, H u32, channels u32, f32 data
// row-major, little-endian.
Image read_imgf(const std::string& path);
void write_imgf(const std::string& path, const Image& img);

// ENVM float binary (environment maps): magic "ENVM", version u32=1,
// W u32, H u32, 3 f32 per pixel row-major. Width must be 2x height.
Image read_envm(const std::string& path);
void write_envm(const std::string& path, const Image& img);

// Dispatch on file extension (.png / .imgf / .envm).
Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

double psnr(const Image& a, const Image& b);

}  // namespace nrroom
