#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "epinet/tensor.hpp"

namespace epinet {

// 8-bit image, interleaved row-major, 1 (gray) or 3 (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

Image make_image(int width, int height, int channels, uint8_t fill = 0);

// Binary PPM (P6, RGB) and PGM (P5, gray).
Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& img);

// Converts u8 pixels to a CHW tensor of values pixel/255 - mean[c].
template <typename T>
Tensor<T> image_to_tensor(const Image& img, const std::array<T, 3>& mean) {
  Tensor<T> t(Shape{img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at3(c, y, x) = T(img.at(y, x, c)) / T(255) - mean[static_cast<size_t>(c)];
  return t;
}

// Bilinear resampling with half-pixel centers, channel by channel.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& src, int out_h, int out_w) {
  if (src.rank() != 3) throw Error("patchwork", "dim", "resize input must be CHW");
  if (out_h < 1 || out_w < 1)
    throw Error("patchwork", "resize", "requested level smaller than 1 px");
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  Tensor<T> dst(Shape{c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < out_h; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double v = (1 - wy) * ((1 - wx) * src.at3(ch, y0, x0) + wx * src.at3(ch, y0, x1)) +
                         wy * ((1 - wx) * src.at3(ch, y1, x0) + wx * src.at3(ch, y1, x1));
        dst.at3(ch, y, x) = static_cast<T>(v);
      }
    }
  return dst;
}

}  // namespace epinet
