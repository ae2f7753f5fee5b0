#pragma once

#include <cmath>
#include <utility>

#include "epinet/layers.hpp"
#include "epinet/tensor.hpp"

// Serial reference kernels: straightforward nested loops, no patch
// unrolling and no matrix products. These stay independent of the
// parallel implementations and are what the tests and the benchmark
// compare against. Inner products accumulate over (channel, dy, dx) in
// ascending order, the same canonical order the fast path uses, so
// comparisons can be exact.
namespace epinet::ref {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int n = a.dim(0), kk = a.dim(1), m = b.dim(1);
  Tensor<T> c(Shape{n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      T s = T(0);
      for (int k = 0; k < kk; ++k) s += a.at2(i, k) * b.at2(k, j);
      c.at2(i, j) = s;
    }
  return c;
}

// Dot product of the input window at (oy, ox) with a filter crop read
// from `bank` (any K x C x h x w tensor) at crop offset (py, px).
template <typename T>
T window_response(const Tensor<T>& input, int oy, int ox, int dil, const Tensor<T>& bank, int k,
                  int py, int px, int w) {
  const int c = input.dim(0);
  T s = T(0);
  for (int ch = 0; ch < c; ++ch)
    for (int dy = 0; dy < w; ++dy)
      for (int dx = 0; dx < w; ++dx)
        s += input.at3(ch, oy + dy * dil, ox + dx * dil) *
             bank[((static_cast<size_t>(k) * bank.dim(1) + ch) * bank.dim(2) + py + dy) *
                      bank.dim(3) +
                  px + dx];
  return s;
}

// Exhaustive displacement search, one dot product per candidate.
template <typename T>
std::pair<Tensor<T>, ArgmaxRecord> epitomic_conv_forward(const Tensor<T>& input,
                                                         const EpitomicLayerParams<T>& p) {
  const int w = p.filter_size;
  const int gy = patch_grid_extent(input.dim(1), w, p.input_stride, p.dilation);
  const int gx = patch_grid_extent(input.dim(2), w, p.input_stride, p.dilation);
  const auto axis = p.axis_candidates();
  const int na = static_cast<int>(axis.size());
  const int cols = w * w * p.channels();
  Tensor<T> out(Shape{p.k(), gy, gx});
  ArgmaxRecord am;
  am.out_h = gy;
  am.out_w = gx;
  am.k = p.k();
  for (int py : axis)
    for (int px : axis) am.candidates.emplace_back(py, px);
  am.origins.resize(static_cast<size_t>(gy) * gx);
  am.winner.assign(static_cast<size_t>(p.k()) * gy * gx, 0);

  for (int iy = 0; iy < gy; ++iy)
    for (int ix = 0; ix < gx; ++ix) {
      const int i = iy * gx + ix;
      const int oy = iy * p.input_stride, ox = ix * p.input_stride;
      am.origins[static_cast<size_t>(i)] = {oy, ox};
      for (int k = 0; k < p.k(); ++k) {
        T best = T(0);
        int arg = -1;
        for (int cy = 0; cy < na; ++cy)
          for (int cx = 0; cx < na; ++cx) {
            T r;
            if (!p.normalized) {
              r = window_response(input, oy, ox, p.dilation, p.epitomes, k, axis[cy], axis[cx], w);
            } else {
              // direct formula: subtract the crop mean, divide by the
              // lambda-floored contrast
              T mean = T(0);
              for (int ch = 0; ch < p.channels(); ++ch)
                for (int dy = 0; dy < w; ++dy)
                  for (int dx = 0; dx < w; ++dx)
                    mean += p.epitomes.at4(k, ch, axis[cy] + dy, axis[cx] + dx);
              mean /= T(cols);
              T dot = T(0), sq = T(0);
              for (int ch = 0; ch < p.channels(); ++ch)
                for (int dy = 0; dy < w; ++dy)
                  for (int dx = 0; dx < w; ++dx) {
                    const T wb = p.epitomes.at4(k, ch, axis[cy] + dy, axis[cx] + dx) - mean;
                    dot += input.at3(ch, oy + dy * p.dilation, ox + dx * p.dilation) * wb;
                    sq += wb * wb;
                  }
              r = dot / std::sqrt(sq + p.lambda);
            }
            const int ci = cy * na + cx;
            if (arg < 0 || r > best) {
              best = r;
              arg = ci;
            }
          }
        out.at3(k, iy, ix) = best;
        am.winner[static_cast<size_t>(k) * gy * gx + i] = arg;
      }
    }
  return {std::move(out), std::move(am)};
}

// Exhaustive loop over all pooling window positions.
template <typename T>
std::pair<Tensor<T>, ArgmaxRecord> maxpool_conv_forward(const Tensor<T>& input,
                                                        const MaxPoolConvParams<T>& p) {
  const int w = p.filter_size();
  const int gy = patch_grid_extent(input.dim(1), w, p.input_stride, p.dilation);
  const int gx = patch_grid_extent(input.dim(2), w, p.input_stride, p.dilation);
  const int d = p.pool_size;
  const int oh = (gy - d) / p.pool_stride + 1;
  const int ow = (gx - d) / p.pool_stride + 1;
  Tensor<T> out(Shape{p.k(), oh, ow});
  ArgmaxRecord am;
  am.out_h = oh;
  am.out_w = ow;
  am.k = p.k();
  for (int py = 0; py < d; ++py)
    for (int px = 0; px < d; ++px) am.candidates.emplace_back(py, px);
  am.origins.resize(static_cast<size_t>(oh) * ow);
  am.winner.assign(static_cast<size_t>(p.k()) * oh * ow, 0);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const int i = oy * ow + ox;
      am.origins[static_cast<size_t>(i)] = {oy * p.pool_stride * p.input_stride,
                                            ox * p.pool_stride * p.input_stride};
      for (int k = 0; k < p.k(); ++k) {
        T best = T(0);
        int arg = -1;
        for (int py = 0; py < d; ++py)
          for (int px = 0; px < d; ++px) {
            const int wy = (oy * p.pool_stride + py) * p.input_stride;
            const int wx = (ox * p.pool_stride + px) * p.input_stride;
            const T r = window_response(input, wy, wx, p.dilation, p.filters, k, 0, 0, w);
            if (arg < 0 || r > best) {
              best = r;
              arg = py * d + px;
            }
          }
        out.at3(k, oy, ox) = best;
        am.winner[static_cast<size_t>(k) * oh * ow + i] = arg;
      }
    }
  return {std::move(out), std::move(am)};
}

}  // namespace epinet::ref
