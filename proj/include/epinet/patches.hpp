#pragma once

#include <utility>
#include <vector>

#include "epinet/tensor.hpp"

namespace epinet {

// One row per spatial sampling position; each row is the (window x window
// x channels) input window unrolled channel-major: index (c, dy, dx).
template <typename T>
struct PatchMatrix {
  Tensor<T> data;                            // rows x cols
  std::vector<std::pair<int, int>> origins;  // row -> (y, x) top-left input coordinate
  int window = 0;
  int stride = 1;
  int dilation = 1;
  int channels = 0;

  int rows() const { return data.dim(0); }
  int cols() const { return data.dim(1); }
};

inline int patch_grid_extent(int input, int window, int stride, int dilation) {
  const int eff = (window - 1) * dilation + 1;
  if (eff > input) return 0;
  return (input - eff) / stride + 1;
}

// Enumerates top-left origins {0, s, 2s, ...} on both axes such that the
// dilated window fits entirely; partial windows are dropped. The dilated
// sampling realizes sparse feature-map evaluation for dense scoring.
template <typename T>
PatchMatrix<T> unroll_patches(const Tensor<T>& input, int window, int stride, int dilation) {
  if (input.rank() != 3) throw Error("tensor", "dim", "unroll_patches needs a CHW tensor");
  if (window < 1 || stride < 1 || dilation < 1)
    throw Error("tensor", "arg", "window, stride and dilation must all be >= 1");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int eff = (window - 1) * dilation + 1;
  if (eff > h || eff > w)
    throw Error("tensor", "empty_output",
                "effective window " + std::to_string(eff) + " exceeds input " +
                    shape_str(input.shape()));
  const int gy = patch_grid_extent(h, window, stride, dilation);
  const int gx = patch_grid_extent(w, window, stride, dilation);
  const int rows = gy * gx;
  const int cols = window * window * c;

  PatchMatrix<T> pm;
  pm.data = Tensor<T>(Shape{rows, cols});
  pm.origins.resize(static_cast<size_t>(rows));
  pm.window = window;
  pm.stride = stride;
  pm.dilation = dilation;
  pm.channels = c;

  const T* src = input.data();
  T* dst = pm.data.data();
  const int nt = threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int r = 0; r < rows; ++r) {
    const int oy = (r / gx) * stride;
    const int ox = (r % gx) * stride;
    pm.origins[static_cast<size_t>(r)] = {oy, ox};
    T* row = dst + static_cast<size_t>(r) * cols;
    int64_t j = 0;
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = src + static_cast<size_t>(ch) * h * w;
      for (int dy = 0; dy < window; ++dy) {
        const T* line = plane + static_cast<size_t>(oy + dy * dilation) * w + ox;
        for (int dx = 0; dx < window; ++dx) row[j++] = line[dx * dilation];
      }
    }
  }
  return pm;
}

}  // namespace epinet
