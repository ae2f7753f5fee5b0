#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "epinet/opcount.hpp"
#include "epinet/patches.hpp"
#include "epinet/rng.hpp"
#include "epinet/tensor.hpp"

namespace epinet {

// K mini-epitomes of spatial size V x V. Each epitome yields one W x W
// filter crop per displacement in {0, epitome_stride, ...} per axis;
// overlapping crops share parameters. The layer response per input patch
// is the maximum crop response. Biases are not applied here; they belong
// to the rectifier that follows the layer.
template <typename T>
struct EpitomicLayerParams {
  Tensor<T> epitomes;  // K x C x V x V
  std::vector<T> biases;
  int filter_size = 0;    // W
  int input_stride = 1;   // patch grid stride, pixels
  int epitome_stride = 1; // displacement search stride, pixels
  bool normalized = false;
  T lambda = T(0.01);     // contrast floor, used only when normalized
  int dilation = 1;       // input tap dilation (dense-scoring conversion)

  int k() const { return epitomes.dim(0); }
  int channels() const { return epitomes.dim(1); }
  int epitome_size() const { return epitomes.dim(2); }
  int displacement_range() const { return epitome_size() - filter_size + 1; }

  std::vector<int> axis_candidates() const {
    const int d = displacement_range();
    std::vector<int> c;
    for (int p = 0; p < d; p += epitome_stride) c.push_back(p);
    return c;
  }

  void validate() const {
    if (epitomes.rank() != 4)
      throw Error("layers", "dim", "epitomes must be K x C x V x V");
    if (epitomes.dim(2) != epitomes.dim(3))
      throw Error("layers", "dim", "epitomes must be square");
    if (filter_size < 1 || epitome_size() < filter_size)
      throw Error("layers", "dim", "epitome size must be >= filter size");
    if (input_stride < 1 || epitome_stride < 1 || dilation < 1)
      throw Error("layers", "arg", "strides and dilation must be >= 1");
    if (static_cast<int>(biases.size()) != k())
      throw Error("layers", "dim", "bias count must equal epitome count");
    if (axis_candidates().empty())
      throw Error("layers", "dim", "empty displacement candidate set");
    if (normalized && !(lambda > T(0)))
      throw Error("layers", "config", "contrast floor lambda must be > 0");
  }
};

// Baseline convolution + max-pooling pair. Patches are extracted densely
// at input_stride; the output keeps the best response within each
// pool_size x pool_size window of the dense response grid, reducing
// resolution by pool_stride.
template <typename T>
struct MaxPoolConvParams {
  Tensor<T> filters;  // K x C x W x W
  std::vector<T> biases;
  int pool_size = 1;    // D
  int pool_stride = 1;  // == D by default
  int input_stride = 1;
  int dilation = 1;

  int k() const { return filters.dim(0); }
  int channels() const { return filters.dim(1); }
  int filter_size() const { return filters.dim(2); }

  void validate() const {
    if (filters.rank() != 4 || filters.dim(2) != filters.dim(3))
      throw Error("layers", "dim", "filters must be K x C x W x W");
    if (pool_size < 1 || pool_stride < 1 || input_stride < 1 || dilation < 1)
      throw Error("layers", "arg", "pool geometry must be >= 1");
    if (static_cast<int>(biases.size()) != k())
      throw Error("layers", "dim", "bias count must equal filter count");
  }
};

// Winning displacement per output unit (i, k), recorded by a forward pass
// and consumed by exactly one matching backward pass. `winner[k * n + i]`
// indexes into `candidates`; `origins[i]` is the input-pixel origin of
// patch/pool-window i.
struct ArgmaxRecord {
  int out_h = 0;
  int out_w = 0;
  int k = 0;
  std::vector<std::pair<int, int>> candidates;  // (dy, dx) offsets
  std::vector<std::pair<int, int>> origins;     // per position i
  std::vector<int32_t> winner;                  // [k * out_h*out_w + i]

  int positions() const { return out_h * out_w; }
};

namespace detail {

// Flattens the W x W crop of epitome `k` at displacement (py, px),
// channel-major, into `dst` (length W*W*C).
template <typename T>
void copy_epitome_crop(const Tensor<T>& epitomes, int k, int w, int py, int px, T* dst) {
  const int c = epitomes.dim(1), v = epitomes.dim(2);
  const T* base = epitomes.data() + static_cast<size_t>(k) * c * v * v;
  int64_t j = 0;
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = base + static_cast<size_t>(ch) * v * v;
    for (int dy = 0; dy < w; ++dy) {
      const T* line = plane + static_cast<size_t>(py + dy) * v + px;
      for (int dx = 0; dx < w; ++dx) dst[j++] = line[dx];
    }
  }
}

template <typename T>
void check_input(const Tensor<T>& input, int channels) {
  if (input.rank() != 3) throw Error("layers", "dim", "layer input must be CHW");
  if (input.dim(0) != channels)
    throw Error("layers", "dim",
                "input channels " + std::to_string(input.dim(0)) + " do not match filter channels " +
                    std::to_string(channels));
}

inline void check_argmax(const ArgmaxRecord& am, int k, int out_h, int out_w) {
  if (am.k != k || am.out_h != out_h || am.out_w != out_w ||
      am.winner.size() != static_cast<size_t>(k) * out_h * out_w)
    throw Error("layers", "stale_argmax", "argmax record does not match this forward geometry");
}

// Max over columns [j0, j0+n) of one response row, smallest index wins ties.
template <typename T>
std::pair<T, int> row_max(const T* row, int j0, int n) {
  T best = row[j0];
  int arg = 0;
  for (int c = 1; c < n; ++c)
    if (row[j0 + c] > best) {
      best = row[j0 + c];
      arg = c;
    }
  return {best, arg};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Epitomic convolution (max response over epitome displacements)
// ---------------------------------------------------------------------------

template <typename T>
std::pair<Tensor<T>, ArgmaxRecord> epitomic_conv_forward(const Tensor<T>& input,
                                                         const EpitomicLayerParams<T>& params) {
  params.validate();
  detail::check_input(input, params.channels());
  const int w = params.filter_size;
  const int kk = params.k();
  const auto axis = params.axis_candidates();
  const int nc = static_cast<int>(axis.size() * axis.size());
  const int cols = w * w * params.channels();

  PatchMatrix<T> pm = unroll_patches(input, w, params.input_stride, params.dilation);
  const int n = pm.rows();

  // Filter matrix: cols x (K * nc), one column per (epitome, displacement)
  // crop so the product accumulates over patch elements in canonical order.
  Tensor<T> filters(Shape{cols, kk * nc});
  std::vector<T> norms;
  if (params.normalized) norms.assign(static_cast<size_t>(kk) * nc, T(0));
  std::vector<T> crop(static_cast<size_t>(cols));
  for (int k = 0; k < kk; ++k) {
    for (int cy = 0; cy < static_cast<int>(axis.size()); ++cy)
      for (int cx = 0; cx < static_cast<int>(axis.size()); ++cx) {
        const int j = k * nc + cy * static_cast<int>(axis.size()) + cx;
        detail::copy_epitome_crop(params.epitomes, k, w, axis[cy], axis[cx], crop.data());
        if (params.normalized) {
          T sum = T(0);
          for (int e = 0; e < cols; ++e) sum += crop[e];
          const T mean = sum / T(cols);
          T sq = T(0);
          for (int e = 0; e < cols; ++e) {
            crop[e] -= mean;
            sq += crop[e] * crop[e];
          }
          norms[static_cast<size_t>(j)] = std::sqrt(sq + params.lambda);
        }
        for (int e = 0; e < cols; ++e) filters.at2(e, j) = crop[e];
      }
  }

  Tensor<T> resp = matmul(pm.data, filters);
  opcount::add_inner_products(static_cast<int64_t>(n) * kk * nc, cols);

  const int gy = patch_grid_extent(input.dim(1), w, params.input_stride, params.dilation);
  const int gx = patch_grid_extent(input.dim(2), w, params.input_stride, params.dilation);
  Tensor<T> out(Shape{kk, gy, gx});
  ArgmaxRecord am;
  am.out_h = gy;
  am.out_w = gx;
  am.k = kk;
  am.origins = pm.origins;
  for (int py : axis)
    for (int px : axis) am.candidates.emplace_back(py, px);
  am.winner.assign(static_cast<size_t>(kk) * n, 0);

  for (int i = 0; i < n; ++i) {
    const T* row = resp.data() + static_cast<size_t>(i) * kk * nc;
    for (int k = 0; k < kk; ++k) {
      T best;
      int arg;
      if (params.normalized) {
        best = row[k * nc] / norms[static_cast<size_t>(k) * nc];
        arg = 0;
        for (int c = 1; c < nc; ++c) {
          const T v = row[k * nc + c] / norms[static_cast<size_t>(k) * nc + c];
          if (v > best) {
            best = v;
            arg = c;
          }
        }
      } else {
        std::tie(best, arg) = detail::row_max(row, k * nc, nc);
      }
      out[static_cast<size_t>(k) * n + i] = best;
      am.winner[static_cast<size_t>(k) * n + i] = arg;
    }
  }
  return {std::move(out), std::move(am)};
}

template <typename T>
std::pair<Tensor<T>, ArgmaxRecord> normalized_epitomic_forward(
    const Tensor<T>& input, const EpitomicLayerParams<T>& params) {
  if (!params.normalized)
    throw Error("layers", "config", "normalized_epitomic_forward requires params.normalized");
  return epitomic_conv_forward(input, params);
}

// Routes gradients through the winning displacements only. Contributions
// from different patches that won overlapping crops accumulate into the
// shared epitome cells; grad_input sums over overlapping patch windows.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> epitomic_conv_backward(const Tensor<T>& grad_out,
                                                       const ArgmaxRecord& am,
                                                       const Tensor<T>& input,
                                                       const EpitomicLayerParams<T>& params) {
  params.validate();
  detail::check_input(input, params.channels());
  const int w = params.filter_size;
  const int kk = params.k();
  const int cols = w * w * params.channels();
  const int c = params.channels();
  const int h = input.dim(1), iw = input.dim(2);
  const int v = params.epitome_size();
  const int dil = params.dilation;
  const int gy = patch_grid_extent(h, w, params.input_stride, dil);
  const int gx = patch_grid_extent(iw, w, params.input_stride, dil);
  detail::check_argmax(am, kk, gy, gx);
  if (grad_out.rank() != 3 || grad_out.dim(0) != kk || grad_out.dim(1) != gy ||
      grad_out.dim(2) != gx)
    throw Error("layers", "stale_argmax",
                "grad_out shape " + shape_str(grad_out.shape()) + " does not match forward output");
  const int n = gy * gx;

  Tensor<T> grad_epit(params.epitomes.shape());
  Tensor<T> grad_in(input.shape());

  // Normalized path needs per-(i,k) crop statistics; precompute the winner
  // crop vectors (mean-subtracted) and scatter the exact quotient-rule
  // derivative. Unnormalized path scatters go * patch directly.
  const int nt = threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int k = 0; k < kk; ++k) {
    std::vector<T> crop(static_cast<size_t>(cols));
    std::vector<T> patch(static_cast<size_t>(cols));
    std::vector<T> dcrop(static_cast<size_t>(cols));
    T* gep = grad_epit.data() + static_cast<size_t>(k) * c * v * v;
    for (int i = 0; i < n; ++i) {
      const T go = grad_out[static_cast<size_t>(k) * n + i];
      if (go == T(0)) continue;
      const auto [py, px] = am.candidates[static_cast<size_t>(am.winner[static_cast<size_t>(k) * n + i])];
      const auto [oy, ox] = am.origins[static_cast<size_t>(i)];
      // gather the patch
      {
        int64_t j = 0;
        for (int ch = 0; ch < c; ++ch)
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx)
              patch[j++] = input.at3(ch, oy + dy * dil, ox + dx * dil);
      }
      if (!params.normalized) {
        int64_t j = 0;
        for (int ch = 0; ch < c; ++ch)
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx)
              gep[(static_cast<size_t>(ch) * v + py + dy) * v + px + dx] += go * patch[j++];
      } else {
        detail::copy_epitome_crop(params.epitomes, k, w, py, px, crop.data());
        T sum = T(0);
        for (int e = 0; e < cols; ++e) sum += crop[e];
        const T mean = sum / T(cols);
        T sq = T(0), dot = T(0);
        for (int e = 0; e < cols; ++e) {
          crop[e] -= mean;
          sq += crop[e] * crop[e];
        }
        const T nrm = std::sqrt(sq + params.lambda);
        for (int e = 0; e < cols; ++e) dot += patch[e] * crop[e];
        // d(x.wbar/n)/dw = P [ x/n - (x.wbar) wbar / n^3 ], P = I - 11^T/M
        T dmean = T(0);
        for (int e = 0; e < cols; ++e) {
          dcrop[e] = patch[e] / nrm - dot * crop[e] / (nrm * nrm * nrm);
          dmean += dcrop[e];
        }
        dmean /= T(cols);
        int64_t j = 0;
        for (int ch = 0; ch < c; ++ch)
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx) {
              gep[(static_cast<size_t>(ch) * v + py + dy) * v + px + dx] += go * (dcrop[j] - dmean);
              ++j;
            }
      }
    }
  }

  // grad_input, partitioned by input channel so overlapping windows sum
  // in a fixed (k, i) order independent of thread count.
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int ch = 0; ch < c; ++ch) {
    std::vector<T> crop(static_cast<size_t>(cols));
    T* gplane = grad_in.data() + static_cast<size_t>(ch) * h * iw;
    for (int k = 0; k < kk; ++k) {
      for (int i = 0; i < n; ++i) {
        const T go = grad_out[static_cast<size_t>(k) * n + i];
        if (go == T(0)) continue;
        const auto [py, px] = am.candidates[static_cast<size_t>(am.winner[static_cast<size_t>(k) * n + i])];
        const auto [oy, ox] = am.origins[static_cast<size_t>(i)];
        detail::copy_epitome_crop(params.epitomes, k, w, py, px, crop.data());
        if (params.normalized) {
          T sum = T(0);
          for (int e = 0; e < cols; ++e) sum += crop[e];
          const T mean = sum / T(cols);
          T sq = T(0);
          for (int e = 0; e < cols; ++e) {
            crop[e] -= mean;
            sq += crop[e] * crop[e];
          }
          const T nrm = std::sqrt(sq + params.lambda);
          for (int e = 0; e < cols; ++e) crop[e] /= nrm;
        }
        const T* wrow = crop.data() + static_cast<size_t>(ch) * w * w;
        for (int dy = 0; dy < w; ++dy)
          for (int dx = 0; dx < w; ++dx)
            gplane[static_cast<size_t>(oy + dy * dil) * iw + ox + dx * dil] +=
                go * wrow[dy * w + dx];
      }
    }
  }
  return {std::move(grad_in), std::move(grad_epit)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> normalized_epitomic_backward(const Tensor<T>& grad_out,
                                                             const ArgmaxRecord& am,
                                                             const Tensor<T>& input,
                                                             const EpitomicLayerParams<T>& params) {
  if (!params.normalized)
    throw Error("layers", "config", "normalized_epitomic_backward requires params.normalized");
  return epitomic_conv_backward(grad_out, am, input, params);
}

// ---------------------------------------------------------------------------
// Max-pooled convolution (baseline)
// ---------------------------------------------------------------------------

template <typename T>
std::pair<Tensor<T>, ArgmaxRecord> maxpool_conv_forward(const Tensor<T>& input,
                                                        const MaxPoolConvParams<T>& params) {
  params.validate();
  detail::check_input(input, params.channels());
  const int w = params.filter_size();
  const int kk = params.k();
  const int cols = w * w * params.channels();
  const int d = params.pool_size;

  PatchMatrix<T> pm = unroll_patches(input, w, params.input_stride, params.dilation);
  const int dy_grid = patch_grid_extent(input.dim(1), w, params.input_stride, params.dilation);
  const int dx_grid = patch_grid_extent(input.dim(2), w, params.input_stride, params.dilation);

  Tensor<T> filters(Shape{cols, kk});
  for (int k = 0; k < kk; ++k) {
    const T* f = params.filters.data() + static_cast<size_t>(k) * cols;
    for (int e = 0; e < cols; ++e) filters.at2(e, k) = f[e];
  }
  Tensor<T> dense = matmul(pm.data, filters);  // (dy_grid*dx_grid) x K
  opcount::add_inner_products(static_cast<int64_t>(dy_grid) * dx_grid * kk, cols);

  if (dy_grid < d || dx_grid < d)
    throw Error("layers", "dim", "empty output grid: pooling window exceeds response map");
  const int oh = (dy_grid - d) / params.pool_stride + 1;
  const int ow = (dx_grid - d) / params.pool_stride + 1;
  const int n = oh * ow;

  Tensor<T> out(Shape{kk, oh, ow});
  ArgmaxRecord am;
  am.out_h = oh;
  am.out_w = ow;
  am.k = kk;
  am.origins.resize(static_cast<size_t>(n));
  for (int py = 0; py < d; ++py)
    for (int px = 0; px < d; ++px) am.candidates.emplace_back(py, px);
  am.winner.assign(static_cast<size_t>(kk) * n, 0);

  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const int i = oy * ow + ox;
      const int by = oy * params.pool_stride, bx = ox * params.pool_stride;
      am.origins[static_cast<size_t>(i)] = {by * params.input_stride, bx * params.input_stride};
      for (int k = 0; k < kk; ++k) {
        T best = dense.at2(by * dx_grid + bx, k);
        int arg = 0;
        for (int ci = 1; ci < d * d; ++ci) {
          const int py = ci / d, px = ci % d;
          const T v = dense.at2((by + py) * dx_grid + bx + px, k);
          if (v > best) {
            best = v;
            arg = ci;
          }
        }
        out[static_cast<size_t>(k) * n + i] = best;
        am.winner[static_cast<size_t>(k) * n + i] = arg;
      }
    }
  return {std::move(out), std::move(am)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> maxpool_conv_backward(const Tensor<T>& grad_out,
                                                      const ArgmaxRecord& am,
                                                      const Tensor<T>& input,
                                                      const MaxPoolConvParams<T>& params) {
  params.validate();
  detail::check_input(input, params.channels());
  const int w = params.filter_size();
  const int kk = params.k();
  const int c = params.channels();
  const int h = input.dim(1), iw = input.dim(2);
  const int dil = params.dilation;
  const int dy_grid = patch_grid_extent(h, w, params.input_stride, dil);
  const int dx_grid = patch_grid_extent(iw, w, params.input_stride, dil);
  const int d = params.pool_size;
  if (dy_grid < d || dx_grid < d)
    throw Error("layers", "dim", "empty output grid: pooling window exceeds response map");
  detail::check_argmax(am, kk, (dy_grid - d) / params.pool_stride + 1,
                       (dx_grid - d) / params.pool_stride + 1);
  if (grad_out.rank() != 3 || grad_out.dim(0) != kk || grad_out.dim(1) != am.out_h ||
      grad_out.dim(2) != am.out_w)
    throw Error("layers", "stale_argmax",
                "grad_out shape " + shape_str(grad_out.shape()) + " does not match forward output");
  const int n = am.positions();

  Tensor<T> grad_filters(params.filters.shape());
  Tensor<T> grad_in(input.shape());

  const int nt = threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int k = 0; k < kk; ++k) {
    T* gf = grad_filters.data() + static_cast<size_t>(k) * c * w * w;
    for (int i = 0; i < n; ++i) {
      const T go = grad_out[static_cast<size_t>(k) * n + i];
      if (go == T(0)) continue;
      const auto [py, px] = am.candidates[static_cast<size_t>(am.winner[static_cast<size_t>(k) * n + i])];
      const auto [oy0, ox0] = am.origins[static_cast<size_t>(i)];
      const int oy = oy0 + py * params.input_stride, ox = ox0 + px * params.input_stride;
      int64_t j = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int dy = 0; dy < w; ++dy)
          for (int dx = 0; dx < w; ++dx)
            gf[j++] += go * input.at3(ch, oy + dy * dil, ox + dx * dil);
    }
  }

#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int ch = 0; ch < c; ++ch) {
    T* gplane = grad_in.data() + static_cast<size_t>(ch) * h * iw;
    for (int k = 0; k < kk; ++k) {
      const T* f = params.filters.data() + (static_cast<size_t>(k) * c + ch) * w * w;
      for (int i = 0; i < n; ++i) {
        const T go = grad_out[static_cast<size_t>(k) * n + i];
        if (go == T(0)) continue;
        const auto [py, px] = am.candidates[static_cast<size_t>(am.winner[static_cast<size_t>(k) * n + i])];
        const auto [oy0, ox0] = am.origins[static_cast<size_t>(i)];
        const int oy = oy0 + py * params.input_stride, ox = ox0 + px * params.input_stride;
        for (int dy = 0; dy < w; ++dy)
          for (int dx = 0; dx < w; ++dx)
            gplane[static_cast<size_t>(oy + dy * dil) * iw + ox + dx * dil] += go * f[dy * w + dx];
      }
    }
  }
  return {std::move(grad_in), std::move(grad_filters)};
}

// Casts max-pooled convolution as epitomic convolution: filters are
// zero-padded into epitomes and the displacement search replays the
// pooling window. Composed forward equals maxpool_conv_forward exactly.
template <typename T>
EpitomicLayerParams<T> embed_as_epitome(const MaxPoolConvParams<T>& params) {
  params.validate();
  if (params.dilation != 1)
    throw Error("layers", "config", "embed_as_epitome supports dilation == 1 only");
  if (params.pool_stride != params.pool_size)
    throw Error("layers", "config", "embed_as_epitome requires pool_stride == pool_size");
  const int d = params.pool_size;
  const int s = params.input_stride;
  const int pad = (d - 1) * s;
  EpitomicLayerParams<T> ep;
  ep.epitomes = zero_pad(params.filters, pad);
  ep.biases = params.biases;
  ep.filter_size = params.filter_size() + pad;
  ep.input_stride = s * d;
  ep.epitome_stride = s;
  ep.normalized = false;
  return ep;
}

// ---------------------------------------------------------------------------
// Auxiliary layers
// ---------------------------------------------------------------------------

// y = max(x + beta_c, 0), channel-wise bias. Gradient passes where y > 0;
// exact zeros pass nothing.
template <typename T>
Tensor<T> relu_bias(const Tensor<T>& x, const std::vector<T>& beta) {
  const int c = x.dim(0);
  if (static_cast<int>(beta.size()) != c)
    throw Error("layers", "dim", "bias length must equal channel count");
  Tensor<T> y(x.shape());
  const int64_t per = x.size() / c;
  for (int ch = 0; ch < c; ++ch) {
    const T b = beta[static_cast<size_t>(ch)];
    for (int64_t i = 0; i < per; ++i) {
      const T v = x[ch * per + i] + b;
      y[ch * per + i] = v > T(0) ? v : T(0);
    }
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, std::vector<T>> relu_bias_backward(const Tensor<T>& grad_out,
                                                        const Tensor<T>& y) {
  const int c = y.dim(0);
  Tensor<T> gx(y.shape());
  std::vector<T> gbeta(static_cast<size_t>(c), T(0));
  const int64_t per = y.size() / c;
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < per; ++i)
      if (y[ch * per + i] > T(0)) {
        gx[ch * per + i] = grad_out[ch * per + i];
        gbeta[static_cast<size_t>(ch)] += grad_out[ch * per + i];
      }
  return {std::move(gx), std::move(gbeta)};
}

// Across-channel local response normalization with the standard
// parameterization: b_k = a_k / (kappa + (alpha/n) * sum_{j in win(k)} a_j^2)^beta.
struct LrnConfig {
  double kappa = 2.0;
  int window = 5;
  double alpha = 1e-4;
  double beta = 0.75;
};

template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& x, const LrnConfig& cfg = {}) {
  if (x.rank() != 3) throw Error("layers", "dim", "lrn input must be CHW");
  const int c = x.dim(0);
  const int64_t per = x.size() / c;
  const int half = cfg.window / 2;
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < per; ++i)
    for (int k = 0; k < c; ++k) {
      T s = T(0);
      for (int j = std::max(0, k - half); j <= std::min(c - 1, k + half); ++j) {
        const T a = x[j * per + i];
        s += a * a;
      }
      const T scale = T(cfg.kappa) + T(cfg.alpha / cfg.window) * s;
      y[k * per + i] = x[k * per + i] * std::pow(scale, -T(cfg.beta));
    }
  return y;
}

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const LrnConfig& cfg = {}) {
  const int c = x.dim(0);
  const int64_t per = x.size() / c;
  const int half = cfg.window / 2;
  Tensor<T> gx(x.shape());
  std::vector<T> scale(static_cast<size_t>(c));
  for (int64_t i = 0; i < per; ++i) {
    for (int k = 0; k < c; ++k) {
      T s = T(0);
      for (int j = std::max(0, k - half); j <= std::min(c - 1, k + half); ++j) {
        const T a = x[j * per + i];
        s += a * a;
      }
      scale[static_cast<size_t>(k)] = T(cfg.kappa) + T(cfg.alpha / cfg.window) * s;
    }
    for (int m = 0; m < c; ++m) {
      T g = grad_out[m * per + i] * std::pow(scale[static_cast<size_t>(m)], -T(cfg.beta));
      T coupled = T(0);
      for (int k = std::max(0, m - half); k <= std::min(c - 1, m + half); ++k)
        coupled += grad_out[k * per + i] * x[k * per + i] *
                   std::pow(scale[static_cast<size_t>(k)], -T(cfg.beta) - T(1));
      g -= T(2) * T(cfg.alpha / cfg.window) * T(cfg.beta) * x[m * per + i] * coupled;
      gx[m * per + i] = g;
    }
  }
  return gx;
}

enum class DropoutMode { Train, Eval };

// Mask is a pure function of (seed, layer id, step): forward and backward
// regenerate the identical mask.
inline std::vector<uint8_t> dropout_mask(int64_t n, double rate, uint64_t seed, int layer_id,
                                         int64_t step) {
  auto rng = substream(seed, "dropout", static_cast<uint64_t>(layer_id),
                       static_cast<uint64_t>(step));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<uint8_t> mask(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) mask[static_cast<size_t>(i)] = u(rng) >= rate ? 1 : 0;
  return mask;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, uint64_t seed, int layer_id, int64_t step,
                  DropoutMode mode) {
  if (rate < 0 || rate >= 1)
    throw Error("layers", "config", "dropout rate must be in [0, 1)");
  if (mode == DropoutMode::Eval || rate == 0) return x;
  auto mask = dropout_mask(x.size(), rate, seed, layer_id, step);
  const T keep = T(1) / T(1.0 - rate);
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i)
    y[i] = mask[static_cast<size_t>(i)] ? x[i] * keep : T(0);
  return y;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights,
                          const std::vector<T>& bias) {
  if (weights.rank() != 2) throw Error("layers", "dim", "fc weights must be 2-d");
  const int out = weights.dim(0), in = weights.dim(1);
  if (x.size() != in)
    throw Error("layers", "dim",
                "fc input size " + std::to_string(x.size()) + " != " + std::to_string(in));
  if (static_cast<int>(bias.size()) != out)
    throw Error("layers", "dim", "fc bias length mismatch");
  Tensor<T> y(Shape{out});
  for (int o = 0; o < out; ++o) {
    T s = T(0);
    const T* wrow = weights.data() + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) s += wrow[i] * x[i];
    y[o] = s + bias[static_cast<size_t>(o)];
  }
  opcount::add_inner_products(out, in);
  return y;
}

template <typename T>
std::vector<T> softmax(const Tensor<T>& scores) {
  std::vector<T> p(static_cast<size_t>(scores.size()));
  T mx = scores[0];
  for (int64_t i = 1; i < scores.size(); ++i) mx = std::max(mx, scores[i]);
  T z = T(0);
  for (int64_t i = 0; i < scores.size(); ++i) {
    p[static_cast<size_t>(i)] = std::exp(scores[i] - mx);
    z += p[static_cast<size_t>(i)];
  }
  for (auto& v : p) v /= z;
  return p;
}

// Returns (loss, grad wrt scores) with loss = -log p_label.
template <typename T>
std::pair<T, Tensor<T>> softmax_xent(const Tensor<T>& scores, int label) {
  if (label < 0 || label >= scores.size())
    throw Error("layers", "label", "label " + std::to_string(label) + " out of range");
  auto p = softmax(scores);
  Tensor<T> grad(scores.shape());
  for (int64_t i = 0; i < scores.size(); ++i) grad[i] = p[static_cast<size_t>(i)];
  grad[label] -= T(1);
  const T loss = -std::log(std::max(p[static_cast<size_t>(label)],
                                    std::numeric_limits<T>::min()));
  return {loss, std::move(grad)};
}

}  // namespace epinet
