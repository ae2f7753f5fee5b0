#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "epinet/layers.hpp"

namespace epinet {

template <typename T>
struct EpitomicLayer {
  EpitomicLayerParams<T> params;  // rectifier after the max uses params.biases
};

template <typename T>
struct MaxPoolLayer {
  MaxPoolConvParams<T> params;
};

struct LrnLayer {
  LrnConfig cfg;
};

struct DropoutLayer {
  double rate = 0.5;
  int layer_id = 0;
};

template <typename T>
struct FcLayer {
  Tensor<T> weights;  // out x in
  std::vector<T> bias;
  bool relu = true;
  Shape input_shape;  // pre-collapse C,H,W geometry, kept for conv conversion
};

// Plain valid correlation with bias; carries converted fully-connected
// layers when a net runs convolutionally over large inputs.
template <typename T>
struct DenseConvLayer {
  Tensor<T> filters;  // K x C x W x W
  std::vector<T> bias;
  int stride = 1;
  int dilation = 1;
  bool relu = true;
};

template <typename T>
using Layer =
    std::variant<EpitomicLayer<T>, MaxPoolLayer<T>, LrnLayer, DropoutLayer, FcLayer<T>,
                 DenseConvLayer<T>>;

template <typename T>
struct Network {
  std::vector<Layer<T>> layers;
  Shape input_geometry;  // C,H,W of the training crop
  int classes = 0;
};

// ---------------------------------------------------------------------------
// Shape inference
// ---------------------------------------------------------------------------

template <typename T>
Shape layer_output_shape(const Layer<T>& layer, const Shape& in) {
  if (in.size() != 3 && in.size() != 1)
    throw Error("net", "dim", "layer input must be CHW or a flat vector");
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, EpitomicLayer<T>>) {
          const auto& p = l.params;
          if (in.size() != 3 || in[0] != p.channels())
            throw Error("net", "dim", "epitomic layer channel mismatch at input " + shape_str(in));
          const int gy = patch_grid_extent(in[1], p.filter_size, p.input_stride, p.dilation);
          const int gx = patch_grid_extent(in[2], p.filter_size, p.input_stride, p.dilation);
          if (gy < 1 || gx < 1) throw Error("net", "dim", "empty epitomic output grid");
          return Shape{p.k(), gy, gx};
        } else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>) {
          const auto& p = l.params;
          if (in.size() != 3 || in[0] != p.channels())
            throw Error("net", "dim", "conv layer channel mismatch at input " + shape_str(in));
          const int gy = patch_grid_extent(in[1], p.filter_size(), p.input_stride, p.dilation);
          const int gx = patch_grid_extent(in[2], p.filter_size(), p.input_stride, p.dilation);
          if (gy < p.pool_size || gx < p.pool_size)
            throw Error("net", "dim", "empty pooled output grid");
          return Shape{p.k(), (gy - p.pool_size) / p.pool_stride + 1,
                       (gx - p.pool_size) / p.pool_stride + 1};
        } else if constexpr (std::is_same_v<L, LrnLayer> || std::is_same_v<L, DropoutLayer>) {
          return in;
        } else if constexpr (std::is_same_v<L, FcLayer<T>>) {
          if (shape_size(in) != l.weights.dim(1))
            throw Error("net", "dim",
                        "fc expects " + std::to_string(l.weights.dim(1)) + " inputs, got " +
                            shape_str(in));
          return Shape{l.weights.dim(0)};
        } else {
          static_assert(std::is_same_v<L, DenseConvLayer<T>>);
          if (in.size() != 3 || in[0] != l.filters.dim(1))
            throw Error("net", "dim", "conv layer channel mismatch at input " + shape_str(in));
          const int w = l.filters.dim(2);
          const int gy = patch_grid_extent(in[1], w, l.stride, l.dilation);
          const int gx = patch_grid_extent(in[2], w, l.stride, l.dilation);
          if (gy < 1 || gx < 1) throw Error("net", "dim", "empty conv output grid");
          return Shape{l.filters.dim(0), gy, gx};
        }
      },
      layer);
}

template <typename T>
std::vector<Shape> infer_shapes(const Network<T>& net, const Shape& input) {
  std::vector<Shape> out;
  Shape cur = input;
  for (const auto& layer : net.layers) {
    cur = layer_output_shape(layer, cur);
    out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter enumeration (optimizer + checkpoints)
// ---------------------------------------------------------------------------

template <typename T>
struct ParamRef {
  std::string name;
  T* data;
  int64_t size;
  Shape shape;
};

template <typename T>
std::vector<ParamRef<T>> layer_params(Layer<T>& layer, int index) {
  const std::string prefix = "L" + std::to_string(index) + ".";
  std::vector<ParamRef<T>> refs;
  std::visit(
      [&](auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, EpitomicLayer<T>>) {
          refs.push_back({prefix + "epitomes", l.params.epitomes.data(), l.params.epitomes.size(),
                          l.params.epitomes.shape()});
          refs.push_back({prefix + "biases", l.params.biases.data(),
                          static_cast<int64_t>(l.params.biases.size()),
                          Shape{static_cast<int>(l.params.biases.size())}});
        } else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>) {
          refs.push_back({prefix + "filters", l.params.filters.data(), l.params.filters.size(),
                          l.params.filters.shape()});
          refs.push_back({prefix + "biases", l.params.biases.data(),
                          static_cast<int64_t>(l.params.biases.size()),
                          Shape{static_cast<int>(l.params.biases.size())}});
        } else if constexpr (std::is_same_v<L, FcLayer<T>>) {
          refs.push_back({prefix + "weights", l.weights.data(), l.weights.size(),
                          l.weights.shape()});
          refs.push_back({prefix + "bias", l.bias.data(), static_cast<int64_t>(l.bias.size()),
                          Shape{static_cast<int>(l.bias.size())}});
        } else if constexpr (std::is_same_v<L, DenseConvLayer<T>>) {
          refs.push_back({prefix + "filters", l.filters.data(), l.filters.size(),
                          l.filters.shape()});
          refs.push_back({prefix + "bias", l.bias.data(), static_cast<int64_t>(l.bias.size()),
                          Shape{static_cast<int>(l.bias.size())}});
        }
      },
      layer);
  return refs;
}

template <typename T>
bool layer_is_normalized(const Layer<T>& layer) {
  if (auto* e = std::get_if<EpitomicLayer<T>>(&layer)) return e->params.normalized;
  return false;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename T>
struct Trace {
  struct Entry {
    Tensor<T> input;
    Tensor<T> output;
    ArgmaxRecord argmax;  // epitomic / maxpool layers only
  };
  std::vector<Entry> entries;
  Tensor<T> logits;
  DropoutMode mode = DropoutMode::Eval;
  uint64_t seed = 0;
  int64_t step = 0;
};

template <typename T>
Trace<T> net_forward(const Network<T>& net, const Tensor<T>& input, DropoutMode mode,
                     uint64_t seed = 0, int64_t step = 0) {
  Trace<T> tr;
  tr.mode = mode;
  tr.seed = seed;
  tr.step = step;
  Tensor<T> cur = input;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    typename Trace<T>::Entry e;
    e.input = cur;
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, EpitomicLayer<T>>) {
            auto [y, am] = epitomic_conv_forward(cur, l.params);
            e.output = relu_bias(y, l.params.biases);
            e.argmax = std::move(am);
          } else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>) {
            auto [y, am] = maxpool_conv_forward(cur, l.params);
            e.output = relu_bias(y, l.params.biases);
            e.argmax = std::move(am);
          } else if constexpr (std::is_same_v<L, LrnLayer>) {
            e.output = lrn_forward(cur, l.cfg);
          } else if constexpr (std::is_same_v<L, DropoutLayer>) {
            e.output = dropout(cur, l.rate, seed, l.layer_id, step, mode);
          } else if constexpr (std::is_same_v<L, FcLayer<T>>) {
            Tensor<T> flat = cur.reshaped(Shape{static_cast<int>(cur.size())});
            Tensor<T> y = fully_connected(flat, l.weights, l.bias);
            if (l.relu)
              for (int64_t i = 0; i < y.size(); ++i) y[i] = y[i] > T(0) ? y[i] : T(0);
            e.output = std::move(y);
          } else {
            static_assert(std::is_same_v<L, DenseConvLayer<T>>);
            const int w = l.filters.dim(2);
            const int kk = l.filters.dim(0);
            const int cols = w * w * l.filters.dim(1);
            PatchMatrix<T> pm = unroll_patches(cur, w, l.stride, l.dilation);
            Tensor<T> fm(Shape{cols, kk});
            for (int k = 0; k < kk; ++k)
              for (int c = 0; c < cols; ++c)
                fm.at2(c, k) = l.filters[static_cast<size_t>(k) * cols + c];
            Tensor<T> resp = matmul(pm.data, fm);
            opcount::add_inner_products(static_cast<int64_t>(pm.rows()) * kk, cols);
            const int gy = patch_grid_extent(cur.dim(1), w, l.stride, l.dilation);
            const int gx = patch_grid_extent(cur.dim(2), w, l.stride, l.dilation);
            Tensor<T> y(Shape{kk, gy, gx});
            const int n = gy * gx;
            for (int i = 0; i < n; ++i)
              for (int k = 0; k < kk; ++k) {
                T v = resp.at2(i, k) + l.bias[static_cast<size_t>(k)];
                if (l.relu && v < T(0)) v = T(0);
                y[static_cast<size_t>(k) * n + i] = v;
              }
            e.output = std::move(y);
          }
        },
        net.layers[li]);
    if (!all_finite(e.output))
      throw Error("net", "nonfinite", "non-finite activation at layer " + std::to_string(li));
    cur = e.output;
    tr.entries.push_back(std::move(e));
  }
  tr.logits = cur;
  return tr;
}

// Per-layer gradient tensors in layer_params() order.
template <typename T>
using Grads = std::vector<std::vector<Tensor<T>>>;

template <typename T>
Grads<T> zero_grads(Network<T>& net) {
  Grads<T> g(net.layers.size());
  for (size_t li = 0; li < net.layers.size(); ++li)
    for (auto& p : layer_params(net.layers[li], static_cast<int>(li)))
      g[li].push_back(Tensor<T>(p.shape));
  return g;
}

template <typename T>
void accumulate_grads(Grads<T>& dst, const Grads<T>& src) {
  for (size_t li = 0; li < dst.size(); ++li)
    for (size_t pi = 0; pi < dst[li].size(); ++pi)
      for (int64_t i = 0; i < dst[li][pi].size(); ++i) dst[li][pi][i] += src[li][pi][i];
}

template <typename T>
void scale_grads(Grads<T>& g, T s) {
  for (auto& layer : g)
    for (auto& t : layer)
      for (int64_t i = 0; i < t.size(); ++i) t[i] *= s;
}

template <typename T>
std::pair<Grads<T>, Tensor<T>> net_backward(const Network<T>& net, const Trace<T>& trace,
                                            const Tensor<T>& grad_logits) {
  Grads<T> grads(net.layers.size());
  Tensor<T> g = grad_logits;
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const auto& e = trace.entries[static_cast<size_t>(li)];
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, EpitomicLayer<T>> || std::is_same_v<L, MaxPoolLayer<T>>) {
            auto [gpre, gbeta] = relu_bias_backward(g, e.output);
            Tensor<T> gin, gw;
            if constexpr (std::is_same_v<L, EpitomicLayer<T>>)
              std::tie(gin, gw) = epitomic_conv_backward(gpre, e.argmax, e.input, l.params);
            else
              std::tie(gin, gw) = maxpool_conv_backward(gpre, e.argmax, e.input, l.params);
            grads[static_cast<size_t>(li)].push_back(std::move(gw));
            grads[static_cast<size_t>(li)].push_back(
                Tensor<T>(Shape{static_cast<int>(gbeta.size())}, gbeta));
            g = std::move(gin);
          } else if constexpr (std::is_same_v<L, LrnLayer>) {
            g = lrn_backward(g, e.input, l.cfg);
          } else if constexpr (std::is_same_v<L, DropoutLayer>) {
            if (trace.mode == DropoutMode::Train && l.rate > 0) {
              auto mask = dropout_mask(g.size(), l.rate, trace.seed, l.layer_id, trace.step);
              const T keep = T(1) / T(1.0 - l.rate);
              Tensor<T> gx(g.shape());
              for (int64_t i = 0; i < g.size(); ++i)
                gx[i] = mask[static_cast<size_t>(i)] ? g[i] * keep : T(0);
              g = std::move(gx);
            }
          } else if constexpr (std::is_same_v<L, FcLayer<T>>) {
            const int out = l.weights.dim(0), in = l.weights.dim(1);
            Tensor<T> gy = g;
            if (l.relu)
              for (int64_t i = 0; i < gy.size(); ++i)
                if (e.output[i] <= T(0)) gy[i] = T(0);
            Tensor<T> gw(l.weights.shape());
            Tensor<T> gb(Shape{out});
            Tensor<T> gx(e.input.shape());
            const Tensor<T> flat = e.input.reshaped(Shape{in});
            for (int o = 0; o < out; ++o) {
              const T go = gy[o];
              gb[o] = go;
              T* gwrow = gw.data() + static_cast<size_t>(o) * in;
              const T* wrow = l.weights.data() + static_cast<size_t>(o) * in;
              for (int i = 0; i < in; ++i) {
                gwrow[i] = go * flat[i];
                gx[i] += go * wrow[i];
              }
            }
            grads[static_cast<size_t>(li)].push_back(std::move(gw));
            grads[static_cast<size_t>(li)].push_back(std::move(gb));
            g = std::move(gx);
          } else {
            static_assert(std::is_same_v<L, DenseConvLayer<T>>);
            const int w = l.filters.dim(2);
            const int kk = l.filters.dim(0);
            const int c = l.filters.dim(1);
            const int cols = w * w * c;
            const int gy_n = e.output.dim(1), gx_n = e.output.dim(2);
            const int n = gy_n * gx_n;
            Tensor<T> gpre = g;
            if (l.relu)
              for (int64_t i = 0; i < gpre.size(); ++i)
                if (e.output[i] <= T(0)) gpre[i] = T(0);
            Tensor<T> gf(l.filters.shape());
            Tensor<T> gb(Shape{kk});
            Tensor<T> gx(e.input.shape());
            const int ih = e.input.dim(1), iw2 = e.input.dim(2);
            const int nt = threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
            for (int k = 0; k < kk; ++k) {
              T* gfk = gf.data() + static_cast<size_t>(k) * cols;
              T bsum = T(0);
              for (int i = 0; i < n; ++i) {
                const T go = gpre[static_cast<size_t>(k) * n + i];
                if (go == T(0)) continue;
                bsum += go;
                const int oy = (i / gx_n) * l.stride, ox = (i % gx_n) * l.stride;
                int64_t j = 0;
                for (int ch = 0; ch < c; ++ch)
                  for (int dy = 0; dy < w; ++dy)
                    for (int dx = 0; dx < w; ++dx)
                      gfk[j++] += go * e.input.at3(ch, oy + dy * l.dilation, ox + dx * l.dilation);
              }
              gb[k] = bsum;
            }
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
            for (int ch = 0; ch < c; ++ch) {
              T* gplane = gx.data() + static_cast<size_t>(ch) * ih * iw2;
              for (int k = 0; k < kk; ++k) {
                const T* f = l.filters.data() + (static_cast<size_t>(k) * c + ch) * w * w;
                for (int i = 0; i < n; ++i) {
                  const T go = gpre[static_cast<size_t>(k) * n + i];
                  if (go == T(0)) continue;
                  const int oy = (i / gx_n) * l.stride, ox = (i % gx_n) * l.stride;
                  for (int dy = 0; dy < w; ++dy)
                    for (int dx = 0; dx < w; ++dx)
                      gplane[static_cast<size_t>(oy + dy * l.dilation) * iw2 + ox + dx * l.dilation] +=
                          go * f[dy * w + dx];
                }
              }
            }
            grads[static_cast<size_t>(li)].push_back(std::move(gf));
            grads[static_cast<size_t>(li)].push_back(std::move(gb));
            g = std::move(gx);
          }
        },
        net.layers[static_cast<size_t>(li)]);
  }
  return {std::move(grads), std::move(g)};
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  int batch = 128;
  double weight_decay = 5e-4;
  std::vector<int> decay_exempt;  // layer indices; must cover normalized layers
  double lr_drop_factor = 10.0;
  int patience = 3;
  int max_drops = 3;
  int max_epochs = 30;
  uint64_t seed = 1;
  enum class LossMode { Single, Sum, Average, Mil } loss_mode = LossMode::Single;
  bool flip_augment = true;

  template <typename T>
  void validate(const Network<T>& net) const {
    if (!(lr > 0)) throw Error("net", "config", "learning rate must be > 0");
    if (momentum < 0 || momentum >= 1)
      throw Error("net", "config", "momentum must be in [0, 1)");
    for (size_t li = 0; li < net.layers.size(); ++li)
      if (layer_is_normalized(net.layers[li]) &&
          std::find(decay_exempt.begin(), decay_exempt.end(), static_cast<int>(li)) ==
              decay_exempt.end())
        throw Error("net", "config",
                    "decay-exempt set must include normalized layer " + std::to_string(li));
  }
};

inline TrainConfig::LossMode parse_loss_mode(const std::string& s) {
  if (s == "single") return TrainConfig::LossMode::Single;
  if (s == "sum") return TrainConfig::LossMode::Sum;
  if (s == "average") return TrainConfig::LossMode::Average;
  if (s == "mil") return TrainConfig::LossMode::Mil;
  throw Error("cli", "config", "unknown loss mode: " + s);
}

template <typename T>
using Velocity = Grads<T>;

template <typename T>
Velocity<T> zero_velocity(Network<T>& net) {
  return zero_grads(net);
}

// v <- momentum * v - lr * (g + decay * w); w <- w + v. Decay is zero for
// exempt layers (every mean/contrast-normalized layer must be exempt).
template <typename T>
void sgd_step(Network<T>& net, const Grads<T>& grads, Velocity<T>& vel, const TrainConfig& cfg,
              double lr) {
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const bool exempt = std::find(cfg.decay_exempt.begin(), cfg.decay_exempt.end(),
                                  static_cast<int>(li)) != cfg.decay_exempt.end();
    const T decay = exempt ? T(0) : T(cfg.weight_decay);
    auto refs = layer_params(net.layers[li], static_cast<int>(li));
    for (size_t pi = 0; pi < refs.size(); ++pi) {
      T* w = refs[pi].data;
      const Tensor<T>& g = grads[li][pi];
      Tensor<T>& v = vel[li][pi];
      for (int64_t i = 0; i < g.size(); ++i) {
        v[i] = T(cfg.momentum) * v[i] - T(lr) * (g[i] + decay * w[i]);
        w[i] += v[i];
      }
    }
  }
}

// Drops the rate by lr_drop_factor whenever the best validation error has
// not improved for `patience` consecutive epochs, at most max_drops times.
inline double lr_schedule(const std::vector<double>& val_errors, const TrainConfig& cfg) {
  double lr = cfg.lr;
  double best = std::numeric_limits<double>::infinity();
  int since = 0, drops = 0;
  for (double e : val_errors) {
    if (e < best) {
      best = e;
      since = 0;
    } else {
      ++since;
    }
    if (since >= cfg.patience && drops < cfg.max_drops) {
      lr /= cfg.lr_drop_factor;
      ++drops;
      since = 0;
    }
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Prediction helpers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& chw) {
  Tensor<T> out(chw.shape());
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at3(ch, y, x) = chw.at3(ch, y, w - 1 - x);
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& chw, int y0, int x0, int ch_, int cw_) {
  const int c = chw.dim(0);
  if (y0 < 0 || x0 < 0 || y0 + ch_ > chw.dim(1) || x0 + cw_ > chw.dim(2))
    throw Error("net", "dim", "crop exceeds image bounds");
  Tensor<T> out(Shape{c, ch_, cw_});
  for (int chn = 0; chn < c; ++chn)
    for (int y = 0; y < ch_; ++y)
      for (int x = 0; x < cw_; ++x) out.at3(chn, y, x) = chw.at3(chn, y0 + y, x0 + x);
  return out;
}

template <typename T>
std::vector<T> predict_single(const Network<T>& net, const Tensor<T>& input_crop) {
  auto tr = net_forward(net, input_crop, DropoutMode::Eval);
  return softmax(tr.logits);
}

// Averages softmax probabilities over 10 views: center + 4 corner crops,
// each plus its left-right flip.
template <typename T>
std::vector<T> ten_view_predict(const Network<T>& net, const Tensor<T>& image) {
  const int ch = net.input_geometry[1], cw = net.input_geometry[2];
  const int h = image.dim(1), w = image.dim(2);
  if (h < ch || w < cw)
    throw Error("net", "dim", "image " + shape_str(image.shape()) + " smaller than crop");
  const std::vector<std::pair<int, int>> anchors = {
      {(h - ch) / 2, (w - cw) / 2}, {0, 0}, {0, w - cw}, {h - ch, 0}, {h - ch, w - cw}};
  std::vector<T> acc(static_cast<size_t>(net.classes), T(0));
  for (const auto& [y0, x0] : anchors) {
    Tensor<T> view = crop(image, y0, x0, ch, cw);
    for (int flip = 0; flip < 2; ++flip) {
      auto p = predict_single(net, flip ? flip_horizontal(view) : view);
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
  }
  for (auto& v : acc) v /= T(10);
  return acc;
}

}  // namespace epinet
