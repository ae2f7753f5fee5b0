#pragma once

#include <array>
#include <optional>
#include <sstream>

#include "epinet/image.hpp"
#include "epinet/net.hpp"
#include "epinet/toynets.hpp"

namespace epinet {

// ---------------------------------------------------------------------------
// Pyramid
// ---------------------------------------------------------------------------

template <typename T>
struct Pyramid {
  struct Level {
    double scale;      // resize factor relative to the base image
    Tensor<T> image;   // CHW
  };
  std::vector<Level> levels;
};

// Resizes the base image by each factor (strictly decreasing scales).
// Levels smaller than `min_extent` are rejected unless allow_subcrop.
template <typename T>
Pyramid<T> build_pyramid(const Tensor<T>& image, const std::vector<double>& scales,
                         int min_extent = 0, bool allow_subcrop = false) {
  if (scales.empty()) throw Error("patchwork", "pyramid", "scales must be non-empty");
  for (size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0)) throw Error("patchwork", "pyramid", "scales must be positive");
    if (i > 0 && !(scales[i] < scales[i - 1]))
      throw Error("patchwork", "pyramid", "scales must be strictly decreasing");
  }
  Pyramid<T> pyr;
  for (double s : scales) {
    const int lh = static_cast<int>(std::lround(image.dim(1) * s));
    const int lw = static_cast<int>(std::lround(image.dim(2) * s));
    if (lh < 1 || lw < 1)
      throw Error("patchwork", "pyramid", "requested level smaller than 1 px");
    if (min_extent > 0 && (lh < min_extent || lw < min_extent) && !allow_subcrop)
      throw Error("patchwork", "pyramid",
                  "level " + std::to_string(lh) + "x" + std::to_string(lw) +
                      " smaller than crop " + std::to_string(min_extent));
    pyr.levels.push_back({s, (lh == image.dim(1) && lw == image.dim(2))
                                 ? image
                                 : bilinear_resize(image, lh, lw)});
  }
  return pyr;
}

// ---------------------------------------------------------------------------
// Patchwork canvas
// ---------------------------------------------------------------------------

struct Placement {
  int level = 0;  // index into the pyramid
  int x = 0, y = 0, w = 0, h = 0;
};

struct CanvasPos {
  int level;      // SENTINEL (-1) for gutter pixels
  int x, y;       // level coordinates
  double scale;
};
constexpr int kGutterSentinel = -1;

template <typename T>
struct Patchwork {
  Tensor<T> canvas;  // C x H x W
  std::vector<Placement> placements;
  std::vector<double> scales;  // per pyramid level
  int gutter = 0;

  int width() const { return canvas.dim(2); }
  int height() const { return canvas.dim(1); }
};

inline int round_up(int v, int mult) { return mult <= 1 ? v : ((v + mult - 1) / mult) * mult; }

// Deterministic shelf packing: levels sorted by decreasing height are laid
// left-to-right into horizontal shelves with g-pixel gutters on all sides.
// The shelf width is chosen among prefix-sum candidates to minimize the
// larger canvas side; final dimensions round up to `stride_multiple`.
template <typename T>
Patchwork<T> pack_patchwork(const Pyramid<T>& pyr, int gutter, const std::vector<T>& fill,
                            int stride_multiple = 1, int max_dim = 0) {
  if (pyr.levels.empty()) throw Error("patchwork", "pack", "empty pyramid");
  const int channels = pyr.levels[0].image.dim(0);
  const int g = gutter;

  std::vector<int> order(pyr.levels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return pyr.levels[static_cast<size_t>(a)].image.dim(1) >
           pyr.levels[static_cast<size_t>(b)].image.dim(1);
  });

  auto simulate = [&](int width) {
    std::vector<Placement> pl;
    int x = g, y = g, shelf_h = 0;
    for (int li : order) {
      const auto& img = pyr.levels[static_cast<size_t>(li)].image;
      const int w = img.dim(2), h = img.dim(1);
      if (x + w + g > width && x > g) {
        y += shelf_h + g;
        x = g;
        shelf_h = 0;
      }
      pl.push_back({li, x, y, w, h});
      x += w + g;
      shelf_h = std::max(shelf_h, h);
    }
    return std::pair<std::vector<Placement>, int>(std::move(pl), y + shelf_h + g);
  };

  int prefix = g;
  int best_w = -1, best_h = -1;
  std::vector<Placement> best_pl;
  for (int li : order) {
    prefix += pyr.levels[static_cast<size_t>(li)].image.dim(2) + g;
    auto [pl, height] = simulate(prefix);
    const int cw = round_up(prefix, stride_multiple);
    const int chh = round_up(height, stride_multiple);
    const bool better =
        best_w < 0 || std::max(cw, chh) < std::max(best_w, best_h) ||
        (std::max(cw, chh) == std::max(best_w, best_h) &&
         (static_cast<int64_t>(cw) * chh < static_cast<int64_t>(best_w) * best_h ||
          (static_cast<int64_t>(cw) * chh == static_cast<int64_t>(best_w) * best_h &&
           cw < best_w)));
    if (better) {
      best_w = cw;
      best_h = chh;
      best_pl = std::move(pl);
    }
  }
  if (max_dim > 0 && (best_w > max_dim || best_h > max_dim))
    throw Error("patchwork", "pack",
                "levels do not fit " + std::to_string(max_dim) + "px canvas; need " +
                    std::to_string(best_w) + "x" + std::to_string(best_h));

  Patchwork<T> pw;
  pw.gutter = g;
  pw.placements = std::move(best_pl);
  std::sort(pw.placements.begin(), pw.placements.end(),
            [](const Placement& a, const Placement& b) { return a.level < b.level; });
  pw.canvas = Tensor<T>(Shape{channels, best_h, best_w});
  for (int c = 0; c < channels; ++c) {
    const T f = fill.empty() ? T(0) : fill[static_cast<size_t>(c) % fill.size()];
    T* plane = pw.canvas.data() + static_cast<size_t>(c) * best_h * best_w;
    std::fill(plane, plane + static_cast<size_t>(best_h) * best_w, f);
  }
  pw.scales.resize(pyr.levels.size());
  for (const auto& p : pw.placements) {
    const auto& img = pyr.levels[static_cast<size_t>(p.level)].image;
    pw.scales[static_cast<size_t>(p.level)] = pyr.levels[static_cast<size_t>(p.level)].scale;
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x)
          pw.canvas.at3(c, p.y + y, p.x + x) = img.at3(c, y, x);
  }
  return pw;
}

// Exact integer bijection between canvas pixels and (level, x, y); gutter
// pixels map to the sentinel and identity holds on every placement pixel.
template <typename T>
CanvasPos map_canvas_to_image(const Patchwork<T>& pw, int cx, int cy) {
  if (cx < 0 || cy < 0 || cx >= pw.width() || cy >= pw.height())
    throw Error("patchwork", "range",
                "canvas position (" + std::to_string(cx) + "," + std::to_string(cy) +
                    ") out of canvas");
  for (const auto& p : pw.placements)
    if (cx >= p.x && cx < p.x + p.w && cy >= p.y && cy < p.y + p.h)
      return {p.level, cx - p.x, cy - p.y, pw.scales[static_cast<size_t>(p.level)]};
  return {kGutterSentinel, cx, cy, 0.0};
}

template <typename T>
std::pair<int, int> map_image_to_canvas(const Patchwork<T>& pw, int level, int x, int y) {
  for (const auto& p : pw.placements)
    if (p.level == level) {
      if (x < 0 || y < 0 || x >= p.w || y >= p.h)
        throw Error("patchwork", "range", "level coordinates out of placement");
      return {p.x + x, p.y + y};
    }
  throw Error("patchwork", "range", "no placement for level " + std::to_string(level));
}

// Scale-keyed variant: s selects the level whose scale matches.
template <typename T>
std::pair<int, int> map_image_to_canvas(const Patchwork<T>& pw, int x, int y, double s) {
  for (size_t li = 0; li < pw.scales.size(); ++li)
    if (std::abs(pw.scales[li] - s) < 1e-12)
      return map_image_to_canvas(pw, static_cast<int>(li), x, y);
  throw Error("patchwork", "range", "no pyramid level with scale " + std::to_string(s));
}

// One line per placement, consumed by the pack-debug renderer.
template <typename T>
std::string patchwork_manifest(const Patchwork<T>& pw) {
  std::ostringstream os;
  for (const auto& p : pw.placements)
    os << "level=" << p.level << " scale=" << pw.scales[static_cast<size_t>(p.level)] << " x="
       << p.x << " y=" << p.y << " w=" << p.w << " h=" << p.h << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Fully-connected layers as convolutions
// ---------------------------------------------------------------------------

// The first FC layer becomes a convolution whose kernel is the FC weight
// matrix reshaped to the pre-collapse extent; later FC layers become 1x1
// convolutions. On a crop-sized input the converted net reproduces the
// original outputs exactly.
template <typename T>
Network<T> convolutionalize_fc(const Network<T>& net) {
  Network<T> out;
  out.classes = net.classes;
  out.input_geometry = net.input_geometry;
  bool first_fc = true;
  for (const auto& layer : net.layers) {
    if (const auto* fc = std::get_if<FcLayer<T>>(&layer)) {
      DenseConvLayer<T> conv;
      if (first_fc) {
        if (fc->input_shape.size() != 3 ||
            shape_size(fc->input_shape) != fc->weights.dim(1))
          throw Error("patchwork", "convert", "unknown pre-collapse geometry for first FC layer");
        if (fc->input_shape[1] != fc->input_shape[2])
          throw Error("patchwork", "convert", "non-square pre-collapse extent unsupported");
        conv.filters = fc->weights.reshaped(Shape{fc->weights.dim(0), fc->input_shape[0],
                                                  fc->input_shape[1], fc->input_shape[2]});
        first_fc = false;
      } else {
        conv.filters = fc->weights.reshaped(Shape{fc->weights.dim(0), fc->weights.dim(1), 1, 1});
      }
      conv.bias = fc->bias;
      conv.stride = 1;
      conv.dilation = 1;
      conv.relu = fc->relu;
      out.layers.emplace_back(std::move(conv));
    } else {
      out.layers.push_back(layer);
    }
  }
  return out;
}

// Copies dense-conv gradients back onto the source net's FC parameters
// (inverse of convolutionalize_fc for gradient tensors).
template <typename T>
Grads<T> fold_conv_grads(const Network<T>& source, Grads<T> grads) {
  for (size_t li = 0; li < source.layers.size(); ++li)
    if (const auto* fc = std::get_if<FcLayer<T>>(&source.layers[li]))
      if (!grads[li].empty())
        grads[li][0] = grads[li][0].reshaped(fc->weights.shape());
  return grads;
}

// ---------------------------------------------------------------------------
// MIL head and bag losses
// ---------------------------------------------------------------------------

template <typename T>
struct MilMax {
  std::vector<T> scores;  // per class
  std::vector<int> winners;  // row-major map position per class
  int map_h = 0, map_w = 0;
};

// Per-class global max over unmasked score-map positions; ties resolve to
// the smallest row-major index. Gradient flows only to the winners.
template <typename T>
MilMax<T> mil_max_head(const Tensor<T>& score_maps, const std::vector<uint8_t>& mask) {
  if (score_maps.rank() != 3) throw Error("patchwork", "dim", "score maps must be C x H x W");
  const int c = score_maps.dim(0);
  const int n = score_maps.dim(1) * score_maps.dim(2);
  if (static_cast<int>(mask.size()) != n)
    throw Error("patchwork", "dim", "mask length does not match score map");
  MilMax<T> out;
  out.map_h = score_maps.dim(1);
  out.map_w = score_maps.dim(2);
  out.scores.assign(static_cast<size_t>(c), T(0));
  out.winners.assign(static_cast<size_t>(c), -1);
  for (int k = 0; k < c; ++k) {
    T best = T(0);
    int arg = -1;
    for (int i = 0; i < n; ++i) {
      if (!mask[static_cast<size_t>(i)]) continue;
      const T v = score_maps[static_cast<size_t>(k) * n + i];
      if (arg < 0 || v > best) {
        best = v;
        arg = i;
      }
    }
    if (arg < 0) throw Error("patchwork", "mask", "all score positions masked");
    out.scores[static_cast<size_t>(k)] = best;
    out.winners[static_cast<size_t>(k)] = arg;
  }
  return out;
}

template <typename T>
Tensor<T> mil_max_backward(const MilMax<T>& mm, const std::vector<T>& grad_scores) {
  Tensor<T> g(Shape{static_cast<int>(mm.scores.size()), mm.map_h, mm.map_w});
  const int n = mm.map_h * mm.map_w;
  for (size_t k = 0; k < mm.scores.size(); ++k)
    g[static_cast<int64_t>(k) * n + mm.winners[k]] = grad_scores[k];
  return g;
}

enum class BagLossMode { Sum, Average, Mil };

inline BagLossMode bag_mode_of(TrainConfig::LossMode m) {
  switch (m) {
    case TrainConfig::LossMode::Sum: return BagLossMode::Sum;
    case TrainConfig::LossMode::Average: return BagLossMode::Average;
    case TrainConfig::LossMode::Mil: return BagLossMode::Mil;
    default: throw Error("patchwork", "config", "single-crop mode has no bag loss");
  }
}

// Bag-level loss over K instance score vectors (K x classes, pre-softmax).
//   sum:     sum_k xent(y, s_k)          - every instance carries weight 1
//   average: xent(y, mean_k s_k)         - weight 1/K through the mean
//   mil:     xent(y, per-class max_k s_k) - only each class's argmax instance
template <typename T>
std::pair<T, Tensor<T>> bag_loss(const Tensor<T>& scores, int label, BagLossMode mode) {
  if (scores.rank() != 2 || scores.dim(0) < 1)
    throw Error("patchwork", "bag", "bag must hold at least one instance");
  const int k = scores.dim(0), c = scores.dim(1);
  if (label < 0 || label >= c) throw Error("patchwork", "bag", "label out of range");
  Tensor<T> grad(scores.shape());
  T loss = T(0);
  switch (mode) {
    case BagLossMode::Sum: {
      for (int i = 0; i < k; ++i) {
        Tensor<T> row(Shape{c});
        for (int j = 0; j < c; ++j) row[j] = scores.at2(i, j);
        auto [l, g] = softmax_xent(row, label);
        loss += l;
        for (int j = 0; j < c; ++j) grad.at2(i, j) = g[j];
      }
      break;
    }
    case BagLossMode::Average: {
      Tensor<T> mean(Shape{c});
      for (int j = 0; j < c; ++j) {
        T s = T(0);
        for (int i = 0; i < k; ++i) s += scores.at2(i, j);
        mean[j] = s / T(k);
      }
      auto [l, g] = softmax_xent(mean, label);
      loss = l;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < c; ++j) grad.at2(i, j) = g[j] / T(k);
      break;
    }
    case BagLossMode::Mil: {
      Tensor<T> mx(Shape{c});
      std::vector<int> arg(static_cast<size_t>(c), 0);
      for (int j = 0; j < c; ++j) {
        T best = scores.at2(0, j);
        int a = 0;
        for (int i = 1; i < k; ++i)
          if (scores.at2(i, j) > best) {
            best = scores.at2(i, j);
            a = i;
          }
        mx[j] = best;
        arg[static_cast<size_t>(j)] = a;
      }
      auto [l, g] = softmax_xent(mx, label);
      loss = l;
      for (int j = 0; j < c; ++j) grad.at2(arg[static_cast<size_t>(j)], j) = g[j];
      break;
    }
  }
  return {loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Dense scoring over a patchwork and MIL training
// ---------------------------------------------------------------------------

// Candidate crop descriptor: dense score-map position plus its level and
// level coordinates (the X_i^k instances of a training image).
struct Instance {
  int map_index;  // row-major position in the dense score map
  int level;
  int level_x, level_y;  // crop origin inside the level
};

template <typename T>
struct InstanceBag {
  std::vector<Instance> instances;
  std::vector<uint8_t> mask;  // per dense-map position
  int map_h = 0, map_w = 0;
  int label = -1;
};

// Marks dense positions whose receptive field (the crop) lies entirely
// inside one placement; everything else is gutter-contaminated and masked.
template <typename T>
InstanceBag<T> patchwork_instances(const Patchwork<T>& pw, int map_h, int map_w, int stride,
                                   int crop) {
  InstanceBag<T> bag;
  bag.map_h = map_h;
  bag.map_w = map_w;
  bag.mask.assign(static_cast<size_t>(map_h) * map_w, 0);
  for (int my = 0; my < map_h; ++my)
    for (int mx = 0; mx < map_w; ++mx) {
      const int cx = mx * stride, cy = my * stride;
      for (const auto& p : pw.placements)
        if (cx >= p.x && cy >= p.y && cx + crop <= p.x + p.w && cy + crop <= p.y + p.h) {
          const int idx = my * map_w + mx;
          bag.mask[static_cast<size_t>(idx)] = 1;
          bag.instances.push_back({idx, p.level, cx - p.x, cy - p.y});
          break;
        }
    }
  return bag;
}

template <typename T>
struct PatchworkScore {
  Trace<T> trace;        // converted-net forward over the canvas
  InstanceBag<T> bag;
  int stride = 1;
};

template <typename T>
PatchworkScore<T> score_patchwork(const Network<T>& conv_net, const Patchwork<T>& pw,
                                  DropoutMode mode, uint64_t seed = 0, int64_t step = 0) {
  PatchworkScore<T> ps;
  ps.trace = net_forward(conv_net, pw.canvas, mode, seed, step);
  ps.stride = net_stride(conv_net);
  const auto& logits = ps.trace.logits;
  ps.bag = patchwork_instances(pw, logits.dim(1), logits.dim(2), ps.stride,
                               conv_net.input_geometry[1]);
  return ps;
}

template <typename T>
Tensor<T> gather_instance_scores(const Tensor<T>& maps, const InstanceBag<T>& bag) {
  const int c = maps.dim(0);
  const int n = maps.dim(1) * maps.dim(2);
  Tensor<T> scores(Shape{static_cast<int>(bag.instances.size()), c});
  for (size_t i = 0; i < bag.instances.size(); ++i)
    for (int j = 0; j < c; ++j)
      scores.at2(static_cast<int>(i), j) = maps[static_cast<int64_t>(j) * n + bag.instances[i].map_index];
  return scores;
}

struct PatchworkConfig {
  std::vector<double> scales{1.0, 0.75, 0.5};
  int gutter = 16;
};

// MIL-style prediction: per-class max of the dense pre-softmax maps over
// unmasked positions, then softmax.
template <typename T>
std::vector<T> predict_patchwork(const Network<T>& net, const Tensor<T>& image,
                                 const PatchworkConfig& pcfg) {
  Network<T> conv = convolutionalize_fc(net);
  const int crop = net.input_geometry[1];
  auto pyr = build_pyramid(image, pcfg.scales, crop);
  auto pw = pack_patchwork(pyr, pcfg.gutter, std::vector<T>{}, net_stride(net));
  auto ps = score_patchwork(conv, pw, DropoutMode::Eval);
  auto mm = mil_max_head(ps.trace.logits, ps.bag.mask);
  Tensor<T> mx(Shape{static_cast<int>(mm.scores.size())});
  for (size_t i = 0; i < mm.scores.size(); ++i) mx[static_cast<int64_t>(i)] = mm.scores[i];
  return softmax(mx);
}

template <typename T>
double eval_error_patchwork(const Network<T>& net, const LabeledSet<T>& data,
                            const PatchworkConfig& pcfg) {
  int wrong = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    auto p = predict_patchwork(net, data.images[i], pcfg);
    int arg = 0;
    for (size_t c = 1; c < p.size(); ++c)
      if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
    if (arg != data.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / std::max<size_t>(1, data.size());
}

// Trains with one of the bag losses over all valid patchwork positions of
// each image (global position/scale as the latent transformation set).
template <typename T>
TrainResult train_bag(Network<T>& net, Velocity<T>& vel, const LabeledSet<T>& train,
                      const LabeledSet<T>& val, const TrainConfig& cfg,
                      const PatchworkConfig& pcfg,
                      const std::function<void(const EpochStats&)>& on_epoch = nullptr) {
  cfg.validate(net);
  if (cfg.loss_mode == TrainConfig::LossMode::Single)
    throw Error("patchwork", "config", "train_bag needs a bag loss mode (sum|average|mil)");
  const BagLossMode mode = bag_mode_of(cfg.loss_mode);
  const int crop = net.input_geometry[1];
  const int stride = net_stride(net);
  TrainResult result;
  std::vector<double> val_history;
  int64_t step = 0;

  // Pyramids and packings depend only on image geometry; cache per image.
  std::vector<Patchwork<T>> packed;
  packed.reserve(train.size());
  for (const auto& img : train.images)
    packed.push_back(
        pack_patchwork(build_pyramid(img, pcfg.scales, crop), pcfg.gutter, std::vector<T>{}, stride));

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto rng = substream(cfg.seed, "data", static_cast<uint64_t>(epoch));
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_schedule(val_history, cfg);
    double loss_sum = 0;

    size_t pos = 0;
    while (pos < order.size()) {
      const size_t bsz = std::min<size_t>(static_cast<size_t>(cfg.batch), order.size() - pos);
      Grads<T> acc = zero_grads(net);
      Network<T> conv = convolutionalize_fc(net);
      for (size_t b = 0; b < bsz; ++b) {
        const auto& pw = packed[order[pos + b]];
        auto ps = score_patchwork(conv, pw, DropoutMode::Train, cfg.seed, step);
        auto scores = gather_instance_scores(ps.trace.logits, ps.bag);
        auto [loss, gscores] = bag_loss(scores, train.labels[order[pos + b]], mode);
        loss_sum += loss;
        Tensor<T> gmaps(ps.trace.logits.shape());
        const int n = gmaps.dim(1) * gmaps.dim(2);
        for (size_t i = 0; i < ps.bag.instances.size(); ++i)
          for (int j = 0; j < gmaps.dim(0); ++j)
            gmaps[static_cast<int64_t>(j) * n + ps.bag.instances[i].map_index] =
                gscores.at2(static_cast<int>(i), j);
        auto [g, gi] = net_backward(conv, ps.trace, gmaps);
        accumulate_grads(acc, fold_conv_grads(net, std::move(g)));
      }
      scale_grads(acc, T(1) / T(bsz));
      sgd_step(net, acc, vel, cfg, lr);
      ++step;
      pos += bsz;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train.size());
    st.val_error = val.size() ? eval_error_patchwork(net, val, pcfg) : 0.0;
    st.lr = lr;
    val_history.push_back(st.val_error);
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Localization from the MIL argmax
// ---------------------------------------------------------------------------

struct BoxPrior {
  double w_frac = 1.0;  // fractions of the original image extent
  double h_frac = 1.0;
};

struct LocalizedBox {
  int x = 0, y = 0, w = 0, h = 0;
};

// Fixed mapping of the argmax patchwork position: the winning crop's
// center maps back through (level, scale) to image coordinates and a
// prior-sized box is emitted around it.
template <typename T>
LocalizedBox localize(const Patchwork<T>& pw, int canvas_x, int canvas_y, int crop,
                      const BoxPrior& prior, int image_w, int image_h) {
  CanvasPos p = map_canvas_to_image(pw, canvas_x, canvas_y);
  if (p.level == kGutterSentinel)
    throw Error("patchwork", "localize", "argmax position maps to gutter");
  const double cx = (p.x + crop / 2.0) / p.scale;
  const double cy = (p.y + crop / 2.0) / p.scale;
  const double bw = prior.w_frac * image_w;
  const double bh = prior.h_frac * image_h;
  LocalizedBox box;
  box.x = static_cast<int>(std::lround(cx - bw / 2));
  box.y = static_cast<int>(std::lround(cy - bh / 2));
  box.w = static_cast<int>(std::lround(bw));
  box.h = static_cast<int>(std::lround(bh));
  // clip to image bounds
  if (box.x < 0) {
    box.w += box.x;
    box.x = 0;
  }
  if (box.y < 0) {
    box.h += box.y;
    box.y = 0;
  }
  box.w = std::max(1, std::min(box.w, image_w - box.x));
  box.h = std::max(1, std::min(box.h, image_h - box.y));
  return box;
}

}  // namespace epinet
