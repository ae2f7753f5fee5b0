#pragma once

#include "epinet/detect.hpp"
#include "epinet/patchwork.hpp"
#include "epinet/train.hpp"

namespace epinet {

template <typename T>
inline T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

// loss = -[y log s + (1-y) log(1-s)], s = sigmoid(z); dloss/dz = s - y.
template <typename T>
std::pair<T, T> logistic_loss(T logit, T target) {
  const T s = sigmoid(logit);
  const T eps = std::numeric_limits<T>::min();
  const T loss = -(target * std::log(std::max(s, eps)) +
                   (T(1) - target) * std::log(std::max(T(1) - s, eps)));
  return {loss, s - target};
}

template <typename T>
Tensor<T> crop_resize(const Tensor<T>& image, const Rect& r, int out_h, int out_w) {
  Tensor<T> region = crop(image, r.y, r.x, r.h, r.w);
  if (r.h == out_h && r.w == out_w) return region;
  return bilinear_resize(region, out_h, out_w);
}

// Sliding-window detector: a convolutionalized backbone whose final layer
// emits one logit per class, trained with per-class binary logistic
// losses on mined windows and scored densely over per-aspect patchworks.
template <typename T>
struct Detector {
  Network<T> net;  // convolutionalized; final layer has relu=false
  SearchGrid grid;
  double nms_threshold = 0.3;
  double score_threshold = 0.05;  // sigmoid space
  int max_per_class = 100;        // per image, before NMS
  int gutter = 8;
};

template <typename T>
struct DetectImage {
  Tensor<T> tensor;              // CHW, mean-normalized
  std::vector<GroundTruth> gts;  // image_id fields set by the caller
};

// ---------------------------------------------------------------------------
// Per-aspect patchworks
// ---------------------------------------------------------------------------

template <typename T>
struct AspectPatchwork {
  int aspect_idx = 0;
  double aspect = 1.0;
  Patchwork<T> pw;
  std::vector<int> scale_indices;     // pyramid level -> index into grid.scales
  std::vector<std::string> warnings;  // skipped degenerate levels
};

// For each aspect, rescales the image vertically by 1/aspect (so an
// aspect-elongated region becomes square), builds the scale pyramid and
// packs it. Levels smaller than the crop are skipped with a warning.
template <typename T>
std::vector<AspectPatchwork<T>> build_aspect_patchworks(const Tensor<T>& image,
                                                        const SearchGrid& grid, int crop,
                                                        int gutter, int stride_multiple) {
  if (image.rank() != 3) throw Error("detect", "dim", "image must be CHW");
  std::vector<AspectPatchwork<T>> out;
  const int img_h = image.dim(1), img_w = image.dim(2);
  for (size_t ai = 0; ai < grid.aspects.size(); ++ai) {
    AspectPatchwork<T> ap;
    ap.aspect_idx = static_cast<int>(ai);
    ap.aspect = grid.aspects[ai];
    const int warped_h = static_cast<int>(std::lround(img_h / ap.aspect));
    if (warped_h < 1) {
      ap.warnings.push_back("degenerate warped height");
      out.push_back(std::move(ap));
      continue;
    }
    Tensor<T> warped =
        warped_h == img_h ? image : bilinear_resize(image, warped_h, img_w);
    std::vector<double> usable;
    for (size_t si = 0; si < grid.scales.size(); ++si) {
      const auto [lw, lh] = aspect_level_dims(img_w, img_h, ap.aspect, grid.scales[si]);
      if (lw >= crop && lh >= crop) {
        usable.push_back(grid.scales[si]);
        ap.scale_indices.push_back(static_cast<int>(si));
      } else {
        ap.warnings.push_back("scale " + std::to_string(grid.scales[si]) +
                              " level smaller than crop, skipped");
      }
    }
    if (usable.empty()) {
      out.push_back(std::move(ap));
      continue;
    }
    Pyramid<T> pyr = build_pyramid(warped, usable, crop);
    ap.pw = pack_patchwork(pyr, gutter, std::vector<T>{}, stride_multiple);
    out.push_back(std::move(ap));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense detection
// ---------------------------------------------------------------------------

template <typename T>
std::vector<DetectionBox> detect_image(const Detector<T>& det, const Tensor<T>& image,
                                       int image_id, bool square_only = false,
                                       std::vector<std::string>* warnings = nullptr) {
  const int crop = det.net.input_geometry[1];
  const int stride = net_stride(det.net);
  SearchGrid grid = det.grid;
  if (square_only) {
    grid.aspects.assign(1, 1.0);
  }
  const int img_h = image.dim(1), img_w = image.dim(2);
  std::vector<DetectionBox> all;
  auto aps = build_aspect_patchworks(image, grid, crop, det.gutter, stride);
  for (auto& ap : aps) {
    if (warnings)
      warnings->insert(warnings->end(), ap.warnings.begin(), ap.warnings.end());
    if (ap.pw.placements.empty()) continue;
    auto ps = score_patchwork(det.net, ap.pw, DropoutMode::Eval);
    const auto& logits = ps.trace.logits;
    const int classes = logits.dim(0);
    const int n = logits.dim(1) * logits.dim(2);
    for (const auto& inst : ps.bag.instances) {
      const double scale = ap.pw.scales[static_cast<size_t>(inst.level)];
      const int scale_idx = ap.scale_indices[static_cast<size_t>(inst.level)];
      for (int c = 0; c < classes; ++c) {
        const double s =
            static_cast<double>(sigmoid(logits[static_cast<int64_t>(c) * n + inst.map_index]));
        if (s < det.score_threshold) continue;
        DetectionBox d;
        d.image_id = image_id;
        d.cls = c;
        d.score = s;
        d.box = window_box(img_w, img_h, ap.aspect, scale, inst.level_x, inst.level_y, crop);
        d.aspect_idx = ap.aspect_idx;
        d.scale_idx = scale_idx;
        all.push_back(d);
      }
    }
  }
  // top-N per class, then per-class NMS
  std::vector<DetectionBox> kept;
  std::map<int, std::vector<DetectionBox>> by_class;
  for (auto& d : all) by_class[d.cls].push_back(d);
  for (auto& [cls, boxes] : by_class) {
    std::sort(boxes.begin(), boxes.end(), [](const DetectionBox& a, const DetectionBox& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.box.x != b.box.x) return a.box.x < b.box.x;
      return a.box.y < b.box.y;
    });
    if (static_cast<int>(boxes.size()) > det.max_per_class) boxes.resize(det.max_per_class);
    auto pruned = nms(std::move(boxes), det.nms_threshold);
    kept.insert(kept.end(), pruned.begin(), pruned.end());
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Detector fine-tuning on mined samples
// ---------------------------------------------------------------------------

struct DetectorTrainConfig {
  int epochs = 3;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch = 64;
  uint64_t seed = 1;
  int negatives_per_positive = 3;  // negatives drawn per positive per epoch
};

struct TrainCrop {
  int image_index = 0;
  Rect box;
  int cls = -1;  // -1: background, trains every class head toward 0
  double target = 0;
};

template <typename T>
struct MinedDataset {
  std::vector<TrainCrop> positives;
  std::vector<TrainCrop> negatives;  // localization + background
  int unmatched_gt = 0;
};

template <typename T>
MinedDataset<T> mine_dataset(const std::vector<DetectImage<T>>& images, const SearchGrid& grid,
                             int crop, int stride, std::mt19937_64& rng) {
  MinedDataset<T> out;
  for (size_t ii = 0; ii < images.size(); ++ii) {
    const auto& img = images[ii];
    auto windows = enumerate_windows(img.tensor.dim(2), img.tensor.dim(1), grid, crop, stride);
    auto mined = mine_training_samples(img.gts, windows, rng);
    out.unmatched_gt += static_cast<int>(mined.unmatched_gt.size());
    for (const auto& s : mined.positives)
      out.positives.push_back({static_cast<int>(ii), s.box, s.cls, 1.0});
    for (const auto& s : mined.loc_negatives)
      out.negatives.push_back({static_cast<int>(ii), s.box, s.cls, 0.0});
    for (const auto& s : mined.bg_negatives)
      out.negatives.push_back({static_cast<int>(ii), s.box, -1, 0.0});
  }
  return out;
}

template <typename T>
double train_detector(Detector<T>& det, const std::vector<DetectImage<T>>& images,
                      const MinedDataset<T>& mined, const DetectorTrainConfig& dcfg) {
  TrainConfig cfg;
  cfg.lr = dcfg.lr;
  cfg.momentum = dcfg.momentum;
  cfg.weight_decay = dcfg.weight_decay;
  cfg.seed = dcfg.seed;
  cfg.decay_exempt = normalized_layer_indices(det.net);
  Velocity<T> vel = zero_velocity(det.net);
  const int ch = det.net.input_geometry[1], cw = det.net.input_geometry[2];
  const int classes = det.net.classes;
  int64_t step = 0;
  double last_epoch_loss = 0;

  for (int epoch = 0; epoch < dcfg.epochs; ++epoch) {
    auto rng = substream(dcfg.seed, "mining", static_cast<uint64_t>(epoch) + 1000);
    std::vector<TrainCrop> batch_pool = mined.positives;
    std::vector<TrainCrop> negs = mined.negatives;
    std::shuffle(negs.begin(), negs.end(), rng);
    const size_t keep =
        std::min(negs.size(), mined.positives.size() * static_cast<size_t>(dcfg.negatives_per_positive));
    negs.resize(keep);
    batch_pool.insert(batch_pool.end(), negs.begin(), negs.end());
    std::shuffle(batch_pool.begin(), batch_pool.end(), rng);

    double loss_sum = 0;
    size_t pos = 0;
    while (pos < batch_pool.size()) {
      const size_t bsz = std::min<size_t>(static_cast<size_t>(dcfg.batch), batch_pool.size() - pos);
      Grads<T> acc = zero_grads(det.net);
      for (size_t b = 0; b < bsz; ++b) {
        const auto& s = batch_pool[pos + b];
        Tensor<T> view = crop_resize(images[static_cast<size_t>(s.image_index)].tensor, s.box, ch, cw);
        auto tr = net_forward(det.net, view, DropoutMode::Train, dcfg.seed, step);
        const auto& logits = tr.logits;  // classes x 1 x 1
        Tensor<T> gmap(logits.shape());
        if (s.cls >= 0) {
          auto [l, dz] = logistic_loss(logits[s.cls], T(s.target));
          loss_sum += l;
          gmap[s.cls] = dz;
        } else {
          for (int c = 0; c < classes; ++c) {
            auto [l, dz] = logistic_loss(logits[c], T(0));
            loss_sum += l / classes;
            gmap[c] = dz / T(classes);
          }
        }
        auto [g, gi] = net_backward(det.net, tr, gmap);
        accumulate_grads(acc, g);
      }
      scale_grads(acc, T(1) / T(bsz));
      sgd_step(det.net, acc, vel, cfg, dcfg.lr);
      ++step;
      pos += bsz;
    }
    last_epoch_loss = loss_sum / std::max<size_t>(1, batch_pool.size());
  }
  return last_epoch_loss;
}

}  // namespace epinet
