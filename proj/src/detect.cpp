#include "epinet/detect.hpp"

#include <algorithm>
#include <cmath>

#include "epinet/error.hpp"

namespace epinet {

double iou(const Rect& a, const Rect& b) {
  const int ix0 = std::max(a.x, b.x);
  const int iy0 = std::max(a.y, b.y);
  const int ix1 = std::min(a.x + a.w, b.x + b.w);
  const int iy1 = std::min(a.y + a.h, b.y + b.h);
  const int64_t iw = std::max(0, ix1 - ix0);
  const int64_t ih = std::max(0, iy1 - iy0);
  const int64_t inter = iw * ih;
  const int64_t uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Rect clip_rect(const Rect& r, int image_w, int image_h) {
  Rect c = r;
  if (c.x < 0) {
    c.w += c.x;
    c.x = 0;
  }
  if (c.y < 0) {
    c.h += c.y;
    c.y = 0;
  }
  c.w = std::min(c.w, image_w - c.x);
  c.h = std::min(c.h, image_h - c.y);
  if (c.w < 1) c.w = 1;
  if (c.h < 1) c.h = 1;
  return c;
}

SearchGrid default_search_grid() {
  SearchGrid g;
  const double lo = 1.0 / 6.0, hi = 2.0;
  const int n_scales = 11;
  for (int i = 0; i < n_scales; ++i)
    g.scales.push_back(hi * std::pow(lo / hi, static_cast<double>(i) / (n_scales - 1)));
  for (int i = 0; i < 5; ++i) g.aspects.push_back(std::pow(3.0, (i - 2) / 2.0));
  return g;
}

namespace {

// Strict total order: score desc, then geometry and class ascending, so
// NMS and AP are independent of input ordering.
bool det_order(const DetectionBox& a, const DetectionBox& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x != b.box.x) return a.box.x < b.box.x;
  if (a.box.y != b.box.y) return a.box.y < b.box.y;
  if (a.box.w != b.box.w) return a.box.w < b.box.w;
  if (a.box.h != b.box.h) return a.box.h < b.box.h;
  if (a.cls != b.cls) return a.cls < b.cls;
  return a.image_id < b.image_id;
}

}  // namespace

std::vector<DetectionBox> nms(std::vector<DetectionBox> boxes, double threshold) {
  std::sort(boxes.begin(), boxes.end(), det_order);
  std::vector<DetectionBox> kept;
  std::vector<bool> dead(boxes.size(), false);
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (dead[i]) continue;
    kept.push_back(boxes[i]);
    for (size_t j = i + 1; j < boxes.size(); ++j)
      if (!dead[j] && iou(boxes[i].box, boxes[j].box) > threshold) dead[j] = true;
  }
  return kept;
}

ApResult average_precision(const std::vector<DetectionBox>& detections,
                           const std::vector<GroundTruth>& gts, double iou_threshold) {
  ApResult res;
  std::map<int, int> npos;
  for (const auto& gt : gts) ++npos[gt.cls];
  std::map<int, bool> has_dets;
  for (const auto& d : detections) has_dets[d.cls] = true;

  std::vector<int> classes;
  for (const auto& [cls, n] : npos) classes.push_back(cls);
  for (const auto& [cls, _] : has_dets)
    if (!npos.count(cls)) res.classes_without_gt.push_back(cls);

  double ap_sum = 0;
  for (int cls : classes) {
    std::vector<DetectionBox> dets;
    for (const auto& d : detections)
      if (d.cls == cls) dets.push_back(d);
    std::sort(dets.begin(), dets.end(), det_order);

    std::vector<char> gt_matched(gts.size(), 0);
    std::vector<int> tp(dets.size(), 0);
    for (size_t di = 0; di < dets.size(); ++di) {
      double best = 0;
      int best_gt = -1;
      for (size_t gi = 0; gi < gts.size(); ++gi) {
        if (gts[gi].cls != cls || gts[gi].image_id != dets[di].image_id || gt_matched[gi])
          continue;
        const double v = iou(dets[di].box, gts[gi].box);
        if (v >= iou_threshold && v > best) {
          best = v;
          best_gt = static_cast<int>(gi);
        }
      }
      if (best_gt >= 0) {
        tp[di] = 1;
        gt_matched[static_cast<size_t>(best_gt)] = 1;
      }
    }

    // precision-recall staircase, integrated with the every-point method
    const int n = npos[cls];
    std::vector<double> prec(dets.size()), rec(dets.size());
    int tp_cum = 0;
    for (size_t di = 0; di < dets.size(); ++di) {
      tp_cum += tp[di];
      prec[di] = static_cast<double>(tp_cum) / static_cast<double>(di + 1);
      rec[di] = static_cast<double>(tp_cum) / static_cast<double>(n);
    }
    for (int di = static_cast<int>(dets.size()) - 2; di >= 0; --di)
      prec[static_cast<size_t>(di)] =
          std::max(prec[static_cast<size_t>(di)], prec[static_cast<size_t>(di) + 1]);
    double ap = 0, prev_rec = 0;
    for (size_t di = 0; di < dets.size(); ++di) {
      ap += (rec[di] - prev_rec) * prec[di];
      prev_rec = rec[di];
    }
    res.ap_per_class[cls] = ap;
    ap_sum += ap;
  }
  res.mean_ap = classes.empty() ? 0.0 : ap_sum / static_cast<double>(classes.size());
  return res;
}

std::pair<int, int> aspect_level_dims(int image_w, int image_h, double aspect, double scale) {
  const int warped_h = static_cast<int>(std::lround(image_h / aspect));
  return {static_cast<int>(std::lround(image_w * scale)),
          static_cast<int>(std::lround(warped_h * scale))};
}

Rect window_box(int image_w, int image_h, double aspect, double scale, int level_x, int level_y,
                int crop) {
  const double x = level_x / scale;
  const double y = (level_y / scale) * aspect;
  const double w = crop / scale;
  const double h = (crop / scale) * aspect;
  Rect r{static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)),
         static_cast<int>(std::lround(w)), static_cast<int>(std::lround(h))};
  return clip_rect(r, image_w, image_h);
}

std::vector<Window> enumerate_windows(int image_w, int image_h, const SearchGrid& grid, int crop,
                                      int stride, std::vector<std::string>* skipped_levels) {
  std::vector<Window> out;
  for (size_t ai = 0; ai < grid.aspects.size(); ++ai)
    for (size_t si = 0; si < grid.scales.size(); ++si) {
      const auto [lw, lh] =
          aspect_level_dims(image_w, image_h, grid.aspects[ai], grid.scales[si]);
      if (lw < crop || lh < crop) {
        if (skipped_levels)
          skipped_levels->push_back("aspect=" + std::to_string(grid.aspects[ai]) +
                                    " scale=" + std::to_string(grid.scales[si]) + " level " +
                                    std::to_string(lw) + "x" + std::to_string(lh) +
                                    " smaller than crop");
        continue;
      }
      for (int ly = 0; ly + crop <= lh; ly += stride)
        for (int lx = 0; lx + crop <= lw; lx += stride) {
          Window win;
          win.aspect_idx = static_cast<int>(ai);
          win.scale_idx = static_cast<int>(si);
          win.level_x = lx;
          win.level_y = ly;
          win.box = window_box(image_w, image_h, grid.aspects[ai], grid.scales[si], lx, ly, crop);
          out.push_back(win);
        }
    }
  return out;
}

namespace {

template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, size_t count,
                                          std::mt19937_64& rng) {
  if (pool.size() <= count) return pool;
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(count);
  return pool;
}

}  // namespace

MiningResult mine_training_samples(const std::vector<GroundTruth>& gts,
                                   const std::vector<Window>& windows, std::mt19937_64& rng,
                                   int positives_per_gt, int negatives_per_gt) {
  MiningResult res;
  // Max IoU of each window against any ground truth (background test) and
  // per-class positive-tier exclusion.
  std::vector<double> max_iou(windows.size(), 0.0);
  std::vector<std::vector<double>> per_gt(gts.size(), std::vector<double>(windows.size()));
  for (size_t gi = 0; gi < gts.size(); ++gi)
    for (size_t wi = 0; wi < windows.size(); ++wi) {
      const double v = iou(windows[wi].box, gts[gi].box);
      per_gt[gi][wi] = v;
      max_iou[wi] = std::max(max_iou[wi], v);
    }

  int total_loc_negs = 0;
  for (size_t gi = 0; gi < gts.size(); ++gi) {
    const double tiers[3] = {0.7, 0.6, 0.5};
    std::vector<int> pool;
    double tier = 0;
    for (double t : tiers) {
      pool.clear();
      for (size_t wi = 0; wi < windows.size(); ++wi)
        if (per_gt[gi][wi] > t) pool.push_back(static_cast<int>(wi));
      tier = t;
      if (static_cast<int>(pool.size()) >= positives_per_gt) break;
      if (t == 0.5 && !pool.empty()) break;
    }
    if (pool.empty()) {
      res.unmatched_gt.push_back(static_cast<int>(gi));
      continue;
    }
    auto picked = sample_without_replacement(pool, static_cast<size_t>(positives_per_gt), rng);
    std::sort(picked.begin(), picked.end());
    for (int wi : picked)
      res.positives.push_back({static_cast<int>(gi), gts[gi].cls, wi,
                               windows[static_cast<size_t>(wi)].box,
                               per_gt[gi][static_cast<size_t>(wi)], tier, SampleKind::Positive});

    // localization negatives: IoU in (0.2, 0.5) against this box, never
    // positive-tier for another box of the same class
    std::vector<int> neg_pool;
    for (size_t wi = 0; wi < windows.size(); ++wi) {
      const double v = per_gt[gi][wi];
      if (v <= 0.2 || v >= 0.5) continue;
      bool poisoned = false;
      for (size_t gj = 0; gj < gts.size(); ++gj)
        if (gj != gi && gts[gj].cls == gts[gi].cls && per_gt[gj][wi] >= 0.5) poisoned = true;
      if (!poisoned) neg_pool.push_back(static_cast<int>(wi));
    }
    auto negs = sample_without_replacement(neg_pool, static_cast<size_t>(negatives_per_gt), rng);
    std::sort(negs.begin(), negs.end());
    for (int wi : negs)
      res.loc_negatives.push_back({static_cast<int>(gi), gts[gi].cls, wi,
                                   windows[static_cast<size_t>(wi)].box,
                                   per_gt[gi][static_cast<size_t>(wi)], 0.5,
                                   SampleKind::LocalizationNegative});
    total_loc_negs += static_cast<int>(negs.size());
  }

  // background windows (below 0.2 against every box) at 1:1 with the
  // localization negatives
  std::vector<int> bg_pool;
  for (size_t wi = 0; wi < windows.size(); ++wi)
    if (max_iou[wi] < 0.2) bg_pool.push_back(static_cast<int>(wi));
  auto bgs = sample_without_replacement(bg_pool, static_cast<size_t>(total_loc_negs), rng);
  std::sort(bgs.begin(), bgs.end());
  for (int wi : bgs)
    res.bg_negatives.push_back({-1, -1, wi, windows[static_cast<size_t>(wi)].box,
                                max_iou[static_cast<size_t>(wi)], 0.2,
                                SampleKind::BackgroundNegative});
  return res;
}

Rect reshape_aspect(const Rect& box, double aspect) {
  const double area = static_cast<double>(box.area());
  const double w = std::sqrt(area / aspect);
  const double h = std::sqrt(area * aspect);
  const double cx = box.x + box.w / 2.0;
  const double cy = box.y + box.h / 2.0;
  Rect r;
  r.w = std::max(1, static_cast<int>(std::lround(w)));
  r.h = std::max(1, static_cast<int>(std::lround(h)));
  r.x = static_cast<int>(std::lround(cx - w / 2));
  r.y = static_cast<int>(std::lround(cy - h / 2));
  return r;
}

double oracle_aspect(const Rect& square_box, const std::vector<GroundTruth>& gts,
                     const std::vector<double>& aspects) {
  if (aspects.empty()) throw Error("detect", "config", "empty aspect grid");
  if (gts.empty()) return 1.0;
  double best_aspect = 1.0, best_iou = -1.0;
  for (double a : aspects) {
    const Rect r = reshape_aspect(square_box, a);
    double v = 0;
    for (const auto& gt : gts) v = std::max(v, iou(r, gt.box));
    if (v > best_iou) {
      best_iou = v;
      best_aspect = a;
    }
  }
  return best_aspect;
}

}  // namespace epinet
