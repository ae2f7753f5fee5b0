#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace epinet {

// Integer pixel rectangle: covers [x, x+w) x [y, y+h), origin top-left.
struct Rect {
  int x = 0, y = 0, w = 0, h = 0;

  int64_t area() const { return static_cast<int64_t>(w) * h; }
  bool operator==(const Rect&) const = default;
};

// Intersection-over-union with exact integer areas and one final division.
double iou(const Rect& a, const Rect& b);

Rect clip_rect(const Rect& r, int image_w, int image_h);

struct GroundTruth {
  int image_id = 0;
  int cls = 0;
  Rect box;
};

struct DetectionBox {
  int image_id = 0;
  int cls = 0;
  double score = 0;
  Rect box;
  int aspect_idx = -1;  // source of the box in the search grid
  int scale_idx = -1;
};

// Scale/aspect search grid: 11 scales geometric from 2.0 down to 1/6 and
// 5 aspects geometric over [1/3, 3], symmetric around 1 in log space.
struct SearchGrid {
  std::vector<double> scales;
  std::vector<double> aspects;
  int stride_px = 8;  // reference window stride; toy nets use their native stride
};

SearchGrid default_search_grid();

// Greedy non-maximum suppression: repeatedly keep the highest-scoring box
// and discard boxes overlapping it with IoU > threshold. Ordering ties
// break on (score, x, y, w, h, class), so output is independent of input
// order.
std::vector<DetectionBox> nms(std::vector<DetectionBox> boxes, double threshold = 0.3);

struct ApResult {
  std::map<int, double> ap_per_class;
  double mean_ap = 0;
  std::vector<int> classes_without_gt;  // excluded from the mean, with warning
};

// VOC-style evaluation: detections sorted by descending score greedily
// match the unmatched ground truth with highest IoU >= threshold;
// precision-recall integrated by the every-point method.
ApResult average_precision(const std::vector<DetectionBox>& detections,
                           const std::vector<GroundTruth>& gts, double iou_threshold = 0.5);

// One sliding window of the joint (aspect, scale, position) search.
struct Window {
  int aspect_idx = 0;
  int scale_idx = 0;
  int level_x = 0, level_y = 0;  // crop origin in level coordinates
  Rect box;                      // image-space rectangle (clipped)
};

// Pyramid level dimensions for a given aspect/scale: the image is first
// rescaled vertically by 1/aspect, then by the pyramid factor.
std::pair<int, int> aspect_level_dims(int image_w, int image_h, double aspect, double scale);

// Image-space box of the crop at (level_x, level_y) in that level.
Rect window_box(int image_w, int image_h, double aspect, double scale, int level_x, int level_y,
                int crop);

// Every window the sliding-window detector visits; levels smaller than the
// crop are skipped (recorded in `skipped_levels` when provided).
std::vector<Window> enumerate_windows(int image_w, int image_h, const SearchGrid& grid, int crop,
                                      int stride, std::vector<std::string>* skipped_levels = nullptr);

enum class SampleKind { Positive, LocalizationNegative, BackgroundNegative };

struct MinedSample {
  int gt_index = -1;  // index into the ground-truth list (-1 for background)
  int cls = -1;
  int window_index = -1;
  Rect box;
  double iou_value = 0;
  double tier = 0;  // IoU tier the sample was admitted under
  SampleKind kind = SampleKind::Positive;
};

struct MiningResult {
  std::vector<MinedSample> positives;
  std::vector<MinedSample> loc_negatives;
  std::vector<MinedSample> bg_negatives;
  std::vector<int> unmatched_gt;  // no window reached IoU 0.5
};

// Per ground-truth box: sample up to 30 windows above IoU 0.7, relaxing
// the tier to 0.6 then 0.5 when fewer exist; per positive box, sample up
// to 200 windows with IoU in (0.2, 0.5) as localization negatives, plus
// background windows (IoU < 0.2 against every box) at a 1:1 ratio.
// Sampling is without replacement from the given rng.
MiningResult mine_training_samples(const std::vector<GroundTruth>& gts,
                                   const std::vector<Window>& windows, std::mt19937_64& rng,
                                   int positives_per_gt = 30, int negatives_per_gt = 200);

// Area-preserving reshape of a box to aspect = h/w about its center.
Rect reshape_aspect(const Rect& box, double aspect);

// Grid aspect maximizing IoU between the reshaped box and the best
// matching ground truth; identity aspect when there is none. Analysis
// only, never used at inference.
double oracle_aspect(const Rect& square_box, const std::vector<GroundTruth>& gts,
                     const std::vector<double>& aspects);

}  // namespace epinet
