#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epinet/detect.hpp"
#include "epinet/image.hpp"
#include "epinet/train.hpp"

namespace epinet {

struct ClassifySample {
  Image image;
  int label = 0;
  Rect box;  // object bounds, used for localization priors
};

struct DetectSample {
  Image image;
  std::vector<GroundTruth> boxes;  // image_id filled with the sample index
};

struct SynthConfig {
  std::string task = "classify";  // classify | detect
  int classes = 10;
  int image_size = 32;
  int train = 5000;
  int val = 500;
  int test = 1000;
  uint64_t seed = 7;
  std::string palette = "distinct";  // distinct | uniform
  int objects_min = 1;               // detection task
  int objects_max = 3;
};

struct SynthDataset {
  std::string task;
  int classes = 0;
  int image_size = 0;
  uint64_t seed = 0;
  std::array<double, 3> mean{0.5, 0.5, 0.5};  // train-split mean of pixel/255
  std::map<std::string, std::vector<ClassifySample>> classify_splits;
  std::map<std::string, std::vector<DetectSample>> detect_splits;
};

// Deterministic given the seed. Classification renders one of `classes`
// shape/texture classes at random position and scale on a noise
// background; detection renders 1-3 textured rectangles with aspects
// jittered around the search-grid values, emitting exact boxes.
SynthDataset generate_synthetic(const SynthConfig& cfg);

void save_dataset(const SynthDataset& ds, const std::string& dir);
SynthDataset load_dataset(const std::string& dir);

template <typename T>
LabeledSet<T> to_labeled_set(const std::vector<ClassifySample>& samples,
                             const std::array<double, 3>& mean) {
  LabeledSet<T> set;
  const std::array<T, 3> m{static_cast<T>(mean[0]), static_cast<T>(mean[1]),
                           static_cast<T>(mean[2])};
  for (const auto& s : samples) {
    set.images.push_back(image_to_tensor<T>(s.image, m));
    set.labels.push_back(s.label);
  }
  return set;
}

}  // namespace epinet
