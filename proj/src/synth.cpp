#include "epinet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "epinet/config.hpp"
#include "epinet/rng.hpp"

namespace fs = std::filesystem;

namespace epinet {

namespace {

struct Color {
  int r, g, b;
};

const std::array<Color, 10> kPalette = {{{230, 60, 60},
                                         {60, 230, 60},
                                         {70, 70, 235},
                                         {235, 235, 60},
                                         {235, 60, 235},
                                         {60, 235, 235},
                                         {235, 140, 40},
                                         {140, 60, 235},
                                         {245, 245, 245},
                                         {20, 20, 20}}};

uint8_t clamp_u8(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

void fill_noise_background(Image& img, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> base(96, 160);
  std::uniform_int_distribution<int> jitter(-8, 8);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int b = base(rng);
      for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = clamp_u8(b + jitter(rng));
    }
}

// Membership test of pixel offset (dx, dy) from the shape center for each
// of the 10 shape classes (half extent h).
bool shape_member(int cls, int dx, int dy, int h) {
  const int adx = std::abs(dx), ady = std::abs(dy);
  const int t = std::max(2, h / 3);
  switch (cls % 10) {
    case 0:  // disk
      return dx * dx + dy * dy <= static_cast<int>(0.81 * h * h);
    case 1:  // frame
      return std::max(adx, ady) <= h && std::max(adx, ady) > h - t;
    case 2:  // solid square
      return std::max(adx, ady) <= static_cast<int>(0.9 * h);
    case 3:  // plus
      return (adx <= t && ady <= h) || (ady <= t && adx <= h);
    case 4:  // diagonal cross
      return std::max(adx, ady) <= h && std::abs(adx - ady) <= t;
    case 5:  // horizontal stripes
      return std::max(adx, ady) <= h && ((dy + h) / t) % 2 == 0;
    case 6:  // vertical stripes
      return std::max(adx, ady) <= h && ((dx + h) / t) % 2 == 0;
    case 7: {  // checkerboard
      const int c = std::max(3, (2 * h + 2) / 3);
      return std::max(adx, ady) <= h && (((dx + h) / c + (dy + h) / c) % 2 == 0);
    }
    case 8: {  // ring
      const int rr = dx * dx + dy * dy;
      return rr >= static_cast<int>(0.30 * h * h) && rr <= static_cast<int>(0.90 * h * h);
    }
    default: {  // triangle, apex up
      if (dy < -h || dy > static_cast<int>(0.9 * h)) return false;
      return adx <= (dy + h) / 2;
    }
  }
}

Color sample_color(int cls, const std::string& palette, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> jitter(-20, 20);
  Color base = palette == "uniform" ? Color{235, 235, 235}
                                    : kPalette[static_cast<size_t>(cls % 10)];
  return {base.r + jitter(rng), base.g + jitter(rng), base.b + jitter(rng)};
}

ClassifySample render_classify(int cls, int size, const std::string& palette,
                               std::mt19937_64& rng) {
  ClassifySample s;
  s.label = cls;
  s.image = make_image(size, size, 3);
  fill_noise_background(s.image, rng);

  int hmin, hmax;
  if (size <= 40) {
    hmin = size / 4;        // 8 at 32
    hmax = size * 3 / 8;    // 12 at 32
  } else {
    hmin = size / 5;        // 13 at 64
    hmax = size * 5 / 16;   // 20 at 64
  }
  std::uniform_int_distribution<int> hdist(hmin, hmax);
  const int h = hdist(rng);
  std::uniform_int_distribution<int> cxd(h, size - 1 - h);
  const int cx = cxd(rng), cy = cxd(rng);
  const Color col = sample_color(cls, palette, rng);
  std::uniform_int_distribution<int> pj(-10, 10);
  for (int y = cy - h; y <= cy + h; ++y)
    for (int x = cx - h; x <= cx + h; ++x)
      if (shape_member(cls, x - cx, y - cy, h)) {
        const int j = pj(rng);
        s.image.at(y, x, 0) = clamp_u8(col.r + j);
        s.image.at(y, x, 1) = clamp_u8(col.g + j);
        s.image.at(y, x, 2) = clamp_u8(col.b + j);
      }
  s.box = clip_rect({cx - h, cy - h, 2 * h + 1, 2 * h + 1}, size, size);
  return s;
}

void draw_detect_object(Image& img, const Rect& r, int cls, const Color& col,
                        std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pj(-10, 10);
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) {
      const bool border = (y - r.y < 2) || (r.y + r.h - 1 - y < 2) || (x - r.x < 2) ||
                          (r.x + r.w - 1 - x < 2);
      bool on = true;
      if (cls == 1 && !border) on = ((y - r.y) / 3) % 2 == 0;  // striped body
      if (!on) continue;
      const int j = pj(rng);
      const int scale = border ? 55 : 0;  // darker border outlines the box
      img.at(y, x, 0) = clamp_u8(col.r - scale + j);
      img.at(y, x, 1) = clamp_u8(col.g - scale + j);
      img.at(y, x, 2) = clamp_u8(col.b - scale + j);
    }
}

DetectSample render_detect(int image_id, const SynthConfig& cfg, const SearchGrid& grid,
                           std::mt19937_64& rng) {
  DetectSample s;
  const int size = cfg.image_size;
  s.image = make_image(size, size, 3);
  fill_noise_background(s.image, rng);
  std::uniform_int_distribution<int> count(cfg.objects_min, cfg.objects_max);
  std::uniform_int_distribution<int> clsd(0, cfg.classes - 1);
  std::uniform_int_distribution<size_t> aspd(0, grid.aspects.size() - 1);
  std::uniform_real_distribution<double> ajit(-0.15, 0.15);
  std::uniform_int_distribution<int> sided(size / 5, size * 7 / 16);
  const int n = count(rng);
  for (int oi = 0; oi < n; ++oi) {
    const int cls = clsd(rng);
    bool placed = false;
    for (int attempt = 0; attempt < 15 && !placed; ++attempt) {
      const double aspect = grid.aspects[aspd(rng)] * std::exp(ajit(rng));
      const int side = sided(rng);
      int w = std::max(8, static_cast<int>(std::lround(side / std::sqrt(aspect))));
      int h = std::max(8, static_cast<int>(std::lround(side * std::sqrt(aspect))));
      w = std::min(w, size - 4);
      h = std::min(h, size - 4);
      std::uniform_int_distribution<int> xd(2, size - 2 - w);
      std::uniform_int_distribution<int> yd(2, size - 2 - h);
      const Rect box{xd(rng), yd(rng), w, h};
      bool clash = false;
      for (const auto& gt : s.boxes)
        if (iou(box, gt.box) > 0.25) clash = true;
      if (clash) continue;
      draw_detect_object(s.image, box, cls, sample_color(cls, cfg.palette, rng), rng);
      s.boxes.push_back({image_id, cls, box});
      placed = true;
    }
  }
  return s;
}

// Balanced labels: a deterministic shuffle of round-robin assignments.
std::vector<int> balanced_labels(int n, int classes, std::mt19937_64& rng) {
  std::vector<int> labels(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

std::array<double, 3> compute_mean(const std::vector<ClassifySample>& samples) {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  if (samples.empty()) return mean;
  double acc[3] = {0, 0, 0};
  int64_t count = 0;
  for (const auto& s : samples) {
    for (int y = 0; y < s.image.height; ++y)
      for (int x = 0; x < s.image.width; ++x)
        for (int c = 0; c < 3; ++c) acc[c] += s.image.at(y, x, c) / 255.0;
    count += static_cast<int64_t>(s.image.height) * s.image.width;
  }
  for (int c = 0; c < 3; ++c) mean[static_cast<size_t>(c)] = acc[c] / static_cast<double>(count);
  return mean;
}

std::array<double, 3> compute_mean_detect(const std::vector<DetectSample>& samples) {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  if (samples.empty()) return mean;
  double acc[3] = {0, 0, 0};
  int64_t count = 0;
  for (const auto& s : samples) {
    for (int y = 0; y < s.image.height; ++y)
      for (int x = 0; x < s.image.width; ++x)
        for (int c = 0; c < 3; ++c) acc[c] += s.image.at(y, x, c) / 255.0;
    count += static_cast<int64_t>(s.image.height) * s.image.width;
  }
  for (int c = 0; c < 3; ++c) mean[static_cast<size_t>(c)] = acc[c] / static_cast<double>(count);
  return mean;
}

}  // namespace

SynthDataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.task != "classify" && cfg.task != "detect")
    throw Error("cli", "config", "task must be classify or detect");
  if (cfg.classes < 1 || cfg.image_size < 16)
    throw Error("cli", "config", "bad class count or image size");
  if (cfg.task == "classify" && cfg.image_size < 24)
    throw Error("cli", "config", "shapes too large for canvas");
  SynthDataset ds;
  ds.task = cfg.task;
  ds.classes = cfg.classes;
  ds.image_size = cfg.image_size;
  ds.seed = cfg.seed;

  const struct {
    const char* name;
    int count;
    uint64_t salt;
  } splits[3] = {{"train", cfg.train, 1}, {"val", cfg.val, 2}, {"test", cfg.test, 3}};

  if (cfg.task == "classify") {
    for (const auto& sp : splits) {
      auto rng = substream(cfg.seed, "data", sp.salt);
      auto labels = balanced_labels(sp.count, cfg.classes, rng);
      std::vector<ClassifySample> samples;
      samples.reserve(static_cast<size_t>(sp.count));
      for (int i = 0; i < sp.count; ++i)
        samples.push_back(render_classify(labels[static_cast<size_t>(i)], cfg.image_size,
                                          cfg.palette, rng));
      ds.classify_splits[sp.name] = std::move(samples);
    }
    ds.mean = compute_mean(ds.classify_splits["train"]);
  } else {
    const SearchGrid grid = default_search_grid();
    for (const auto& sp : splits) {
      auto rng = substream(cfg.seed, "data", sp.salt);
      std::vector<DetectSample> samples;
      samples.reserve(static_cast<size_t>(sp.count));
      for (int i = 0; i < sp.count; ++i) samples.push_back(render_detect(i, cfg, grid, rng));
      ds.detect_splits[sp.name] = std::move(samples);
    }
    ds.mean = compute_mean_detect(ds.detect_splits["train"]);
  }
  return ds;
}

void save_dataset(const SynthDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  RunConfig meta;
  meta.set("data", "task", ds.task);
  meta.set("data", "classes", std::to_string(ds.classes));
  meta.set("data", "image_size", std::to_string(ds.image_size));
  meta.set("data", "seed", std::to_string(ds.seed));
  meta.set("data", "mean_r", std::to_string(ds.mean[0]));
  meta.set("data", "mean_g", std::to_string(ds.mean[1]));
  meta.set("data", "mean_b", std::to_string(ds.mean[2]));
  std::ofstream metaf(dir + "/meta.ini");
  metaf << meta.serialize();
  metaf.close();

  auto img_path = [&](const std::string& split, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%05d.ppm", i);
    return dir + "/" + split + "/" + buf;
  };

  if (ds.task == "classify") {
    for (const auto& [split, samples] : ds.classify_splits) {
      fs::create_directories(dir + "/" + split);
      std::ofstream labels(dir + "/" + split + "_labels.txt");
      std::ofstream boxes(dir + "/" + split + "_boxes.txt");
      for (size_t i = 0; i < samples.size(); ++i) {
        write_pnm(img_path(split, static_cast<int>(i)), samples[i].image);
        labels << i << " " << samples[i].label << "\n";
        boxes << i << " " << samples[i].label << " " << samples[i].box.x << " "
              << samples[i].box.y << " " << samples[i].box.w << " " << samples[i].box.h << "\n";
      }
    }
  } else {
    for (const auto& [split, samples] : ds.detect_splits) {
      fs::create_directories(dir + "/" + split);
      std::ofstream boxes(dir + "/" + split + "_boxes.txt");
      for (size_t i = 0; i < samples.size(); ++i) {
        write_pnm(img_path(split, static_cast<int>(i)), samples[i].image);
        for (const auto& gt : samples[i].boxes)
          boxes << i << " " << gt.cls << " " << gt.box.x << " " << gt.box.y << " " << gt.box.w
                << " " << gt.box.h << "\n";
      }
    }
  }
}

SynthDataset load_dataset(const std::string& dir) {
  RunConfig meta = RunConfig::parse_file(dir + "/meta.ini");
  SynthDataset ds;
  ds.task = meta.get_str("data", "task");
  ds.classes = meta.get_int("data", "classes");
  ds.image_size = meta.get_int("data", "image_size");
  ds.seed = static_cast<uint64_t>(meta.get_int("data", "seed"));
  ds.mean = {meta.get_double("data", "mean_r"), meta.get_double("data", "mean_g"),
             meta.get_double("data", "mean_b")};

  for (const std::string split : {"train", "val", "test"}) {
    const std::string sdir = dir + "/" + split;
    if (!fs::exists(sdir)) continue;
    if (ds.task == "classify") {
      std::ifstream labels(dir + "/" + split + "_labels.txt");
      std::ifstream boxes(dir + "/" + split + "_boxes.txt");
      std::vector<ClassifySample> samples;
      int id, label;
      while (labels >> id >> label) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%05d.ppm", id);
        ClassifySample s;
        s.image = read_pnm(sdir + "/" + buf);
        s.label = label;
        samples.push_back(std::move(s));
      }
      int bid, bcls;
      Rect r;
      size_t i = 0;
      while (boxes >> bid >> bcls >> r.x >> r.y >> r.w >> r.h && i < samples.size())
        samples[i++].box = r;
      ds.classify_splits[split] = std::move(samples);
    } else {
      std::vector<DetectSample> samples;
      std::map<int, std::vector<GroundTruth>> by_image;
      std::ifstream boxes(dir + "/" + split + "_boxes.txt");
      int bid, bcls;
      Rect r;
      int max_id = -1;
      while (boxes >> bid >> bcls >> r.x >> r.y >> r.w >> r.h) {
        by_image[bid].push_back({bid, bcls, r});
        max_id = std::max(max_id, bid);
      }
      // count images on disk (there may be box-free images)
      int count = 0;
      while (true) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%05d.ppm", count);
        if (!fs::exists(sdir + "/" + std::string(buf))) break;
        ++count;
      }
      for (int i = 0; i < count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%05d.ppm", i);
        DetectSample s;
        s.image = read_pnm(sdir + "/" + buf);
        if (by_image.count(i)) s.boxes = by_image[i];
        samples.push_back(std::move(s));
      }
      ds.detect_splits[split] = std::move(samples);
    }
  }
  return ds;
}

}  // namespace epinet
