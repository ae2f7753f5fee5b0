#pragma once

#include <algorithm>
#include <functional>
#include <numeric>

#include "epinet/net.hpp"
#include "epinet/rng.hpp"

namespace epinet {

template <typename T>
struct LabeledSet {
  std::vector<Tensor<T>> images;  // CHW, already mean-normalized
  std::vector<int> labels;

  size_t size() const { return images.size(); }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_error = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int64_t steps = 0;
};

template <typename T>
double eval_error(const Network<T>& net, const LabeledSet<T>& data, int views = 1) {
  if (data.size() == 0) return 0.0;
  int wrong = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    std::vector<T> p;
    if (views == 10) {
      p = ten_view_predict(net, data.images[i]);
    } else {
      const int ch = net.input_geometry[1], cw = net.input_geometry[2];
      Tensor<T> view = crop(data.images[i], (data.images[i].dim(1) - ch) / 2,
                            (data.images[i].dim(2) - cw) / 2, ch, cw);
      p = predict_single(net, view);
    }
    int arg = 0;
    for (size_t c = 1; c < p.size(); ++c)
      if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
    if (arg != data.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

// Single-crop SGD training. Deterministic given (seed, config): shuffling
// and flip augmentation draw from the "data" sub-stream, dropout masks
// are a function of (seed, layer, step). Stops early when the mean
// training loss reaches `stop_loss` (if positive).
template <typename T>
TrainResult train_classifier(Network<T>& net, Velocity<T>& vel, const LabeledSet<T>& train,
                             const LabeledSet<T>& val, const TrainConfig& cfg,
                             double stop_loss = -1.0,
                             const std::function<void(const EpochStats&)>& on_epoch = nullptr) {
  cfg.validate(net);
  TrainResult result;
  std::vector<double> val_history;
  const int ch = net.input_geometry[1], cw = net.input_geometry[2];
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto rng = substream(cfg.seed, "data", static_cast<uint64_t>(epoch));
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> coin(0, 1);

    const double lr = lr_schedule(val_history, cfg);
    double loss_sum = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t bsz = std::min<size_t>(static_cast<size_t>(cfg.batch), order.size() - pos);
      Grads<T> acc = zero_grads(net);
      for (size_t b = 0; b < bsz; ++b) {
        const auto& img = train.images[order[pos + b]];
        int y0 = 0, x0 = 0;
        if (img.dim(1) > ch) y0 = std::uniform_int_distribution<int>(0, img.dim(1) - ch)(rng);
        if (img.dim(2) > cw) x0 = std::uniform_int_distribution<int>(0, img.dim(2) - cw)(rng);
        Tensor<T> view = (img.dim(1) == ch && img.dim(2) == cw) ? img : crop(img, y0, x0, ch, cw);
        if (cfg.flip_augment && coin(rng)) view = flip_horizontal(view);
        auto tr = net_forward(net, view, DropoutMode::Train, cfg.seed, step);
        auto [loss, gl] = softmax_xent(tr.logits, train.labels[order[pos + b]]);
        loss_sum += loss;
        auto [g, gi] = net_backward(net, tr, gl);
        accumulate_grads(acc, g);
      }
      scale_grads(acc, T(1) / T(bsz));
      sgd_step(net, acc, vel, cfg, lr);
      ++step;
      pos += bsz;
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train.size());
    st.val_error = eval_error(net, val, 1);
    st.lr = lr;
    val_history.push_back(st.val_error);
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);
    if (stop_loss > 0 && st.train_loss <= stop_loss) break;
  }
  result.steps = step;
  return result;
}

}  // namespace epinet
