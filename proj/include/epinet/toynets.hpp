#pragma once

#include "epinet/net.hpp"
#include "epinet/rng.hpp"

namespace epinet {

namespace detail {

template <typename T>
Tensor<T> gaussian_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> t(shape);
  std::normal_distribution<double> g(0.0, stddev);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(g(rng));
  return t;
}

}  // namespace detail

// "Class-T" toy classifier: 32x32x3 input,
// epitomic(K=16, W=5, V=7, s_in=2) -> relu -> lrn ->
// epitomic(K=32, W=3, V=5, s_in=2) -> relu ->
// fc 128 + relu -> dropout 0.5 -> fc classes.
// Weights start zero-mean Gaussian (std 0.01), all biases zero.
template <typename T>
Network<T> build_class_t(int classes, bool normalized, uint64_t seed, int input_size = 32) {
  auto rng = substream(seed, "init");
  Network<T> net;
  net.classes = classes;
  net.input_geometry = {3, input_size, input_size};

  EpitomicLayer<T> l1;
  l1.params.epitomes = detail::gaussian_tensor<T>(Shape{16, 3, 7, 7}, 0.01, rng);
  l1.params.biases.assign(16, T(0));
  l1.params.filter_size = 5;
  l1.params.input_stride = 2;
  l1.params.epitome_stride = 1;
  l1.params.normalized = normalized;
  net.layers.emplace_back(std::move(l1));

  net.layers.emplace_back(LrnLayer{});

  EpitomicLayer<T> l2;
  l2.params.epitomes = detail::gaussian_tensor<T>(Shape{32, 16, 5, 5}, 0.01, rng);
  l2.params.biases.assign(32, T(0));
  l2.params.filter_size = 3;
  l2.params.input_stride = 2;
  l2.params.epitome_stride = 1;
  l2.params.normalized = normalized;
  net.layers.emplace_back(std::move(l2));

  auto shapes = infer_shapes(net, net.input_geometry);
  const Shape& pre = shapes.back();
  const int flat = static_cast<int>(shape_size(pre));

  FcLayer<T> fc1;
  fc1.weights = detail::gaussian_tensor<T>(Shape{128, flat}, 0.01, rng);
  fc1.bias.assign(128, T(0));
  fc1.relu = true;
  fc1.input_shape = pre;
  net.layers.emplace_back(std::move(fc1));

  net.layers.emplace_back(DropoutLayer{0.5, static_cast<int>(net.layers.size())});

  FcLayer<T> fc2;
  fc2.weights = detail::gaussian_tensor<T>(Shape{classes, 128}, 0.01, rng);
  fc2.bias.assign(static_cast<size_t>(classes), T(0));
  fc2.relu = false;
  fc2.input_shape = Shape{128, 1, 1};
  net.layers.emplace_back(std::move(fc2));

  infer_shapes(net, net.input_geometry);
  return net;
}

// Max-pooled baseline matched to Class-T's output geometry:
// conv(K=16, W=5, s=1) + pool 2 -> lrn -> conv(K=32, W=3, s=1) + pool 2 ->
// fc 128 + relu -> dropout -> fc classes.
template <typename T>
Network<T> build_maxpool_t(int classes, uint64_t seed, int input_size = 32) {
  auto rng = substream(seed, "init");
  Network<T> net;
  net.classes = classes;
  net.input_geometry = {3, input_size, input_size};

  MaxPoolLayer<T> l1;
  l1.params.filters = detail::gaussian_tensor<T>(Shape{16, 3, 5, 5}, 0.01, rng);
  l1.params.biases.assign(16, T(0));
  l1.params.pool_size = 2;
  l1.params.pool_stride = 2;
  l1.params.input_stride = 1;
  net.layers.emplace_back(std::move(l1));

  net.layers.emplace_back(LrnLayer{});

  MaxPoolLayer<T> l2;
  l2.params.filters = detail::gaussian_tensor<T>(Shape{32, 16, 3, 3}, 0.01, rng);
  l2.params.biases.assign(32, T(0));
  l2.params.pool_size = 2;
  l2.params.pool_stride = 2;
  l2.params.input_stride = 1;
  net.layers.emplace_back(std::move(l2));

  auto shapes = infer_shapes(net, net.input_geometry);
  const Shape& pre = shapes.back();
  const int flat = static_cast<int>(shape_size(pre));

  FcLayer<T> fc1;
  fc1.weights = detail::gaussian_tensor<T>(Shape{128, flat}, 0.01, rng);
  fc1.bias.assign(128, T(0));
  fc1.relu = true;
  fc1.input_shape = pre;
  net.layers.emplace_back(std::move(fc1));

  net.layers.emplace_back(DropoutLayer{0.5, static_cast<int>(net.layers.size())});

  FcLayer<T> fc2;
  fc2.weights = detail::gaussian_tensor<T>(Shape{classes, 128}, 0.01, rng);
  fc2.bias.assign(static_cast<size_t>(classes), T(0));
  fc2.relu = false;
  fc2.input_shape = Shape{128, 1, 1};
  net.layers.emplace_back(std::move(fc2));

  infer_shapes(net, net.input_geometry);
  return net;
}

// "Class-M": a slimmer epitomic net used for patchwork training and
// detection, where forward passes run over whole canvases.
template <typename T>
Network<T> build_class_m(int classes, bool normalized, uint64_t seed, int input_size = 32) {
  auto rng = substream(seed, "init");
  Network<T> net;
  net.classes = classes;
  net.input_geometry = {3, input_size, input_size};

  EpitomicLayer<T> l1;
  l1.params.epitomes = detail::gaussian_tensor<T>(Shape{8, 3, 7, 7}, 0.01, rng);
  l1.params.biases.assign(8, T(0));
  l1.params.filter_size = 5;
  l1.params.input_stride = 2;
  l1.params.epitome_stride = 1;
  l1.params.normalized = normalized;
  net.layers.emplace_back(std::move(l1));

  EpitomicLayer<T> l2;
  l2.params.epitomes = detail::gaussian_tensor<T>(Shape{16, 8, 5, 5}, 0.01, rng);
  l2.params.biases.assign(16, T(0));
  l2.params.filter_size = 3;
  l2.params.input_stride = 2;
  l2.params.epitome_stride = 1;
  l2.params.normalized = normalized;
  net.layers.emplace_back(std::move(l2));

  auto shapes = infer_shapes(net, net.input_geometry);
  const Shape& pre = shapes.back();
  const int flat = static_cast<int>(shape_size(pre));

  FcLayer<T> fc1;
  fc1.weights = detail::gaussian_tensor<T>(Shape{64, flat}, 0.01, rng);
  fc1.bias.assign(64, T(0));
  fc1.relu = true;
  fc1.input_shape = pre;
  net.layers.emplace_back(std::move(fc1));

  net.layers.emplace_back(DropoutLayer{0.5, static_cast<int>(net.layers.size())});

  FcLayer<T> fc2;
  fc2.weights = detail::gaussian_tensor<T>(Shape{classes, 64}, 0.01, rng);
  fc2.bias.assign(static_cast<size_t>(classes), T(0));
  fc2.relu = false;
  fc2.input_shape = Shape{64, 1, 1};
  net.layers.emplace_back(std::move(fc2));

  infer_shapes(net, net.input_geometry);
  return net;
}

template <typename T>
Network<T> build_arch(const std::string& arch, int classes, bool normalized, uint64_t seed,
                      int input_size = 32) {
  if (arch == "class-t") return build_class_t<T>(classes, normalized, seed, input_size);
  if (arch == "maxpool-t") return build_maxpool_t<T>(classes, seed, input_size);
  if (arch == "class-m") return build_class_m<T>(classes, normalized, seed, input_size);
  throw Error("cli", "config", "unknown net arch: " + arch);
}

// Layer indices that must be decay-exempt (all normalized layers).
template <typename T>
std::vector<int> normalized_layer_indices(const Network<T>& net) {
  std::vector<int> idx;
  for (size_t li = 0; li < net.layers.size(); ++li)
    if (layer_is_normalized(net.layers[li])) idx.push_back(static_cast<int>(li));
  return idx;
}

// The network's output stride in input pixels (product of layer strides),
// used to align patchwork canvases with the dense score grid.
template <typename T>
int net_stride(const Network<T>& net) {
  int s = 1;
  for (const auto& layer : net.layers)
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, EpitomicLayer<T>>)
            s *= l.params.input_stride;
          else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>)
            s *= l.params.input_stride * l.params.pool_stride;
          else if constexpr (std::is_same_v<L, DenseConvLayer<T>>)
            s *= l.stride;
        },
        layer);
  return s;
}

}  // namespace epinet
