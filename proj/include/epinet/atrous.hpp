#pragma once

#include "epinet/net.hpp"

namespace epinet {

// Removes subsampling from every stride-bearing layer and dilates the
// taps of subsequent layers by the accumulated rate, so the converted net
// scores every input position. With two stride-2 stages this dilates the
// next block by 2 and the first FC-as-convolution by 4; the dense map
// contains the original sparse map as the sub-grid at multiples of the
// removed stride. Fully-connected layers must be convolutionalized first.
template <typename T>
Network<T> atrous_convert(const Network<T>& net) {
  Network<T> out;
  out.classes = net.classes;
  out.input_geometry = net.input_geometry;
  int rate = 1;
  bool removed_any = false;
  for (const auto& layer : net.layers) {
    Layer<T> copy = layer;
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, EpitomicLayer<T>>) {
            l.params.dilation *= rate;
            if (l.params.input_stride > 1) {
              rate *= l.params.input_stride;
              l.params.input_stride = 1;
              removed_any = true;
            }
          } else if constexpr (std::is_same_v<L, DenseConvLayer<T>>) {
            l.dilation *= rate;
            if (l.stride > 1) {
              rate *= l.stride;
              l.stride = 1;
              removed_any = true;
            }
          } else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>) {
            throw Error("detect", "atrous",
                        "dense conversion of max-pool stages is not supported");
          } else if constexpr (std::is_same_v<L, FcLayer<T>>) {
            throw Error("detect", "atrous",
                        "convert fully-connected layers to convolutions before atrous conversion");
          }
          // LRN and dropout are pointwise; they pass through unchanged.
        },
        copy);
    out.layers.push_back(std::move(copy));
  }
  if (!removed_any)
    throw Error("detect", "atrous", "net has no stride-bearing layers to convert");
  return out;
}

// Keeps a regular target x target subgrid of an FC-as-convolution
// kernel's spatial taps (corners plus evenly spaced interior) and
// rescales them by (source/target)^2 to preserve the expected response
// magnitude. Shrinks the receptive field and the per-application cost.
template <typename T>
DenseConvLayer<T> subsample_fc(const DenseConvLayer<T>& layer, int target) {
  const int src = layer.filters.dim(2);
  if (layer.filters.dim(3) != src)
    throw Error("detect", "subsample", "kernel must be spatially square");
  if (target > src) throw Error("detect", "subsample", "target extent exceeds source");
  if (target == src) return layer;
  if (target < 1) throw Error("detect", "subsample", "target must be >= 1");
  std::vector<int> taps(static_cast<size_t>(target));
  for (int j = 0; j < target; ++j)
    taps[static_cast<size_t>(j)] =
        target == 1 ? (src - 1) / 2
                    : static_cast<int>(std::lround(static_cast<double>(j) * (src - 1) / (target - 1)));
  const T gain = T(src) * T(src) / (T(target) * T(target));
  DenseConvLayer<T> out = layer;
  const int k = layer.filters.dim(0), c = layer.filters.dim(1);
  out.filters = Tensor<T>(Shape{k, c, target, target});
  for (int ki = 0; ki < k; ++ki)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < target; ++y)
        for (int x = 0; x < target; ++x)
          out.filters.at4(ki, ci, y, x) =
              layer.filters.at4(ki, ci, taps[static_cast<size_t>(y)], taps[static_cast<size_t>(x)]) *
              gain;
  return out;
}

}  // namespace epinet
