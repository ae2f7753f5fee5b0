#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>

#include <zlib.h>

#include "epinet/net.hpp"

namespace epinet {

// Checkpoint container (little-endian): magic "EPNT", u32 version=1,
// u32 tensor count; per tensor u16 name length + UTF-8 name, u8 dtype
// (0=f32, 1=f64), u8 ndim, ndim x u32 dims, raw scalar payload; trailing
// u32 CRC32 over all preceding bytes.
//
// The network architecture rides along as a reserved f64 tensor named
// "__arch__" holding the layer kinds and their geometry, so a checkpoint
// reconstructs layer configs, parameters and optimizer state exactly.

namespace ckpt {

struct RawTensor {
  std::string name;
  Dtype dtype;
  Shape dims;
  std::vector<uint8_t> payload;
};

inline void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename I>
void put_int(std::vector<uint8_t>& out, I v) {
  put_bytes(out, &v, sizeof(I));  // host is little-endian
}

inline std::vector<uint8_t> encode(const std::vector<RawTensor>& tensors) {
  std::vector<uint8_t> out;
  put_bytes(out, "EPNT", 4);
  put_int<uint32_t>(out, 1);
  put_int<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_int<uint16_t>(out, static_cast<uint16_t>(t.name.size()));
    put_bytes(out, t.name.data(), t.name.size());
    put_int<uint8_t>(out, static_cast<uint8_t>(t.dtype));
    put_int<uint8_t>(out, static_cast<uint8_t>(t.dims.size()));
    for (int d : t.dims) put_int<uint32_t>(out, static_cast<uint32_t>(d));
    put_bytes(out, t.payload.data(), t.payload.size());
  }
  const uint32_t crc =
      static_cast<uint32_t>(::crc32(0, out.data(), static_cast<uInt>(out.size())));
  put_int<uint32_t>(out, crc);
  return out;
}

class Reader {
 public:
  explicit Reader(std::vector<uint8_t> bytes) : bytes_(std::move(bytes)) {}

  std::vector<RawTensor> parse() {
    if (bytes_.size() < 12 + 4) fail("truncated header");
    if (std::memcmp(bytes_.data(), "EPNT", 4) != 0) fail("bad magic");
    pos_ = 4;
    const uint32_t version = get<uint32_t>();
    if (version != 1) fail("unsupported version " + std::to_string(version));
    const uint32_t count = get<uint32_t>();
    const size_t body_end = bytes_.size() - 4;
    uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes_.data() + body_end, 4);
    const uint32_t crc =
        static_cast<uint32_t>(::crc32(0, bytes_.data(), static_cast<uInt>(body_end)));
    if (crc != stored_crc) fail("CRC mismatch");
    std::vector<RawTensor> tensors;
    for (uint32_t i = 0; i < count; ++i) {
      RawTensor t;
      const uint16_t nlen = get<uint16_t>();
      need(nlen);
      t.name.assign(reinterpret_cast<const char*>(bytes_.data() + pos_), nlen);
      pos_ += nlen;
      const uint8_t dt = get<uint8_t>();
      if (dt > 1) fail("bad dtype tag " + std::to_string(dt));
      t.dtype = static_cast<Dtype>(dt);
      const uint8_t ndim = get<uint8_t>();
      int64_t n = 1;
      for (int d = 0; d < ndim; ++d) {
        const uint32_t dim = get<uint32_t>();
        t.dims.push_back(static_cast<int>(dim));
        n *= dim;
      }
      const size_t bytes = static_cast<size_t>(n) * (t.dtype == Dtype::F32 ? 4 : 8);
      need(bytes);
      t.payload.assign(bytes_.begin() + static_cast<long>(pos_),
                       bytes_.begin() + static_cast<long>(pos_ + bytes));
      pos_ += bytes;
      tensors.push_back(std::move(t));
    }
    if (pos_ != body_end) fail("trailing bytes after tensor table");
    return tensors;
  }

 private:
  template <typename I>
  I get() {
    need(sizeof(I));
    I v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(I));
    pos_ += sizeof(I);
    return v;
  }
  void need(size_t n) {
    if (pos_ + n > bytes_.size() - 4) fail("truncated record");
  }
  [[noreturn]] void fail(const std::string& why) {
    throw Error("net", "checkpoint", why + " at offset " + std::to_string(pos_));
  }

  std::vector<uint8_t> bytes_;
  size_t pos_ = 0;
};

template <typename T>
RawTensor from_values(std::string name, Shape dims, const T* data, int64_t n) {
  RawTensor t;
  t.name = std::move(name);
  t.dtype = std::is_same_v<T, float> ? Dtype::F32 : Dtype::F64;
  t.dims = std::move(dims);
  t.payload.resize(static_cast<size_t>(n) * sizeof(T));
  std::memcpy(t.payload.data(), data, t.payload.size());
  return t;
}

}  // namespace ckpt

// Layer kind codes inside the "__arch__" tensor.
namespace arch_kind {
constexpr int kEpitomic = 0;
constexpr int kMaxPool = 1;
constexpr int kLrn = 2;
constexpr int kDropout = 3;
constexpr int kFc = 4;
constexpr int kDenseConv = 5;
constexpr int kSlots = 8;
}  // namespace arch_kind

template <typename T>
std::vector<double> encode_arch(const Network<T>& net) {
  std::vector<double> a;
  a.push_back(static_cast<double>(net.layers.size()));
  a.push_back(net.classes);
  for (int d : net.input_geometry) a.push_back(d);
  for (const auto& layer : net.layers) {
    std::array<double, arch_kind::kSlots> s{};
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, EpitomicLayer<T>>) {
            s = {arch_kind::kEpitomic,
                 static_cast<double>(l.params.filter_size),
                 static_cast<double>(l.params.input_stride),
                 static_cast<double>(l.params.epitome_stride),
                 l.params.normalized ? 1.0 : 0.0,
                 static_cast<double>(l.params.lambda),
                 static_cast<double>(l.params.dilation),
                 0.0};
          } else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>) {
            s = {arch_kind::kMaxPool,
                 static_cast<double>(l.params.pool_size),
                 static_cast<double>(l.params.pool_stride),
                 static_cast<double>(l.params.input_stride),
                 static_cast<double>(l.params.dilation),
                 0.0,
                 0.0,
                 0.0};
          } else if constexpr (std::is_same_v<L, LrnLayer>) {
            s = {arch_kind::kLrn, static_cast<double>(l.cfg.window), l.cfg.kappa,
                 l.cfg.alpha,     l.cfg.beta,                        0.0,
                 0.0,             0.0};
          } else if constexpr (std::is_same_v<L, DropoutLayer>) {
            s = {arch_kind::kDropout, l.rate, static_cast<double>(l.layer_id), 0.0, 0.0, 0.0,
                 0.0, 0.0};
          } else if constexpr (std::is_same_v<L, FcLayer<T>>) {
            s = {arch_kind::kFc,
                 l.relu ? 1.0 : 0.0,
                 static_cast<double>(l.input_shape.size() > 0 ? l.input_shape[0] : 0),
                 static_cast<double>(l.input_shape.size() > 1 ? l.input_shape[1] : 0),
                 static_cast<double>(l.input_shape.size() > 2 ? l.input_shape[2] : 0),
                 0.0,
                 0.0,
                 0.0};
          } else {
            static_assert(std::is_same_v<L, DenseConvLayer<T>>);
            s = {arch_kind::kDenseConv,
                 static_cast<double>(l.stride),
                 static_cast<double>(l.dilation),
                 l.relu ? 1.0 : 0.0,
                 0.0,
                 0.0,
                 0.0,
                 0.0};
          }
        },
        layer);
    a.insert(a.end(), s.begin(), s.end());
  }
  return a;
}

template <typename T>
void save_checkpoint(Network<T>& net, const std::string& path,
                     const Velocity<T>* velocity = nullptr) {
  std::vector<ckpt::RawTensor> tensors;
  auto arch = encode_arch(net);
  tensors.push_back(ckpt::from_values<double>("__arch__", Shape{static_cast<int>(arch.size())},
                                              arch.data(), static_cast<int64_t>(arch.size())));
  for (size_t li = 0; li < net.layers.size(); ++li)
    for (auto& p : layer_params(net.layers[li], static_cast<int>(li)))
      tensors.push_back(ckpt::from_values<T>(p.name, p.shape, p.data, p.size));
  if (velocity) {
    for (size_t li = 0; li < net.layers.size(); ++li) {
      auto refs = layer_params(net.layers[li], static_cast<int>(li));
      for (size_t pi = 0; pi < refs.size(); ++pi) {
        const Tensor<T>& v = (*velocity)[li][pi];
        tensors.push_back(
            ckpt::from_values<T>("V." + refs[pi].name, v.shape(), v.data(), v.size()));
      }
    }
  }
  auto bytes = ckpt::encode(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("net", "io", "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("net", "io", "short write to " + path);
}

template <typename T>
std::pair<Network<T>, std::optional<Velocity<T>>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("net", "io", "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  auto tensors = ckpt::Reader(std::move(bytes)).parse();
  if (tensors.empty() || tensors[0].name != "__arch__" || tensors[0].dtype != Dtype::F64)
    throw Error("net", "checkpoint", "missing architecture record");
  const auto* a = reinterpret_cast<const double*>(tensors[0].payload.data());
  size_t ai = 0;
  const int n_layers = static_cast<int>(a[ai++]);
  Network<T> net;
  net.classes = static_cast<int>(a[ai++]);
  net.input_geometry = {static_cast<int>(a[ai]), static_cast<int>(a[ai + 1]),
                        static_cast<int>(a[ai + 2])};
  ai += 3;

  std::map<std::string, const ckpt::RawTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;

  auto fetch = [&](const std::string& name) -> const ckpt::RawTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("net", "checkpoint", "missing tensor " + name);
    if (it->second->dtype != Tensor<T>::dtype())
      throw Error("net", "checkpoint",
                  "dtype mismatch for " + name + " (no implicit precision conversion)");
    return *it->second;
  };
  auto to_tensor = [&](const ckpt::RawTensor& rt) {
    std::vector<T> v(rt.payload.size() / sizeof(T));
    std::memcpy(v.data(), rt.payload.data(), rt.payload.size());
    return Tensor<T>(rt.dims, std::move(v));
  };
  auto to_vector = [&](const ckpt::RawTensor& rt) {
    std::vector<T> v(rt.payload.size() / sizeof(T));
    std::memcpy(v.data(), rt.payload.data(), rt.payload.size());
    return v;
  };

  for (int li = 0; li < n_layers; ++li) {
    const int kind = static_cast<int>(a[ai]);
    const double* s = a + ai;
    ai += arch_kind::kSlots;
    const std::string prefix = "L" + std::to_string(li) + ".";
    switch (kind) {
      case arch_kind::kEpitomic: {
        EpitomicLayer<T> l;
        l.params.epitomes = to_tensor(fetch(prefix + "epitomes"));
        l.params.biases = to_vector(fetch(prefix + "biases"));
        l.params.filter_size = static_cast<int>(s[1]);
        l.params.input_stride = static_cast<int>(s[2]);
        l.params.epitome_stride = static_cast<int>(s[3]);
        l.params.normalized = s[4] != 0;
        l.params.lambda = static_cast<T>(s[5]);
        l.params.dilation = static_cast<int>(s[6]);
        l.params.validate();
        net.layers.emplace_back(std::move(l));
        break;
      }
      case arch_kind::kMaxPool: {
        MaxPoolLayer<T> l;
        l.params.filters = to_tensor(fetch(prefix + "filters"));
        l.params.biases = to_vector(fetch(prefix + "biases"));
        l.params.pool_size = static_cast<int>(s[1]);
        l.params.pool_stride = static_cast<int>(s[2]);
        l.params.input_stride = static_cast<int>(s[3]);
        l.params.dilation = static_cast<int>(s[4]);
        l.params.validate();
        net.layers.emplace_back(std::move(l));
        break;
      }
      case arch_kind::kLrn: {
        LrnLayer l;
        l.cfg.window = static_cast<int>(s[1]);
        l.cfg.kappa = s[2];
        l.cfg.alpha = s[3];
        l.cfg.beta = s[4];
        net.layers.emplace_back(l);
        break;
      }
      case arch_kind::kDropout: {
        DropoutLayer l;
        l.rate = s[1];
        l.layer_id = static_cast<int>(s[2]);
        net.layers.emplace_back(l);
        break;
      }
      case arch_kind::kFc: {
        FcLayer<T> l;
        l.weights = to_tensor(fetch(prefix + "weights"));
        l.bias = to_vector(fetch(prefix + "bias"));
        l.relu = s[1] != 0;
        if (s[2] != 0) l.input_shape = {static_cast<int>(s[2]), static_cast<int>(s[3]),
                                        static_cast<int>(s[4])};
        net.layers.emplace_back(std::move(l));
        break;
      }
      case arch_kind::kDenseConv: {
        DenseConvLayer<T> l;
        l.filters = to_tensor(fetch(prefix + "filters"));
        l.bias = to_vector(fetch(prefix + "bias"));
        l.stride = static_cast<int>(s[1]);
        l.dilation = static_cast<int>(s[2]);
        l.relu = s[3] != 0;
        net.layers.emplace_back(std::move(l));
        break;
      }
      default:
        throw Error("net", "checkpoint", "unknown layer kind " + std::to_string(kind));
    }
  }

  // validate shape agreement across the stack before returning
  infer_shapes(net, net.input_geometry);

  std::optional<Velocity<T>> vel;
  if (std::any_of(tensors.begin(), tensors.end(),
                  [](const ckpt::RawTensor& t) { return t.name.rfind("V.", 0) == 0; })) {
    Velocity<T> v = zero_velocity(net);
    for (size_t li = 0; li < net.layers.size(); ++li) {
      auto refs = layer_params(net.layers[li], static_cast<int>(li));
      for (size_t pi = 0; pi < refs.size(); ++pi) {
        const auto& rt = fetch("V." + refs[pi].name);
        Tensor<T> t = to_tensor(rt);
        if (!t.same_shape(v[li][pi]))
          throw Error("net", "checkpoint", "velocity shape disagreement for " + refs[pi].name);
        v[li][pi] = std::move(t);
      }
    }
    vel = std::move(v);
  }
  return {std::move(net), std::move(vel)};
}

}  // namespace epinet
