#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "epinet/error.hpp"
#include "epinet/threading.hpp"

namespace epinet {

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

using Shape = std::vector<int>;

inline int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major N-d array. Activations are (batch, channels, height,
// width); filter banks are (K, channels, height, width). Buffers are
// treated as immutable after construction except for the optimizer's
// explicitly named in-place updates.
template <typename T>
class Tensor {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "scalar type must be float or double");

 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(check_size(shape_), T(0)) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_size(shape_))
      throw Error("tensor", "shape",
                  "data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_str(shape_));
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static constexpr Dtype dtype() { return std::is_same_v<T, float> ? Dtype::F32 : Dtype::F64; }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  const Shape& shape() const { return shape_; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at2(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  const T& at2(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }

  T& at3(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at3(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  T& at4(int n, int c, int y, int x) {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const T& at4(int n, int c, int y, int x) const {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw Error("tensor", "shape",
                  "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

 private:
  static int64_t check_size(const Shape& s) {
    for (int d : s)
      if (d <= 0) throw Error("tensor", "shape", "non-positive extent in shape " + shape_str(s));
    return shape_size(s);
  }

  Shape shape_;
  std::vector<T> data_;
};

// Standard 2-d product with a fixed (i, k, j) loop order: every output
// element accumulates over k in ascending order regardless of thread
// count, so results are bit-reproducible.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw Error("tensor", "dim",
                "matmul needs 2-d operands, got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw Error("tensor", "dim",
                "matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int n = a.dim(0), kk = a.dim(1), m = b.dim(1);
  Tensor<T> c(Shape{n, m});
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  const int nt = threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int i = 0; i < n; ++i) {
    T* crow = pc + static_cast<size_t>(i) * m;
    const T* arow = pa + static_cast<size_t>(i) * kk;
    for (int k = 0; k < kk; ++k) {
      const T aik = arow[k];
      const T* brow = pb + static_cast<size_t>(k) * m;
      for (int j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) throw Error("tensor", "dim", "transpose2d needs a 2-d tensor");
  const int n = a.dim(0), m = a.dim(1);
  Tensor<T> t(Shape{m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) t.at2(j, i) = a.at2(i, j);
  return t;
}

// Pads the last two (spatial) axes by `pad` zeros per side; leading axes
// are preserved. Padding is always explicit in this library.
template <typename T>
Tensor<T> zero_pad(const Tensor<T>& in, int pad) {
  if (pad < 0) throw Error("tensor", "pad", "pad must be >= 0");
  if (in.rank() < 2) throw Error("tensor", "dim", "zero_pad needs rank >= 2");
  if (pad == 0) return in;
  Shape os = in.shape();
  const int h = os[os.size() - 2], w = os[os.size() - 1];
  os[os.size() - 2] = h + 2 * pad;
  os[os.size() - 1] = w + 2 * pad;
  Tensor<T> out(os);
  int64_t lead = 1;
  for (size_t i = 0; i + 2 < in.shape().size(); ++i) lead *= in.shape()[i];
  const int oh = h + 2 * pad, ow = w + 2 * pad;
  for (int64_t l = 0; l < lead; ++l)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(l * oh + y + pad) * ow + x + pad] = in[(l * h + y) * w + x];
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

}  // namespace epinet
