// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "frag/error.hpp"

namespace frag {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major float32 array. The element count always equals the
/// product of the extents, and every extent is positive.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_size(shape_), 0.0f);
  }

  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_size(shape_))
      throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }

  static Tensor vector(std::vector<float> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  float& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Same values under a new shape of equal element count (row-major).
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
      throw ShapeMismatch("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  Tensor flattened() const { return reshaped({data_.size()}); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_shape() const {
    if (shape_.empty()) throw ShapeMismatch("tensor shape must have at least one extent");
    for (auto e : shape_)
      if (e == 0) throw ShapeMismatch("tensor extents must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<float> data_;
};

inline void ensure_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NonFiniteValue(std::string(where) + ": produced a non-finite value");
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* where) {
  if (t.rank() != rank)
    throw ShapeMismatch(std::string(where) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_string(t.shape()));
}

/// c = a * b. Each output element accumulates a[i,k]*b[k,j] into a zero
/// float for k = 0..K-1 in increasing order, so results match a naive
/// triple loop bit for bit. The loop nest runs j innermost so the compiler
/// can vectorize across outputs without reassociating any sum.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeMismatch("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                        shape_string(b.shape()));
  Tensor c({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    float* row = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const float s = pa[i * k + kk];
      const float* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  ensure_finite(c, "matmul");
  return c;
}

/// Adds bias[j] to every row of a rank-2 tensor in place.
inline void add_row_bias(Tensor& t, const Tensor& bias) {
  require_rank(t, 2, "add_row_bias");
  const std::size_t n = t.dim(1);
  if (bias.size() != n) throw ShapeMismatch("add_row_bias: bias length does not match columns");
  auto d = t.data();
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < n; ++j) d[i * n + j] += bias[j];
}

/// 3x3 cross-correlation, stride 1, zero padding 1.
///
/// Summation order per output element: start at 0, loop input channel,
/// then kernel row, then kernel column, skipping taps that fall in the
/// padding; the bias is added last.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t filters = kernels.dim(0);
  if (kernels.dim(1) != channels || kernels.dim(2) != 3 || kernels.dim(3) != 3)
    throw ShapeMismatch("conv2d: kernels " + shape_string(kernels.shape()) +
                        " incompatible with input " + shape_string(input.shape()));
  if (bias.size() != filters) throw ShapeMismatch("conv2d: bias length must equal filter count");

  Tensor out({filters, height, width});
  const float* in = input.data().data();
  const float* ker = kernels.data().data();
  float* o = out.data().data();
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < channels; ++c) {
          const float* kc = ker + (f * channels + c) * 9;
          const float* ic = in + c * height * width;
          for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = y + ky - 1;
            if (iy < 0 || iy >= h) continue;
            for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = x + kx - 1;
              if (ix < 0 || ix >= w) continue;
              acc += ic[iy * w + ix] * kc[ky * 3 + kx];
            }
          }
        }
        o[(f * height + static_cast<std::size_t>(y)) * width + static_cast<std::size_t>(x)] =
            acc + bias[f];
      }
    }
  }
  ensure_finite(out, "conv2d");
  return out;
}

inline void relu_inplace(Tensor& t) noexcept {
  for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

inline Tensor relu(Tensor t) {
  relu_inplace(t);
  return t;
}

/// 2x2 max pool with stride 2. Odd extents round up; edge windows use the
/// cells that exist.
inline Tensor maxpool2(const Tensor& t) {
  require_rank(t, 3, "maxpool2");
  const std::size_t channels = t.dim(0), height = t.dim(1), width = t.dim(2);
  const std::size_t oh = (height + 1) / 2, ow = (width + 1) / 2;
  Tensor out({channels, oh, ow});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        float best = t[(c * height + 2 * y) * width + 2 * x];
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t iy = 2 * y + dy, ix = 2 * x + dx;
            if (iy < height && ix < width) best = std::max(best, t[(c * height + iy) * width + ix]);
          }
        out[(c * oh + y) * ow + x] = best;
      }
  return out;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw ShapeMismatch("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

inline std::size_t argmax(const Tensor& t) { return argmax(t.data()); }

}  // namespace frag
