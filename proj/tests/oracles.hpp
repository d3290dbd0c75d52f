// SPDX-License-Identifier: Apache-2.0
//
// Naive reference implementations used only by tests. None of these call
// into the library code paths they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace frag::oracle {

/// c[i][j] = sum_k a[i][k] * b[k][j], accumulated in increasing k.
inline std::vector<float> matmul(const std::vector<float>& a, const std::vector<float>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<float> c(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

/// Direct 6-loop 3x3 cross-correlation, zero padding 1, bias added last.
inline std::vector<float> conv2d(const std::vector<float>& in, const std::vector<float>& ker,
                                 const std::vector<float>& bias, int channels, int height, int width,
                                 int filters) {
  std::vector<float> out(static_cast<std::size_t>(filters * height * width));
  for (int f = 0; f < filters; ++f)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        float acc = 0.0f;
        for (int c = 0; c < channels; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = y + ky - 1, ix = x + kx - 1;
              if (iy < 0 || iy >= height || ix < 0 || ix >= width) continue;
              acc += in[static_cast<std::size_t>((c * height + iy) * width + ix)] *
                     ker[static_cast<std::size_t>(((f * channels + c) * 3 + ky) * 3 + kx)];
            }
        out[static_cast<std::size_t>((f * height + y) * width + x)] = acc + bias[static_cast<std::size_t>(f)];
      }
  return out;
}

/// Recursive flood fill region count on a G x G class grid.
class FloodFill {
 public:
  FloodFill(const std::vector<std::uint32_t>& grid, int size, bool eight)
      : grid_(grid), size_(size), eight_(eight), seen_(grid.size(), false) {}

  int count() {
    int regions = 0;
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c)
        if (!seen_[idx(r, c)]) {
          ++regions;
          fill(r, c, grid_[idx(r, c)]);
        }
    return regions;
  }

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r * size_ + c); }

  void fill(int r, int c, std::uint32_t cls) {
    if (r < 0 || c < 0 || r >= size_ || c >= size_) return;
    if (seen_[idx(r, c)] || grid_[idx(r, c)] != cls) return;
    seen_[idx(r, c)] = true;
    fill(r + 1, c, cls);
    fill(r - 1, c, cls);
    fill(r, c + 1, cls);
    fill(r, c - 1, cls);
    if (eight_) {
      fill(r + 1, c + 1, cls);
      fill(r + 1, c - 1, cls);
      fill(r - 1, c + 1, cls);
      fill(r - 1, c - 1, cls);
    }
  }

  const std::vector<std::uint32_t>& grid_;
  int size_;
  bool eight_;
  std::vector<bool> seen_;
};

inline int flood_fill_regions(const std::vector<std::uint32_t>& grid, int size, bool eight = false) {
  return FloodFill(grid, size, eight).count();
}

/// Kendall tau-b by enumerating all n(n-1)/2 pairs.
inline double kendall_tau_pairs(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::int64_t concordant = 0, discordant = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        ++tx;
        ++ty;
      } else if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const std::int64_t pairs = static_cast<std::int64_t>(n * (n - 1) / 2);
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(pairs - tx) * static_cast<double>(pairs - ty));
}

inline std::vector<float> random_floats(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace frag::oracle
