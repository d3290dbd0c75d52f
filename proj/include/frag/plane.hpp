// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "frag/error.hpp"
#include "frag/tensor.hpp"

namespace frag {

/// Below this length the perpendicular (or first) direction is treated as
/// zero and the triplet does not span a plane.
inline constexpr double kDegeneracyThreshold = 1e-9;

/// Plane through three points x1, x2, x3 of one representation space.
///
/// With v1 = x2 - x1 and v2 = x3 - x1, the basis is u1 = v1/|v1| and
/// u2 = the normalized part of v2 orthogonal to u1. A point with plane
/// coordinates (alpha, beta) is
///
///   x1 + [(1 - alpha) min(0, d) + alpha max(m1, d)] u1 + beta m2 u2
///
/// where d = u1.v2, m1 = |v1| and m2 = v2.u2. The alpha range therefore
/// spans both x2 and the foot of x3 on the u1 axis, and beta = 1 is the
/// height of x3.
struct TripletPlane {
  Tensor base;
  Tensor v1;
  Tensor v2;
  Tensor u1;
  Tensor u2;
  double d = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  std::size_t layer = 0;
  double rho = 0.0;

  std::size_t dim() const noexcept { return base.size(); }

  double k1_low() const noexcept { return std::min(0.0, d); }
  double k1_high() const noexcept { return std::max(m1, d); }

  /// Coordinate along u1 for a given alpha.
  double k1(double alpha) const noexcept { return (1.0 - alpha) * k1_low() + alpha * k1_high(); }
  double k2(double beta) const noexcept { return beta * m2; }

  /// Inverse of k1(): the alpha at which the u1 coordinate equals `k1`.
  double alpha_of(double k1_value) const noexcept {
    return (k1_value - k1_low()) / (k1_high() - k1_low());
  }

  /// (alpha, beta) of x1, x2 and x3.
  std::array<std::array<double, 2>, 3> triplet_coordinates() const noexcept {
    return {{{alpha_of(0.0), 0.0}, {alpha_of(m1), 0.0}, {alpha_of(d), 1.0}}};
  }
};

inline TripletPlane build_triplet_plane(const Tensor& x1, const Tensor& x2, const Tensor& x3,
                                        std::size_t layer, double rho = 0.0) {
  if (x1.size() != x2.size() || x1.size() != x3.size())
    throw ShapeMismatch("triplet points differ in dimension");
  if (!(rho >= 0.0)) throw InvalidArgument("plane padding rho must be non-negative");
  const std::size_t n = x1.size();
  std::vector<double> v1(n), v2(n);
  double m1sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v1[i] = static_cast<double>(x2[i]) - x1[i];
    v2[i] = static_cast<double>(x3[i]) - x1[i];
    m1sq += v1[i] * v1[i];
  }
  const double m1 = std::sqrt(m1sq);
  if (m1 < kDegeneracyThreshold) throw DegeneratePlane("x2 coincides with x1");
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) d += v2[i] * (v1[i] / m1);
  std::vector<double> perp(n);
  double psq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    perp[i] = v2[i] - d * (v1[i] / m1);
    psq += perp[i] * perp[i];
  }
  const double pnorm = std::sqrt(psq);
  if (pnorm < kDegeneracyThreshold) throw DegeneratePlane("triplet is collinear");

  TripletPlane p;
  p.base = x1.flattened();
  p.v1 = Tensor({n});
  p.v2 = Tensor({n});
  p.u1 = Tensor({n});
  p.u2 = Tensor({n});
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.v1[i] = static_cast<float>(v1[i]);
    p.v2[i] = static_cast<float>(v2[i]);
    p.u1[i] = static_cast<float>(v1[i] / m1);
    p.u2[i] = static_cast<float>(perp[i] / pnorm);
    m2 += v2[i] * (perp[i] / pnorm);
  }
  p.d = d;
  p.m1 = m1;
  p.m2 = m2;
  p.layer = layer;
  p.rho = rho;
  return p;
}

namespace detail {
inline void plane_point_into(const TripletPlane& p, double alpha, double beta, std::span<float> out) {
  const double a = p.k1(alpha), b = p.k2(beta);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(static_cast<double>(p.base[i]) + a * p.u1[i] + b * p.u2[i]);
}
}  // namespace detail

/// Point of the plane at coordinates (alpha, beta), each in [-rho, 1 + rho].
inline Tensor plane_point(const TripletPlane& p, double alpha, double beta) {
  constexpr double slack = 1e-12;
  if (alpha < -p.rho - slack || alpha > 1.0 + p.rho + slack || beta < -p.rho - slack ||
      beta > 1.0 + p.rho + slack)
    throw CoordinateOutOfRange("plane coordinate outside [-rho, 1 + rho]");
  Tensor out({p.dim()});
  detail::plane_point_into(p, alpha, beta, out.data());
  return out;
}

struct GridSpec {
  std::size_t resolution = 50;
  double rho = 0.0;

  void validate() const {
    if (resolution < 2) throw InvalidArgument("grid resolution must be at least 2");
    if (!(rho >= 0.0)) throw InvalidArgument("grid padding rho must be non-negative");
  }

  std::size_t cells() const noexcept { return resolution * resolution; }

  /// Evenly spaced coordinate i of [-rho, 1 + rho]; the endpoints are exact.
  double coordinate(std::size_t i) const noexcept {
    if (i + 1 == resolution) return 1.0 + rho;
    return -rho + (1.0 + 2.0 * rho) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  }
};

/// Grid cell: `col` indexes alpha, `row` indexes beta.
struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct GridPoint {
  Cell cell;
  Tensor point;
};

/// All G*G grid points, beta-major (row j outer, alpha index i inner).
inline std::vector<GridPoint> sample_grid(const TripletPlane& p, const GridSpec& g) {
  g.validate();
  std::vector<GridPoint> out;
  out.reserve(g.cells());
  for (std::size_t j = 0; j < g.resolution; ++j)
    for (std::size_t i = 0; i < g.resolution; ++i) {
      Tensor pt({p.dim()});
      detail::plane_point_into(p, g.coordinate(i), g.coordinate(j), pt.data());
      out.push_back({{j, i}, std::move(pt)});
    }
  return out;
}

/// The same points as sample_grid, packed as a (G*G, dim) matrix.
inline Tensor grid_matrix(const TripletPlane& p, const GridSpec& g) {
  g.validate();
  const std::size_t dim = p.dim();
  Tensor out({g.cells(), dim});
  auto data = out.data();
  for (std::size_t j = 0; j < g.resolution; ++j)
    for (std::size_t i = 0; i < g.resolution; ++i)
      detail::plane_point_into(p, g.coordinate(i), g.coordinate(j),
                               data.subspan((j * g.resolution + i) * dim, dim));
  return out;
}

/// Nearest grid index to a coordinate value (per-axis rounding is the
/// Euclidean nearest point on a separable uniform grid).
inline std::size_t nearest_grid_index(const GridSpec& g, double coord) {
  const double t = (coord + g.rho) / (1.0 + 2.0 * g.rho) * static_cast<double>(g.resolution - 1);
  const double r = std::round(t);
  return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(g.resolution - 1)));
}

/// Grid cells holding x1, x2 and x3.
inline std::array<Cell, 3> triplet_cells(const TripletPlane& p, const GridSpec& g) {
  g.validate();
  std::array<Cell, 3> cells{};
  const auto coords = p.triplet_coordinates();
  for (std::size_t t = 0; t < 3; ++t)
    cells[t] = {nearest_grid_index(g, coords[t][1]), nearest_grid_index(g, coords[t][0])};
  return cells;
}

}  // namespace frag
