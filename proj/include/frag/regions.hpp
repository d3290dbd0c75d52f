// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "frag/error.hpp"
#include "frag/plane.hpp"

namespace frag {

enum class Connectivity { Four = 4, Eight = 8 };

/// Which classes count as "the triplet's" classes for foreign-class coverage.
enum class FccClassSource {
  Label,       // the shared ground-truth label of the triplet
  Prediction,  // the predicted classes of the three triplet points
};

/// G x G predicted classes, row-major (row = beta index, col = alpha index).
struct ClassGrid {
  std::size_t size = 0;
  std::vector<std::uint32_t> classes;
  std::array<Cell, 3> triplet_cells{};
  std::uint32_t triplet_label = 0;
  std::array<std::uint32_t, 3> triplet_predictions{};

  std::uint32_t at(std::size_t row, std::size_t col) const { return classes[row * size + col]; }

  void validate() const {
    if (size == 0 || classes.size() != size * size) throw ShapeMismatch("class grid must be G x G");
    for (const Cell& c : triplet_cells)
      if (c.row >= size || c.col >= size) throw ShapeMismatch("triplet cell outside the grid");
  }
};

struct Region {
  std::uint32_t class_id = 0;
  std::size_t cells = 0;
  bool contains_triplet_point = false;
};

/// Maximal connected same-class components of a ClassGrid. Region ids are
/// dense, numbered in row-major order of each region's first cell.
struct RegionLabeling {
  std::size_t size = 0;
  std::vector<std::uint32_t> region_of;
  std::vector<Region> regions;

  std::size_t count() const noexcept { return regions.size(); }
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b)
      parent_[b] = a;
    else
      parent_[a] = b;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

}  // namespace detail

/// Two-pass connected-component labeling with union-find.
///
/// Pass one scans row-major, merging each cell with its already-visited
/// same-class neighbors (left and up; plus up-left and up-right under
/// 8-connectivity). Pass two resolves every cell to its root and assigns
/// dense ids.
inline RegionLabeling count_regions(const ClassGrid& g, Connectivity conn = Connectivity::Four) {
  g.validate();
  const std::size_t n = g.size;
  detail::UnionFind uf(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const auto idx = static_cast<std::uint32_t>(r * n + c);
      const std::uint32_t cls = g.classes[idx];
      if (c > 0 && g.classes[idx - 1] == cls) uf.unite(idx, idx - 1);
      if (r > 0 && g.classes[idx - n] == cls) uf.unite(idx, static_cast<std::uint32_t>(idx - n));
      if (conn == Connectivity::Eight && r > 0) {
        if (c > 0 && g.classes[idx - n - 1] == cls) uf.unite(idx, static_cast<std::uint32_t>(idx - n - 1));
        if (c + 1 < n && g.classes[idx - n + 1] == cls)
          uf.unite(idx, static_cast<std::uint32_t>(idx - n + 1));
      }
    }

  RegionLabeling out;
  out.size = n;
  out.region_of.assign(n * n, 0);
  constexpr auto unassigned = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> id_of_root(n * n, unassigned);
  for (std::uint32_t idx = 0; idx < n * n; ++idx) {
    const std::uint32_t root = uf.find(idx);
    if (id_of_root[root] == unassigned) {
      id_of_root[root] = static_cast<std::uint32_t>(out.regions.size());
      out.regions.push_back({g.classes[idx], 0, false});
    }
    const std::uint32_t id = id_of_root[root];
    out.region_of[idx] = id;
    ++out.regions[id].cells;
  }
  for (const Cell& c : g.triplet_cells) out.regions[out.region_of[c.row * n + c.col]].contains_triplet_point = true;
  return out;
}

struct Coverage {
  double frc = 0.0;  // foreign-region coverage
  double fcc = 0.0;  // foreign-class coverage
};

/// Foreign-region coverage: area of regions holding none of the triplet
/// cells. Foreign-class coverage: area of regions whose class is not a
/// triplet class. Both are fractions of the G*G cells.
inline Coverage coverage_metrics(const RegionLabeling& r, const ClassGrid& g,
                                 FccClassSource source = FccClassSource::Label) {
  if (r.size != g.size) throw ShapeMismatch("region labeling and class grid differ in size");
  std::vector<std::uint32_t> own;
  if (source == FccClassSource::Label)
    own = {g.triplet_label};
  else
    own.assign(g.triplet_predictions.begin(), g.triplet_predictions.end());
  std::size_t foreign_region = 0, foreign_class = 0;
  for (const Region& reg : r.regions) {
    if (!reg.contains_triplet_point) foreign_region += reg.cells;
    if (std::find(own.begin(), own.end(), reg.class_id) == own.end()) foreign_class += reg.cells;
  }
  const auto total = static_cast<double>(g.size * g.size);
  return {static_cast<double>(foreign_region) / total, static_cast<double>(foreign_class) / total};
}

}  // namespace frag
