// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "frag/csv.hpp"
#include "frag/error.hpp"

namespace frag {

namespace detail {

// Counts pairs tied within each run of equal keys, sum t(t-1)/2.
template <typename Eq>
std::int64_t tied_pairs(std::span<const std::size_t> order, Eq&& equal) {
  std::int64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= order.size(); ++i) {
    if (i < order.size() && equal(order[i - 1], order[i])) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Stable merge sort of `idx` by key, returning the number of inversions.
inline std::int64_t sort_count_inversions(std::vector<std::size_t>& idx, std::span<const double> key) {
  std::vector<std::size_t> buf(idx.size());
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < idx.size(); width *= 2) {
    for (std::size_t lo = 0; lo < idx.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, idx.size()), hi = std::min(lo + 2 * width, idx.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (key[idx[j]] < key[idx[i]]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buf[k++] = idx[j++];
        } else {
          buf[k++] = idx[i++];
        }
      }
      while (i < mid) buf[k++] = idx[i++];
      while (j < hi) buf[k++] = idx[j++];
    }
    idx.swap(buf);
  }
  return swaps;
}

}  // namespace detail

/// Pair counts behind Kendall's tau-b.
struct KendallCounts {
  std::int64_t pairs = 0;      // n(n-1)/2
  std::int64_t ties_x = 0;     // pairs tied in the measure
  std::int64_t ties_y = 0;     // pairs tied in the gap
  std::int64_t ties_xy = 0;    // pairs tied in both
  std::int64_t discordant = 0;

  std::int64_t score() const noexcept { return pairs - ties_x - ties_y + ties_xy - 2 * discordant; }
};

/// Knight's O(n log n) pair counting.
inline KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeMismatch("kendall_tau: sequences differ in length");
  if (x.size() < 2) throw DegenerateInput("kendall_tau needs at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::isnan(x[i]) || std::isnan(y[i])) throw InvalidArgument("kendall_tau: NaN input");
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  KendallCounts c;
  c.pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  c.ties_x = detail::tied_pairs(idx, [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  c.ties_xy = detail::tied_pairs(idx, [&](std::size_t a, std::size_t b) { return x[a] == x[b] && y[a] == y[b]; });
  c.discordant = detail::sort_count_inversions(idx, y);
  c.ties_y = detail::tied_pairs(idx, [&](std::size_t a, std::size_t b) { return y[a] == y[b]; });
  return c;
}

/// Kendall's tau-b between a complexity measure and the generalization gap.
/// Positive when larger measure values go with larger gaps.
inline double kendall_tau(std::span<const double> measure, std::span<const double> gap) {
  const KendallCounts c = kendall_counts(measure, gap);
  const std::int64_t dx = c.pairs - c.ties_x, dy = c.pairs - c.ties_y;
  if (dx == 0 || dy == 0) throw DegenerateInput("kendall_tau: all values tied in one sequence");
  return static_cast<double>(c.score()) / std::sqrt(static_cast<double>(dx) * static_cast<double>(dy));
}

// ---------------------------------------------------------------------------

struct ModelRecord {
  std::string model_id;
  std::vector<std::string> hyperparameters;  // aligned with MeasurementTable::hyperparameter_names
  double generalization_gap = 0.0;
  std::vector<double> measures;  // aligned with MeasurementTable::measure_names
};

struct MeasurementTable {
  std::vector<std::string> hyperparameter_names;
  std::vector<std::string> measure_names;
  std::vector<ModelRecord> rows;

  void validate() const {
    if (rows.size() < 2) throw DegenerateInput("measurement table needs at least two models");
    std::set<std::string> ids;
    for (const auto& r : rows) {
      if (!ids.insert(r.model_id).second) throw FormatError("duplicate model_id '" + r.model_id + "'");
      if (r.hyperparameters.size() != hyperparameter_names.size() || r.measures.size() != measure_names.size())
        throw FormatError("row '" + r.model_id + "' does not match the table columns");
    }
  }

  std::size_t measure_index(const std::string& name) const {
    for (std::size_t i = 0; i < measure_names.size(); ++i)
      if (measure_names[i] == name) return i;
    throw InvalidArgument("unknown measure '" + name + "'");
  }

  std::vector<double> measure(const std::string& name) const {
    const std::size_t k = measure_index(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.measures[k]);
    return out;
  }

  std::vector<double> gaps() const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.generalization_gap);
    return out;
  }
};

enum class CmiNormalization {
  ConditionalEntropy,  // I(Vm; Vg | S) / H(Vg | S), scaled to [0, 100]
  None,                // I(Vm; Vg | S) in bits, times 100
};

enum class CmiAggregation { Min, Mean };

/// Settings of the conditional mutual information score. The pair
/// variables are always the binary signs 1[m(A) > m(B)] and 1[g(A) > g(B)].
struct CmiOptions {
  std::size_t max_subset_size = 2;
  CmiNormalization normalization = CmiNormalization::ConditionalEntropy;
  CmiAggregation aggregation = CmiAggregation::Min;
  std::size_t min_cell_pairs = 2;
};

struct CmiResult {
  double score = 0.0;
  std::size_t pairs_used = 0;              // untied pairs
  std::vector<std::string> worst_subset;   // hyperparameters of the minimizing subset
  std::size_t subsets_evaluated = 0;
};

namespace detail {

inline void enumerate_subsets(std::size_t n, std::size_t max_size, std::vector<std::size_t>& current,
                              std::size_t start, std::vector<std::vector<std::size_t>>& out) {
  out.push_back(current);
  if (current.size() == max_size) return;
  for (std::size_t i = start; i < n; ++i) {
    current.push_back(i);
    enumerate_subsets(n, max_size, current, i + 1, out);
    current.pop_back();
  }
}

inline double xlogx_ratio(double joint, double a, double b) {
  return joint > 0.0 ? joint * std::log2(joint / (a * b)) : 0.0;
}

inline double entropy2(double p) {
  double h = 0.0;
  for (double q : {p, 1.0 - p})
    if (q > 0.0) h -= q * std::log2(q);
  return h;
}

}  // namespace detail

/// Conditional mutual information between the pairwise ordering of a
/// measure and of the generalization gap.
///
/// Every unordered pair of models with no tie in either value yields two
/// bits (Vm, Vg). For each subset S of hyperparameters (|S| up to
/// max_subset_size, the empty set included) pairs are grouped by the
/// unordered pair of the two models' S-assignments; within a group the
/// model with the smaller assignment comes first. On equal assignments
/// there is no preferred order, so the pair counts half in each
/// orientation (the same as counting ordered pairs). Groups with fewer than
/// min_cell_pairs pairs are dropped. The score for S is 100 * I(Vm; Vg | group) / H(Vg | group),
/// and 0 when H(Vg | group) vanishes. The result aggregates over subsets.
inline CmiResult cmi_score(const MeasurementTable& t, const std::string& measure_name,
                           const CmiOptions& opt = {}) {
  t.validate();
  const std::vector<double> mu = t.measure(measure_name);
  const std::vector<double> g = t.gaps();
  const std::size_t n = t.rows.size();
  struct Pair {
    std::size_t a, b;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (mu[i] != mu[j] && g[i] != g[j]) pairs.push_back({i, j});

  std::vector<std::vector<std::size_t>> subsets;
  std::vector<std::size_t> scratch;
  detail::enumerate_subsets(t.hyperparameter_names.size(),
                            std::min(opt.max_subset_size, t.hyperparameter_names.size()), scratch, 0, subsets);

  CmiResult result;
  result.pairs_used = pairs.size();
  double best = std::numeric_limits<double>::infinity(), total = 0.0;
  for (const auto& subset : subsets) {
    auto assignment = [&](std::size_t row) {
      std::vector<std::string> v;
      for (std::size_t h : subset) v.push_back(t.rows[row].hyperparameters[h]);
      return v;
    };
    std::map<std::pair<std::vector<std::string>, std::vector<std::string>>, std::array<double, 4>> cells;
    for (const Pair& p : pairs) {
      auto sa = assignment(p.a), sb = assignment(p.b);
      std::size_t first = p.a, second = p.b;
      if (sb < sa) {
        std::swap(sa, sb);
        std::swap(first, second);
      }
      const int vm = mu[first] > mu[second] ? 1 : 0;
      const int vg = g[first] > g[second] ? 1 : 0;
      const bool symmetric = sa == sb;
      auto& c = cells[{std::move(sa), std::move(sb)}];
      if (symmetric) {
        c[static_cast<std::size_t>(vm * 2 + vg)] += 0.5;
        c[static_cast<std::size_t>((1 - vm) * 2 + (1 - vg))] += 0.5;
      } else {
        c[static_cast<std::size_t>(vm * 2 + vg)] += 1.0;
      }
    }
    double kept = 0.0, mi = 0.0, hg = 0.0;
    for (const auto& [key, c] : cells) {
      const double cnt = c[0] + c[1] + c[2] + c[3];
      if (cnt < static_cast<double>(opt.min_cell_pairs)) continue;
      kept += cnt;
      const double pm1 = (c[2] + c[3]) / cnt, pg1 = (c[1] + c[3]) / cnt;
      double cell_mi = 0.0;
      for (int vm = 0; vm < 2; ++vm)
        for (int vg = 0; vg < 2; ++vg)
          cell_mi += detail::xlogx_ratio(c[static_cast<std::size_t>(vm * 2 + vg)] / cnt, vm ? pm1 : 1.0 - pm1,
                                         vg ? pg1 : 1.0 - pg1);
      mi += cnt * cell_mi;
      hg += cnt * detail::entropy2(pg1);
    }
    if (kept == 0.0) continue;
    mi /= kept;
    hg /= kept;
    double score = 0.0;
    if (opt.normalization == CmiNormalization::ConditionalEntropy)
      score = hg > 0.0 ? 100.0 * std::clamp(mi / hg, 0.0, 1.0) : 0.0;
    else
      score = 100.0 * std::max(mi, 0.0);
    ++result.subsets_evaluated;
    total += score;
    if (score < best) {
      best = score;
      result.worst_subset.clear();
      for (std::size_t h : subset) result.worst_subset.push_back(t.hyperparameter_names[h]);
    }
  }
  if (result.subsets_evaluated == 0)
    throw DegenerateInput("cmi_score: every conditioning cell has fewer than " +
                          std::to_string(opt.min_cell_pairs) + " usable pairs");
  result.score = opt.aggregation == CmiAggregation::Min ? best
                                                        : total / static_cast<double>(result.subsets_evaluated);
  return result;
}

struct RankRow {
  std::string measure;
  double tau = 0.0;
  double cmi = 0.0;
  std::size_t n_models = 0;
  std::size_t n_pairs_used = 0;
};

/// Kendall tau and CMI for every measure, in table column order.
inline std::vector<RankRow> rank_report(const MeasurementTable& t, const CmiOptions& opt = {}) {
  t.validate();
  std::vector<RankRow> out;
  const auto gaps = t.gaps();
  for (const auto& name : t.measure_names) {
    const auto m = t.measure(name);
    const CmiResult cmi = cmi_score(t, name, opt);
    out.push_back({name, kendall_tau(m, gaps), cmi.score, t.rows.size(), cmi.pairs_used});
  }
  return out;
}

inline std::string rank_report_csv(const std::vector<RankRow>& rows) {
  std::string s = "measure,tau,cmi,n_models,n_pairs_used\n";
  for (const auto& r : rows)
    s += r.measure + "," + format_fixed(r.tau) + "," + format_fixed(r.cmi, 4) + "," + std::to_string(r.n_models) +
         "," + std::to_string(r.n_pairs_used) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Table construction

/// Generic table CSV: `model_id`, `generalization_gap`, hyperparameter
/// columns prefixed `hp_`, and every other column a numeric measure.
inline MeasurementTable load_measurement_table(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  MeasurementTable t;
  const std::size_t id_col = csv.column("model_id"), gap_col = csv.column("generalization_gap");
  std::vector<std::size_t> hp_cols, m_cols;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (c == id_col || c == gap_col) continue;
    if (csv.header[c].rfind("hp_", 0) == 0) {
      hp_cols.push_back(c);
      t.hyperparameter_names.push_back(csv.header[c].substr(3));
    } else {
      m_cols.push_back(c);
      t.measure_names.push_back(csv.header[c]);
    }
  }
  for (const auto& row : csv.rows) {
    ModelRecord r;
    r.model_id = row[id_col];
    r.generalization_gap = parse_double(row[gap_col]);
    for (auto c : hp_cols) r.hyperparameters.push_back(row[c]);
    for (auto c : m_cols) r.measures.push_back(parse_double(row[c]));
    t.rows.push_back(std::move(r));
  }
  t.validate();
  return t;
}

/// Joins a measurement CSV (rows at `layer`, one per model) with a models
/// CSV carrying `model_id`, `train_acc`, `test_acc` and hyperparameter
/// columns. The gap is train_acc - test_acc. When `hyperparameters` is
/// empty every models-CSV column other than the id and accuracies is used.
inline MeasurementTable join_measurements(const CsvTable& measurements, const CsvTable& models,
                                          std::size_t layer,
                                          std::vector<std::string> hyperparameters = {}) {
  static const std::set<std::string> reserved = {"model_id", "train_acc", "val_acc", "test_acc",
                                                 "generalization_gap"};
  if (hyperparameters.empty())
    for (const auto& h : models.header)
      if (!reserved.count(h)) hyperparameters.push_back(h);

  struct Measured {
    double frag, frc, fcc;
  };
  std::map<std::string, Measured> by_model;
  const std::size_t mid = measurements.column("model_id"), lcol = measurements.column("layer");
  const std::size_t fcol = measurements.column("mean_frag"), rcol = measurements.column("mean_frc"),
                    ccol = measurements.column("mean_fcc");
  for (const auto& row : measurements.rows) {
    if (parse_size(row[lcol]) != layer) continue;
    const Measured m{parse_double(row[fcol]), parse_double(row[rcol]), parse_double(row[ccol])};
    if (!by_model.emplace(row[mid], m).second)
      throw FormatError("several measurement rows for model '" + row[mid] + "' at layer " + std::to_string(layer));
  }

  MeasurementTable t;
  t.hyperparameter_names = hyperparameters;
  t.measure_names = {"fragmentation", "frc", "fcc"};
  const std::size_t id = models.column("model_id"), tr = models.column("train_acc"), te = models.column("test_acc");
  std::vector<std::size_t> hp;
  for (const auto& h : hyperparameters) hp.push_back(models.column(h));
  for (const auto& row : models.rows) {
    const auto it = by_model.find(row[id]);
    if (it == by_model.end()) continue;
    ModelRecord r;
    r.model_id = row[id];
    r.generalization_gap = parse_double(row[tr]) - parse_double(row[te]);
    for (auto c : hp) r.hyperparameters.push_back(row[c]);
    r.measures = {it->second.frag, it->second.frc, it->second.fcc};
    t.rows.push_back(std::move(r));
  }
  t.validate();
  return t;
}

}  // namespace frag
