// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frag/csv.hpp"
#include "frag/dataset.hpp"
#include "frag/network.hpp"
#include "frag/parallel.hpp"
#include "frag/plane.hpp"
#include "frag/regions.hpp"
#include "frag/triplets.hpp"

namespace frag {

struct MeasureOptions {
  GridSpec grid;
  Connectivity connectivity = Connectivity::Four;
  FccClassSource fcc_source = FccClassSource::Label;
  std::size_t jobs = 1;
};

/// Classifies every grid point of `plane` with the network truncated at
/// the plane's layer. `label` is the triplet's ground-truth class.
inline ClassGrid label_grid(const Network& net, const TripletPlane& plane, const GridSpec& spec,
                            std::uint32_t label = 0) {
  if (plane.dim() != net.representation_size(plane.layer))
    throw ShapeMismatch("plane dimension " + std::to_string(plane.dim()) +
                        " does not match layer " + std::to_string(plane.layer) + " of the network");
  ClassGrid g;
  g.size = spec.resolution;
  g.classes = classify_batch(net, grid_matrix(plane, spec), plane.layer);
  g.triplet_cells = triplet_cells(plane, spec);
  g.triplet_label = label;

  const std::size_t dim = plane.dim();
  Tensor corners({3, dim});
  for (std::size_t i = 0; i < dim; ++i) {
    corners.at(0, i) = plane.base[i];
    corners.at(1, i) = plane.base[i] + plane.v1[i];
    corners.at(2, i) = plane.base[i] + plane.v2[i];
  }
  const auto pred = classify_batch(net, corners, plane.layer);
  g.triplet_predictions = {pred[0], pred[1], pred[2]};
  return g;
}

struct PlaneMeasurement {
  std::size_t regions = 0;
  Coverage coverage;
};

/// Fragmentation, FRC and FCC of one triplet plane at `layer`; nullopt when
/// the triplet's layer representations do not span a plane.
inline std::optional<PlaneMeasurement> measure_triplet(const Network& net, const Dataset& data,
                                                       const Triplet& t, std::size_t layer,
                                                       const MeasureOptions& opt) {
  std::array<Tensor, 3> pts;
  for (std::size_t i = 0; i < 3; ++i) {
    if (t.index[i] >= data.train.size())
      throw InvalidArgument("triplet index " + std::to_string(t.index[i]) + " outside the training split");
    pts[i] = activation_at(net, data.input(data.train, t.index[i]), layer).flattened();
  }
  TripletPlane plane;
  try {
    plane = build_triplet_plane(pts[0], pts[1], pts[2], layer, opt.grid.rho);
  } catch (const DegeneratePlane&) {
    return std::nullopt;
  }
  const ClassGrid grid = label_grid(net, plane, opt.grid, t.class_id);
  const RegionLabeling regions = count_regions(grid, opt.connectivity);
  return PlaneMeasurement{regions.count(), coverage_metrics(regions, grid, opt.fcc_source)};
}

/// Mean and population standard deviation over non-degenerate triplets.
struct FragmentationStats {
  double mean_frag = 0.0, std_frag = 0.0;
  double mean_frc = 0.0, std_frc = 0.0;
  double mean_fcc = 0.0, std_fcc = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

inline FragmentationStats mean_fragmentation(const Network& net, const Dataset& data,
                                             const TripletSet& triplets, std::size_t layer,
                                             const MeasureOptions& opt) {
  opt.grid.validate();
  if (layer > net.hidden_layers())
    throw LayerOutOfRange("layer " + std::to_string(layer) + " exceeds " + std::to_string(net.hidden_layers()));
  std::vector<std::optional<PlaneMeasurement>> results(triplets.triplets.size());
  parallel_for(results.size(), opt.jobs, [&](std::size_t i) {
    results[i] = measure_triplet(net, data, triplets.triplets[i], layer, opt);
  });

  // Reduced in triplet-file order; two passes for the deviation.
  FragmentationStats s;
  std::vector<std::array<double, 3>> values;
  for (const auto& r : results) {
    if (!r) {
      ++s.skipped;
      continue;
    }
    values.push_back({static_cast<double>(r->regions), r->coverage.frc, r->coverage.fcc});
  }
  s.used = values.size();
  if (s.used == 0) throw AllTripletsDegenerate("every triplet is degenerate at layer " + std::to_string(layer));
  const double n = static_cast<double>(s.used);
  double mean[3] = {0, 0, 0}, sd[3] = {0, 0, 0};
  for (const auto& v : values)
    for (int k = 0; k < 3; ++k) mean[k] += v[k];
  for (double& m : mean) m /= n;
  for (const auto& v : values)
    for (int k = 0; k < 3; ++k) sd[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
  for (double& x : sd) x = std::sqrt(x / n);
  s.mean_frag = mean[0];
  s.std_frag = sd[0];
  s.mean_frc = mean[1];
  s.std_frc = sd[1];
  s.mean_fcc = mean[2];
  s.std_fcc = sd[2];
  return s;
}

/// One measurement CSV row.
struct MeasurementRow {
  std::string model_id;
  std::size_t layer = 0;
  std::string epoch;  // empty when unknown
  FragmentationStats stats;
};

inline std::string measurement_csv_header() {
  return "model_id,layer,epoch,mean_frag,std_frag,mean_frc,std_frc,mean_fcc,std_fcc,skipped_triplets\n";
}

inline std::string measurement_csv_row(const MeasurementRow& r) {
  const auto& s = r.stats;
  return r.model_id + "," + std::to_string(r.layer) + "," + r.epoch + "," + format_fixed(s.mean_frag) + "," +
         format_fixed(s.std_frag) + "," + format_fixed(s.mean_frc) + "," + format_fixed(s.std_frc) + "," +
         format_fixed(s.mean_fcc) + "," + format_fixed(s.std_fcc) + "," + std::to_string(s.skipped) + "\n";
}

inline std::string measurement_csv(const std::vector<MeasurementRow>& rows) {
  std::string out = measurement_csv_header();
  for (const auto& r : rows) out += measurement_csv_row(r);
  return out;
}

inline std::string model_id_of(const Network& net) {
  const auto it = net.metadata.find("model_id");
  return it == net.metadata.end() ? std::string("model") : it->second;
}

inline std::string epoch_of(const Network& net) {
  if (auto it = net.metadata.find("epoch"); it != net.metadata.end()) return it->second;
  if (auto it = net.metadata.find("epochs"); it != net.metadata.end()) return it->second;
  return {};
}

/// Mean fragmentation at every layer 0..L.
inline std::vector<MeasurementRow> depth_sweep(const Network& net, const Dataset& data,
                                               const TripletSet& triplets, const MeasureOptions& opt) {
  std::vector<MeasurementRow> rows;
  for (std::size_t layer = 0; layer <= net.hidden_layers(); ++layer)
    rows.push_back({model_id_of(net), layer, epoch_of(net), mean_fragmentation(net, data, triplets, layer, opt)});
  return rows;
}

/// Mean fragmentation of a sequence of (epoch, checkpoint) pairs at one layer.
inline std::vector<MeasurementRow> training_sweep(const std::vector<std::pair<std::size_t, Network>>& checkpoints,
                                                  const Dataset& data, const TripletSet& triplets,
                                                  std::size_t layer, const MeasureOptions& opt) {
  std::vector<MeasurementRow> rows;
  for (const auto& [epoch, net] : checkpoints)
    rows.push_back({model_id_of(net), layer, std::to_string(epoch), mean_fragmentation(net, data, triplets, layer, opt)});
  return rows;
}

}  // namespace frag
