// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "frag/fragmentation.hpp"

using namespace frag;

namespace {

// Output-only network: logits = x W + b.
Network linear(std::size_t dim, std::vector<float> w, std::vector<float> b) {
  const std::size_t k = b.size();
  Network net;
  net.input_shape = {dim};
  net.classes = k;
  net.layers.push_back({LayerKind::DenseOutput, Tensor({dim, k}, std::move(w)), Tensor({k}, std::move(b))});
  net.validate();
  return net;
}

Network constant_output(std::size_t dim, std::size_t classes, std::uint32_t winner) {
  Network net = make_mlp(dim, {6, 5}, classes, 4);
  for (auto& l : net.layers) {
    for (float& v : l.weight.data()) v = 0;
    for (float& v : l.bias.data()) v = 0;
  }
  net.layers.back().bias[winner] = 1;
  return net;
}

Dataset toy() {
  ToyDatasetSpec spec;
  spec.input_shape = {6};
  spec.per_class = 15;
  spec.seed = 3;
  return make_toy_dataset(spec);
}

MeasureOptions small_grid(std::size_t jobs = 1) {
  MeasureOptions opt;
  opt.grid = {16, 0.0};
  opt.jobs = jobs;
  return opt;
}

}  // namespace

TEST(LabelGrid, ConstantOutputNetIsOneClass) {
  const Network net = constant_output(3, 3, 2);
  const auto plane = build_triplet_plane(Tensor::vector({0, 0, 0}), Tensor::vector({1, 2, 0}),
                                         Tensor::vector({0, 1, 1}), 0);
  const auto g = label_grid(net, plane, {});
  for (auto c : g.classes) ASSERT_EQ(c, 2u);
}

TEST(LabelGrid, LinearBoundarySplitsThePlaneInHalves) {
  // logits (x0, -x0): class 0 where x0 > 0. Along the plane x0 = -1 + 2 alpha.
  const Network net = linear(2, {1, -1, 0, 0}, {0, 0});
  const auto plane = build_triplet_plane(Tensor::vector({-1, 0}), Tensor::vector({1, 0}),
                                         Tensor::vector({-1, 1}), 0);
  const GridSpec spec{50, 0.0};
  const auto g = label_grid(net, plane, spec, 1);
  for (std::size_t r = 0; r < 50; ++r)
    for (std::size_t c = 0; c < 50; ++c) ASSERT_EQ(g.at(r, c), spec.coordinate(c) < 0.5 ? 1u : 0u);
  EXPECT_EQ(g.triplet_predictions, (std::array<std::uint32_t, 3>{1, 0, 1}));
  const auto regions = count_regions(g);
  EXPECT_EQ(regions.count(), 2u);
  const auto cov = coverage_metrics(regions, g);
  EXPECT_DOUBLE_EQ(cov.frc, 0.0);
  EXPECT_DOUBLE_EQ(cov.fcc, 0.5);
}

TEST(LabelGrid, InputLayerEqualsFullForwardOfPlanePoints) {
  const Network net = make_mlp(4, {8, 8}, 3, 12);
  const auto plane = build_triplet_plane(Tensor::vector({0.1f, 0.5f, -1, 2}), Tensor::vector({1, -2, 0, 0.3f}),
                                         Tensor::vector({0, 1, 1, -1}), 0, 0.2);
  const GridSpec spec{20, 0.2};
  const auto g = label_grid(net, plane, spec);
  for (const auto& p : sample_grid(plane, spec))
    ASSERT_EQ(g.at(p.cell.row, p.cell.col), argmax(forward(net, p.point)));
}

TEST(LabelGrid, HiddenLayerPlaneUsesTruncatedNetwork) {
  const Network net = make_mlp(6, {10, 8}, 3, 12);
  const Dataset d = toy();
  const auto plane = build_triplet_plane(activation_at(net, d.input(d.train, 0), 1),
                                         activation_at(net, d.input(d.train, 3), 1),
                                         activation_at(net, d.input(d.train, 6), 1), 1);
  const GridSpec spec{12, 0.0};
  const auto g = label_grid(net, plane, spec);
  for (const auto& p : sample_grid(plane, spec))
    ASSERT_EQ(g.at(p.cell.row, p.cell.col), argmax(truncated_forward(net, p.point, 1)));
  // The triplet corners map back to the network's own predictions.
  EXPECT_EQ(g.triplet_predictions[0], argmax(forward(net, d.input(d.train, 0))));

  const auto wrong = build_triplet_plane(Tensor::vector({0, 0}), Tensor::vector({1, 0}), Tensor::vector({0, 1}), 1);
  EXPECT_THROW(label_grid(net, wrong, spec), ShapeMismatch);
}

TEST(MeanFragmentation, ConstantOutputNet) {
  const Dataset d = toy();
  const Network net = constant_output(6, 3, 1);
  const auto triplets = sample_triplets(d.train.labels, 3, 30, 5);
  std::size_t foreign_label = 0;
  for (const auto& t : triplets.triplets) foreign_label += t.class_id != 1;
  for (std::size_t layer = 0; layer <= net.hidden_layers(); ++layer) {
    // Zero weights collapse hidden representations to a point: every plane degenerates.
    if (layer > 0) {
      EXPECT_THROW(mean_fragmentation(net, d, triplets, layer, small_grid()), AllTripletsDegenerate);
      continue;
    }
    auto opt = small_grid();
    opt.fcc_source = FccClassSource::Prediction;
    const auto s = mean_fragmentation(net, d, triplets, layer, opt);
    EXPECT_EQ(s.mean_frag, 1.0);
    EXPECT_EQ(s.std_frag, 0.0);
    EXPECT_EQ(s.mean_frc, 0.0);
    EXPECT_EQ(s.mean_fcc, 0.0);
    const auto by_label = mean_fragmentation(net, d, triplets, layer, small_grid());
    EXPECT_DOUBLE_EQ(by_label.mean_fcc, static_cast<double>(foreign_label) / 30.0);
  }
}

TEST(MeanFragmentation, ConstantOutputWithLiveHiddenLayers) {
  const Dataset d = toy();
  Network net = make_mlp(6, {10, 8}, 3, 2);
  for (float& w : net.layers.back().weight.data()) w = 0;
  net.layers.back().bias[0] = 1;
  const auto triplets = sample_triplets(d.train.labels, 3, 20, 1);
  auto opt = small_grid();
  opt.fcc_source = FccClassSource::Prediction;
  for (const auto& row : depth_sweep(net, d, triplets, opt)) {
    EXPECT_EQ(row.stats.mean_frag, 1.0) << "layer " << row.layer;
    EXPECT_EQ(row.stats.mean_frc, 0.0);
    EXPECT_EQ(row.stats.mean_fcc, 0.0);
  }
}

TEST(MeanFragmentation, StatisticsMatchPerTripletMeasurements) {
  const Dataset d = toy();
  const Network net = make_mlp(6, {12}, 3, 9);
  const auto triplets = sample_triplets(d.train.labels, 3, 25, 8);
  const auto opt = small_grid();
  std::vector<double> r, frc, fcc;
  for (const auto& t : triplets.triplets) {
    const auto m = measure_triplet(net, d, t, 0, opt);
    ASSERT_TRUE(m.has_value());
    r.push_back(static_cast<double>(m->regions));
    frc.push_back(m->coverage.frc);
    fcc.push_back(m->coverage.fcc);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto pstd = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  const auto s = mean_fragmentation(net, d, triplets, 0, opt);
  EXPECT_EQ(s.used, 25u);
  EXPECT_EQ(s.skipped, 0u);
  EXPECT_NEAR(s.mean_frag, mean(r), 1e-12);
  EXPECT_NEAR(s.std_frag, pstd(r), 1e-12);
  EXPECT_NEAR(s.mean_frc, mean(frc), 1e-12);
  EXPECT_NEAR(s.std_frc, pstd(frc), 1e-12);
  EXPECT_NEAR(s.mean_fcc, mean(fcc), 1e-12);
  EXPECT_NEAR(s.std_fcc, pstd(fcc), 1e-12);
}

TEST(MeanFragmentation, DeterministicAndIndependentOfJobs) {
  const Dataset d = toy();
  const Network net = make_mlp(6, {12, 12}, 3, 9);
  const auto triplets = sample_triplets(d.train.labels, 3, 40, 8);
  const auto a = measurement_csv(depth_sweep(net, d, triplets, small_grid(1)));
  EXPECT_EQ(measurement_csv(depth_sweep(net, d, triplets, small_grid(1))), a);
  EXPECT_EQ(measurement_csv(depth_sweep(net, d, triplets, small_grid(3))), a);
}

TEST(MeanFragmentation, DegenerateTripletsAreSkippedAndCounted) {
  Dataset d = toy();
  // Sample 3 copies sample 0; samples 0, 6, 9 lie on a line (exactly, in float).
  const std::size_t dim = d.input_size();
  for (std::size_t i = 0; i < dim; ++i) {
    d.train.inputs[i] = 0;
    d.train.inputs[3 * dim + i] = 0;
    d.train.inputs[9 * dim + i] = 2 * d.train.inputs[6 * dim + i];
  }
  ASSERT_EQ(d.train.labels[0], d.train.labels[3]);
  ASSERT_EQ(d.train.labels[0], d.train.labels[6]);
  ASSERT_EQ(d.train.labels[0], d.train.labels[9]);
  const std::uint32_t c = d.train.labels[0];
  TripletSet set;
  set.triplets = {{c, {0, 3, 6}}, {c, {0, 6, 9}}, {c, {0, 6, 12}}};
  const Network net = make_mlp(6, {12}, 3, 9);
  const auto s = mean_fragmentation(net, d, set, 0, small_grid());
  EXPECT_EQ(s.used, 1u);
  EXPECT_EQ(s.skipped, 2u);
  set.triplets.pop_back();
  EXPECT_THROW(mean_fragmentation(net, d, set, 0, small_grid()), AllTripletsDegenerate);
}

TEST(MeanFragmentation, RejectsBadArguments) {
  const Dataset d = toy();
  const Network net = make_mlp(6, {12}, 3, 9);
  const auto triplets = sample_triplets(d.train.labels, 3, 4, 8);
  EXPECT_THROW(mean_fragmentation(net, d, triplets, 2, small_grid()), LayerOutOfRange);
  TripletSet bad;
  bad.triplets = {{0, {0, 1, 999}}};
  EXPECT_THROW(mean_fragmentation(net, d, bad, 0, small_grid()), InvalidArgument);
  auto opt = small_grid();
  opt.grid.resolution = 1;
  EXPECT_THROW(mean_fragmentation(net, d, triplets, 0, opt), InvalidArgument);
}

TEST(Sweeps, RowCountsAndTripletCounts) {
  const Dataset d = toy();
  Network net = make_mlp(6, {12}, 3, 9);
  net.metadata["model_id"] = "m1";
  const auto triplets = sample_triplets(d.train.labels, 3, 10, 8);
  const auto depth = depth_sweep(net, d, triplets, small_grid());
  ASSERT_EQ(depth.size(), 2u);
  EXPECT_EQ(depth[0].layer, 0u);
  EXPECT_EQ(depth[1].layer, 1u);
  for (const auto& row : depth) EXPECT_EQ(row.stats.used + row.stats.skipped, 10u);

  const auto trained = training_sweep({{0, net}, {5, net}}, d, triplets, 1, small_grid());
  ASSERT_EQ(trained.size(), 2u);
  EXPECT_EQ(trained[1].epoch, "5");
  EXPECT_EQ(trained[1].model_id, "m1");
  EXPECT_EQ(trained[0].stats.mean_frag, depth[1].stats.mean_frag);
}

TEST(MeasurementCsv, Format) {
  MeasurementRow row{"mlp-w4-s0-corrupt", 2, "500", {}};
  row.stats.mean_frag = 3.25;
  row.stats.std_frag = 1.0 / 3.0;
  row.stats.mean_fcc = -0.0;
  row.stats.skipped = 4;
  EXPECT_EQ(measurement_csv({row}),
            "model_id,layer,epoch,mean_frag,std_frag,mean_frc,std_frc,mean_fcc,std_fcc,skipped_triplets\n"
            "mlp-w4-s0-corrupt,2,500,3.250000,0.333333,0.000000,0.000000,0.000000,0.000000,4\n");
}
