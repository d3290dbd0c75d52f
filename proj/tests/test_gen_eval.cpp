// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "frag/gen_eval.hpp"
#include "oracles.hpp"

using namespace frag;

namespace {

// Two binary hyperparameter axes, two models per combination. The expected
// scores come from tests/cmi_hand_oracle.py (ordered-pair counting).
MeasurementTable hand_table() {
  MeasurementTable t;
  t.hyperparameter_names = {"lr", "depth"};
  t.measure_names = {"m"};
  const struct {
    const char *id, *lr, *depth;
    double gap, m;
  } rows[] = {{"m0", "a", "1", 0.10, 3.0}, {"m1", "a", "1", 0.30, 5.0}, {"m2", "a", "2", 0.20, 4.5},
              {"m3", "a", "2", 0.05, 1.0}, {"m4", "b", "1", 0.40, 2.0}, {"m5", "b", "1", 0.25, 6.0},
              {"m6", "b", "2", 0.15, 2.5}, {"m7", "b", "2", 0.35, 7.0}};
  for (const auto& r : rows) t.rows.push_back({r.id, {r.lr, r.depth}, r.gap, {r.m}});
  return t;
}

constexpr double kHandEmpty = 13.687943143336897;
constexpr double kHandLr = 29.990692813230574;
constexpr double kHandDepth = 35.69523236608678;
constexpr double kHandBoth = 58.36885465963446;

MeasurementTable random_table(std::size_t n, std::mt19937_64& rng, bool linked) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MeasurementTable t;
  t.hyperparameter_names = {"width", "seed"};
  t.measure_names = {"m"};
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = u(rng);
    t.rows.push_back({"r" + std::to_string(i),
                      {std::to_string(i % 4), std::to_string(i / 4 % 2)},
                      gap,
                      {linked ? gap : u(rng)}});
  }
  return t;
}

}  // namespace

TEST(KendallTau, HandExamples) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(kendall_tau(a, a), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(a, std::vector<double>{4, 3, 2, 1}), -1.0);
  EXPECT_NEAR(kendall_tau(a, std::vector<double>{1, 3, 2, 4}), 4.0 / 6.0, 1e-15);
  const auto t = hand_table();
  EXPECT_NEAR(kendall_tau(t.measure("m"), t.gaps()), 12.0 / 28.0, 1e-15);
}

TEST(KendallTau, MatchesPairEnumerationWithTies) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + rng() % 60;
    const int levels = 1 + static_cast<int>(rng() % 8);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % static_cast<std::uint64_t>(levels));
      y[i] = static_cast<double>(rng() % 10) - 0.5 * x[i];
    }
    const double expected = oracle::kendall_tau_pairs(x, y);
    if (std::isnan(expected)) {
      EXPECT_THROW(kendall_tau(x, y), DegenerateInput);
      continue;
    }
    ASSERT_NEAR(kendall_tau(x, y), expected, 1e-12) << "rep " << rep;
  }
}

TEST(KendallTau, AntisymmetricAndMonotoneInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(40), y(40);
    for (auto& v : x) v = gauss(rng);
    for (auto& v : y) v = gauss(rng);
    const double tau = kendall_tau(x, y);
    std::vector<double> neg(x), cubed(x), expy(y);
    for (auto& v : neg) v = -v;
    for (auto& v : cubed) v = v * v * v + 3;
    for (auto& v : expy) v = std::exp(v);
    EXPECT_DOUBLE_EQ(kendall_tau(neg, y), -tau);
    EXPECT_DOUBLE_EQ(kendall_tau(cubed, expy), tau);
    EXPECT_GE(tau, -1.0);
    EXPECT_LE(tau, 1.0);
  }
}

TEST(KendallTau, Errors) {
  EXPECT_THROW(kendall_tau(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInput);
  EXPECT_THROW(kendall_tau(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ShapeMismatch);
  EXPECT_THROW(kendall_tau(std::vector<double>{1}, std::vector<double>{1}), DegenerateInput);
  EXPECT_THROW(kendall_tau(std::vector<double>{1, NAN}, std::vector<double>{1, 2}), InvalidArgument);
}

TEST(Cmi, IdenticalOrderingScoresHundred) {
  MeasurementTable t;
  t.hyperparameter_names = {"arch"};
  t.measure_names = {"m"};
  // Gaps increase with row order: no orientation may depend on it.
  for (int i = 0; i < 6; ++i) t.rows.push_back({"r" + std::to_string(i), {"mlp"}, 0.1 * i, {0.1 * i}});
  const auto r = cmi_score(t, "m");
  EXPECT_DOUBLE_EQ(r.score, 100.0);
  EXPECT_EQ(r.pairs_used, 15u);
  EXPECT_EQ(r.subsets_evaluated, 2u);
}

TEST(Cmi, HandTableMatchesCountOracle) {
  const auto t = hand_table();
  const auto r = cmi_score(t, "m");
  EXPECT_NEAR(r.score, kHandEmpty, 1e-9);
  EXPECT_TRUE(r.worst_subset.empty());
  EXPECT_EQ(r.subsets_evaluated, 4u);
  EXPECT_EQ(r.pairs_used, 28u);

  CmiOptions mean;
  mean.aggregation = CmiAggregation::Mean;
  EXPECT_NEAR(cmi_score(t, "m", mean).score, (kHandEmpty + kHandLr + kHandDepth + kHandBoth) / 4, 1e-9);
  mean.max_subset_size = 1;
  EXPECT_NEAR(cmi_score(t, "m", mean).score, (kHandEmpty + kHandLr + kHandDepth) / 3, 1e-9);
  mean.max_subset_size = 0;
  EXPECT_NEAR(cmi_score(t, "m", mean).score, kHandEmpty, 1e-9);
}

TEST(Cmi, UnnormalizedIsMutualInformationInBits) {
  const auto t = hand_table();
  CmiOptions opt;
  opt.max_subset_size = 0;
  opt.normalization = CmiNormalization::None;
  // Empty subset: every pair counts half in each orientation, so H(Vg) = 1
  // bit and the unnormalized score equals the normalized one.
  EXPECT_NEAR(cmi_score(t, "m", opt).score, kHandEmpty, 1e-9);
}

TEST(Cmi, InvariantUnderRowOrderAndMonotoneTransforms) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    auto t = random_table(16, rng, false);
    for (auto& r : t.rows) r.measures[0] = 0.7 * r.generalization_gap + 0.3 * r.measures[0];
    const double base = cmi_score(t, "m").score;
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 100.0);
    auto shuffled = t;
    std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), rng);
    EXPECT_NEAR(cmi_score(shuffled, "m").score, base, 1e-9);
    auto transformed = t;
    for (auto& r : transformed.rows) {
      r.measures[0] = std::exp(5 * r.measures[0]);
      r.generalization_gap = r.generalization_gap * r.generalization_gap * r.generalization_gap;
    }
    EXPECT_NEAR(cmi_score(transformed, "m").score, base, 1e-9);
  }
}

TEST(Cmi, IndependentNoiseScoresNearZero) {
  std::mt19937_64 rng(99);
  double total = 0;
  for (int rep = 0; rep < 100; ++rep) total += cmi_score(random_table(32, rng, false), "m").score;
  EXPECT_LT(total / 100, 5.0);
}

TEST(Cmi, ShuffledGapsDetachFromTheMeasure) {
  std::mt19937_64 rng(7);
  double cmi = 0, tau = 0;
  for (int rep = 0; rep < 100; ++rep) {
    auto t = random_table(32, rng, true);
    EXPECT_DOUBLE_EQ(cmi_score(t, "m").score, 100.0);
    auto g = t.gaps();
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t i = 0; i < g.size(); ++i) t.rows[i].generalization_gap = g[i];
    cmi += cmi_score(t, "m").score;
    tau += kendall_tau(t.measure("m"), t.gaps());
  }
  EXPECT_LT(cmi / 100, 5.0);
  EXPECT_LT(std::fabs(tau / 100), 0.05);
}

TEST(Cmi, TiedPairsAreDropped) {
  auto t = hand_table();
  t.rows[1].measures[0] = t.rows[0].measures[0];
  EXPECT_EQ(cmi_score(t, "m").pairs_used, 27u);
  t.rows[3].generalization_gap = t.rows[2].generalization_gap;
  EXPECT_EQ(cmi_score(t, "m").pairs_used, 26u);
}

TEST(Cmi, AllCellsTooSmallIsDegenerate) {
  CmiOptions opt;
  opt.min_cell_pairs = 100;
  EXPECT_THROW(cmi_score(hand_table(), "m", opt), DegenerateInput);
  EXPECT_THROW(cmi_score(hand_table(), "nope"), InvalidArgument);
}

TEST(RankReport, OneRowPerMeasureAndDuplicatesAgree) {
  auto t = hand_table();
  auto rows = rank_report(t);
  ASSERT_EQ(rows.size(), 1u);
  t.measure_names.push_back("m_copy");
  for (auto& r : t.rows) r.measures.push_back(r.measures[0]);
  rows = rank_report(t);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].tau, rows[1].tau);
  EXPECT_EQ(rows[0].cmi, rows[1].cmi);
  EXPECT_EQ(rank_report_csv(rows),
            "measure,tau,cmi,n_models,n_pairs_used\n"
            "m,0.428571,13.6879,8,28\n"
            "m_copy,0.428571,13.6879,8,28\n");
}

TEST(MeasurementTable, ValidatesRows) {
  auto t = hand_table();
  t.rows[1].model_id = "m0";
  EXPECT_THROW(t.validate(), FormatError);
  t = hand_table();
  t.rows.resize(1);
  EXPECT_THROW(t.validate(), DegenerateInput);
  t = hand_table();
  t.rows[2].measures.clear();
  EXPECT_THROW(t.validate(), FormatError);
}

TEST(MeasurementTable, LoadGenericCsv) {
  const auto path = std::filesystem::temp_directory_path() / "frag_table.csv";
  write_text_file(path,
                  "model_id,hp_width,generalization_gap,sharpness,frag\n"
                  "a,2,0.1,3.5,10\n"
                  "b,4,0.3,1.5,20\n"
                  "c,8,0.2,2.5,15\n");
  const auto t = load_measurement_table(path);
  EXPECT_EQ(t.hyperparameter_names, (std::vector<std::string>{"width"}));
  EXPECT_EQ(t.measure_names, (std::vector<std::string>{"sharpness", "frag"}));
  EXPECT_DOUBLE_EQ(kendall_tau(t.measure("frag"), t.gaps()), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(t.measure("sharpness"), t.gaps()), -1.0);
  std::filesystem::remove(path);
}

TEST(MeasurementTable, JoinMeasurementsWithModels) {
  const auto dir = std::filesystem::temp_directory_path() / "frag_join";
  write_text_file(dir / "m.csv",
                  "model_id,layer,epoch,mean_frag,std_frag,mean_frc,std_frc,mean_fcc,std_fcc,skipped_triplets\n"
                  "a,0,500,4.0,1,0.2,0,0.1,0,0\n"
                  "a,1,500,2.0,1,0.1,0,0.05,0,0\n"
                  "b,0,500,9.0,1,0.4,0,0.3,0,0\n"
                  "c,0,500,6.0,1,0.3,0,0.2,0,0\n");
  write_text_file(dir / "models.csv",
                  "model_id,arch,width,seed,corrupt_frac,train_acc,val_acc,test_acc\n"
                  "a,mlp,2,0,0.1,0.90,0.85,0.85\n"
                  "b,mlp,4,0,0.1,1.00,0.70,0.70\n"
                  "c,mlp,8,0,0.1,1.00,0.80,0.80\n"
                  "z,mlp,16,0,0.1,1.00,0.90,0.90\n");
  const auto t = join_measurements(read_csv(dir / "m.csv"), read_csv(dir / "models.csv"), 0);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.hyperparameter_names, (std::vector<std::string>{"arch", "width", "seed", "corrupt_frac"}));
  EXPECT_NEAR(t.rows[1].generalization_gap, 0.30, 1e-12);
  EXPECT_EQ(t.rows[2].measures, (std::vector<double>{6.0, 0.3, 0.2}));
  EXPECT_DOUBLE_EQ(kendall_tau(t.measure("fragmentation"), t.gaps()), 1.0);

  const auto by_width = join_measurements(read_csv(dir / "m.csv"), read_csv(dir / "models.csv"), 0, {"width"});
  EXPECT_EQ(by_width.rows[0].hyperparameters, (std::vector<std::string>{"2"}));
  EXPECT_THROW(join_measurements(read_csv(dir / "m.csv"), read_csv(dir / "models.csv"), 1), DegenerateInput);
  std::filesystem::remove_all(dir);
}
