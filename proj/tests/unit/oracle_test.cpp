#include <cmath>

#include <gtest/gtest.h>

#include "drd/gmm.hpp"
#include "drd/oracle.hpp"
#include "drd/selector.hpp"
#include "helpers.hpp"

using namespace drd;
using drd::testing::default_schedule;
using drd::testing::vec;

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {1, 2, 3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {40, 30, 20, 10}), -1.0);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 2, 2, 3}), 1.0, 1e-12);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(spearman({1}, {1}), std::invalid_argument);
  EXPECT_THROW(spearman({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(MutualInformation, CleanW2ReferenceValue) {
  // ln 2 - E[H(c|x)] for unit Gaussians at +-2, by 1D quadrature along x_0.
  const double mu = 2.0;
  double expected_h = 0.0;
  const int n = 200000;
  const double lo = -12, hi = 12, h = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    double x = lo + (i + 0.5) * h;
    double q0 = std::exp(-0.5 * (x + mu) * (x + mu)), q1 = std::exp(-0.5 * (x - mu) * (x - mu));
    double p = q0 / (q0 + q1);
    double ent = 0.0;
    if (p > 0) ent -= p * std::log(p);
    if (p < 1) ent -= (1 - p) * std::log(1 - p);
    expected_h += 0.5 * (q0 + q1) / std::sqrt(2 * M_PI) * ent * h;
  }
  auto est = mutual_information(world_preset("W2").world, 1.0);
  EXPECT_NEAR(est.value, std::log(2.0) - expected_h, 1e-4);
  EXPECT_NEAR(est.value, 0.60, 0.05);
  EXPECT_GE(est.mass, 0.999);
  EXPECT_EQ(est.method, "quadrature");
}

TEST(MutualInformation, FullNoiseAndSingleClass) {
  const auto& s = default_schedule();
  auto w2 = world_preset("W2").world;
  EXPECT_LT(mi_quadrature(w2, s.inference_grid.back(), s).value, 0.02);
  GmmWorld one({{{1.0, vec({1, 0}), Matrix::Identity(2, 2)}}});
  for (Timestep t : {0, 100, 500}) EXPECT_EQ(mi_quadrature(one, t, s).value, 0.0);
}

TEST(MutualInformation, MonotoneAndBounded) {
  const auto& s = default_schedule();
  MiSettings fast;
  fast.points_2d = 256;
  for (const auto& name : preset_names()) {
    auto w = world_preset(name).world;
    double prev = INFINITY;
    for (Timestep t : s.inference_grid) {
      double v = mi_quadrature(w, t, s, fast).value;
      EXPECT_LE(v, std::log(2.0));
      EXPECT_LE(v, prev + 0.003) << name << " t=" << t;
      prev = v;
    }
  }
}

TEST(MutualInformation, OneDimensionalWorld) {
  GmmWorld w({{{1.0, vec({-1}), Matrix::Identity(1, 1)}}, {{1.0, vec({1}), Matrix::Identity(1, 1)}}});
  auto est = mutual_information(w, 0.5);
  EXPECT_GT(est.value, 0.0);
  EXPECT_LT(est.value, std::log(2.0));
  EXPECT_GE(est.mass, 0.999);
}

TEST(MutualInformation, MonteCarloAboveTwoDimensions) {
  Matrix id = Matrix::Identity(3, 3);
  GmmWorld w({{{1.0, vec({-2, 0, 0}), id}}, {{1.0, vec({2, 0, 0}), id}}});
  MiSettings mc;
  mc.monte_carlo_samples = 200000;
  auto est = mutual_information(w, 1.0, mc);
  EXPECT_EQ(est.method, "monte_carlo");
  EXPECT_GT(est.std_error, 0.0);
  auto flat = mutual_information(world_preset("W2").world, 1.0);
  EXPECT_NEAR(est.value, flat.value, 4 * est.std_error);
}

TEST(MutualInformation, CoarseGridIsAnError) {
  MiSettings coarse;
  coarse.points_2d = 2;
  EXPECT_THROW(mutual_information(world_preset("W2").world, 1.0, coarse), std::runtime_error);
}

TEST(Lemma1Check, SingleClassAndNegativeControl) {
  const auto& s = default_schedule();
  MiSettings settings;
  settings.monte_carlo_samples = 20000;
  settings.points_2d = 256;
  GmmWorld one({{{1.0, vec({1, 0}), Matrix::Identity(2, 2)}}});
  auto feasible = feasible_timesteps(s, 0.05, 1.0);
  std::vector<Timestep> ts = {feasible[1], feasible[4]};
  auto r = lemma1_check(one, s, ts, settings);
  EXPECT_TRUE(r.passed);
  for (const auto& e : r.entries) {
    EXPECT_EQ(e.oracle, 0.0);
    EXPECT_EQ(e.pipeline, 0.0);
  }
  auto strict = lemma1_check(world_preset("W2").world, s, ts, settings, 0.0, 0.0);
  EXPECT_FALSE(strict.passed);
}

TEST(Theorem1, ConstantScoresFail) {
  std::vector<double> dev(300, 1.0), nlq(300);
  for (int i = 0; i < 300; ++i) nlq[i] = i;
  auto r = theorem1_from_scores(dev, nlq);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.entries[0].pipeline, 0.0);
}

TEST(Theorem1, PerfectOrderingPasses) {
  std::vector<double> dev(300), nlq(300);
  for (int i = 0; i < 300; ++i) {
    dev[i] = i * 0.01;
    nlq[i] = std::exp(i * 0.01);
  }
  auto r = theorem1_from_scores(dev, nlq);
  EXPECT_TRUE(r.passed);
  EXPECT_TRUE(r.details.at("strictly_increasing").get<bool>());
}

TEST(Theorem1, SingleGaussianBinsStrictlyIncrease) {
  const auto& s = default_schedule();
  GmmWorld one({{{1.0, vec({0.5, -0.5}), Matrix::Identity(2, 2)}}});
  auto den = analytic_denoiser(one, s);
  const Timestep t = feasible_timesteps(s, 0.05, 1.0)[4];
  auto r = theorem1_check(one, *den, s, {t}, 500, 8, 1);
  EXPECT_TRUE(r.details.at("strictly_increasing").get<bool>()) << r.details.at("bin_means").dump();
  EXPECT_TRUE(r.passed);
}

TEST(OracleReport, JsonCarriesDiscrepancy) {
  OracleReport r;
  r.check = "demo";
  r.entries.push_back({"x", 1.0, 1.25, 0.5, 0.0, true});
  auto j = to_json(r);
  EXPECT_EQ(j.at("check"), "demo");
  EXPECT_DOUBLE_EQ(j.at("entries")[0].at("discrepancy").get<double>(), 0.25);
}
