#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "drd/gmm.hpp"
#include "drd/selector.hpp"
#include "helpers.hpp"

using namespace drd;
using drd::testing::default_schedule;
using drd::testing::vec;

TEST(FeasibleTimesteps, SnrBoundaries) {
  const auto& s = default_schedule();
  auto f = feasible_timesteps(s, 0.05, 1.0);
  ASSERT_FALSE(f.empty());
  EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
  for (Timestep t : f) {
    EXPECT_LE(s.alpha_bar(t), 0.5);
    EXPECT_GE(s.alpha_bar(t), 0.05 / 1.05);
    EXPECT_TRUE(s.grid_position(t).has_value());
  }
  for (Timestep t : s.inference_grid)
    if (s.alpha_bar(t) > 0.5) EXPECT_EQ(std::count(f.begin(), f.end(), t), 0);
}

TEST(FeasibleTimesteps, WideningNeverShrinks) {
  const auto& s = default_schedule();
  auto narrow = feasible_timesteps(s, 0.2, 0.5);
  auto wide = feasible_timesteps(s, 0.05, 1.0);
  EXPECT_TRUE(std::includes(wide.begin(), wide.end(), narrow.begin(), narrow.end()));
  EXPECT_THROW(feasible_timesteps(s, 1.0, 0.05), std::invalid_argument);
  EXPECT_THROW(feasible_timesteps(s, 1e5, 1e6), std::invalid_argument);
}

TEST(DiffusionClassifier, MirrorSymmetricMidpoint) {
  const auto& s = default_schedule();
  auto den = analytic_denoiser(world_preset("W2").world, s);
  for (Timestep t : feasible_timesteps(s, 0.05, 1.0)) {
    Vector lp = diffusion_classifier_logprob(vec({0, 0}), t, *den, s, 20, 3);
    EXPECT_LT(std::abs(std::exp(lp[0]) - std::exp(lp[1])), 0.05) << "t=" << t;
  }
}

// The class gap in predicted noise scales with sqrt(1 - alpha_bar), so the
// lowest timesteps drown it in eps variance; grid position 5 (SNR ~ 8) does not.
TEST(DiffusionClassifier, LowNoiseRecoversClass) {
  const auto& s = default_schedule();
  auto den = analytic_denoiser(world_preset("W2").world, s);
  const Timestep t = s.grid_timestep(5);
  ASSERT_GT(snr(s, t), 5.0);
  int hits = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Vector lp = diffusion_classifier_logprob(vec({-2, 0}), t, *den, s, 20, trial);
    hits += lp[0] > lp[1];
  }
  EXPECT_GE(hits, 95);
}

TEST(DiffusionClassifier, FullNoiseIsUniform) {
  const auto& s = default_schedule();
  auto den = analytic_denoiser(world_preset("W2").world, s);
  Vector lp = diffusion_classifier_logprob(vec({-2, 0}), 1000, *den, s, 20, 1);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(lp[c], std::log(0.5), 0.1);
  EXPECT_NEAR(std::exp(lp[0]) + std::exp(lp[1]), 1.0, 1e-12);
}

TEST(MiDerivativeProxy, SingleClassIsZero) {
  const auto& s = default_schedule();
  GmmWorld one({{{1.0, vec({1, 0}), Matrix::Identity(2, 2)}}});
  auto den = analytic_denoiser(one, s);
  auto pts = to_points(sample_dataset(one, 5, 1));
  for (Timestep t : feasible_timesteps(s, 0.05, 1.0))
    EXPECT_EQ(mi_derivative_proxy(pts, t, *den, s, 4, 1, 2).value, 0.0);
}

TEST(MiDerivativeProxy, NegligibleNoiseBelowTransition) {
  const auto& s = default_schedule();
  auto world = world_preset("W2").world;
  auto den = analytic_denoiser(world, s);
  auto pts = to_points(sample_dataset(world, 10, 3));
  Timestep quiet = 1;
  while (s.alpha_bar(quiet + 1) >= 0.999) ++quiet;
  auto feasible = feasible_timesteps(s, 0.05, 1.0);
  double low = mi_derivative_proxy(pts, std::max(quiet, 2), *den, s, 20, 1, 4).value;
  double mid = mi_derivative_proxy(pts, feasible[feasible.size() / 2], *den, s, 20, 1, 4).value;
  EXPECT_LE(low, mid);
}

TEST(MiDerivativeProxy, DoublingBIsWithinTwoStandardErrors) {
  const auto& s = default_schedule();
  auto world = world_preset("W2overlap").world;
  auto den = analytic_denoiser(world, s);
  auto pts = to_points(sample_dataset(world, 20, 5));
  const Timestep t = feasible_timesteps(s, 0.05, 1.0)[3];
  auto b20 = mi_derivative_proxy(std::span(pts).first(20), t, *den, s, 20, 1, 6);
  auto b40 = mi_derivative_proxy(pts, t, *den, s, 20, 1, 6);
  EXPECT_LT(std::abs(b40.value - b20.value), 2 * b20.std_error);
}

TEST(MiDerivativeProxy, RelabelingInvariant) {
  const auto& s = default_schedule();
  auto world = world_preset("W2overlap").world;
  auto swapped = world.relabeled({1, 0});
  auto den = analytic_denoiser(world, s);
  auto den_swapped = analytic_denoiser(swapped, s);
  auto pts = to_points(sample_dataset(world, 10, 7));
  auto relabeled = pts;
  for (auto& p : relabeled) p.label = 1 - p.label;
  const Timestep t = feasible_timesteps(s, 0.05, 1.0)[2];
  EXPECT_NEAR(mi_derivative_proxy(pts, t, *den, s, 8, 1, 8).value,
              mi_derivative_proxy(relabeled, t, *den_swapped, s, 8, 1, 8).value, 1e-10);
}

TEST(MiDerivativeProxy, RejectsBoundary) {
  const auto& s = default_schedule();
  auto world = world_preset("W2").world;
  auto den = analytic_denoiser(world, s);
  auto pts = to_points(sample_dataset(world, 2, 1));
  EXPECT_THROW(mi_derivative_proxy(pts, 1, *den, s, 2, 1, 0), std::invalid_argument);
  EXPECT_THROW(mi_derivative_proxy(pts, 1000, *den, s, 2, 1, 0), std::invalid_argument);
}

TEST(SelectTimesteps, DefaultsAndStructure) {
  SelectorParams p;
  EXPECT_EQ(p.samples_per_class, 20);
  EXPECT_EQ(p.num_eps, 20);
  EXPECT_EQ(p.delta_t, 1);
  EXPECT_EQ(p.gamma_min, 0.05);
  EXPECT_EQ(p.gamma_max, 1.0);

  const auto& s = default_schedule();
  auto world = world_preset("W2overlap").world;
  auto den = analytic_denoiser(world, s);
  auto d = sample_dataset(world, 30, 2);
  p.num_eps = 4;
  auto sel = select_timesteps(d, *den, s, p, 3);
  ASSERT_EQ(sel.classes.size(), 2u);
  for (const auto& c : sel.classes) {
    EXPECT_EQ(c.sample_ids.size(), 20u);
    EXPECT_EQ(c.curve.size(), sel.feasible.size());
    EXPECT_NE(std::find(sel.feasible.begin(), sel.feasible.end(), c.t_star), sel.feasible.end());
    for (const auto& pt : c.curve) {
      EXPECT_LE(pt.proxy, std::max_element(c.curve.begin(), c.curve.end(), [](auto& a, auto& b) {
                            return a.proxy < b.proxy;
                          })->proxy);
    }
  }
  auto again = select_timesteps(d, *den, s, p, 3, 4);
  EXPECT_EQ(to_json(sel, s), to_json(again, s));
  EXPECT_EQ(to_json(selection_from_json(to_json(sel, s)), s), to_json(sel, s));
}

TEST(SelectTimesteps, SingleFeasibleTimestepIsForced) {
  const auto& s = default_schedule();
  auto feasible = feasible_timesteps(s, 0.05, 1.0);
  const Timestep only = feasible[4];
  const double snr_only = s.alpha_bar(only) / (1 - s.alpha_bar(only));
  SelectorParams p;
  p.num_eps = 2;
  p.samples_per_class = 3;
  p.gamma_min = snr_only * (1 - 1e-9);
  p.gamma_max = snr_only * (1 + 1e-9);
  auto world = world_preset("W2").world;
  auto den = analytic_denoiser(world, s);
  auto sel = select_timesteps(sample_dataset(world, 3, 1), *den, s, p, 0);
  EXPECT_EQ(sel.feasible, std::vector<Timestep>{only});
  EXPECT_EQ(sel.class_timesteps(), (std::vector<Timestep>{only, only}));
}

TEST(SelectTimesteps, SymmetricClassesAgree) {
  const auto& s = default_schedule();
  auto world = world_preset("W2").world;
  auto den = analytic_denoiser(world, s);
  std::vector<int> gaps;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto sel = select_timesteps(sample_dataset(world, 20, seed), *den, s, {}, seed);
    gaps.push_back(std::abs(sel.classes[0].grid_position - sel.classes[1].grid_position));
  }
  std::sort(gaps.begin(), gaps.end());
  EXPECT_LE(gaps[2], 1);
}

TEST(FixedSelection, AssignsEveryClass) {
  const auto& s = default_schedule();
  auto sel = fixed_selection(s, s.grid_timestep(20), 3);
  EXPECT_EQ(sel.class_timesteps(), std::vector<Timestep>(3, s.grid_timestep(20)));
  EXPECT_THROW(fixed_selection(s, 2, 2), std::invalid_argument);
}
