#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drd/config.hpp"
#include "drd/gmm.hpp"
#include "drd/scoring.hpp"

namespace drd {

struct OracleEntry {
  std::string label;
  double oracle = 0.0;
  double pipeline = 0.0;
  double tolerance = 0.0;
  double std_error = 0.0;
  bool passed = false;
};

struct OracleReport {
  std::string check;
  bool passed = false;
  bool inconclusive = false;
  std::vector<OracleEntry> entries;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const OracleReport& report);

// Spearman rank correlation with average ranks for ties. Throws
// std::invalid_argument on unequal lengths, fewer than 2 values or zero rank
// variance.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct MiEstimate {
  double value = 0.0;      // nats, clamped to [0, log C]
  double std_error = 0.0;  // Monte Carlo only
  double mass = 1.0;       // quadrature grid coverage
  long evaluations = 0;
  std::string method;  // "quadrature" or "monte_carlo"
};

struct MiSettings {
  int points_1d = 4096;
  int points_2d = 512;
  long monte_carlo_samples = 1000000;
  std::uint64_t seed = 0;
  int threads = 1;
};

// I(x_t; c) = H(c) - E[H(c | x_t)] under the uniform class prior. Midpoint
// tensor-grid quadrature over +/- 8 standard deviations for d <= 2, Monte
// Carlo for larger d. Throws std::runtime_error when the grid captures less
// than 0.999 of the density mass.
MiEstimate mutual_information(const GmmWorld& world, double alpha_bar, const MiSettings& settings = {});
MiEstimate mi_quadrature(const GmmWorld& world, Timestep t, const NoiseSchedule& schedule,
                         const MiSettings& settings = {});

// |I(t + 1) - I(t - 1)| / 2 per timestep, nats per training step.
std::vector<double> mi_derivative_curve(const GmmWorld& world, const std::vector<Timestep>& timesteps,
                                        const NoiseSchedule& schedule, const MiSettings& settings = {});

// Compares |dI/dt| from quadrature with |E[d log p(c | x_t) / dt]| from
// Monte Carlo with exact posteriors and paired noise across t +/- 1. An
// entry passes within max(rel_tol * oracle, abs_tol); the report is
// inconclusive when a standard error exceeds half the tolerance.
OracleReport lemma1_check(const GmmWorld& world, const NoiseSchedule& schedule, const std::vector<Timestep>& t_list,
                          const MiSettings& settings, double rel_tol = 0.05, double abs_tol = 0.005);

// Ordering check between deviation and -log q(x0): Spearman rho plus the
// number of decreases among 5 bins ordered by descending likelihood.
OracleReport theorem1_from_scores(const std::vector<double>& deviations, const std::vector<double>& neg_log_q,
                                  double min_rho = 0.3, int max_inversions = 1);

// Draws n_samples points from the data marginal, scores each at its class
// timestep with K draws and applies theorem1_from_scores.
OracleReport theorem1_check(const GmmWorld& world, const Denoiser& denoiser, const NoiseSchedule& schedule,
                            const std::vector<Timestep>& class_timesteps, int n_samples, int num_draws,
                            std::uint64_t seed, double min_rho = 0.3, int threads = 1);

struct SearchSettings {
  std::string world = "W2overlap";
  double budget = 0.3;
  double start = 0.3;
  bool random_scores = false;  // control: scores that ignore t
};

// For every feasible grid timestep and replicate: score the training set at
// that timestep for every class, window_select, train and test. Passes when
// the mean accuracy at the selector's class-wise t* is within one standard
// deviation of the best grid cell.
OracleReport exhaustive_timestep_search(const ExperimentConfig& config, const SearchSettings& settings, int threads);

// Median over replicates and classes of |grid position of t*_c - grid
// position of argmax |dI/dt||, restricted to the feasible set.
OracleReport selector_argmax_check(const ExperimentConfig& config, const std::string& world, int max_steps,
                                   int threads);

// Criterion-style battery. `only` filters by check name: "mi", "lemma1",
// "theorem1", "search", "argmax".
std::vector<std::string> oracle_check_names();
std::vector<OracleReport> run_oracle_suite(const ExperimentConfig& config, const std::vector<std::string>& only,
                                           int threads);

}  // namespace drd
