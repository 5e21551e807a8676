#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drd/classifier.hpp"
#include "drd/gmm.hpp"
#include "drd/mlp.hpp"
#include "drd/selector.hpp"

namespace drd {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Literal mixture definition; replaces the preset when present.
struct CustomWorld {
  std::vector<std::vector<GaussianComponent>> classes;
  std::optional<OutlierSpec> outliers;
};

struct WorldConfig {
  std::string preset = "W2overlap";
  std::optional<CustomWorld> custom;
  int n_per_class = 500;
  int test_per_class = 500;
};

// The configured world: the custom definition (named "custom") or the preset.
WorldPreset resolve_world(const WorldConfig& config);

struct ScheduleConfig {
  int train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int inference_steps = 50;
};

struct DenoiserConfig {
  std::string kind = "analytic";  // analytic | learned
  DenoiserTrainConfig train;
};

struct ScoringConfig {
  int num_draws = 8;
  std::string metric = "squared_l2";
  // 0-based inference grid position used for every class instead of t*_c.
  std::optional<int> timestep_override;
};

struct SelectionConfig {
  std::string method = "drd+bws";
  double budget = 0.3;
  double window_start = 0.3;
  int num_strata = 5;
  double bws_step = 0.05;
  std::string bws_eval_split = "train";  // train | holdout
};

struct EvaluationConfig {
  ClassifierConfig classifier;
  int num_seeds = 5;
  ModelKind baseline_model = ModelKind::mlp2;
  int baseline_epochs = 100;
  int el2n_probe_epoch = 5;
  int el2n_runs = 5;
  int cross_eval_strata = 5;
};

struct SweepConfig {
  std::vector<double> budgets{0.1, 0.2, 0.3, 0.5, 0.75};
  std::vector<std::string> methods{"random", "drd+bws", "drd+ccs", "forgetting+bws", "el2n+bws"};
  std::vector<std::string> strategy_scores{"drd", "forgetting", "el2n"};
  std::vector<std::string> strategy_methods{"window", "ccs", "bws"};
  std::vector<int> hyper_samples_per_class{5, 20, 40};
  std::vector<int> hyper_num_eps{5, 20, 40};
  // Grid positions for timestep_comparison; empty means the feasible set.
  std::vector<int> comparison_positions;
};

struct OracleConfig {
  int quadrature_points_1d = 4096;
  int quadrature_points_2d = 512;
  long monte_carlo_samples = 1000000;
  std::string lemma1_world = "W2";
  int lemma1_num_timesteps = 5;
  std::string theorem1_world = "W2overlap";
  int theorem1_samples = 500;
  double theorem1_min_rho = 0.3;
  std::string search_world = "W2overlap";
  double search_budget = 0.3;
  double search_start = 0.3;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  WorldConfig world;
  ScheduleConfig schedule;
  DenoiserConfig denoiser;
  ScoringConfig scoring;
  SelectorParams selector;
  SelectionConfig selection;
  EvaluationConfig evaluation;
  SweepConfig sweep;
  OracleConfig oracle;
};

// Throws ConfigError naming the first invalid field.
void validate(const ExperimentConfig& config);

// Full resolved configuration, defaults included.
nlohmann::json to_json(const ExperimentConfig& config);
// Missing keys take defaults; unknown keys are rejected. Validates.
ExperimentConfig config_from_json(const nlohmann::json& j);
// YAML (.yaml/.yml) or JSON (.json) by extension.
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON hashed by config_hash: the resolved config without
// output_dir, keys sorted.
std::string hash_preimage(const ExperimentConfig& config);
// 16 hex digits of FNV-1a over hash_preimage.
std::string config_hash(const ExperimentConfig& config);

NoiseSchedule make_schedule(const ScheduleConfig& config);

}  // namespace drd
