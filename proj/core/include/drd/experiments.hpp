#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drd/classifier.hpp"
#include "drd/config.hpp"
#include "drd/coreset.hpp"
#include "drd/gmm.hpp"
#include "drd/scoring.hpp"
#include "drd/selector.hpp"

namespace drd {

// One independent replicate: training set (outliers injected when the preset
// asks for them), a clean validation draw and a clean test draw.
struct Trial {
  std::uint64_t seed = 0;
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

Trial make_trial(const WorldPreset& preset, const WorldConfig& world, std::uint64_t seed);

// Replicate seeds derived from the master seed; replicate 0 is the one the
// single-run pipeline uses.
std::vector<std::uint64_t> trial_seeds(std::uint64_t master, int count);

std::unique_ptr<Denoiser> make_denoiser(const DenoiserConfig& config, const GmmWorld& world,
                                        const NoiseSchedule& schedule, const LabeledDataset& train,
                                        std::uint64_t seed);

// Everything computed for one replicate, created lazily and cached.
class TrialRunner {
 public:
  TrialRunner(const ExperimentConfig& config, const NoiseSchedule& schedule, const WorldPreset& preset,
              std::uint64_t seed, int threads);
  // Uses an existing replicate; a null denoiser is built on first use.
  TrialRunner(const ExperimentConfig& config, const NoiseSchedule& schedule, const WorldPreset& preset, Trial trial,
              std::unique_ptr<Denoiser> denoiser, int threads);

  const Trial& trial() const { return trial_; }
  const Denoiser& denoiser();
  // The selector's choice, or the configured timestep override.
  const TimestepSelection& selection();
  TimestepSelection selection_with(const SelectorParams& params);
  void set_selection(TimestepSelection selection) { selection_ = std::move(selection); }

  // "drd", "forgetting" or "el2n".
  const std::vector<ScoreRecord>& scores(const std::string& name);
  void set_scores(const std::string& name, std::vector<ScoreRecord> scores) { scores_[name] = std::move(scores); }
  // `stream` names the noise substream so different datasets draw
  // independent noise.
  std::vector<ScoreRecord> drd_scores_at(const LabeledDataset& data, const std::vector<Timestep>& class_timesteps,
                                         const char* stream = "scoring");

  // method is "random" or "<score>+<strategy>".
  SubsetSpec select(const std::string& method, double budget);
  // Window strategies start at selection.window_start, moved left when the
  // window would run past the end.
  SubsetSpec apply_strategy(const std::string& strategy, const std::vector<ScoreRecord>& scores, double budget);
  double test_accuracy(const SubsetSpec& subset);

 private:
  const ExperimentConfig& config_;
  const NoiseSchedule& schedule_;
  const WorldPreset& preset_;
  int threads_;
  Trial trial_;
  std::unique_ptr<Denoiser> denoiser_;
  std::optional<TimestepSelection> selection_;
  std::map<std::string, std::vector<ScoreRecord>> scores_;
};

ClassifierConfig classifier_config(const EvaluationConfig& config, std::uint64_t seed);

// Trains on the subset of `train` and returns accuracy on `test`.
double train_and_test(const LabeledDataset& train, const SubsetSpec& subset, const LabeledDataset& test,
                      const ClassifierConfig& config);

// Row i: model trained on stratum i of the training scores, evaluated on
// every stratum of the test scores (both stratified into k groups).
Matrix cross_eval(const LabeledDataset& train, const std::vector<ScoreRecord>& train_scores,
                  const LabeledDataset& test, const std::vector<ScoreRecord>& test_scores, int k,
                  const ClassifierConfig& config);

// Mean of row i excluding the diagonal entry.
double mean_off_diagonal(const Matrix& m, int row);

struct ReportCell {
  nlohmann::json coords = nlohmann::json::object();
  std::vector<double> accuracies;  // one per replicate
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

struct EvalReport {
  std::string experiment;
  nlohmann::json axes = nlohmann::json::object();
  std::vector<ReportCell> cells;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

ReportCell make_cell(nlohmann::json coords, std::vector<double> accuracies);

nlohmann::json to_json(const EvalReport& report);
// JSON report plus a flat CSV with one row per cell.
void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);

std::vector<std::string> experiment_names();

// Throws std::invalid_argument for unknown experiments or axis values.
EvalReport run_sweep(const std::string& experiment, const ExperimentConfig& config, int threads);

}  // namespace drd
