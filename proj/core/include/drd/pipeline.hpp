#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "drd/artifacts.hpp"
#include "drd/config.hpp"
#include "drd/experiments.hpp"
#include "drd/oracle.hpp"

namespace drd {

struct StageResult {
  std::string stage;
  bool cached = false;
  double seconds = 0.0;
};

// Stage-by-stage driver over one output directory. Every stage reads its
// inputs from the directory, so stages can run separately. A stage whose
// outputs already exist with the current config hash is skipped; outputs
// from another config raise HashMismatch unless `force` is set.
class Pipeline {
 public:
  Pipeline(ExperimentConfig config, std::filesystem::path out_dir, int threads, bool force = false);

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  std::filesystem::path path(const std::string& name) const { return out_dir_ / name; }

  StageResult gen_data();
  StageResult train_denoiser();
  StageResult pick_timestep();
  StageResult score();
  StageResult select();
  StageResult evaluate();
  StageResult report();
  std::vector<StageResult> run_all();

  // Sweep and oracle outputs under sweeps/ and reports/oracle/.
  EvalReport sweep(const std::string& experiment);
  std::vector<OracleReport> oracle(const std::vector<std::string>& only);

  static std::vector<std::string> stage_names();

 private:
  StageResult run_stage(const std::string& stage, const std::vector<std::string>& outputs,
                        const std::function<void()>& body);
  void finish_artifact(const std::string& name, const std::string& stage);
  Trial load_trial() const;
  std::unique_ptr<Denoiser> stage_denoiser() const;
  std::filesystem::path require_input(const std::string& name, const std::string& producer) const;

  ExperimentConfig config_;
  std::filesystem::path out_dir_;
  int threads_;
  bool force_;
  std::string hash_;
  NoiseSchedule schedule_;
  WorldPreset preset_;
  std::uint64_t trial_seed_;
};

// Collates selection, evaluation, sweep and oracle reports found under
// `out_dir` into report.csv (source,key,value) and summary.txt.
void collate_reports(const std::filesystem::path& out_dir);

}  // namespace drd
