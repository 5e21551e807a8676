#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drd/parallel.hpp"
#include "drd/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kStageFailure = 1, kInvalidConfig = 2, kHashMismatch = 3 };

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = drd::default_threads();
  bool force = false;
  std::optional<int> timestep_override;
  std::string experiment;
  std::vector<std::string> checks;
};

void print_stage(const drd::StageResult& r) {
  if (r.cached)
    std::printf("%-15s cached\n", r.stage.c_str());
  else
    std::printf("%-15s done in %.2f s\n", r.stage.c_str(), r.seconds);
}

drd::ExperimentConfig resolve_config(const Options& opt) {
  drd::ExperimentConfig config = opt.config_path.empty() ? drd::ExperimentConfig{} : drd::load_config(opt.config_path);
  if (opt.seed) config.seed = *opt.seed;
  if (!opt.out_dir.empty()) config.output_dir = opt.out_dir;
  if (opt.timestep_override) config.scoring.timestep_override = *opt.timestep_override;
  drd::validate(config);
  return config;
}

int dispatch(const std::string& command, const Options& opt) {
  auto config = resolve_config(opt);
  if (opt.threads < 1) throw drd::ConfigError("--threads must be >= 1");
  drd::Pipeline pipeline(config, config.output_dir, opt.threads, opt.force);
  std::printf("config hash %s, output %s\n", pipeline.hash().c_str(), config.output_dir.c_str());

  if (command == "run") {
    for (const auto& r : pipeline.run_all()) print_stage(r);
  } else if (command == "gen-data") {
    print_stage(pipeline.gen_data());
  } else if (command == "train-denoiser") {
    print_stage(pipeline.train_denoiser());
  } else if (command == "pick-timestep") {
    print_stage(pipeline.pick_timestep());
  } else if (command == "score") {
    print_stage(pipeline.score());
  } else if (command == "select") {
    print_stage(pipeline.select());
  } else if (command == "evaluate") {
    print_stage(pipeline.evaluate());
  } else if (command == "sweep") {
    auto report = pipeline.sweep(opt.experiment);
    for (const auto& cell : report.cells)
      std::printf("%-50s %.4f +/- %.4f\n", cell.coords.dump().c_str(), cell.mean, cell.stddev);
  } else if (command == "oracle") {
    bool all_passed = true;
    for (const auto& r : pipeline.oracle(opt.checks)) {
      std::printf("%-10s %s%s\n", r.check.c_str(), r.passed ? "pass" : "FAIL", r.inconclusive ? " (inconclusive)" : "");
      for (const auto& e : r.entries)
        std::printf("  %-28s oracle %-12.6g pipeline %-12.6g tol %.3g\n", e.label.c_str(), e.oracle, e.pipeline,
                    e.tolerance);
      all_passed = all_passed && r.passed;
    }
    return all_passed ? kOk : kStageFailure;
  } else if (command == "report") {
    drd::collate_reports(config.output_dir);
    std::printf("wrote %s/report.csv and %s/summary.txt\n", config.output_dir.c_str(), config.output_dir.c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion reconstruction deviation core-set selection"};
  app.set_version_flag("--version", DRD_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_path, "Experiment config (.yaml, .yml or .json)")->check(CLI::ExistingFile);
  app.add_option("--out", opt.out_dir, "Output directory (overrides output_dir)");
  app.add_option("--seed", opt.seed, "Master seed (overrides seed)");
  app.add_option("--threads", opt.threads, "Worker threads")->capture_default_str();
  app.add_flag("--force", opt.force, "Overwrite artifacts produced under another config hash");

  app.add_subcommand("run", "Run every stage, reusing cached artifacts");
  app.add_subcommand("gen-data", "Sample the train, validation and test sets");
  app.add_subcommand("train-denoiser", "Train the learned denoiser (no-op for the analytic one)");
  app.add_subcommand("pick-timestep", "Select class-wise reconstruction timesteps");
  auto* score = app.add_subcommand("score", "Score every training sample by reconstruction deviation");
  score->add_option("--timestep-override", opt.timestep_override,
                    "Use this 0-based inference grid position for every class instead of the selector");
  app.add_subcommand("select", "Pick the training subset");
  app.add_subcommand("evaluate", "Train on the subset and evaluate on the test set");
  auto* sweep = app.add_subcommand("sweep", "Run a multi-seed experiment");
  sweep->add_option("--experiment", opt.experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(drd::experiment_names()));
  auto* oracle = app.add_subcommand("oracle", "Run the ground-truth checks");
  oracle->add_option("--check", opt.checks, "Only run these checks")->check(CLI::IsMember(drd::oracle_check_names()));
  app.add_subcommand("report", "Collate reports into report.csv and summary.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, opt);
  } catch (const drd::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const drd::HashMismatch& e) {
    std::cerr << "hash mismatch: " << e.what() << '\n';
    return kHashMismatch;
  } catch (const std::exception& e) {
    std::cerr << command << " failed: " << e.what() << '\n';
    return kStageFailure;
  }
}
