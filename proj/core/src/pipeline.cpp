#include "drd/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <numeric>

#include "drd/format.hpp"
#include "drd/mlp.hpp"
#include "drd/rng.hpp"

namespace drd {

namespace {

namespace fs = std::filesystem;

std::string validated_hash(const ExperimentConfig& config) {
  validate(config);
  return config_hash(config);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<int> all_ids(const LabeledDataset& data) {
  std::vector<int> ids;
  for (const auto& r : data.records) ids.push_back(r.sample_id);
  return ids;
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config, fs::path out_dir, int threads, bool force)
    : config_(std::move(config)),
      out_dir_(std::move(out_dir)),
      threads_(threads),
      force_(force),
      hash_(validated_hash(config_)),
      schedule_(make_schedule(config_.schedule)),
      preset_(resolve_world(config_.world)),
      trial_seed_(trial_seeds(config_.seed, 1).front()) {}

std::vector<std::string> Pipeline::stage_names() {
  return {"gen-data", "train-denoiser", "pick-timestep", "score", "select", "evaluate", "report"};
}

StageResult Pipeline::run_stage(const std::string& stage, const std::vector<std::string>& outputs,
                                const std::function<void()>& body) {
  bool all_hit = !outputs.empty();
  for (const auto& name : outputs) {
    auto state = cache_state(path(name), hash_);
    if (state == CacheState::mismatch && !force_) {
      auto meta = read_meta(path(name));
      throw HashMismatch(stage + ": " + path(name).string() + " was produced by config hash " +
                         (meta ? meta->config_hash : std::string("<none>")) + ", current hash is " + hash_ +
                         " (use --force to overwrite)");
    }
    all_hit = all_hit && state == CacheState::hit;
  }
  if (all_hit) return {stage, true, 0.0};
  const auto start = std::chrono::steady_clock::now();
  body();
  StageResult result{stage, false, seconds_since(start)};
  if (!outputs.empty()) write_runtime(path(outputs.front()), result.seconds);
  return result;
}

void Pipeline::finish_artifact(const std::string& name, const std::string& stage) {
  write_meta(path(name), {hash_, config_.seed, DRD_VERSION, stage});
}

fs::path Pipeline::require_input(const std::string& name, const std::string& producer) const {
  auto p = path(name);
  if (!fs::exists(p)) throw MissingArtifact("missing upstream artifact " + p.string() + " (run '" + producer + "' first)");
  auto state = cache_state(p, hash_);
  if (state == CacheState::mismatch && !force_)
    throw HashMismatch("upstream artifact " + p.string() + " belongs to a different config (hash " + hash_ +
                       " expected)");
  return p;
}

Trial Pipeline::load_trial() const {
  Trial trial;
  trial.seed = trial_seed_;
  const int c = preset_.world.num_classes();
  trial.train = read_dataset_csv(require_input("data/train.csv", "gen-data"), c);
  trial.validation = read_dataset_csv(require_input("data/validation.csv", "gen-data"), c);
  trial.test = read_dataset_csv(require_input("data/test.csv", "gen-data"), c);
  return trial;
}

std::unique_ptr<Denoiser> Pipeline::stage_denoiser() const {
  if (config_.denoiser.kind == "analytic") return analytic_denoiser(preset_.world, schedule_);
  return std::make_unique<LearnedDenoiser>(load_denoiser(require_input("denoiser.ckpt", "train-denoiser")), schedule_);
}

StageResult Pipeline::gen_data() {
  return run_stage("gen-data", {"data/train.csv", "data/validation.csv", "data/test.csv"}, [&] {
    fs::create_directories(path("data"));
    auto trial = make_trial(preset_, config_.world, trial_seed_);
    write_dataset_csv(trial.train, path("data/train.csv"));
    write_dataset_csv(trial.validation, path("data/validation.csv"));
    write_dataset_csv(trial.test, path("data/test.csv"));
    for (const char* name : {"data/train.csv", "data/validation.csv", "data/test.csv"}) finish_artifact(name, "gen-data");
  });
}

StageResult Pipeline::train_denoiser() {
  if (config_.denoiser.kind == "analytic") return {"train-denoiser", true, 0.0};
  return run_stage("train-denoiser", {"denoiser.ckpt"}, [&] {
    auto train = read_dataset_csv(require_input("data/train.csv", "gen-data"), preset_.world.num_classes());
    auto cfg = config_.denoiser.train;
    cfg.seed = rng::derive(trial_seed_, {rng::tag("denoiser")});
    auto result = drd::train_denoiser(train, schedule_, cfg);
    save_denoiser(result.model, path("denoiser.ckpt"));
    finish_artifact("denoiser.ckpt", "train-denoiser");
  });
}

StageResult Pipeline::pick_timestep() {
  return run_stage("pick-timestep", {"selection.json"}, [&] {
    auto trial = load_trial();
    auto den = stage_denoiser();
    TrialRunner runner(config_, schedule_, preset_, std::move(trial), std::move(den), threads_);
    auto j = to_json(runner.selection(), schedule_);
    j["meta"] = to_json(ArtifactMeta{hash_, config_.seed, DRD_VERSION, "pick-timestep"});
    write_json_file(path("selection.json"), j);
    finish_artifact("selection.json", "pick-timestep");
  });
}

StageResult Pipeline::score() {
  return run_stage("score", {"scores.csv"}, [&] {
    auto trial = load_trial();
    auto den = stage_denoiser();
    TrialRunner runner(config_, schedule_, preset_, std::move(trial), std::move(den), threads_);
    // A timestep override needs no selector output.
    if (!config_.scoring.timestep_override)
      runner.set_selection(selection_from_json(read_json_file(require_input("selection.json", "pick-timestep"))));
    write_scores_csv(runner.scores("drd"), path("scores.csv"));
    finish_artifact("scores.csv", "score");
  });
}

StageResult Pipeline::select() {
  return run_stage("select", {"subset.json", "subset_ids.csv"}, [&] {
    auto scores = read_scores_csv(require_input("scores.csv", "score"));
    auto trial = load_trial();
    auto den = stage_denoiser();
    TrialRunner runner(config_, schedule_, preset_, std::move(trial), std::move(den), threads_);
    runner.set_scores("drd", std::move(scores));
    auto subset = runner.select(config_.selection.method, config_.selection.budget);
    auto j = to_json(subset);
    j["meta"] = to_json(ArtifactMeta{hash_, config_.seed, DRD_VERSION, "select"});
    write_json_file(path("subset.json"), j);
    write_subset_ids_csv(subset, path("subset_ids.csv"));
    finish_artifact("subset.json", "select");
    finish_artifact("subset_ids.csv", "select");
  });
}

StageResult Pipeline::evaluate() {
  return run_stage("evaluate", {"eval.json"}, [&] {
    auto subset = subset_from_json(read_json_file(require_input("subset.json", "select")));
    auto selection = selection_from_json(read_json_file(require_input("selection.json", "pick-timestep")));
    auto scores = read_scores_csv(require_input("scores.csv", "score"));
    auto trial = load_trial();
    auto den = stage_denoiser();
    TrialRunner runner(config_, schedule_, preset_, std::move(trial), std::move(den), threads_);
    runner.set_selection(selection);
    runner.set_scores("drd", scores);
    const auto& t = runner.trial();

    const double budget = config_.selection.budget;
    SubsetSpec full{"full", 1.0, nlohmann::json::object(), all_ids(t.train)};
    auto test_scores = runner.drd_scores_at(t.test, selection.class_timesteps(), "scoring-test");
    const int k = config_.evaluation.cross_eval_strata;
    auto cfg = classifier_config(config_.evaluation, rng::derive(trial_seed_, {rng::tag("cross-eval")}));
    Matrix m = cross_eval(t.train, scores, t.test, test_scores, k, cfg);
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json off = nlohmann::json::array();
    for (int i = 0; i < k; ++i) {
      std::vector<double> row;
      for (int j = 0; j < k; ++j) row.push_back(m(i, j));
      rows.push_back(row);
      off.push_back(mean_off_diagonal(m, i));
    }
    nlohmann::json j = {{"method", subset.method},
                        {"budget", budget},
                        {"subset_size", subset.selected_ids.size()},
                        {"train_size", t.train.size()},
                        {"test_accuracy", runner.test_accuracy(subset)},
                        {"full_data_accuracy", runner.test_accuracy(full)},
                        {"random_accuracy", runner.test_accuracy(runner.select("random", budget))},
                        {"class_timesteps", selection.class_timesteps()},
                        {"cross_eval", {{"strata", k}, {"matrix", rows}, {"off_diagonal_mean", off}}},
                        {"meta", to_json(ArtifactMeta{hash_, config_.seed, DRD_VERSION, "evaluate"})}};
    write_json_file(path("eval.json"), j);
    finish_artifact("eval.json", "evaluate");
  });
}

StageResult Pipeline::report() {
  return run_stage("report", {"report.csv", "summary.txt"}, [&] {
    require_input("eval.json", "evaluate");
    collate_reports(out_dir_);
    finish_artifact("report.csv", "report");
    finish_artifact("summary.txt", "report");
  });
}

std::vector<StageResult> Pipeline::run_all() {
  return {gen_data(), train_denoiser(), pick_timestep(), score(), select(), evaluate(), report()};
}

EvalReport Pipeline::sweep(const std::string& experiment) {
  const auto start = std::chrono::steady_clock::now();
  auto report = run_sweep(experiment, config_, threads_);
  const auto json_path = path("sweeps/" + experiment + ".json");
  const auto csv_path = path("sweeps/" + experiment + ".csv");
  fs::create_directories(json_path.parent_path());
  write_report(report, json_path, csv_path);
  finish_artifact("sweeps/" + experiment + ".json", "sweep");
  finish_artifact("sweeps/" + experiment + ".csv", "sweep");
  write_runtime(json_path, seconds_since(start));
  return report;
}

std::vector<OracleReport> Pipeline::oracle(const std::vector<std::string>& only) {
  auto reports = run_oracle_suite(config_, only, threads_);
  for (const auto& r : reports) {
    auto j = to_json(r);
    j["meta"] = to_json(ArtifactMeta{hash_, config_.seed, DRD_VERSION, "oracle"});
    const std::string name = "reports/oracle/" + r.check + ".json";
    write_json_file(path(name), j);
    finish_artifact(name, "oracle");
  }
  return reports;
}

namespace {

std::string value_text(const nlohmann::json& v) {
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string coords_text(const nlohmann::json& coords) {
  std::string out;
  for (const auto& [k, v] : coords.items()) {
    if (!out.empty()) out += ';';
    out += k + "=" + value_text(v);
  }
  return out;
}

std::vector<fs::path> json_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".json" && name.find(".meta.") == std::string::npos &&
        name.find(".runtime.") == std::string::npos)
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void collate_reports(const fs::path& out_dir) {
  std::vector<std::array<std::string, 3>> rows;
  std::vector<std::string> summary;
  auto add = [&](const std::string& source, const std::string& key, const nlohmann::json& v) {
    rows.push_back({source, key, value_text(v)});
  };

  if (fs::exists(out_dir / "selection.json")) {
    auto sel = read_json_file(out_dir / "selection.json");
    for (const auto& c : sel.at("classes")) {
      add("selection", "t_star_class_" + std::to_string(c.at("label").get<int>()), c.at("t_star"));
      summary.push_back("class " + std::to_string(c.at("label").get<int>()) + ": t* = " + value_text(c.at("t_star")) +
                        " (grid position " + value_text(c.at("grid_position")) + ")");
    }
  }
  if (fs::exists(out_dir / "eval.json")) {
    auto ev = read_json_file(out_dir / "eval.json");
    for (const char* key : {"test_accuracy", "full_data_accuracy", "random_accuracy", "subset_size"})
      add("evaluate", key, ev.at(key));
    const auto& off = ev.at("cross_eval").at("off_diagonal_mean");
    for (std::size_t i = 0; i < off.size(); ++i) add("evaluate", "cross_eval_off_diagonal_" + std::to_string(i), off[i]);
    summary.push_back(ev.at("method").get<std::string>() + " at budget " + value_text(ev.at("budget")) +
                      ": test accuracy " + value_text(ev.at("test_accuracy")) + ", random " +
                      value_text(ev.at("random_accuracy")) + ", full data " + value_text(ev.at("full_data_accuracy")));
  }
  for (const auto& p : json_files(out_dir / "sweeps")) {
    auto rep = read_json_file(p);
    const std::string source = "sweep:" + rep.at("experiment").get<std::string>();
    for (const auto& cell : rep.at("cells")) {
      add(source, coords_text(cell.at("coords")) + ";stat=mean", cell.at("mean"));
      add(source, coords_text(cell.at("coords")) + ";stat=std", cell.at("std"));
    }
    summary.push_back(source + ": " + std::to_string(rep.at("cells").size()) + " cells");
  }
  for (const auto& p : json_files(out_dir / "reports" / "oracle")) {
    auto rep = read_json_file(p);
    const std::string source = "oracle:" + rep.at("check").get<std::string>();
    add(source, "passed", rep.at("passed"));
    for (const auto& e : rep.at("entries")) add(source, e.at("label").get<std::string>(), e.at("pipeline"));
    summary.push_back(source + ": " + (rep.at("passed").get<bool>() ? "pass" : "FAIL") +
                      (rep.value("inconclusive", false) ? " (inconclusive)" : ""));
  }

  std::ofstream csv(out_dir / "report.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (out_dir / "report.csv").string());
  csv << "source,key,value\n";
  for (const auto& r : rows) csv << r[0] << ',' << r[1] << ',' << r[2] << '\n';
  std::ofstream txt(out_dir / "summary.txt", std::ios::binary);
  if (!txt) throw std::runtime_error("cannot write " + (out_dir / "summary.txt").string());
  for (const auto& line : summary) txt << line << '\n';
}

}  // namespace drd
