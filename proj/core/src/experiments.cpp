#include "drd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "drd/format.hpp"
#include "drd/mlp.hpp"
#include "drd/rng.hpp"

namespace drd {

namespace {

std::uint64_t key(std::uint64_t seed, const char* name) { return rng::derive(seed, {rng::tag(name)}); }

std::pair<std::string, std::string> split_method(const std::string& method) {
  auto plus = method.find('+');
  if (plus == std::string::npos) throw std::invalid_argument("method '" + method + "' is not <score>+<strategy>");
  return {method.substr(0, plus), method.substr(plus + 1)};
}

}  // namespace

Trial make_trial(const WorldPreset& preset, const WorldConfig& world, std::uint64_t seed) {
  Trial t;
  t.seed = seed;
  t.train = sample_dataset(preset.world, world.n_per_class, key(seed, "train"));
  if (preset.outliers)
    t.train = inject_outliers(t.train, preset.world, preset.outliers->fraction, preset.outliers->offset_scale,
                              key(seed, "outliers"));
  t.validation = sample_dataset(preset.world, world.n_per_class, key(seed, "validation"));
  t.test = sample_dataset(preset.world, world.test_per_class, key(seed, "test"));
  return t;
}

std::vector<std::uint64_t> trial_seeds(std::uint64_t master, int count) {
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < count; ++s) seeds.push_back(rng::derive(master, {rng::tag("trial"), static_cast<std::uint64_t>(s)}));
  return seeds;
}

std::unique_ptr<Denoiser> make_denoiser(const DenoiserConfig& config, const GmmWorld& world,
                                        const NoiseSchedule& schedule, const LabeledDataset& train,
                                        std::uint64_t seed) {
  if (config.kind == "analytic") return analytic_denoiser(world, schedule);
  if (config.kind != "learned") throw std::invalid_argument("unknown denoiser kind '" + config.kind + "'");
  auto train_config = config.train;
  train_config.seed = key(seed, "denoiser");
  auto result = train_denoiser(train, schedule, train_config);
  return std::make_unique<LearnedDenoiser>(std::move(result.model), schedule);
}

ClassifierConfig classifier_config(const EvaluationConfig& config, std::uint64_t seed) {
  ClassifierConfig c = config.classifier;
  c.seed = seed;
  c.record_dynamics = false;
  return c;
}

double train_and_test(const LabeledDataset& train, const SubsetSpec& subset, const LabeledDataset& test,
                      const ClassifierConfig& config) {
  auto dyn = train_classifier(subset_by_ids(train, subset.selected_ids), config);
  return evaluate(dyn.model, test);
}

TrialRunner::TrialRunner(const ExperimentConfig& config, const NoiseSchedule& schedule, const WorldPreset& preset,
                         std::uint64_t seed, int threads)
    : config_(config),
      schedule_(schedule),
      preset_(preset),
      threads_(threads),
      trial_(make_trial(preset, config.world, seed)) {}

TrialRunner::TrialRunner(const ExperimentConfig& config, const NoiseSchedule& schedule, const WorldPreset& preset,
                         Trial trial, std::unique_ptr<Denoiser> denoiser, int threads)
    : config_(config),
      schedule_(schedule),
      preset_(preset),
      threads_(threads),
      trial_(std::move(trial)),
      denoiser_(std::move(denoiser)) {}

const Denoiser& TrialRunner::denoiser() {
  if (!denoiser_) denoiser_ = make_denoiser(config_.denoiser, preset_.world, schedule_, trial_.train, trial_.seed);
  return *denoiser_;
}

TimestepSelection TrialRunner::selection_with(const SelectorParams& params) {
  return select_timesteps(trial_.train, denoiser(), schedule_, params, key(trial_.seed, "selector"), threads_);
}

const TimestepSelection& TrialRunner::selection() {
  if (!selection_) {
    if (config_.scoring.timestep_override)
      selection_ = fixed_selection(schedule_, schedule_.grid_timestep(*config_.scoring.timestep_override),
                                   trial_.train.num_classes, config_.selector);
    else
      selection_ = selection_with(config_.selector);
  }
  return *selection_;
}

std::vector<ScoreRecord> TrialRunner::drd_scores_at(const LabeledDataset& data,
                                                    const std::vector<Timestep>& class_timesteps, const char* stream) {
  return score_dataset(data, class_timesteps, denoiser(), schedule_, metric_by_name(config_.scoring.metric),
                       config_.scoring.num_draws, key(trial_.seed, stream), threads_);
}

const std::vector<ScoreRecord>& TrialRunner::scores(const std::string& name) {
  auto it = scores_.find(name);
  if (it != scores_.end()) return it->second;
  std::vector<ScoreRecord> out;
  const auto& eval = config_.evaluation;
  ClassifierConfig base{eval.baseline_model, eval.baseline_epochs, eval.classifier.learning_rate,
                        eval.classifier.hidden, 0, true};
  if (name == "drd") {
    out = drd_scores_at(trial_.train, selection().class_timesteps());
  } else if (name == "forgetting") {
    base.seed = key(trial_.seed, "forgetting");
    out = forgetting_score(train_classifier(trial_.train, base));
  } else if (name == "el2n") {
    base.epochs = eval.el2n_probe_epoch;
    std::vector<TrainingDynamics> runs;
    for (int r = 0; r < eval.el2n_runs; ++r) {
      base.seed = rng::derive(trial_.seed, {rng::tag("el2n"), static_cast<std::uint64_t>(r)});
      runs.push_back(train_classifier(trial_.train, base));
    }
    out = el2n_score(runs, eval.el2n_probe_epoch);
  } else {
    throw std::invalid_argument("unknown score '" + name + "'");
  }
  return scores_.emplace(name, std::move(out)).first->second;
}

SubsetSpec TrialRunner::apply_strategy(const std::string& strategy, const std::vector<ScoreRecord>& scores,
                                       double budget) {
  const auto& sel = config_.selection;
  if (strategy == "window") return window_select(scores, budget, std::min(sel.window_start, 1.0 - budget));
  if (strategy == "ccs") return ccs_select(scores, budget, sel.num_strata, key(trial_.seed, "ccs"));
  if (strategy == "bws") {
    const LabeledDataset& target = sel.bws_eval_split == "holdout" ? trial_.validation : trial_.train;
    auto cfg = classifier_config(config_.evaluation, key(trial_.seed, "bws-proxy"));
    auto evaluator = [&](const SubsetSpec& s) { return train_and_test(trial_.train, s, target, cfg); };
    return bws_select(scores, budget, evaluator, sel.bws_step, threads_).subset;
  }
  throw std::invalid_argument("unknown strategy '" + strategy + "'");
}

SubsetSpec TrialRunner::select(const std::string& method, double budget) {
  if (method == "random") return random_select(trial_.train, budget, key(trial_.seed, "random"));
  auto [score, strategy] = split_method(method);
  auto subset = apply_strategy(strategy, scores(score), budget);
  subset.method = method;
  return subset;
}

double TrialRunner::test_accuracy(const SubsetSpec& subset) {
  return train_and_test(trial_.train, subset, trial_.test, classifier_config(config_.evaluation, key(trial_.seed, "classifier")));
}

Matrix cross_eval(const LabeledDataset& train, const std::vector<ScoreRecord>& train_scores,
                  const LabeledDataset& test, const std::vector<ScoreRecord>& test_scores, int k,
                  const ClassifierConfig& config) {
  auto train_groups = stratify_quantiles(train_scores, k);
  auto test_groups = stratify_quantiles(test_scores, k);
  auto ids = [](const std::vector<ScoreRecord>& group) {
    std::vector<int> out;
    for (const auto& r : group) out.push_back(r.sample_id);
    std::sort(out.begin(), out.end());
    return out;
  };
  std::vector<LabeledDataset> test_sets;
  for (const auto& g : test_groups) test_sets.push_back(subset_by_ids(test, ids(g)));
  Matrix m(k, k);
  for (int i = 0; i < k; ++i) {
    auto stratum = subset_by_ids(train, ids(train_groups[static_cast<std::size_t>(i)]));
    auto counts = stratum.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0)
        throw std::invalid_argument("cross_eval: stratum " + std::to_string(i) + " has no samples of class " +
                                    std::to_string(c));
    auto model = train_classifier(stratum, config).model;
    for (int j = 0; j < k; ++j) m(i, j) = evaluate(model, test_sets[static_cast<std::size_t>(j)]);
  }
  return m;
}

double mean_off_diagonal(const Matrix& m, int row) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (j != row) sum += m(row, j);
  return sum / static_cast<double>(m.cols() - 1);
}

ReportCell make_cell(nlohmann::json coords, std::vector<double> accuracies) {
  ReportCell cell;
  cell.coords = std::move(coords);
  cell.accuracies = std::move(accuracies);
  const double n = static_cast<double>(cell.accuracies.size());
  cell.mean = std::accumulate(cell.accuracies.begin(), cell.accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : cell.accuracies) ss += (a - cell.mean) * (a - cell.mean);
  cell.stddev = cell.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return cell;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells)
    cells.push_back({{"coords", c.coords}, {"accuracies", c.accuracies}, {"mean", c.mean}, {"std", c.stddev}});
  return {{"experiment", report.experiment},
          {"axes", report.axes},
          {"cells", cells},
          {"seeds", report.seeds},
          {"config_hash", report.config_hash},
          {"master_seed", report.master_seed},
          {"tool_version", DRD_VERSION},
          {"extra", report.extra}};
}

namespace {

std::string csv_value(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_null()) return "";
  return v.dump();
}

}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + json_path.string());
    out << to_json(report).dump(2) << '\n';
  }
  std::vector<std::string> columns;
  for (const auto& cell : report.cells)
    for (const auto& [k, v] : cell.coords.items())
      if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + csv_path.string());
  out << "experiment";
  for (const auto& c : columns) out << ',' << c;
  out << ",mean,std,num_seeds\n";
  for (const auto& cell : report.cells) {
    out << report.experiment;
    for (const auto& c : columns) out << ',' << (cell.coords.contains(c) ? csv_value(cell.coords.at(c)) : "");
    out << ',' << format_double(cell.mean) << ',' << format_double(cell.stddev) << ',' << cell.accuracies.size() << '\n';
  }
}

std::vector<std::string> experiment_names() {
  return {"ratio_sweep", "window_sweep", "strategy_grid", "hyper_sensitivity", "timestep_comparison"};
}

EvalReport run_sweep(const std::string& experiment, const ExperimentConfig& config, int threads) {
  const auto names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end())
    throw std::invalid_argument("unknown experiment '" + experiment + "'");
  validate(config);
  const auto schedule = make_schedule(config.schedule);
  const auto preset = resolve_world(config.world);

  EvalReport report;
  report.experiment = experiment;
  report.seeds = trial_seeds(config.seed, config.evaluation.num_seeds);
  report.config_hash = config_hash(config);
  report.master_seed = config.seed;

  std::vector<std::unique_ptr<TrialRunner>> runners;
  for (auto s : report.seeds) runners.push_back(std::make_unique<TrialRunner>(config, schedule, preset, s, threads));
  auto over_trials = [&](const auto& fn) {
    std::vector<double> acc;
    for (auto& r : runners) acc.push_back(fn(*r));
    return acc;
  };
  const double budget = config.selection.budget;
  const std::string ib_strategy =
      config.selection.method == "random" ? std::string("window") : split_method(config.selection.method).second;

  if (experiment == "ratio_sweep") {
    report.axes = {{"budget", config.sweep.budgets}, {"method", config.sweep.methods}};
    for (double b : config.sweep.budgets)
      for (const auto& m : config.sweep.methods)
        report.cells.push_back(make_cell({{"budget", b}, {"method", m}},
                                         over_trials([&](TrialRunner& r) { return r.test_accuracy(r.select(m, b)); })));
  } else if (experiment == "window_sweep") {
    auto starts = bws_starts(budget, config.selection.bws_step);
    report.axes = {{"budget", budget}, {"start", starts}};
    for (double s : starts)
      report.cells.push_back(make_cell({{"budget", budget}, {"start", s}}, over_trials([&](TrialRunner& r) {
                                         return r.test_accuracy(window_select(r.scores("drd"), budget, s));
                                       })));
  } else if (experiment == "strategy_grid") {
    report.axes = {{"budget", budget}, {"score", config.sweep.strategy_scores}, {"strategy", config.sweep.strategy_methods}};
    report.cells.push_back(make_cell({{"score", "random"}, {"strategy", "random"}},
                                     over_trials([&](TrialRunner& r) { return r.test_accuracy(r.select("random", budget)); })));
    for (const auto& sc : config.sweep.strategy_scores)
      for (const auto& st : config.sweep.strategy_methods)
        report.cells.push_back(make_cell({{"score", sc}, {"strategy", st}}, over_trials([&](TrialRunner& r) {
                                           return r.test_accuracy(r.select(sc + "+" + st, budget));
                                         })));
  } else if (experiment == "hyper_sensitivity") {
    report.axes = {{"budget", budget},
                   {"samples_per_class", config.sweep.hyper_samples_per_class},
                   {"num_eps", config.sweep.hyper_num_eps},
                   {"strategy", ib_strategy}};
    nlohmann::json chosen = nlohmann::json::array();
    for (int b : config.sweep.hyper_samples_per_class)
      for (int n : config.sweep.hyper_num_eps) {
        SelectorParams params = config.selector;
        params.samples_per_class = b;
        params.num_eps = n;
        std::vector<std::vector<Timestep>> picked;
        auto acc = over_trials([&](TrialRunner& r) {
          auto t = r.selection_with(params).class_timesteps();
          picked.push_back(t);
          return r.test_accuracy(r.apply_strategy(ib_strategy, r.drd_scores_at(r.trial().train, t), budget));
        });
        chosen.push_back({{"samples_per_class", b}, {"num_eps", n}, {"class_timesteps", picked}});
        report.cells.push_back(make_cell({{"samples_per_class", b}, {"num_eps", n}}, std::move(acc)));
      }
    report.extra["selected_timesteps"] = chosen;
  } else {
    std::vector<int> positions = config.sweep.comparison_positions;
    if (positions.empty())
      for (Timestep t : feasible_timesteps(schedule, config.selector.gamma_min, config.selector.gamma_max))
        positions.push_back(*schedule.grid_position(t));
    report.axes = {{"budget", budget}, {"position", positions}, {"strategy", ib_strategy}};
    for (int p : positions) {
      Timestep t = schedule.grid_timestep(p);
      report.cells.push_back(make_cell({{"choice", "fixed"}, {"position", p}, {"timestep", t}}, over_trials([&](TrialRunner& r) {
                                         std::vector<Timestep> ts(static_cast<std::size_t>(r.trial().train.num_classes), t);
                                         return r.test_accuracy(
                                             r.apply_strategy(ib_strategy, r.drd_scores_at(r.trial().train, ts), budget));
                                       })));
    }
    std::vector<std::vector<Timestep>> picked;
    auto acc = over_trials([&](TrialRunner& r) {
      picked.push_back(r.selection().class_timesteps());
      return r.test_accuracy(r.apply_strategy(ib_strategy, r.scores("drd"), budget));
    });
    report.cells.push_back(make_cell({{"choice", "ib"}}, std::move(acc)));
    report.extra["ib_class_timesteps"] = picked;
  }
  return report;
}

}  // namespace drd
