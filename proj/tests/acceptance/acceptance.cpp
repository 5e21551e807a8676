// Acceptance battery: one line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drd/artifacts.hpp"
#include "drd/classifier.hpp"
#include "drd/config.hpp"
#include "drd/coreset.hpp"
#include "drd/experiments.hpp"
#include "drd/gmm.hpp"
#include "drd/mlp.hpp"
#include "drd/oracle.hpp"
#include "drd/pipeline.hpp"
#include "drd/rng.hpp"
#include "drd/schedule.hpp"
#include "drd/selector.hpp"

namespace fs = std::filesystem;
using namespace drd;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Eps final : public Denoiser {
 public:
  explicit Eps(Vector eps) : eps_(std::move(eps)) {}
  Vector predict(const Vector&, Timestep, ClassId) const override { return eps_; }
  DenoiserInfo info() const override { return {DenoiserKind::analytic, static_cast<int>(eps_.size()), 1}; }

 private:
  Vector eps_;
};

const OracleReport& find_report(const std::vector<OracleReport>& reports, const std::string& check) {
  for (const auto& r : reports)
    if (r.check == check) return r;
  throw std::runtime_error("oracle check " + check + " produced no report");
}

Outcome exact_inversion() {
  const auto start = std::chrono::steady_clock::now();
  const auto s = make_schedule({});
  rng::Stream stream(1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vector x0 = 3.0 * stream.gaussian_vector(2);
    Vector eps = stream.gaussian_vector(2);
    Timestep t = s.inference_grid[stream.index(s.inference_grid.size())];
    Eps ideal(eps);
    worst = std::max(worst, (ddim_reconstruct(forward_noise(x0, t, eps, s), t, 0, ideal, s) - x0).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-9 && secs < 1.0, fmt("max abs error %.3g over 100 triples in %.3f s", worst, secs)};
}

Outcome schedule_snr() {
  const auto s = make_schedule({});
  bool decreasing = true;
  for (int t = 1; t <= s.train_steps; ++t) decreasing = decreasing && s.alpha_bar(t) < s.alpha_bar(t - 1);
  double algebra = 0.0;
  bool membership = true;
  for (double gamma : {0.05, 1.0}) {
    const double a = gamma / (1.0 + gamma);
    algebra = std::max(algebra, std::abs(a / (1.0 - a) - gamma));
  }
  const auto feasible = feasible_timesteps(s, 0.05, 1.0);
  for (Timestep t : s.inference_grid) {
    const bool inside = s.alpha_bar(t) >= 0.05 / 1.05 && s.alpha_bar(t) <= 0.5;
    membership = membership && inside == std::binary_search(feasible.begin(), feasible.end(), t);
  }
  std::string list;
  for (Timestep t : feasible) list += (list.empty() ? "" : ",") + std::to_string(t);
  return {decreasing && algebra <= 1e-12 && membership && !feasible.empty(),
          fmt("alpha_bar decreasing=%d, boundary error %.2g, feasible {%s}", decreasing, algebra, list.c_str())};
}

Outcome gradient_checks() {
  const auto s = make_schedule({});
  rng::Stream stream(2);
  const double h = 1e-5;

  auto mlp = init_mlp(2, 2, 8, 3);
  std::vector<LabeledPoint> batch;
  std::vector<Timestep> ts;
  std::vector<Vector> eps;
  for (int i = 0; i < 16; ++i) {
    batch.push_back({stream.gaussian_vector(2), static_cast<ClassId>(i % 2)});
    ts.push_back(1 + static_cast<Timestep>(stream.index(1000)));
    eps.push_back(stream.gaussian_vector(2));
  }
  auto params = mlp.parameters();
  auto grad = loss_and_grad(mlp, batch, ts, eps, s).grad.parameters();
  double mlp_worst = 0.0;
  for (int probe = 0; probe < 60; ++probe) {
    const std::size_t k = stream.index(params.size());
    auto p = params;
    p[k] += h;
    mlp.set_parameters(p);
    const double up = loss_and_grad(mlp, batch, ts, eps, s).loss;
    p[k] -= 2 * h;
    mlp.set_parameters(p);
    const double down = loss_and_grad(mlp, batch, ts, eps, s).loss;
    const double fd = (up - down) / (2 * h);
    mlp_worst = std::max(mlp_worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-3}));
  }

  auto data = sample_dataset(world_preset("W2overlap").world, 40, 4);
  auto clf = Classifier::init(ModelKind::logistic, 2, 2, 0, 0);
  auto cp = clf.parameters();
  for (auto& v : cp) v = 0.5 * stream.gaussian();
  clf.set_parameters(cp);
  auto cgrad = classifier_loss_and_grad(clf, data).grad;
  double clf_worst = 0.0;
  for (int probe = 0; probe < 60; ++probe) {
    const std::size_t k = static_cast<std::size_t>(probe) % cp.size();
    auto p = cp;
    p[k] += h;
    clf.set_parameters(p);
    const double up = classifier_loss_and_grad(clf, data).loss;
    p[k] -= 2 * h;
    clf.set_parameters(p);
    const double down = classifier_loss_and_grad(clf, data).loss;
    const double fd = (up - down) / (2 * h);
    clf_worst = std::max(clf_worst, std::abs(fd - cgrad[k]) / std::max({std::abs(fd), std::abs(cgrad[k]), 1e-3}));
    if (k + 1 == cp.size()) {
      for (auto& v : cp) v = 0.5 * stream.gaussian();
      clf.set_parameters(cp);
      cgrad = classifier_loss_and_grad(clf, data).grad;
    }
  }
  return {mlp_worst < 1e-5 && clf_worst < 1e-6,
          fmt("max relative error: denoiser %.2g (60 probes), logistic %.2g (60 probes)", mlp_worst, clf_worst)};
}

Outcome theorem1(const ExperimentConfig& config, int threads) {
  const auto start = std::chrono::steady_clock::now();
  auto reports = run_oracle_suite(config, {"theorem1"}, threads);
  const auto& r = find_report(reports, "theorem1");
  const double secs = seconds_since(start);
  std::string rhos;
  for (const auto& e : r.entries) rhos += fmt("%s%.3f", rhos.empty() ? "" : ",", e.pipeline);
  return {r.passed && secs < 120.0,
          fmt("rho {%s}, %d/%d seeds pass (need %d), %.1f s", rhos.c_str(), r.details["passes"].get<int>(),
              static_cast<int>(r.entries.size()), r.details["required"].get<int>(), secs)};
}

Outcome lemma1(const ExperimentConfig& config, int threads) {
  auto reports = run_oracle_suite(config, {"lemma1"}, threads);
  const auto& r = find_report(reports, "lemma1");
  double worst_ratio = 0.0, worst_se = 0.0;
  for (const auto& e : r.entries) {
    worst_ratio = std::max(worst_ratio, std::abs(e.pipeline - e.oracle) / e.tolerance);
    worst_se = std::max(worst_se, e.std_error / e.tolerance);
  }
  return {r.passed && !r.inconclusive,
          fmt("%d timesteps, max |diff|/tol %.3f, max SE/tol %.3f%s", static_cast<int>(r.entries.size()), worst_ratio,
              worst_se, r.inconclusive ? " (inconclusive)" : "")};
}

Outcome mi_endpoints(const ExperimentConfig& config, int threads) {
  auto reports = run_oracle_suite(config, {"mi"}, threads);
  const auto& r = find_report(reports, "mi");
  int failed = 0;
  for (const auto& e : r.entries) failed += !e.passed;
  return {r.passed, fmt("%d checks over %d presets, %d failed", static_cast<int>(r.entries.size()),
                        static_cast<int>(preset_names().size()), failed)};
}

Outcome selector_vs_grid(const ExperimentConfig& config, int threads) {
  const auto start = std::chrono::steady_clock::now();
  auto reports = run_oracle_suite(config, {"search", "argmax"}, threads);
  const auto& search = find_report(reports, "search");
  const auto& argmax = find_report(reports, "argmax");
  const double secs = seconds_since(start);
  const auto& s = search.entries.at(0);
  const auto& a = argmax.entries.at(0);
  return {search.passed && argmax.passed && secs < 600.0,
          fmt("IB acc %.4f vs grid best %.4f (delta %.4f) %s; median argmax gap %.1f grid steps (max %.0f) %s; %.1f s",
              s.pipeline, s.oracle, s.tolerance, search.passed ? "ok" : "FAIL", a.pipeline, a.tolerance,
              argmax.passed ? "ok" : "FAIL", secs)};
}

ExperimentConfig w2o_config(const ExperimentConfig& base) {
  auto c = base;
  c.world.preset = "W2o";
  c.world.custom.reset();
  c.scoring.timestep_override.reset();
  return c;
}

Outcome outlier_capture(const ExperimentConfig& base, int threads) {
  const auto cfg = w2o_config(base);
  const auto schedule = make_schedule(cfg.schedule);
  const auto preset = resolve_world(cfg.world);
  std::string fractions;
  bool ok = true;
  for (auto seed : trial_seeds(cfg.seed, 5)) {
    TrialRunner runner(cfg, schedule, preset, seed, threads);
    const auto& scores = runner.scores("drd");
    int captured = 0, total = 0;
    for (ClassId c = 0; c < preset.world.num_classes(); ++c) {
      std::vector<ScoreRecord> cls;
      for (const auto& r : scores)
        if (r.label == c) cls.push_back(r);
      cls = sorted_by_score(cls);
      const std::size_t first_top = cls.size() - cls.size() / 5;
      for (std::size_t i = 0; i < cls.size(); ++i) {
        if (runner.trial().train.by_id(cls[i].sample_id).provenance != Provenance::injected_outlier) continue;
        ++total;
        captured += i >= first_top;
      }
    }
    const double frac = total ? static_cast<double>(captured) / total : 0.0;
    ok = ok && total > 0 && frac >= 0.8;
    fractions += fmt("%s%.3f", fractions.empty() ? "" : ",", frac);
  }
  return {ok, "captured fraction per seed {" + fractions + "}"};
}

Outcome combinatorics() {
  auto near = [](const std::vector<double>& got, int count, double last) {
    if (static_cast<int>(got.size()) != count) return false;
    for (int i = 0; i < count; ++i)
      if (std::abs(got[i] - 0.05 * i) > 1e-12) return false;
    return std::abs(got.back() - last) < 1e-12;
  };
  const bool starts = near(bws_starts(0.3), 11, 0.5) && near(bws_starts(0.75), 6, 0.25) && bws_starts(1.0).size() == 1;

  // Fixture: two classes of 50 with distinct scores; count picks per stratum.
  std::vector<ScoreRecord> scores;
  for (int i = 0; i < 100; ++i) scores.push_back({i, i % 2, 1, static_cast<double>((i * 37) % 100), 1, "fixture"});
  bool ccs = true;
  for (auto [budget, strata] : std::vector<std::pair<double, int>>{{0.2, 5}, {0.26, 5}, {0.5, 4}, {1.0, 5}}) {
    auto subset = ccs_select(scores, budget, strata, 7);
    for (ClassId c = 0; c < 2; ++c) {
      std::vector<int> ranked;
      for (const auto& r : sorted_by_score(scores))
        if (r.label == c) ranked.push_back(r.sample_id);
      const int n = static_cast<int>(ranked.size());
      const int want = per_class_budget(budget, n);
      for (int k = 0; k < strata; ++k) {
        const int lo = k * n / strata, hi = (k + 1) * n / strata;
        int got = 0;
        for (int id : subset.selected_ids)
          got += std::find(ranked.begin() + lo, ranked.begin() + hi, id) != ranked.begin() + hi;
        // Round-robin: every stratum gets want / strata, the first (want % strata) one more, capped by size.
        const int expected = std::min(hi - lo, want / strata + (k < want % strata ? 1 : 0));
        ccs = ccs && got == expected;
      }
    }
  }
  return {starts && ccs, fmt("bws starts %s, ccs stratum counts %s", starts ? "match" : "MISMATCH",
                             ccs ? "match round-robin arithmetic" : "MISMATCH")};
}

Outcome defaults_wired(const fs::path& work, int threads) {
  ExperimentConfig defaults;
  auto check = [](const nlohmann::json& pre) {
    return pre["selector"]["samples_per_class"] == 20 && pre["selector"]["num_eps"] == 20 &&
           pre["selector"]["delta_t"] == 1 && pre["selector"]["gamma_min"] == 0.05 &&
           pre["selector"]["gamma_max"] == 1.0 && pre["schedule"]["inference_steps"] == 50;
  };
  bool ok = check(nlohmann::json::parse(hash_preimage(defaults)));
  std::string shipped = "configs/default.yaml not found";
#ifdef DRD_SOURCE_DIR
  const fs::path default_yaml = fs::path(DRD_SOURCE_DIR) / "configs" / "default.yaml";
  if (fs::exists(default_yaml)) {
    const bool same = config_hash(load_config(default_yaml)) == config_hash(defaults);
    ok = ok && same;
    shipped = same ? "configs/default.yaml resolves to the same hash" : "configs/default.yaml hash DIFFERS";
  }
#endif
  // Every artifact of a default run must carry the hash of that preimage.
  const auto dir = work / "defaults";
  fs::remove_all(dir);
  Pipeline p(defaults, dir, threads);
  p.run_all();
  int artifacts = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || name.ends_with(".meta.json") || name.ends_with(".runtime.json")) continue;
    ++artifacts;
    auto meta = read_meta(entry.path());
    ok = ok && meta && meta->config_hash == config_hash(defaults);
  }
  return {ok, fmt("defaults present in preimage; %s; %d artifacts carry hash %s", shipped.c_str(), artifacts,
                  config_hash(defaults).c_str())};
}

Outcome end_to_end(const ExperimentConfig& base, int threads) {
  const auto cfg = w2o_config(base);
  const auto schedule = make_schedule(cfg.schedule);
  const auto preset = resolve_world(cfg.world);
  double drd_sum = 0.0, random_sum = 0.0, low_sum = 0.0, mid_sum = 0.0;
  const int seeds = 5;
  const int k = cfg.evaluation.cross_eval_strata;
  for (auto seed : trial_seeds(cfg.seed, seeds)) {
    TrialRunner runner(cfg, schedule, preset, seed, threads);
    drd_sum += runner.test_accuracy(runner.select("drd+bws", 0.3));
    random_sum += runner.test_accuracy(runner.select("random", 0.3));
    const auto ts = runner.selection().class_timesteps();
    auto test_scores = runner.drd_scores_at(runner.trial().test, ts, "scoring-test");
    auto ccfg = classifier_config(cfg.evaluation, rng::derive(seed, {rng::tag("cross-eval")}));
    Matrix m = cross_eval(runner.trial().train, runner.scores("drd"), runner.trial().test, test_scores, k, ccfg);
    low_sum += mean_off_diagonal(m, k - 1);
    mid_sum += mean_off_diagonal(m, k / 2);
  }
  const double drd = drd_sum / seeds, random = random_sum / seeds;
  const double low = low_sum / seeds, mid = mid_sum / seeds;
  return {drd >= random && low < mid,
          fmt("drd+bws %.4f vs random %.4f; cross-eval off-diagonal lowest-likelihood %.4f vs middle %.4f", drd, random,
              low, mid)};
}

Outcome determinism(const ExperimentConfig& config, const fs::path& work) {
  const auto a = work / "det_t1", b = work / "det_t8", c = work / "det_t1_again";
  for (const auto& [dir, threads] : std::vector<std::pair<fs::path, int>>{{a, 1}, {b, 8}, {c, 1}}) {
    fs::remove_all(dir);
    Pipeline p(config, dir, threads);
    p.run_all();
    p.sweep("ratio_sweep");
  }
  int compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || name.ends_with(".runtime.json")) continue;
    const auto rel = fs::relative(entry.path(), a);
    const auto bytes = read_file(entry.path());
    ++compared;
    if (bytes != read_file(b / rel) || bytes != read_file(c / rel)) ++differing;
  }
  return {compared > 0 && differing == 0,
          fmt("%d artifacts incl. scores.csv and sweeps/ratio_sweep.csv; %d differ across runs and --threads 1/8",
              compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance battery"};
  int threads = 8;
  std::string config_path, work_dir = (fs::temp_directory_path() / "drd_acceptance").string(), json_path;
  std::vector<int> only;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "Base experiment config")->check(CLI::ExistingFile);
  app.add_option("--work-dir", work_dir, "Scratch directory for pipeline runs");
  app.add_option("--json", json_path, "Write the results as JSON");
  app.add_option("--only", only, "Run only these criterion numbers");
  CLI11_PARSE(app, argc, argv);

  const ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  const fs::path work(work_dir);
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "exact inversion", exact_inversion},
      {2, "schedule and SNR", schedule_snr},
      {3, "gradient checks", gradient_checks},
      {4, "deviation vs likelihood ordering", [&] { return theorem1(config, threads); }},
      {5, "MI derivative identity", [&] { return lemma1(config, threads); }},
      {6, "MI endpoints and monotonicity", [&] { return mi_endpoints(config, threads); }},
      {7, "IB selector vs exhaustive grid", [&] { return selector_vs_grid(config, threads); }},
      {8, "outlier capture", [&] { return outlier_capture(config, threads); }},
      {9, "selection combinatorics", combinatorics},
      {10, "defaults wired", [&] { return defaults_wired(work, threads); }},
      {11, "end-to-end benefit", [&] { return end_to_end(config, threads); }},
      {12, "determinism", [&] { return determinism(config, work); }},
  };

  const auto start = std::chrono::steady_clock::now();
  nlohmann::json results = nlohmann::json::array();
  int failures = 0;
  auto record = [&](int id, const std::string& name, const Outcome& o, double secs) {
    std::printf("[%s] %2d %-34s %s (%.1f s)\n", o.passed ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.passed;
    results.push_back({{"criterion", id}, {"name", name}, {"passed", o.passed}, {"detail", o.detail}, {"seconds", secs}});
  };
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    record(c.id, c.name, o, seconds_since(t0));
  }
  if (only.empty() || std::find(only.begin(), only.end(), 13) != only.end()) {
    const double total = seconds_since(start);
    record(13, "total runtime", {total < 1200.0, fmt("battery finished in %.1f s (limit 1200 s)", total)}, 0.0);
  }
  if (!json_path.empty()) write_json_file(json_path, results);
  return failures == 0 ? 0 : 1;
}
