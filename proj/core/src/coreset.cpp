#include "drd/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "drd/parallel.hpp"
#include "drd/rng.hpp"

namespace drd {

namespace {

void check_budget(double budget) {
  if (!(budget > 0.0 && budget <= 1.0)) throw std::invalid_argument("budget must lie in (0, 1], got " + std::to_string(budget));
}

// Sorted records grouped by label, labels ascending.
std::map<ClassId, std::vector<ScoreRecord>> sorted_per_class(const std::vector<ScoreRecord>& scores) {
  std::map<ClassId, std::vector<ScoreRecord>> by_class;
  for (const auto& s : sorted_by_score(scores)) by_class[s.label].push_back(s);
  return by_class;
}

SubsetSpec finish(SubsetSpec spec) {
  std::sort(spec.selected_ids.begin(), spec.selected_ids.end());
  return spec;
}

}  // namespace

int per_class_budget(double budget, int n) { return static_cast<int>(std::floor(budget * n + 1e-9)); }

std::vector<ScoreRecord> sorted_by_score(std::vector<ScoreRecord> scores) {
  std::sort(scores.begin(), scores.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
    if (a.deviation != b.deviation) return a.deviation < b.deviation;
    return a.sample_id < b.sample_id;
  });
  return scores;
}

std::vector<std::vector<ScoreRecord>> stratify_quantiles(const std::vector<ScoreRecord>& scores, int k) {
  if (k < 2) throw std::invalid_argument("stratify_quantiles: k must be >= 2");
  const auto n = static_cast<long>(scores.size());
  if (k > n) throw std::invalid_argument("stratify_quantiles: k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));
  auto sorted = sorted_by_score(scores);
  std::vector<std::vector<ScoreRecord>> groups(static_cast<std::size_t>(k));
  for (int g = 0; g < k; ++g) {
    long lo = g * n / k;
    long hi = (g + 1) * n / k;
    groups[static_cast<std::size_t>(g)].assign(sorted.begin() + lo, sorted.begin() + hi);
  }
  return groups;
}

SubsetSpec window_select(const std::vector<ScoreRecord>& scores, double budget, double start) {
  check_budget(budget);
  if (start < 0.0 || start + budget > 1.0 + 1e-9)
    throw std::invalid_argument("window_select: start " + std::to_string(start) + " + budget " + std::to_string(budget) +
                                " exceeds 1");
  SubsetSpec spec{"window", budget, {{"start", start}}, {}};
  for (const auto& [label, sorted] : sorted_per_class(scores)) {
    const int n = static_cast<int>(sorted.size());
    const int lo = per_class_budget(start, n);
    const int width = per_class_budget(budget, n);
    if (lo + width > n)
      throw std::invalid_argument("window_select: window [" + std::to_string(lo) + ", " + std::to_string(lo + width) +
                                  ") exceeds class " + std::to_string(label) + " of size " + std::to_string(n));
    for (int r = lo; r < lo + width; ++r) spec.selected_ids.push_back(sorted[static_cast<std::size_t>(r)].sample_id);
  }
  return finish(std::move(spec));
}

SubsetSpec ccs_select(const std::vector<ScoreRecord>& scores, double budget, int num_strata, std::uint64_t seed) {
  check_budget(budget);
  if (num_strata < 1) throw std::invalid_argument("ccs_select: num_strata must be >= 1");
  SubsetSpec spec{"ccs", budget, {{"num_strata", num_strata}, {"seed", seed}}, {}};
  for (const auto& [label, sorted] : sorted_per_class(scores)) {
    const long n = static_cast<long>(sorted.size());
    const int want = per_class_budget(budget, static_cast<int>(n));
    std::vector<std::vector<int>> strata(static_cast<std::size_t>(num_strata));
    for (int s = 0; s < num_strata; ++s) {
      auto& stratum = strata[static_cast<std::size_t>(s)];
      for (long r = s * n / num_strata; r < (s + 1) * n / num_strata; ++r)
        stratum.push_back(sorted[static_cast<std::size_t>(r)].sample_id);
      rng::Stream stream(rng::derive(seed, {rng::tag("ccs"), static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(s)}));
      std::shuffle(stratum.begin(), stratum.end(), stream.engine());
    }
    int taken = 0;
    for (std::size_t round = 0; taken < want; ++round)
      for (const auto& stratum : strata) {
        if (taken == want) break;
        if (round < stratum.size()) {
          spec.selected_ids.push_back(stratum[round]);
          ++taken;
        }
      }
  }
  return finish(std::move(spec));
}

SubsetSpec random_select(const LabeledDataset& dataset, double budget, std::uint64_t seed) {
  check_budget(budget);
  SubsetSpec spec{"random", budget, {{"seed", seed}}, {}};
  for (int c = 0; c < dataset.num_classes; ++c) {
    std::vector<int> ids;
    for (auto pos : dataset.positions_of_class(c)) ids.push_back(dataset.records[pos].sample_id);
    rng::Stream stream(rng::derive(seed, {rng::tag("random-select"), static_cast<std::uint64_t>(c)}));
    std::shuffle(ids.begin(), ids.end(), stream.engine());
    ids.resize(static_cast<std::size_t>(per_class_budget(budget, static_cast<int>(ids.size()))));
    spec.selected_ids.insert(spec.selected_ids.end(), ids.begin(), ids.end());
  }
  return finish(std::move(spec));
}

std::vector<double> bws_starts(double budget, double step) {
  check_budget(budget);
  if (!(step > 0.0)) throw std::invalid_argument("bws_starts: step must be > 0");
  const double limit = std::min(0.5, 1.0 - budget);
  const int count = static_cast<int>(std::floor(limit / step + 1e-9)) + 1;
  std::vector<double> starts;
  for (int i = 0; i < count; ++i) starts.push_back(i * step);
  return starts;
}

BwsResult bws_select(const std::vector<ScoreRecord>& scores, double budget, const SubsetEvaluator& evaluator, double step,
                     int threads) {
  const auto starts = bws_starts(budget, step);
  std::vector<SubsetSpec> windows;
  for (double s : starts) windows.push_back(window_select(scores, budget, s));
  std::vector<double> acc(starts.size());
  parallel_for(starts.size(), threads, [&](std::size_t i) {
    try {
      acc[i] = evaluator(windows[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("bws_select: evaluator failed at start " + std::to_string(starts[i]) + ": " + e.what());
    }
  });
  BwsResult result;
  std::size_t best = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    result.candidates.push_back({starts[i], acc[i]});
    if (acc[i] > acc[best]) best = i;
  }
  result.subset = windows[best];
  result.subset.method = "bws";
  result.subset.params = {{"start", starts[best]}, {"step", step}};
  return result;
}

std::vector<ScoreRecord> el2n_score(std::span<const TrainingDynamics> runs, int probe_epoch) {
  if (runs.empty()) throw std::invalid_argument("el2n_score: no training runs");
  if (probe_epoch < 1) throw std::invalid_argument("el2n_score: probe_epoch must be >= 1");
  const auto& first = runs.front();
  std::vector<ScoreRecord> out(first.sample_ids.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {first.sample_ids[i], first.labels[i], 0, 0.0, static_cast<int>(runs.size()), "el2n"};
  for (const auto& run : runs) {
    if (static_cast<int>(run.epochs.size()) < probe_epoch)
      throw std::invalid_argument("el2n_score: probe epoch " + std::to_string(probe_epoch) + " beyond " +
                                  std::to_string(run.epochs.size()) + " recorded epochs");
    if (run.sample_ids != first.sample_ids) throw std::invalid_argument("el2n_score: runs cover different samples");
    const Matrix& p = run.epochs[static_cast<std::size_t>(probe_epoch - 1)].probabilities;
    for (std::size_t i = 0; i < out.size(); ++i) {
      Vector residual = p.row(static_cast<Eigen::Index>(i)).transpose();
      residual[run.labels[i]] -= 1.0;
      out[i].deviation += residual.norm() / static_cast<double>(runs.size());
    }
  }
  return out;
}

std::vector<ScoreRecord> forgetting_score(const TrainingDynamics& dynamics) {
  const auto epochs = dynamics.epochs.size();
  if (epochs < 2) throw std::invalid_argument("forgetting_score: need at least 2 recorded epochs");
  std::vector<ScoreRecord> out;
  for (std::size_t i = 0; i < dynamics.sample_ids.size(); ++i) {
    int forgotten = 0;
    bool ever = dynamics.epochs[0].correct[i];
    for (std::size_t e = 1; e < epochs; ++e) {
      if (dynamics.epochs[e - 1].correct[i] && !dynamics.epochs[e].correct[i]) ++forgotten;
      ever = ever || dynamics.epochs[e].correct[i];
    }
    double score = ever ? forgotten : static_cast<double>(epochs);
    out.push_back({dynamics.sample_ids[i], dynamics.labels[i], 0, score, 1, "forgetting"});
  }
  return out;
}

nlohmann::json to_json(const SubsetSpec& subset) {
  return {{"method", subset.method},
          {"budget", subset.budget},
          {"params", subset.params},
          {"selected_ids", subset.selected_ids}};
}

SubsetSpec subset_from_json(const nlohmann::json& j) {
  SubsetSpec s;
  s.method = j.at("method").get<std::string>();
  s.budget = j.at("budget").get<double>();
  s.params = j.value("params", nlohmann::json::object());
  s.selected_ids = j.at("selected_ids").get<std::vector<int>>();
  if (!std::is_sorted(s.selected_ids.begin(), s.selected_ids.end()) ||
      std::adjacent_find(s.selected_ids.begin(), s.selected_ids.end()) != s.selected_ids.end())
    throw FormatError("subset: selected_ids must be strictly ascending");
  return s;
}

void write_subset_ids_csv(const SubsetSpec& subset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id\n";
  for (int id : subset.selected_ids) out << id << '\n';
}

}  // namespace drd
