#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drd/classifier.hpp"
#include "drd/dataset.hpp"
#include "drd/scoring.hpp"

namespace drd {

struct SubsetSpec {
  std::string method;
  double budget = 1.0;
  nlohmann::json params = nlohmann::json::object();
  std::vector<int> selected_ids;  // ascending
};

// floor(budget * n) with a small guard against representation error.
int per_class_budget(double budget, int n);

// Records sorted ascending by score, ties toward the smaller sample_id.
std::vector<ScoreRecord> sorted_by_score(std::vector<ScoreRecord> scores);

// k contiguous groups of the globally sorted list. Group i holds ranks
// [floor(i N / k), floor((i + 1) N / k)).
std::vector<std::vector<ScoreRecord>> stratify_quantiles(const std::vector<ScoreRecord>& scores, int k);

// Per class, ranks [floor(start n_c), floor(start n_c) + floor(budget n_c)).
SubsetSpec window_select(const std::vector<ScoreRecord>& scores, double budget, double start);

// Per class, num_strata equal strata of the sorted list sampled round-robin
// without replacement until floor(budget n_c) samples are drawn.
SubsetSpec ccs_select(const std::vector<ScoreRecord>& scores, double budget, int num_strata, std::uint64_t seed);

// Per class, floor(budget n_c) ids chosen uniformly at random.
SubsetSpec random_select(const LabeledDataset& dataset, double budget, std::uint64_t seed);

// {0, step, 2 step, ...} up to min(0.5, 1 - budget) inclusive.
std::vector<double> bws_starts(double budget, double step = 0.05);

struct BwsCandidate {
  double start = 0.0;
  double accuracy = 0.0;
};

struct BwsResult {
  SubsetSpec subset;
  std::vector<BwsCandidate> candidates;
};

using SubsetEvaluator = std::function<double(const SubsetSpec&)>;

// Evaluates every window from bws_starts and keeps the most accurate one,
// ties toward the smaller start.
BwsResult bws_select(const std::vector<ScoreRecord>& scores, double budget, const SubsetEvaluator& evaluator,
                     double step = 0.05, int threads = 1);

// Mean over runs of ||p(x_i) - onehot(y_i)||_2 after probe_epoch epochs
// (1-based). Records follow the sample order of the first run.
std::vector<ScoreRecord> el2n_score(std::span<const TrainingDynamics> runs, int probe_epoch = 5);

// Number of correct -> incorrect transitions between consecutive epochs.
// Samples never classified correctly score the number of epochs.
std::vector<ScoreRecord> forgetting_score(const TrainingDynamics& dynamics);

nlohmann::json to_json(const SubsetSpec& subset);
SubsetSpec subset_from_json(const nlohmann::json& j);
void write_subset_ids_csv(const SubsetSpec& subset, const std::filesystem::path& path);

}  // namespace drd
