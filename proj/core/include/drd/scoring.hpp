#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "drd/dataset.hpp"
#include "drd/denoiser.hpp"
#include "drd/schedule.hpp"

namespace drd {

// dist(a, b) >= 0, dist(a, a) = 0, symmetric.
struct DeviationMetric {
  std::string name;
  std::function<double(const Vector&, const Vector&)> distance;
};

// Mean over coordinates of the squared difference.
DeviationMetric squared_l2_metric();
// Resolves "squared_l2". "lpips" is a recognised name without an
// implementation and throws std::invalid_argument, as does any other name.
DeviationMetric metric_by_name(const std::string& name);

// Per-sample score. Baseline scorers (EL2N, forgetting) reuse this record
// with their own score in `deviation` and their name in `metric`.
struct ScoreRecord {
  int sample_id = 0;
  ClassId label = 0;
  Timestep timestep = 0;
  double deviation = 0.0;
  int num_draws = 0;
  std::string metric;

  bool operator==(const ScoreRecord&) const = default;
};

// (1/K) sum_k metric(ddim_reconstruct(forward_noise(x0, t, eps_k), t, c), x0)
// with eps_k drawn from the substream (seed, sample_id, k).
double reconstruction_deviation(const Vector& x0, ClassId c, Timestep t, const Denoiser& denoiser,
                                const NoiseSchedule& schedule, const DeviationMetric& metric, int num_draws,
                                std::uint64_t seed, int sample_id = 0);

// One record per sample at its class's timestep, in ascending sample_id.
// class_timesteps[c] is the training-index timestep used for class c.
std::vector<ScoreRecord> score_dataset(const LabeledDataset& dataset, const std::vector<Timestep>& class_timesteps,
                                       const Denoiser& denoiser, const NoiseSchedule& schedule,
                                       const DeviationMetric& metric, int num_draws, std::uint64_t seed,
                                       int threads = 1);

// CSV: sample_id,label,timestep,deviation,K,metric
void write_scores_csv(const std::vector<ScoreRecord>& scores, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

}  // namespace drd
