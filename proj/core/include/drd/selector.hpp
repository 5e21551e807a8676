#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "drd/dataset.hpp"
#include "drd/denoiser.hpp"
#include "drd/schedule.hpp"

namespace drd {

struct SelectorParams {
  int samples_per_class = 20;  // B
  int num_eps = 20;
  int delta_t = 1;  // training-index units
  double gamma_min = 0.05;
  double gamma_max = 1.0;
};

// Grid timesteps t with gamma_min <= snr(t) <= gamma_max, ascending.
// Throws std::invalid_argument when the set is empty.
std::vector<Timestep> feasible_timesteps(const NoiseSchedule& schedule, double gamma_min, double gamma_max);

// Diffusion-classifier log p(c' | x_t) for every class c'. The same noise
// draws eps_j (substream (seed, j)) are shared by all classes.
Vector diffusion_classifier_logprob(const Vector& x0, Timestep t, const Denoiser& denoiser,
                                    const NoiseSchedule& schedule, int num_eps, std::uint64_t seed);

struct ProxyEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// (1/B) sum_i |log p(c_i | x_{t+dt}) - log p(c_i | x_{t-dt})| / (2 dt).
// Sample i uses the substream (seed, i) at both t + dt and t - dt.
ProxyEstimate mi_derivative_proxy(std::span<const LabeledPoint> samples, Timestep t, const Denoiser& denoiser,
                                  const NoiseSchedule& schedule, int num_eps, int delta_t, std::uint64_t seed);

struct CurvePoint {
  Timestep t = 0;
  int grid_position = 0;
  double proxy = 0.0;
  double std_error = 0.0;
};

struct ClassSelection {
  ClassId label = 0;
  Timestep t_star = 0;
  int grid_position = 0;
  std::vector<int> sample_ids;
  std::vector<CurvePoint> curve;
};

struct TimestepSelection {
  SelectorParams params;
  std::vector<Timestep> feasible;
  std::vector<ClassSelection> classes;

  // t*_c indexed by class.
  std::vector<Timestep> class_timesteps() const;
};

// Per class: B samples (all if fewer), proxy at every feasible grid timestep,
// t*_c = argmax with ties toward the smaller t.
TimestepSelection select_timesteps(const LabeledDataset& dataset, const Denoiser& denoiser,
                                   const NoiseSchedule& schedule, const SelectorParams& params, std::uint64_t seed,
                                   int threads = 1);

// Selection that assigns one fixed timestep to every class (no curves).
TimestepSelection fixed_selection(const NoiseSchedule& schedule, Timestep t, int num_classes,
                                  const SelectorParams& params = {});

nlohmann::json to_json(const TimestepSelection& selection, const NoiseSchedule& schedule);
TimestepSelection selection_from_json(const nlohmann::json& j);

}  // namespace drd
