#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "drd/denoiser.hpp"
#include "drd/types.hpp"

namespace drd {

// Discrete variance-preserving forward process plus the DDIM inference grid.
// Index conventions: betas and posterior_sigmas are stored at [t-1] for
// t in [1, T]; alpha_bars is stored at [t] for t in [0, T].
struct NoiseSchedule {
  int train_steps = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;
  std::vector<double> posterior_sigmas;
  std::vector<Timestep> inference_grid;

  double beta(Timestep t) const { return betas.at(t - 1); }
  double alpha_bar(Timestep t) const { return alpha_bars.at(t); }
  double posterior_sigma(Timestep t) const { return posterior_sigmas.at(t - 1); }
  int inference_steps() const { return static_cast<int>(inference_grid.size()); }

  // Grid position (0-based) of a training timestep, if it lies on the grid.
  std::optional<int> grid_position(Timestep t) const;
  Timestep grid_timestep(int position) const;

  // Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

NoiseSchedule linear_schedule(int train_steps, double beta_start, double beta_end, int inference_steps);

// alpha_bar / (1 - alpha_bar); t = 0 is rejected.
double snr(const NoiseSchedule& schedule, Timestep t);

Vector forward_noise(const Vector& x0, Timestep t, const Vector& eps, const NoiseSchedule& schedule);

// Deterministic DDIM update from t_cur to t_prev. When `injected_noise` is
// given it replaces eps_hat in the direction term (stochastic comparison
// variant).
Vector ddim_step(const Vector& x_t, Timestep t_cur, Timestep t_prev, const Vector& eps_hat,
                 const NoiseSchedule& schedule, const Vector* injected_noise = nullptr);

// Walks the inference grid from t (a grid member) down to 0.
Vector ddim_reconstruct(const Vector& x_t, Timestep t, ClassId c, const Denoiser& denoiser,
                        const NoiseSchedule& schedule);

// Ancestral sampling from x_T ~ N(0, I) over every training index.
// `eta` scales the posterior standard deviations: eta = 1 is the DDPM
// sampler, eta = 0 collapses to deterministic DDIM over the full index range.
Vector ddpm_sample(ClassId c, const Denoiser& denoiser, const NoiseSchedule& schedule,
                   std::uint64_t seed, double eta = 1.0);

// The same chain started from a caller-supplied x_T.
Vector ddpm_sample_from(const Vector& x_T, ClassId c, const Denoiser& denoiser,
                        const NoiseSchedule& schedule, std::uint64_t seed, double eta = 1.0);

// Deterministic DDIM over every training index T, T-1, ..., 0.
Vector ddim_sample_full(const Vector& x_T, ClassId c, const Denoiser& denoiser,
                        const NoiseSchedule& schedule);

}  // namespace drd
