#include "drd/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drd/rng.hpp"

namespace drd {

std::string_view to_string(DenoiserKind kind) {
  return kind == DenoiserKind::analytic ? "analytic" : "learned";
}

std::optional<int> NoiseSchedule::grid_position(Timestep t) const {
  auto it = std::lower_bound(inference_grid.begin(), inference_grid.end(), t);
  if (it == inference_grid.end() || *it != t) return std::nullopt;
  return static_cast<int>(it - inference_grid.begin());
}

Timestep NoiseSchedule::grid_timestep(int position) const {
  if (position < 0 || position >= inference_steps())
    throw std::invalid_argument("grid position " + std::to_string(position) + " outside [0, " +
                                std::to_string(inference_steps() - 1) + "]");
  return inference_grid[position];
}

void NoiseSchedule::validate() const {
  if (train_steps < 1) throw std::invalid_argument("schedule: train_steps must be >= 1");
  if (static_cast<int>(betas.size()) != train_steps ||
      static_cast<int>(alpha_bars.size()) != train_steps + 1 ||
      static_cast<int>(posterior_sigmas.size()) != train_steps)
    throw std::invalid_argument("schedule: array lengths disagree with train_steps");
  if (alpha_bars[0] != 1.0) throw std::invalid_argument("schedule: alpha_bars[0] must be 1");
  for (int t = 1; t <= train_steps; ++t) {
    double b = betas[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta outside (0, 1)");
    double expected = alpha_bars[t - 1] * (1.0 - b);
    if (std::abs(alpha_bars[t] - expected) > 1e-15 * std::max(1.0, expected))
      throw std::invalid_argument("schedule: alpha_bar product rule violated at t=" + std::to_string(t));
    if (!(alpha_bars[t] > 0.0 && alpha_bars[t] < alpha_bars[t - 1]))
      throw std::invalid_argument("schedule: alpha_bars not strictly decreasing in (0, 1]");
  }
  if (inference_grid.empty() || static_cast<int>(inference_grid.size()) > train_steps)
    throw std::invalid_argument("schedule: inference grid size outside [1, train_steps]");
  for (std::size_t i = 0; i < inference_grid.size(); ++i) {
    Timestep t = inference_grid[i];
    if (t < 1 || t > train_steps) throw std::invalid_argument("schedule: grid index outside [1, T]");
    if (i > 0 && t <= inference_grid[i - 1])
      throw std::invalid_argument("schedule: inference grid not strictly increasing");
  }
}

NoiseSchedule linear_schedule(int train_steps, double beta_start, double beta_end, int inference_steps) {
  if (train_steps < 1) throw std::invalid_argument("linear_schedule: train_steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("linear_schedule: require 0 < beta_start <= beta_end < 1");
  if (inference_steps < 1 || inference_steps > train_steps)
    throw std::invalid_argument("linear_schedule: require 1 <= inference_steps <= train_steps");

  NoiseSchedule s;
  s.train_steps = train_steps;
  s.betas.resize(train_steps);
  for (int i = 0; i < train_steps; ++i) {
    double frac = train_steps == 1 ? 0.0 : static_cast<double>(i) / (train_steps - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  s.alpha_bars.resize(train_steps + 1);
  s.alpha_bars[0] = 1.0;
  for (int t = 1; t <= train_steps; ++t) s.alpha_bars[t] = s.alpha_bars[t - 1] * (1.0 - s.betas[t - 1]);
  s.posterior_sigmas.resize(train_steps);
  for (int t = 1; t <= train_steps; ++t) {
    double var = s.betas[t - 1] * (1.0 - s.alpha_bars[t - 1]) / (1.0 - s.alpha_bars[t]);
    s.posterior_sigmas[t - 1] = std::sqrt(var);
  }
  // Evenly spaced over [1, T] with integer rounding; a single point sits at T.
  s.inference_grid.resize(inference_steps);
  if (inference_steps == 1) {
    s.inference_grid[0] = train_steps;
  } else {
    long long span = train_steps - 1;
    long long denom = inference_steps - 1;
    for (int i = 0; i < inference_steps; ++i)
      s.inference_grid[i] = static_cast<Timestep>(1 + (i * span + denom / 2) / denom);
  }
  s.validate();
  return s;
}

double snr(const NoiseSchedule& schedule, Timestep t) {
  if (t < 1 || t > schedule.train_steps)
    throw std::invalid_argument("snr: timestep must lie in [1, T_train]");
  double a = schedule.alpha_bar(t);
  return a / (1.0 - a);
}

namespace {

void check_timestep(const NoiseSchedule& schedule, Timestep t, const char* what) {
  if (t < 0 || t > schedule.train_steps)
    throw std::invalid_argument(std::string(what) + ": timestep " + std::to_string(t) + " outside [0, T_train]");
}

}  // namespace

Vector forward_noise(const Vector& x0, Timestep t, const Vector& eps, const NoiseSchedule& schedule) {
  if (x0.size() != eps.size()) throw std::invalid_argument("forward_noise: dimension mismatch");
  check_timestep(schedule, t, "forward_noise");
  if (t == 0) return x0;
  double a = schedule.alpha_bar(t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * eps;
}

Vector ddim_step(const Vector& x_t, Timestep t_cur, Timestep t_prev, const Vector& eps_hat,
                 const NoiseSchedule& schedule, const Vector* injected_noise) {
  check_timestep(schedule, t_cur, "ddim_step");
  check_timestep(schedule, t_prev, "ddim_step");
  if (t_prev >= t_cur) throw std::invalid_argument("ddim_step: require t_prev < t_cur");
  if (x_t.size() != eps_hat.size()) throw std::invalid_argument("ddim_step: dimension mismatch");
  double a_cur = schedule.alpha_bar(t_cur);
  double a_prev = schedule.alpha_bar(t_prev);
  Vector x0_hat = (x_t - std::sqrt(1.0 - a_cur) * eps_hat) / std::sqrt(a_cur);
  const Vector& direction = injected_noise ? *injected_noise : eps_hat;
  if (direction.size() != x_t.size()) throw std::invalid_argument("ddim_step: noise dimension mismatch");
  return std::sqrt(a_prev) * x0_hat + std::sqrt(1.0 - a_prev) * direction;
}

Vector ddim_reconstruct(const Vector& x_t, Timestep t, ClassId c, const Denoiser& denoiser,
                        const NoiseSchedule& schedule) {
  if (t == 0) return x_t;
  auto pos = schedule.grid_position(t);
  if (!pos) throw std::invalid_argument("ddim_reconstruct: timestep " + std::to_string(t) + " is not on the inference grid");
  Vector x = x_t;
  for (int p = *pos; p >= 0; --p) {
    Timestep cur = schedule.inference_grid[p];
    Timestep prev = p > 0 ? schedule.inference_grid[p - 1] : 0;
    Vector eps_hat = denoiser.predict(x, cur, c);
    if (eps_hat.size() != x.size())
      throw std::invalid_argument("ddim_reconstruct: denoiser output dimension mismatch");
    x = ddim_step(x, cur, prev, eps_hat, schedule);
  }
  return x;
}

Vector ddpm_sample_from(const Vector& x_T, ClassId c, const Denoiser& denoiser,
                        const NoiseSchedule& schedule, std::uint64_t seed, double eta) {
  rng::Stream stream(rng::derive(seed, {rng::tag("ddpm-step")}));
  Vector x = x_T;
  for (Timestep t = schedule.train_steps; t >= 1; --t) {
    double a = schedule.alpha_bar(t);
    double a_prev = schedule.alpha_bar(t - 1);
    double sigma = eta * schedule.posterior_sigma(t);
    Vector eps_hat = denoiser.predict(x, t, c);
    // Generalized DDIM form; for eta = 1 this equals the DDPM posterior mean
    // (1/sqrt(alpha_t)) (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat).
    Vector x0_hat = (x - std::sqrt(1.0 - a) * eps_hat) / std::sqrt(a);
    double dir = std::sqrt(std::max(0.0, 1.0 - a_prev - sigma * sigma));
    Vector z = stream.gaussian_vector(static_cast<int>(x.size()));
    x = std::sqrt(a_prev) * x0_hat + dir * eps_hat;
    if (sigma > 0.0) x += sigma * z;
  }
  return x;
}

Vector ddpm_sample(ClassId c, const Denoiser& denoiser, const NoiseSchedule& schedule,
                   std::uint64_t seed, double eta) {
  rng::Stream stream(rng::derive(seed, {rng::tag("ddpm-init")}));
  Vector x_T = stream.gaussian_vector(denoiser.info().dim);
  return ddpm_sample_from(x_T, c, denoiser, schedule, seed, eta);
}

Vector ddim_sample_full(const Vector& x_T, ClassId c, const Denoiser& denoiser,
                        const NoiseSchedule& schedule) {
  Vector x = x_T;
  for (Timestep t = schedule.train_steps; t >= 1; --t) x = ddim_step(x, t, t - 1, denoiser.predict(x, t, c), schedule);
  return x;
}

}  // namespace drd
