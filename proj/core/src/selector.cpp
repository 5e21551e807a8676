#include "drd/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "drd/parallel.hpp"
#include "drd/rng.hpp"

namespace drd {

std::vector<Timestep> feasible_timesteps(const NoiseSchedule& schedule, double gamma_min, double gamma_max) {
  if (!(gamma_min > 0.0 && gamma_min < gamma_max))
    throw std::invalid_argument("feasible_timesteps: require 0 < gamma_min < gamma_max");
  std::vector<Timestep> out;
  for (Timestep t : schedule.inference_grid) {
    double r = snr(schedule, t);
    if (r >= gamma_min && r <= gamma_max) out.push_back(t);
  }
  if (out.empty()) throw std::invalid_argument("feasible_timesteps: no grid timestep has SNR inside the interval");
  return out;
}

Vector diffusion_classifier_logprob(const Vector& x0, Timestep t, const Denoiser& denoiser,
                                    const NoiseSchedule& schedule, int num_eps, std::uint64_t seed) {
  if (num_eps < 1) throw std::invalid_argument("diffusion_classifier_logprob: num_eps must be >= 1");
  const int num_classes = denoiser.info().num_classes;
  Vector mean_err = Vector::Zero(num_classes);
  for (int j = 0; j < num_eps; ++j) {
    rng::Stream stream(rng::derive(seed, {rng::tag("classifier-eps"), static_cast<std::uint64_t>(j)}));
    Vector eps = stream.gaussian_vector(static_cast<int>(x0.size()));
    Vector x_t = forward_noise(x0, t, eps, schedule);
    for (ClassId c = 0; c < num_classes; ++c) mean_err[c] += (eps - denoiser.predict(x_t, t, c)).squaredNorm();
  }
  Vector logits = -mean_err / num_eps;
  double m = logits.maxCoeff();
  double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

ProxyEstimate mi_derivative_proxy(std::span<const LabeledPoint> samples, Timestep t, const Denoiser& denoiser,
                                  const NoiseSchedule& schedule, int num_eps, int delta_t, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("mi_derivative_proxy: no samples");
  if (delta_t < 1 || t - delta_t < 1 || t + delta_t > schedule.train_steps)
    throw std::invalid_argument("mi_derivative_proxy: t +/- delta_t must stay inside [1, T_train] (t=" +
                                std::to_string(t) + ")");
  std::vector<double> values(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::uint64_t sample_seed = rng::derive(seed, {rng::tag("proxy-sample"), static_cast<std::uint64_t>(i)});
    const auto& p = samples[i];
    double up = diffusion_classifier_logprob(p.x0, t + delta_t, denoiser, schedule, num_eps, sample_seed)[p.label];
    double down = diffusion_classifier_logprob(p.x0, t - delta_t, denoiser, schedule, num_eps, sample_seed)[p.label];
    values[i] = std::abs(up - down) / (2.0 * delta_t);
  }
  const double n = static_cast<double>(values.size());
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se};
}

std::vector<Timestep> TimestepSelection::class_timesteps() const {
  std::vector<Timestep> out(classes.size(), 0);
  for (const auto& c : classes) out.at(c.label) = c.t_star;
  return out;
}

TimestepSelection select_timesteps(const LabeledDataset& dataset, const Denoiser& denoiser,
                                   const NoiseSchedule& schedule, const SelectorParams& params, std::uint64_t seed,
                                   int threads) {
  if (params.samples_per_class < 1 || params.num_eps < 1)
    throw std::invalid_argument("select_timesteps: B and num_eps must be >= 1");
  TimestepSelection sel;
  sel.params = params;
  sel.feasible = feasible_timesteps(schedule, params.gamma_min, params.gamma_max);

  for (ClassId c = 0; c < dataset.num_classes; ++c) {
    auto positions = dataset.positions_of_class(c);
    if (positions.empty()) throw std::invalid_argument("select_timesteps: class " + std::to_string(c) + " has no samples");
    rng::Stream pick(rng::derive(seed, {rng::tag("selector-subsample"), static_cast<std::uint64_t>(c)}));
    std::shuffle(positions.begin(), positions.end(), pick.engine());
    positions.resize(std::min<std::size_t>(positions.size(), static_cast<std::size_t>(params.samples_per_class)));

    ClassSelection cs;
    cs.label = c;
    std::vector<LabeledPoint> points;
    for (std::size_t pos : positions) {
      cs.sample_ids.push_back(dataset.records[pos].sample_id);
      points.push_back({dataset.records[pos].features, c});
    }
    cs.curve.resize(sel.feasible.size());
    parallel_for(sel.feasible.size(), threads, [&](std::size_t k) {
      Timestep t = sel.feasible[k];
      std::uint64_t key = rng::derive(seed, {rng::tag("selector-proxy"), static_cast<std::uint64_t>(c),
                                             static_cast<std::uint64_t>(t)});
      auto est = mi_derivative_proxy(points, t, denoiser, schedule, params.num_eps, params.delta_t, key);
      cs.curve[k] = {t, *schedule.grid_position(t), est.value, est.std_error};
    });
    std::size_t best = 0;
    for (std::size_t k = 1; k < cs.curve.size(); ++k)
      if (cs.curve[k].proxy > cs.curve[best].proxy) best = k;
    cs.t_star = cs.curve[best].t;
    cs.grid_position = cs.curve[best].grid_position;
    sel.classes.push_back(std::move(cs));
  }
  return sel;
}

TimestepSelection fixed_selection(const NoiseSchedule& schedule, Timestep t, int num_classes,
                                  const SelectorParams& params) {
  auto pos = schedule.grid_position(t);
  if (!pos && t != 0) throw std::invalid_argument("fixed_selection: timestep " + std::to_string(t) + " is not on the grid");
  TimestepSelection sel;
  sel.params = params;
  sel.feasible = {t};
  for (ClassId c = 0; c < num_classes; ++c) {
    ClassSelection cs;
    cs.label = c;
    cs.t_star = t;
    cs.grid_position = pos.value_or(-1);
    sel.classes.push_back(std::move(cs));
  }
  return sel;
}

nlohmann::json to_json(const TimestepSelection& selection, const NoiseSchedule& schedule) {
  nlohmann::json j;
  const auto& p = selection.params;
  j["params"] = {{"B", p.samples_per_class}, {"num_eps", p.num_eps}, {"delta_t", p.delta_t},
                 {"gamma_min", p.gamma_min}, {"gamma_max", p.gamma_max}};
  nlohmann::json feasible = nlohmann::json::array();
  for (Timestep t : selection.feasible) {
    auto pos = schedule.grid_position(t);
    feasible.push_back({{"t", t}, {"grid_position", pos ? *pos : -1}, {"snr", t > 0 ? snr(schedule, t) : 0.0}});
  }
  j["feasible"] = feasible;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : selection.classes) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& pt : c.curve)
      curve.push_back({{"t", pt.t}, {"grid_position", pt.grid_position}, {"proxy", pt.proxy}, {"std_error", pt.std_error}});
    classes.push_back({{"label", c.label}, {"t_star", c.t_star}, {"grid_position", c.grid_position},
                       {"sample_ids", c.sample_ids}, {"curve", curve}});
  }
  j["classes"] = classes;
  return j;
}

TimestepSelection selection_from_json(const nlohmann::json& j) {
  TimestepSelection sel;
  const auto& p = j.at("params");
  sel.params = {p.at("B").get<int>(), p.at("num_eps").get<int>(), p.at("delta_t").get<int>(),
                p.at("gamma_min").get<double>(), p.at("gamma_max").get<double>()};
  for (const auto& f : j.at("feasible")) sel.feasible.push_back(f.at("t").get<int>());
  for (const auto& c : j.at("classes")) {
    ClassSelection cs;
    cs.label = c.at("label").get<int>();
    cs.t_star = c.at("t_star").get<int>();
    cs.grid_position = c.at("grid_position").get<int>();
    cs.sample_ids = c.at("sample_ids").get<std::vector<int>>();
    for (const auto& pt : c.at("curve"))
      cs.curve.push_back({pt.at("t").get<int>(), pt.at("grid_position").get<int>(), pt.at("proxy").get<double>(),
                          pt.at("std_error").get<double>()});
    sel.classes.push_back(std::move(cs));
  }
  return sel;
}

}  // namespace drd
