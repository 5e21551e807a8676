#include "drd/gmm.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace drd {

namespace {

double log_sum_exp(const Vector& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

Gaussian::Gaussian(Vector mean, const Matrix& covariance)
    : mean_(std::move(mean)), covariance_(covariance), llt_(covariance) {
  if (covariance.rows() != mean_.size() || covariance.cols() != mean_.size())
    throw std::invalid_argument("Gaussian: covariance shape does not match mean");
  if (llt_.info() != Eigen::Success)
    throw std::invalid_argument("Gaussian: covariance is not positive definite");
  double log_det = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  log_normalizer_ = -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det);
}

double Gaussian::log_density(const Vector& x) const {
  Vector z = llt_.matrixL().solve(x - mean_);
  return log_normalizer_ - 0.5 * z.squaredNorm();
}

Vector Gaussian::precision_times_residual(const Vector& x) const { return llt_.solve(x - mean_); }

DiffusedMixture::DiffusedMixture(const GmmWorld& world, double alpha_bar)
    : alpha_bar_(alpha_bar), dim_(world.dim()) {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0))
    throw std::invalid_argument("DiffusedMixture: alpha_bar must lie in (0, 1]");
  double scale = std::sqrt(alpha_bar);
  Matrix noise = (1.0 - alpha_bar) * Matrix::Identity(dim_, dim_);
  classes_.reserve(world.num_classes());
  for (const auto& comps : world.classes()) {
    std::vector<Component> diffused;
    diffused.reserve(comps.size());
    for (const auto& comp : comps) {
      Matrix cov = alpha_bar * comp.covariance + noise;
      diffused.push_back({std::log(comp.weight), Gaussian(scale * comp.mean, cov)});
    }
    classes_.push_back(std::move(diffused));
  }
}

double DiffusedMixture::log_density(const Vector& x, ClassId c) const {
  const auto& comps = classes_.at(c);
  Vector terms(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k)
    terms[static_cast<Eigen::Index>(k)] = comps[k].log_weight + comps[k].gaussian.log_density(x);
  return log_sum_exp(terms);
}

double DiffusedMixture::log_marginal(const Vector& x) const {
  Vector per_class(num_classes());
  for (int c = 0; c < num_classes(); ++c) per_class[c] = log_density(x, c);
  return log_sum_exp(per_class) - std::log(static_cast<double>(num_classes()));
}

Vector DiffusedMixture::score(const Vector& x, ClassId c) const {
  const auto& comps = classes_.at(c);
  Vector logits(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k)
    logits[static_cast<Eigen::Index>(k)] = comps[k].log_weight + comps[k].gaussian.log_density(x);
  double norm = log_sum_exp(logits);
  Vector out = Vector::Zero(dim_);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    double r = std::exp(logits[static_cast<Eigen::Index>(k)] - norm);
    out -= r * comps[k].gaussian.precision_times_residual(x);
  }
  return out;
}

Vector DiffusedMixture::marginal_score(const Vector& x) const {
  Vector post = posterior(x);
  Vector out = Vector::Zero(dim_);
  for (int c = 0; c < num_classes(); ++c) out += post[c] * score(x, c);
  return out;
}

Vector DiffusedMixture::log_posterior(const Vector& x) const {
  Vector per_class(num_classes());
  for (int c = 0; c < num_classes(); ++c) per_class[c] = log_density(x, c);
  return per_class.array() - log_sum_exp(per_class);
}

Vector DiffusedMixture::posterior(const Vector& x) const { return log_posterior(x).array().exp(); }

GmmWorld::GmmWorld(std::vector<std::vector<GaussianComponent>> classes) : classes_(std::move(classes)) {
  if (classes_.empty()) throw std::invalid_argument("GmmWorld: need at least one class");
  dim_ = static_cast<int>(classes_.front().at(0).mean.size());
  if (dim_ < 1 || dim_ > kMaxDim)
    throw std::invalid_argument("GmmWorld: dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    const auto& comps = classes_[c];
    if (comps.empty()) throw std::invalid_argument("GmmWorld: class " + std::to_string(c) + " has no components");
    double total = 0.0;
    std::vector<Matrix> factors;
    for (const auto& comp : comps) {
      if (comp.mean.size() != dim_ || comp.covariance.rows() != dim_ || comp.covariance.cols() != dim_)
        throw std::invalid_argument("GmmWorld: component shape mismatch in class " + std::to_string(c));
      if (!(comp.weight > 0.0)) throw std::invalid_argument("GmmWorld: component weights must be positive");
      if (!comp.covariance.isApprox(comp.covariance.transpose(), 1e-12))
        throw std::invalid_argument("GmmWorld: covariance not symmetric in class " + std::to_string(c));
      Eigen::LLT<Matrix> llt(comp.covariance);
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument("GmmWorld: covariance not positive definite in class " + std::to_string(c));
      factors.push_back(llt.matrixL());
      total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("GmmWorld: component weights of class " + std::to_string(c) + " do not sum to 1");
    factors_.push_back(std::move(factors));
  }
}

Vector GmmWorld::class_mean(ClassId c) const {
  Vector m = Vector::Zero(dim_);
  for (const auto& comp : classes_.at(c)) m += comp.weight * comp.mean;
  return m;
}

DiffusedMixture GmmWorld::at(Timestep t, const NoiseSchedule& schedule) const {
  return DiffusedMixture(*this, schedule.alpha_bar(t));
}

GmmWorld GmmWorld::relabeled(const std::vector<ClassId>& perm) const {
  if (static_cast<int>(perm.size()) != num_classes()) throw std::invalid_argument("relabeled: permutation size");
  std::vector<std::vector<GaussianComponent>> out;
  for (ClassId c : perm) out.push_back(classes_.at(c));
  return GmmWorld(std::move(out));
}

namespace {

GmmWorld two_class_world(double offset) {
  Matrix eye = Matrix::Identity(2, 2);
  return GmmWorld({{{1.0, Vector{{-offset, 0.0}}, eye}}, {{1.0, Vector{{offset, 0.0}}, eye}}});
}

}  // namespace

std::vector<std::string> preset_names() { return {"W2", "W2overlap", "W2o"}; }

WorldPreset world_preset(const std::string& name) {
  if (name == "W2") return {name, two_class_world(2.0), std::nullopt};
  if (name == "W2overlap") return {name, two_class_world(1.0), std::nullopt};
  if (name == "W2o") return {name, two_class_world(1.0), OutlierSpec{0.1, 10.0}};
  throw std::invalid_argument("unknown world preset '" + name + "'");
}

double log_density(const GmmWorld& world, const Vector& x, std::optional<ClassId> c, Timestep t,
                   const NoiseSchedule& schedule) {
  DiffusedMixture mix = world.at(t, schedule);
  return c ? mix.log_density(x, *c) : mix.log_marginal(x);
}

Vector score_xt(const GmmWorld& world, const Vector& x_t, Timestep t, ClassId c, const NoiseSchedule& schedule) {
  if (t < 1) throw std::invalid_argument("score_xt: requires t >= 1");
  return world.at(t, schedule).score(x_t, c);
}

Vector exact_posterior(const GmmWorld& world, const Vector& x_t, Timestep t, const NoiseSchedule& schedule) {
  return world.at(t, schedule).posterior(x_t);
}

AnalyticDenoiser::AnalyticDenoiser(GmmWorld world, const NoiseSchedule& schedule) : world_(std::move(world)) {
  sqrt_one_minus_alpha_bar_.resize(schedule.train_steps + 1);
  levels_.reserve(schedule.train_steps + 1);
  for (Timestep t = 0; t <= schedule.train_steps; ++t) {
    sqrt_one_minus_alpha_bar_[t] = std::sqrt(1.0 - schedule.alpha_bar(t));
    levels_.emplace_back(world_, schedule.alpha_bar(t));
  }
}

Vector AnalyticDenoiser::predict(const Vector& x_t, Timestep t, ClassId c) const {
  if (t < 1 || t >= static_cast<Timestep>(levels_.size()))
    throw std::invalid_argument("AnalyticDenoiser: timestep " + std::to_string(t) + " outside [1, T_train]");
  return -sqrt_one_minus_alpha_bar_[t] * levels_[t].score(x_t, c);
}

DenoiserInfo AnalyticDenoiser::info() const {
  return {DenoiserKind::analytic, world_.dim(), world_.num_classes()};
}

std::unique_ptr<Denoiser> analytic_denoiser(const GmmWorld& world, const NoiseSchedule& schedule) {
  return std::make_unique<AnalyticDenoiser>(world, schedule);
}

}  // namespace drd
