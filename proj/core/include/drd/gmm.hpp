#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drd/denoiser.hpp"
#include "drd/schedule.hpp"
#include "drd/types.hpp"

namespace drd {

struct GaussianComponent {
  double weight = 1.0;
  Vector mean;
  Matrix covariance;
};

// A Gaussian with a cached Cholesky factor.
class Gaussian {
 public:
  Gaussian(Vector mean, const Matrix& covariance);

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Eigen::LLT<Matrix>& cholesky() const { return llt_; }
  double log_density(const Vector& x) const;
  // Sigma^{-1} (x - mean).
  Vector precision_times_residual(const Vector& x) const;

 private:
  Vector mean_;
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
  double log_normalizer_ = 0.0;
};

// Class-conditional Gaussian mixtures evaluated at one fixed noise level:
// component k of class c has mean sqrt(a) mu_k and covariance
// a Sigma_k + (1 - a) I. With a = 1 this is the data distribution itself.
class DiffusedMixture {
 public:
  DiffusedMixture(const class GmmWorld& world, double alpha_bar);

  double alpha_bar() const { return alpha_bar_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  int dim() const { return dim_; }

  double log_density(const Vector& x, ClassId c) const;
  // Uniform-prior marginal over classes.
  double log_marginal(const Vector& x) const;
  // Gradient of the class-conditional log density.
  Vector score(const Vector& x, ClassId c) const;
  Vector marginal_score(const Vector& x) const;
  // p(c | x) under the uniform class prior.
  Vector posterior(const Vector& x) const;
  Vector log_posterior(const Vector& x) const;

 private:
  struct Component {
    double log_weight;
    Gaussian gaussian;
  };
  double alpha_bar_;
  int dim_;
  std::vector<std::vector<Component>> classes_;
};

// Labeled Gaussian-mixture world with a uniform class prior. Immutable.
class GmmWorld {
 public:
  static constexpr int kMaxDim = 16;

  explicit GmmWorld(std::vector<std::vector<GaussianComponent>> classes);

  int dim() const { return dim_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<GaussianComponent>& components(ClassId c) const { return classes_.at(c); }
  const std::vector<std::vector<GaussianComponent>>& classes() const { return classes_; }
  Vector class_mean(ClassId c) const;
  // Cholesky factors of the data covariances, per class and component.
  const Matrix& cholesky_factor(ClassId c, std::size_t k) const { return factors_.at(c).at(k); }

  DiffusedMixture at_alpha_bar(double alpha_bar) const { return DiffusedMixture(*this, alpha_bar); }
  DiffusedMixture at(Timestep t, const NoiseSchedule& schedule) const;

  // Same world with class order permuted: new class i is old class perm[i].
  GmmWorld relabeled(const std::vector<ClassId>& perm) const;

 private:
  int dim_ = 0;
  std::vector<std::vector<GaussianComponent>> classes_;
  std::vector<std::vector<Matrix>> factors_;
};

// Outlier injection settings carried by some presets.
struct OutlierSpec {
  double fraction = 0.0;
  double offset_scale = 0.0;
};

struct WorldPreset {
  std::string name;
  GmmWorld world;
  std::optional<OutlierSpec> outliers;
};

// "W2", "W2overlap", "W2o". Throws std::invalid_argument for unknown names.
WorldPreset world_preset(const std::string& name);
std::vector<std::string> preset_names();

// Exact log density at timestep t (t = 0 is the data density). A missing
// class selects the uniform-prior marginal.
double log_density(const GmmWorld& world, const Vector& x, std::optional<ClassId> c, Timestep t,
                   const NoiseSchedule& schedule);

// Closed-form grad_x log q_t(x | c), t >= 1.
Vector score_xt(const GmmWorld& world, const Vector& x_t, Timestep t, ClassId c, const NoiseSchedule& schedule);

Vector exact_posterior(const GmmWorld& world, const Vector& x_t, Timestep t, const NoiseSchedule& schedule);

// Bayes-optimal noise predictor eps* = -sqrt(1 - alpha_bar_t) * score_xt.
// Diffused mixtures for every training index are precomputed.
class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(GmmWorld world, const NoiseSchedule& schedule);

  Vector predict(const Vector& x_t, Timestep t, ClassId c) const override;
  DenoiserInfo info() const override;
  const GmmWorld& world() const { return world_; }

 private:
  GmmWorld world_;
  std::vector<double> sqrt_one_minus_alpha_bar_;
  std::vector<DiffusedMixture> levels_;
};

std::unique_ptr<Denoiser> analytic_denoiser(const GmmWorld& world, const NoiseSchedule& schedule);

}  // namespace drd
