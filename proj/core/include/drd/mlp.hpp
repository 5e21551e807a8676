#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "drd/dataset.hpp"
#include "drd/denoiser.hpp"
#include "drd/schedule.hpp"

namespace drd {

struct MlpShape {
  int dim = 0;
  int num_classes = 0;
  int hidden = 0;

  static constexpr int kTimeFeatures = 3;
  // x_t, time features, one-hot class.
  int input_dim() const { return dim + kTimeFeatures + num_classes; }
  // (in + 1) H + (H + 1) H + (H + 1) d
  std::size_t parameter_count() const;
  bool operator==(const MlpShape&) const = default;
};

// input -> tanh(H) -> tanh(H) -> d, double precision throughout.
// Declared parameter order (checkpoints, flat views): W1 row-major, b1,
// W2 row-major, b2, W3 row-major, b3.
struct MlpModel {
  MlpShape shape;
  Matrix w1, w2, w3;
  Vector b1, b2, b3;

  static MlpModel zeros(const MlpShape& shape);
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  bool all_finite() const;

  Vector forward(const Vector& input) const;
  // Column-wise forward pass over a batch of encoded inputs (in x N).
  Matrix forward_batch(const Matrix& inputs) const;
};

// (t / T_train, sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))
Vector time_features(const NoiseSchedule& schedule, Timestep t);
Vector encode_input(const Vector& x_t, Timestep t, ClassId c, int num_classes, const NoiseSchedule& schedule);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
MlpModel init_mlp(int dim, int num_classes, int hidden, std::uint64_t seed);

struct MlpLossAndGrad {
  double loss = 0.0;
  MlpModel grad;
};

// Mean over the batch of ||eps - eps_hat(x_t, t, c)||^2 with
// x_t = forward_noise(x0, t, eps), and its exact gradient.
MlpLossAndGrad loss_and_grad(const MlpModel& model, std::span<const LabeledPoint> batch,
                             std::span<const Timestep> t_draws, std::span<const Vector> eps_draws,
                             const NoiseSchedule& schedule);

struct DenoiserTrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int hidden = 128;
  std::uint64_t seed = 0;
};

struct DenoiserTrainResult {
  MlpModel model;
  std::vector<double> epoch_losses;
};

// Plain SGD on the noise-prediction loss. Throws DivergenceError on a
// non-finite loss or parameter.
DenoiserTrainResult train_denoiser(const LabeledDataset& dataset, const NoiseSchedule& schedule,
                                   const DenoiserTrainConfig& config);

class LearnedDenoiser final : public Denoiser {
 public:
  LearnedDenoiser(MlpModel model, const NoiseSchedule& schedule);

  Vector predict(const Vector& x_t, Timestep t, ClassId c) const override;
  DenoiserInfo info() const override;
  const MlpModel& model() const { return model_; }

 private:
  MlpModel model_;
  Matrix time_features_;  // 3 x (T + 1)
};

// E ||eps - eps_hat||^2 over `draws_per_sample` seeded (t, eps) draws per
// record, t uniform on [1, T_train]. Works for any denoiser.
double mean_noise_prediction_error(const Denoiser& denoiser, const LabeledDataset& dataset,
                                   const NoiseSchedule& schedule, std::uint64_t seed, int draws_per_sample);

// Flat little-endian checkpoint: 8-byte magic "DRDMLPCK", u32 version,
// u32 d, u32 C, u32 H, then parameter_count() float64 values.
inline constexpr std::size_t kCheckpointHeaderBytes = 24;
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_denoiser(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_denoiser(const std::filesystem::path& path);

}  // namespace drd
