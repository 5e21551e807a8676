#include "drd/mlp.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "drd/rng.hpp"

namespace drd {

std::size_t MlpShape::parameter_count() const {
  auto in = static_cast<std::size_t>(input_dim());
  auto h = static_cast<std::size_t>(hidden);
  auto d = static_cast<std::size_t>(dim);
  return (in + 1) * h + (h + 1) * h + (h + 1) * d;
}

MlpModel MlpModel::zeros(const MlpShape& shape) {
  if (shape.hidden < 1 || shape.dim < 1 || shape.num_classes < 1)
    throw std::invalid_argument("MlpModel: dim, num_classes and hidden must be >= 1");
  MlpModel m;
  m.shape = shape;
  m.w1 = Matrix::Zero(shape.hidden, shape.input_dim());
  m.b1 = Vector::Zero(shape.hidden);
  m.w2 = Matrix::Zero(shape.hidden, shape.hidden);
  m.b2 = Vector::Zero(shape.hidden);
  m.w3 = Matrix::Zero(shape.dim, shape.hidden);
  m.b3 = Vector::Zero(shape.dim);
  return m;
}

namespace {

template <typename Fn>
void for_each_block(MlpModel& m, Fn&& fn) {
  fn(m.w1);
  fn(m.b1);
  fn(m.w2);
  fn(m.b2);
  fn(m.w3);
  fn(m.b3);
}

template <typename Fn>
void for_each_block(const MlpModel& m, Fn&& fn) {
  fn(m.w1);
  fn(m.b1);
  fn(m.w2);
  fn(m.b2);
  fn(m.w3);
  fn(m.b3);
}

}  // namespace

std::vector<double> MlpModel::parameters() const {
  std::vector<double> flat;
  flat.reserve(shape.parameter_count());
  for_each_block(*this, [&flat](const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) flat.push_back(block(r, c));
  });
  return flat;
}

void MlpModel::set_parameters(std::span<const double> flat) {
  if (flat.size() != shape.parameter_count())
    throw std::invalid_argument("MlpModel::set_parameters: expected " + std::to_string(shape.parameter_count()) +
                                " values, got " + std::to_string(flat.size()));
  std::size_t i = 0;
  for_each_block(*this, [&](auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = flat[i++];
  });
}

bool MlpModel::all_finite() const {
  bool ok = true;
  for_each_block(*this, [&ok](const auto& block) { ok = ok && block.allFinite(); });
  return ok;
}

Vector MlpModel::forward(const Vector& input) const {
  Vector h1 = (w1 * input + b1).array().tanh();
  Vector h2 = (w2 * h1 + b2).array().tanh();
  return w3 * h2 + b3;
}

Matrix MlpModel::forward_batch(const Matrix& inputs) const {
  Matrix h1 = ((w1 * inputs).colwise() + b1).array().tanh();
  Matrix h2 = ((w2 * h1).colwise() + b2).array().tanh();
  return (w3 * h2).colwise() + b3;
}

Vector time_features(const NoiseSchedule& schedule, Timestep t) {
  double a = schedule.alpha_bar(t);
  return Vector{{static_cast<double>(t) / schedule.train_steps, std::sqrt(a), std::sqrt(1.0 - a)}};
}

Vector encode_input(const Vector& x_t, Timestep t, ClassId c, int num_classes, const NoiseSchedule& schedule) {
  if (c < 0 || c >= num_classes) throw std::invalid_argument("encode_input: class out of range");
  const auto d = x_t.size();
  Vector in = Vector::Zero(d + MlpShape::kTimeFeatures + num_classes);
  in.head(d) = x_t;
  in.segment(d, MlpShape::kTimeFeatures) = time_features(schedule, t);
  in[d + MlpShape::kTimeFeatures + c] = 1.0;
  return in;
}

MlpModel init_mlp(int dim, int num_classes, int hidden, std::uint64_t seed) {
  MlpModel m = MlpModel::zeros({dim, num_classes, hidden});
  rng::Stream stream(rng::derive(seed, {rng::tag("mlp-init")}));
  auto fill = [&stream](Matrix& w) {
    double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = bound * (2.0 * stream.uniform() - 1.0);
  };
  fill(m.w1);
  fill(m.w2);
  fill(m.w3);
  return m;
}

MlpLossAndGrad loss_and_grad(const MlpModel& model, std::span<const LabeledPoint> batch,
                             std::span<const Timestep> t_draws, std::span<const Vector> eps_draws,
                             const NoiseSchedule& schedule) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (t_draws.size() != batch.size() || eps_draws.size() != batch.size())
    throw std::invalid_argument("loss_and_grad: need one (t, eps) pair per sample");
  const auto& shape = model.shape;
  Matrix inputs(shape.input_dim(), n);
  Matrix targets(shape.dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = batch[i];
    Vector x_t = forward_noise(p.x0, t_draws[i], eps_draws[i], schedule);
    inputs.col(i) = encode_input(x_t, t_draws[i], p.label, shape.num_classes, schedule);
    targets.col(i) = eps_draws[i];
  }

  Matrix h1 = ((model.w1 * inputs).colwise() + model.b1).array().tanh();
  Matrix h2 = ((model.w2 * h1).colwise() + model.b2).array().tanh();
  Matrix out = (model.w3 * h2).colwise() + model.b3;
  Matrix residual = out - targets;

  MlpLossAndGrad res;
  res.loss = residual.squaredNorm() / static_cast<double>(n);
  res.grad = MlpModel::zeros(shape);
  Matrix g_out = (2.0 / static_cast<double>(n)) * residual;
  res.grad.w3 = g_out * h2.transpose();
  res.grad.b3 = g_out.rowwise().sum();
  Matrix g_h2 = (model.w3.transpose() * g_out).array() * (1.0 - h2.array().square());
  res.grad.w2 = g_h2 * h1.transpose();
  res.grad.b2 = g_h2.rowwise().sum();
  Matrix g_h1 = (model.w2.transpose() * g_h2).array() * (1.0 - h1.array().square());
  res.grad.w1 = g_h1 * inputs.transpose();
  res.grad.b1 = g_h1.rowwise().sum();
  return res;
}

namespace {

Timestep draw_timestep(rng::Stream& stream, const NoiseSchedule& schedule) {
  return 1 + static_cast<Timestep>(stream.index(static_cast<std::size_t>(schedule.train_steps)));
}

}  // namespace

DenoiserTrainResult train_denoiser(const LabeledDataset& dataset, const NoiseSchedule& schedule,
                                   const DenoiserTrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
  if (config.batch_size < 1 || config.epochs < 0)
    throw std::invalid_argument("train_denoiser: batch_size must be >= 1 and epochs >= 0");
  DenoiserTrainResult result{init_mlp(dataset.dim, dataset.num_classes, config.hidden, config.seed), {}};
  const auto points = to_points(dataset);
  std::vector<std::size_t> order(points.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::Stream shuffle(rng::derive(config.seed, {rng::tag("denoiser-epoch"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<LabeledPoint> batch;
      std::vector<Timestep> ts;
      std::vector<Vector> eps;
      for (std::size_t j = start; j < end; ++j) {
        const auto& rec = dataset.records[order[j]];
        rng::Stream draw(rng::derive(config.seed, {rng::tag("denoiser-draw"), static_cast<std::uint64_t>(epoch),
                                                   static_cast<std::uint64_t>(rec.sample_id)}));
        batch.push_back(points[order[j]]);
        ts.push_back(draw_timestep(draw, schedule));
        eps.push_back(draw.gaussian_vector(dataset.dim));
      }
      auto lg = loss_and_grad(result.model, batch, ts, eps, schedule);
      if (!std::isfinite(lg.loss))
        throw DivergenceError("train_denoiser: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start) + " (learning_rate " +
                              std::to_string(config.learning_rate) + ")");
      loss_sum += lg.loss * static_cast<double>(end - start);
      auto params = result.model.parameters();
      auto grads = lg.grad.parameters();
      for (std::size_t k = 0; k < params.size(); ++k) params[k] -= config.learning_rate * grads[k];
      result.model.set_parameters(params);
      if (!result.model.all_finite())
        throw DivergenceError("train_denoiser: non-finite parameters after epoch " + std::to_string(epoch));
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return result;
}

LearnedDenoiser::LearnedDenoiser(MlpModel model, const NoiseSchedule& schedule) : model_(std::move(model)) {
  time_features_.resize(MlpShape::kTimeFeatures, schedule.train_steps + 1);
  for (Timestep t = 0; t <= schedule.train_steps; ++t) time_features_.col(t) = time_features(schedule, t);
}

Vector LearnedDenoiser::predict(const Vector& x_t, Timestep t, ClassId c) const {
  const auto& shape = model_.shape;
  if (x_t.size() != shape.dim) throw std::invalid_argument("LearnedDenoiser: input dimension mismatch");
  if (t < 0 || t >= time_features_.cols()) throw std::invalid_argument("LearnedDenoiser: timestep out of range");
  if (c < 0 || c >= shape.num_classes) throw std::invalid_argument("LearnedDenoiser: class out of range");
  Vector in = Vector::Zero(shape.input_dim());
  in.head(shape.dim) = x_t;
  in.segment(shape.dim, MlpShape::kTimeFeatures) = time_features_.col(t);
  in[shape.dim + MlpShape::kTimeFeatures + c] = 1.0;
  return model_.forward(in);
}

DenoiserInfo LearnedDenoiser::info() const {
  return {DenoiserKind::learned, model_.shape.dim, model_.shape.num_classes};
}

double mean_noise_prediction_error(const Denoiser& denoiser, const LabeledDataset& dataset,
                                   const NoiseSchedule& schedule, std::uint64_t seed, int draws_per_sample) {
  if (dataset.empty() || draws_per_sample < 1) throw std::invalid_argument("mean_noise_prediction_error: nothing to average");
  double total = 0.0;
  for (const auto& rec : dataset.records) {
    for (int k = 0; k < draws_per_sample; ++k) {
      rng::Stream draw(rng::derive(seed, {rng::tag("heldout-draw"), static_cast<std::uint64_t>(rec.sample_id),
                                          static_cast<std::uint64_t>(k)}));
      Timestep t = draw_timestep(draw, schedule);
      Vector eps = draw.gaussian_vector(dataset.dim);
      Vector x_t = forward_noise(rec.features, t, eps, schedule);
      total += (eps - denoiser.predict(x_t, t, rec.label)).squaredNorm();
    }
  }
  return total / (static_cast<double>(dataset.size()) * draws_per_sample);
}

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'R', 'D', 'M', 'L', 'P', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::istream& in, int bytes, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    int ch = in.get();
    if (ch == std::char_traits<char>::eof()) throw FormatError(path.string() + ": truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * i);
  }
  return v;
}

}  // namespace

void save_denoiser(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(model.shape.dim));
  put_u32(out, static_cast<std::uint32_t>(model.shape.num_classes));
  put_u32(out, static_cast<std::uint32_t>(model.shape.hidden));
  for (double v : model.parameters()) put_f64(out, v);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

MlpModel load_denoiser(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size())) throw FormatError(path.string() + ": truncated checkpoint");
  if (magic != kMagic) throw FormatError(path.string() + ": bad checkpoint magic");
  auto version = static_cast<std::uint32_t>(get_le(in, 4, path));
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  MlpShape shape;
  shape.dim = static_cast<int>(get_le(in, 4, path));
  shape.num_classes = static_cast<int>(get_le(in, 4, path));
  shape.hidden = static_cast<int>(get_le(in, 4, path));
  if (shape.dim < 1 || shape.num_classes < 1 || shape.hidden < 1 || shape.dim > 4096 || shape.hidden > (1 << 16))
    throw FormatError(path.string() + ": implausible checkpoint shape");
  MlpModel model = MlpModel::zeros(shape);
  std::vector<double> flat(shape.parameter_count());
  for (double& v : flat) v = std::bit_cast<double>(get_le(in, 8, path));
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes in checkpoint");
  model.set_parameters(flat);
  return model;
}

}  // namespace drd
