#include "drd/classifier.hpp"

#include <cmath>
#include <string>

#include "drd/rng.hpp"

namespace drd {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::logistic ? "logistic" : "mlp2"; }

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "logistic") return ModelKind::logistic;
  if (s == "mlp2") return ModelKind::mlp2;
  throw std::invalid_argument("unknown classifier kind '" + std::string(s) + "'");
}

Classifier Classifier::init(ModelKind kind, int dim, int num_classes, int hidden, std::uint64_t seed) {
  if (dim < 1 || num_classes < 1) throw std::invalid_argument("Classifier: dim and num_classes must be >= 1");
  Classifier m;
  m.kind = kind;
  m.dim = dim;
  m.num_classes = num_classes;
  if (kind == ModelKind::logistic) {
    m.w1 = Matrix::Zero(num_classes, dim);
    m.b1 = Vector::Zero(num_classes);
    return m;
  }
  if (hidden < 1) throw std::invalid_argument("Classifier: mlp2 needs hidden >= 1");
  rng::Stream stream(rng::derive(seed, {rng::tag("classifier-init")}));
  auto fill = [&stream](Matrix& w) {
    double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = bound * (2.0 * stream.uniform() - 1.0);
  };
  m.w1 = Matrix::Zero(hidden, dim);
  m.b1 = Vector::Zero(hidden);
  m.w2 = Matrix::Zero(num_classes, hidden);
  m.b2 = Vector::Zero(num_classes);
  fill(m.w1);
  fill(m.w2);
  return m;
}

std::vector<double> Classifier::parameters() const {
  std::vector<double> flat;
  auto push = [&flat](const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) flat.push_back(block(r, c));
  };
  push(w1);
  push(b1);
  if (kind == ModelKind::mlp2) {
    push(w2);
    push(b2);
  }
  return flat;
}

void Classifier::set_parameters(const std::vector<double>& flat) {
  std::size_t i = 0;
  auto pull = [&](auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        if (i >= flat.size()) throw std::invalid_argument("Classifier::set_parameters: too few values");
        block(r, c) = flat[i++];
      }
  };
  pull(w1);
  pull(b1);
  if (kind == ModelKind::mlp2) {
    pull(w2);
    pull(b2);
  }
  if (i != flat.size()) throw std::invalid_argument("Classifier::set_parameters: too many values");
}

namespace {

Matrix softmax_columns(Matrix logits) {
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double m = logits.col(j).maxCoeff();
    logits.col(j) = (logits.col(j).array() - m).exp();
    logits.col(j) /= logits.col(j).sum();
  }
  return logits;
}

Matrix design_matrix(const LabeledDataset& data) {
  Matrix x(data.dim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = data.records[i].features;
  return x;
}

}  // namespace

Matrix Classifier::probabilities(const Matrix& inputs) const {
  if (kind == ModelKind::logistic) return softmax_columns((w1 * inputs).colwise() + b1);
  Matrix h = ((w1 * inputs).colwise() + b1).array().tanh();
  return softmax_columns((w2 * h).colwise() + b2);
}

Vector Classifier::probabilities(const Vector& x) const {
  Matrix in = x;
  return probabilities(in).col(0);
}

ClassId Classifier::predict(const Vector& x) const {
  Vector p = probabilities(x);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < p.size(); ++c)
    if (p[c] > p[best]) best = c;
  return static_cast<ClassId>(best);
}

namespace {

ClassifierLossAndGrad loss_and_grad_impl(const Classifier& model, const Matrix& x, const std::vector<ClassId>& labels) {
  const auto n = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix onehot = Matrix::Zero(model.num_classes, n);
  for (Eigen::Index i = 0; i < n; ++i) onehot(labels[static_cast<std::size_t>(i)], i) = 1.0;

  Classifier grad = model;
  ClassifierLossAndGrad out;
  if (model.kind == ModelKind::logistic) {
    Matrix p = softmax_columns((model.w1 * x).colwise() + model.b1);
    out.loss = -(onehot.array() * p.array().max(1e-300).log()).sum() * inv_n;
    Matrix g = (p - onehot) * inv_n;
    grad.w1 = g * x.transpose();
    grad.b1 = g.rowwise().sum();
  } else {
    Matrix h = ((model.w1 * x).colwise() + model.b1).array().tanh();
    Matrix p = softmax_columns((model.w2 * h).colwise() + model.b2);
    out.loss = -(onehot.array() * p.array().max(1e-300).log()).sum() * inv_n;
    Matrix g = (p - onehot) * inv_n;
    grad.w2 = g * h.transpose();
    grad.b2 = g.rowwise().sum();
    Matrix gh = (model.w2.transpose() * g).array() * (1.0 - h.array().square());
    grad.w1 = gh * x.transpose();
    grad.b1 = gh.rowwise().sum();
  }
  out.grad = grad.parameters();
  return out;
}

std::vector<ClassId> labels_of(const LabeledDataset& data) {
  std::vector<ClassId> labels;
  labels.reserve(data.size());
  for (const auto& r : data.records) labels.push_back(r.label);
  return labels;
}

}  // namespace

ClassifierLossAndGrad classifier_loss_and_grad(const Classifier& model, const LabeledDataset& data) {
  if (data.empty()) throw std::invalid_argument("classifier_loss_and_grad: empty dataset");
  return loss_and_grad_impl(model, design_matrix(data), labels_of(data));
}

TrainingDynamics train_classifier(const LabeledDataset& subset, const ClassifierConfig& config) {
  if (subset.empty()) throw std::invalid_argument("train_classifier: empty subset");
  auto counts = subset.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0) throw std::invalid_argument("train_classifier: class " + std::to_string(c) + " missing from subset");
  if (config.epochs < 0) throw std::invalid_argument("train_classifier: epochs must be >= 0");

  TrainingDynamics dyn;
  dyn.config = config;
  dyn.num_classes = subset.num_classes;
  dyn.model = Classifier::init(config.kind, subset.dim, subset.num_classes, config.hidden, config.seed);
  dyn.labels = labels_of(subset);
  for (const auto& r : subset.records) dyn.sample_ids.push_back(r.sample_id);
  const Matrix x = design_matrix(subset);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto lg = loss_and_grad_impl(dyn.model, x, dyn.labels);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("train_classifier: non-finite loss at epoch " + std::to_string(epoch) + " (learning_rate " +
                            std::to_string(config.learning_rate) + ")");
    auto params = dyn.model.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      params[k] -= config.learning_rate * lg.grad[k];
      if (!std::isfinite(params[k]))
        throw DivergenceError("train_classifier: non-finite parameter after epoch " + std::to_string(epoch) +
                              " (learning_rate " + std::to_string(config.learning_rate) + ")");
    }
    dyn.model.set_parameters(params);
    if (config.record_dynamics) {
      EpochRecord rec;
      Matrix p = dyn.model.probabilities(x);
      rec.probabilities = p.transpose();
      rec.correct.resize(subset.size());
      for (Eigen::Index i = 0; i < p.cols(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < p.rows(); ++c)
          if (p(c, i) > p(best, i)) best = c;
        rec.correct[static_cast<std::size_t>(i)] = best == dyn.labels[static_cast<std::size_t>(i)];
      }
      dyn.epochs.push_back(std::move(rec));
    }
  }
  return dyn;
}

double evaluate(const Classifier& model, const LabeledDataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  Matrix p = model.probabilities(design_matrix(test));
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.rows(); ++c)
      if (p(c, i) > p(best, i)) best = c;
    if (best == test.records[static_cast<std::size_t>(i)].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace drd
