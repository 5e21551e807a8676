#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "drd/dataset.hpp"
#include "drd/types.hpp"

namespace drd {

enum class ModelKind { logistic, mlp2 };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view s);

struct ClassifierConfig {
  ModelKind kind = ModelKind::logistic;
  int epochs = 300;
  double learning_rate = 0.5;
  int hidden = 16;  // mlp2 only
  std::uint64_t seed = 0;
  bool record_dynamics = true;
};

// Multinomial logistic regression (logits = W x + b) or a one-hidden-layer
// tanh network (logits = V tanh(W x + b) + c).
struct Classifier {
  ModelKind kind = ModelKind::logistic;
  int dim = 0;
  int num_classes = 0;
  Matrix w1;
  Vector b1;
  Matrix w2;  // mlp2 only
  Vector b2;  // mlp2 only

  static Classifier init(ModelKind kind, int dim, int num_classes, int hidden, std::uint64_t seed);
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  // Class probabilities for a batch of column inputs (C x N).
  Matrix probabilities(const Matrix& inputs) const;
  Vector probabilities(const Vector& x) const;
  // Argmax, ties toward the smaller class id.
  ClassId predict(const Vector& x) const;
};

struct EpochRecord {
  std::vector<bool> correct;  // per sample, dataset order
  Matrix probabilities;       // N x C
};

struct TrainingDynamics {
  std::vector<int> sample_ids;
  std::vector<ClassId> labels;
  int num_classes = 0;
  std::vector<EpochRecord> epochs;  // one entry after each epoch's update
  Classifier model;
  ClassifierConfig config;
};

struct ClassifierLossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean cross-entropy over the dataset and its analytic gradient in the
// declared parameter order.
ClassifierLossAndGrad classifier_loss_and_grad(const Classifier& model, const LabeledDataset& data);

// Full-batch gradient descent. Deterministic given config.seed. Throws
// DivergenceError on a non-finite loss.
TrainingDynamics train_classifier(const LabeledDataset& subset, const ClassifierConfig& config);

double evaluate(const Classifier& model, const LabeledDataset& test);

}  // namespace drd
