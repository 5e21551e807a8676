#pragma once

#include <string_view>

#include "drd/types.hpp"

namespace drd {

enum class DenoiserKind { analytic, learned };

std::string_view to_string(DenoiserKind kind);

struct DenoiserInfo {
  DenoiserKind kind = DenoiserKind::analytic;
  int dim = 0;
  int num_classes = 0;
};

// Noise predictor eps_hat = predict(x_t, t, c). Implementations are bound to
// a noise schedule at construction, must be deterministic, and must be safe
// to call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Vector predict(const Vector& x_t, Timestep t, ClassId c) const = 0;
  virtual DenoiserInfo info() const = 0;
};

}  // namespace drd
