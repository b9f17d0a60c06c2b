#pragma once

#include <cstdint>
#include <string>

#include "rfl/types.hpp"

namespace rfl {

enum class ModelKind { linear, mlp };

struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  Index input_dim = 0;   // d_i (before the optional bias column)
  Index output_dim = 1;  // d_c
  Index hidden = 16;     // mlp only
  bool bias = false;     // appends a constant-1 input column
  std::uint64_t rng_seed = 0;
};

/// A client-local model f(theta; x): linear (theta is d_in x d_c) or a
/// one-hidden-layer tanh network. Parameters live in one flat vector so
/// ADMM/consensus updates and DP clipping treat them uniformly.
class LocalModel {
 public:
  LocalModel() = default;

  /// Zero parameters for linear; uniform(+-1/sqrt(fan_in)) for mlp.
  static LocalModel init(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  Index param_count() const { return params_.size(); }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  /// k x d_c predictions for k rows of raw features (d_i columns).
  Matrix forward(const Eigen::Ref<const Matrix>& rows) const;

  /// Flat gradient of sum_k upstream_k . f(theta; row_k) w.r.t. theta.
  Vector backward(const Eigen::Ref<const Matrix>& rows,
                  const Eigen::Ref<const Matrix>& upstream) const;

  /// k x P matrix of unsummed per-row gradients (size-1 microbatches).
  Matrix per_sample_gradients(const Eigen::Ref<const Matrix>& rows,
                              const Eigen::Ref<const Matrix>& upstream) const;

  /// L2 regularizer ||theta||^2 and its gradient 2*theta, with bias
  /// coordinates excluded.
  double reg_value() const;
  Vector reg_gradient() const;
  const Vector& reg_mask() const { return reg_mask_; }

  void save(const std::string& path) const;
  static LocalModel load(const std::string& path);

 private:
  Matrix with_bias(const Eigen::Ref<const Matrix>& rows) const;

  ModelSpec spec_;
  Vector params_;
  Vector reg_mask_;  // 1 for regularized coordinates, 0 for bias rows
};

}  // namespace rfl
