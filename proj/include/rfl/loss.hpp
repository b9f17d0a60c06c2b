#pragma once

#include "rfl/types.hpp"

namespace rfl {

enum class LossKind { squared, softmax_cross_entropy, logistic };
enum class RegKind { none, l2 };

/// Loss on the aggregated prediction z, plus the regularizer R(theta) with
/// weight beta. squared is 0.5*(z-y)^2 with d_c == 1; logistic is binary
/// cross-entropy on a single logit; softmax expects integer class labels.
struct LossSpec {
  LossKind kind = LossKind::squared;
  RegKind reg = RegKind::none;
  double beta = 0.0;

  void validate(Index output_dim) const;
  /// Number of label classes (2 for logistic, d_c for softmax, 1 otherwise).
  int label_classes(Index output_dim) const;
};

struct LossResult {
  double mean_loss = 0.0;   // (1/k)-scaled sum over rows
  Matrix row_gradients;     // k x d_c, d l_j / d z_j per row (unscaled)
};

LossResult loss_and_grad(const LossSpec& spec, const Eigen::Ref<const Matrix>& z,
                         const Eigen::Ref<const Vector>& y);

double loss_value(const LossSpec& spec, const Eigen::Ref<const Matrix>& z,
                  const Eigen::Ref<const Vector>& y);

/// d_c x d_c Hessian of l(z; y) at a single row; used by the damped Newton
/// solver in the ADMM z-update.
Matrix loss_hessian(const LossSpec& spec, const Eigen::Ref<const Vector>& z, double y);

}  // namespace rfl
