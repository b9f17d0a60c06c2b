#include "rfl/loss.hpp"

#include <cmath>

namespace rfl {
namespace {

// log(1 + exp(x)) without overflow.
double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

int class_label(double y, Index classes, Index row) {
  int c = static_cast<int>(y);
  if (c < 0 || c >= classes || static_cast<double>(c) != y) {
    throw SchemaError("label " + std::to_string(y) + " at row " + std::to_string(row) +
                      " is outside [0, " + std::to_string(classes) + ")");
  }
  return c;
}

}  // namespace

void LossSpec::validate(Index output_dim) const {
  if (beta < 0) throw ConfigError("regularization weight beta must be >= 0");
  switch (kind) {
    case LossKind::squared:
    case LossKind::logistic:
      if (output_dim != 1) {
        throw ConfigError("squared/logistic loss requires a single output column");
      }
      break;
    case LossKind::softmax_cross_entropy:
      if (output_dim < 2) {
        throw ConfigError("softmax cross-entropy requires at least 2 classes");
      }
      break;
  }
}

int LossSpec::label_classes(Index output_dim) const {
  switch (kind) {
    case LossKind::squared:
      return 1;
    case LossKind::logistic:
      return 2;
    case LossKind::softmax_cross_entropy:
      return static_cast<int>(output_dim);
  }
  return 1;
}

LossResult loss_and_grad(const LossSpec& spec, const Eigen::Ref<const Matrix>& z,
                         const Eigen::Ref<const Vector>& y) {
  const Index k = z.rows();
  if (y.size() != k) throw SchemaError("loss: label count does not match prediction rows");
  LossResult out;
  out.row_gradients.resize(k, z.cols());
  double total = 0.0;

  switch (spec.kind) {
    case LossKind::squared: {
      out.row_gradients = z.col(0) - y;
      total = 0.5 * out.row_gradients.col(0).squaredNorm();
      break;
    }
    case LossKind::logistic: {
      for (Index j = 0; j < k; ++j) {
        int c = class_label(y(j), 2, j);
        double zj = z(j, 0);
        double p = 1.0 / (1.0 + std::exp(-zj));
        out.row_gradients(j, 0) = p - c;
        total += log1pexp(zj) - c * zj;
      }
      break;
    }
    case LossKind::softmax_cross_entropy: {
      for (Index j = 0; j < k; ++j) {
        int c = class_label(y(j), z.cols(), j);
        double zmax = z.row(j).maxCoeff();
        Eigen::RowVectorXd ex = (z.row(j).array() - zmax).exp();
        double denom = ex.sum();
        out.row_gradients.row(j) = ex / denom;
        out.row_gradients(j, c) -= 1.0;
        total += std::log(denom) + zmax - z(j, c);
      }
      break;
    }
  }
  out.mean_loss = k > 0 ? total / static_cast<double>(k) : 0.0;
  return out;
}

double loss_value(const LossSpec& spec, const Eigen::Ref<const Matrix>& z,
                  const Eigen::Ref<const Vector>& y) {
  return loss_and_grad(spec, z, y).mean_loss;
}

Matrix loss_hessian(const LossSpec& spec, const Eigen::Ref<const Vector>& z, double y) {
  const Index d = z.size();
  switch (spec.kind) {
    case LossKind::squared:
      return Matrix::Identity(d, d);
    case LossKind::logistic: {
      double p = 1.0 / (1.0 + std::exp(-z(0)));
      Matrix h(1, 1);
      h(0, 0) = p * (1.0 - p);
      return h;
    }
    case LossKind::softmax_cross_entropy: {
      double zmax = z.maxCoeff();
      Vector ex = (z.array() - zmax).exp();
      Vector s = ex / ex.sum();
      Matrix h = Matrix(s.asDiagonal());
      h.noalias() -= s * s.transpose();
      (void)y;
      return h;
    }
  }
  return Matrix::Identity(d, d);
}

}  // namespace rfl
