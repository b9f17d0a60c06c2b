#include "rfl/join_server.hpp"

#include <algorithm>
#include <cmath>

#include "rfl/privacy.hpp"

namespace rfl {

PredictionCache make_prediction_cache(const IndexMapping& mapping, Index output_dim) {
  PredictionCache cache(mapping.table_count());
  for (auto& h : cache) h = Matrix::Zero(mapping.joined_rows, output_dim);
  return cache;
}

void gather_predictions(PredictionCache& cache, const IndexMapping& mapping, int table,
                        const Eigen::Ref<const Matrix>& source_predictions, Index table_rows) {
  if (table < 0 || table >= mapping.table_count()) {
    throw ProtocolError("gather: no such organization " + std::to_string(table));
  }
  if (source_predictions.rows() != table_rows) {
    throw ProtocolError("gather: prediction message for organization " + std::to_string(table) +
                        " has " + std::to_string(source_predictions.rows()) + " rows, expected " +
                        std::to_string(table_rows));
  }
  Matrix& h = cache[table];
  const auto& p = mapping.source_rows[table];
  for (Index j = 0; j < mapping.joined_rows; ++j) h.row(j) = source_predictions.row(p[j]);
}

void gather_predictions_sparse(PredictionCache& cache, const IndexMapping& mapping, int table,
                               std::span<const Index> source_rows,
                               const Eigen::Ref<const Matrix>& predictions) {
  if (predictions.rows() != static_cast<Index>(source_rows.size())) {
    throw ProtocolError("gather: sparse prediction message for organization " +
                        std::to_string(table) + " has wrong length");
  }
  // Scatter to every joined duplicate of the touched rows.
  Matrix& h = cache[table];
  const auto& p = mapping.source_rows[table];
  for (Index j = 0; j < mapping.joined_rows; ++j) {
    auto it = std::lower_bound(source_rows.begin(), source_rows.end(), p[j]);
    if (it != source_rows.end() && *it == p[j]) {
      h.row(j) = predictions.row(it - source_rows.begin());
    }
  }
}

std::vector<Index> touched_source_rows(const IndexMapping& mapping, int table,
                                       std::span<const Index> batch) {
  std::vector<Index> rows;
  rows.reserve(batch.size());
  for (Index j : batch) rows.push_back(mapping.source_rows[table][j]);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

std::vector<SparseAggregate> sgd_server_step(const SgdServerState& state, const LossSpec& loss,
                                             const Vector& y, std::span<const Index> batch,
                                             const IndexMapping& mapping) {
  const Index b = static_cast<Index>(batch.size());
  const Index d_c = state.cache.front().cols();
  Matrix z = Matrix::Zero(b, d_c);
  Vector yb(b);
  for (Index r = 0; r < b; ++r) {
    const Index j = batch[r];
    if (j < 0 || j >= mapping.joined_rows) {
      throw ProtocolError("batch index " + std::to_string(j) + " out of range");
    }
    for (const auto& h : state.cache) z.row(r) += h.row(j);
    yb(r) = y(j);
  }
  const Matrix v = loss_and_grad(loss, z, yb).row_gradients;

  std::vector<SparseAggregate> out(mapping.table_count());
  for (int i = 0; i < mapping.table_count(); ++i) {
    auto rows = touched_source_rows(mapping, i, batch);
    SparseAggregate agg;
    agg.rows = std::move(rows);
    agg.counts = IntVector::Zero(agg.entries());
    agg.values = Matrix::Zero(agg.entries(), d_c);
    for (Index r = 0; r < b; ++r) {
      const Index src = mapping.source_rows[i][batch[r]];
      const auto it = std::lower_bound(agg.rows.begin(), agg.rows.end(), src);
      const Index slot = it - agg.rows.begin();
      agg.counts(slot) += 1;
      agg.values.row(slot) += v.row(r);
    }
    out[i] = std::move(agg);
  }
  return out;
}

AdmmServerState AdmmServerState::init(const IndexMapping& mapping, Index output_dim,
                                      double rho) {
  if (rho <= 0) throw ConfigError("ADMM penalty rho must be positive");
  AdmmServerState s;
  s.z = Matrix::Zero(mapping.joined_rows, output_dim);
  s.lambda = Matrix::Zero(mapping.joined_rows, output_dim);
  s.cache = make_prediction_cache(mapping, output_dim);
  s.rho = rho;
  return s;
}

Matrix AdmmServerState::prediction_sum() const {
  Matrix sum = cache.front();
  for (std::size_t i = 1; i < cache.size(); ++i) sum += cache[i];
  return sum;
}

namespace {

// Damped Newton on phi(z) = l(z; y) - lambda.z + (rho/2)||a - z||^2.
// Independent across rows; step halving keeps phi nonincreasing.
Vector newton_row(const LossSpec& loss, double y, const Vector& lambda, const Vector& a,
                  double rho, Vector z, Index row) {
  const Index d = z.size();
  Matrix z1(1, d);
  Vector yv(1);
  yv(0) = y;
  auto phi = [&](const Vector& zz) {
    z1.row(0) = zz;
    return loss_value(loss, z1, yv) - lambda.dot(zz) + 0.5 * rho * (a - zz).squaredNorm();
  };
  double value = phi(z);
  for (int iter = 0; iter < 50; ++iter) {
    z1.row(0) = z;
    Vector grad = loss_and_grad(loss, z1, yv).row_gradients.row(0).transpose();
    grad -= lambda;
    grad += rho * (z - a);
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-10) return z;
    Matrix hess = loss_hessian(loss, z, y);
    hess.diagonal().array() += rho;
    Vector step = hess.ldlt().solve(grad);
    double t = 1.0;
    for (int halvings = 0;; ++halvings) {
      Vector cand = z - t * step;
      double cand_value = phi(cand);
      if (cand_value <= value + 1e-15) {
        z = std::move(cand);
        value = cand_value;
        break;
      }
      if (halvings >= 60) {
        throw NumericalError("ADMM z-update: Newton failed to decrease at row " +
                             std::to_string(row));
      }
      t *= 0.5;
    }
  }
  // Accept the final iterate when already near stationarity, else report.
  z1.row(0) = z;
  Vector grad = loss_and_grad(loss, z1, yv).row_gradients.row(0).transpose();
  grad -= lambda;
  grad += rho * (z - a);
  if (grad.lpNorm<Eigen::Infinity>() > 1e-8) {
    throw NumericalError("ADMM z-update: no convergence at row " + std::to_string(row));
  }
  return z;
}

}  // namespace

void admm_z_update(AdmmServerState& state, const LossSpec& loss, const Vector& y) {
  const Matrix a = state.prediction_sum();
  if (loss.kind == LossKind::squared) {
    // argmin 0.5(z-y)^2 - lambda z + (rho/2)(a - z)^2  =>  (y + lambda + rho a)/(1 + rho)
    state.z.col(0) = (y + state.lambda.col(0) + state.rho * a.col(0)) / (1.0 + state.rho);
    return;
  }
  for (Index j = 0; j < state.z.rows(); ++j) {
    state.z.row(j) = newton_row(loss, y(j), state.lambda.row(j).transpose(),
                                a.row(j).transpose(), state.rho, state.z.row(j).transpose(), j);
  }
}

void admm_lambda_update(AdmmServerState& state) {
  state.lambda += state.rho * (state.prediction_sum() - state.z);
}

AggregatedVars admm_aggregate(const AdmmServerState& state, const ReverseMapping& reverse,
                              int table) {
  const auto& rev = reverse.tables[table];
  const Index n = static_cast<Index>(rev.groups.size());
  const Index d_c = state.z.cols();
  // s_{i,g} = sum_{k != i} H_{k,g} - z_g = (sum_k H_{k,g}) - H_{i,g} - z_g.
  const Matrix s = state.prediction_sum() - state.cache[table] - state.z;
  AggregatedVars agg;
  agg.Y = Matrix::Zero(n, d_c);
  agg.counts = rev.counts;
  for (Index j = 0; j < n; ++j) {
    for (Index g : rev.groups[j]) {
      agg.Y.row(j) += state.lambda.row(g) + state.rho * s.row(g);
    }
  }
  return agg;
}

double AdmmLocalTerm::value(const LocalModel& model) const {
  const Matrix f = model.forward(rows);
  double v = f.cwiseProduct(Y).sum();
  v += 0.5 * rho * (f.array().square().rowwise().sum() * counts.cast<double>().array()).sum();
  return inv_n * v;
}

Vector AdmmLocalTerm::gradient(const LocalModel& model) const {
  const Matrix f = model.forward(rows);
  Matrix upstream = Y + rho * counts.cast<double>().asDiagonal() * f;
  return inv_n * model.backward(rows, upstream);
}

Matrix AdmmLocalTerm::per_row_gradients(const LocalModel& model) const {
  const Matrix f = model.forward(rows);
  Matrix upstream = Y + rho * counts.cast<double>().asDiagonal() * f;
  return model.per_sample_gradients(rows, upstream);
}

void admm_solve_gradient_steps(LocalModel& model, const AdmmLocalTerm& term, double beta,
                               int steps, double eta,
                               const std::optional<GradientNoise>& dp) {
  auto objective = [&] { return term.value(model) + beta * model.reg_value(); };
  double prev = objective();
  int rises = 0;
  for (int s = 0; s < steps; ++s) {
    Vector grad;
    if (dp && dp->sigma > 0) {
      Matrix per_row = term.per_row_gradients(model);
      // Per-row share of the regularizer, weighted by the duplicate counts
      // so the clipped sum scales like the (1/N) data term.
      per_row.noalias() +=
          term.counts.cast<double>() * (beta * model.reg_gradient()).transpose();
      grad = term.inv_n * clipped_noisy_sum(per_row, dp->clip, dp->sigma, dp->gaussian);
    } else {
      grad = term.gradient(model) + beta * model.reg_gradient();
    }
    model.params() -= eta * grad;
    if (!dp) {
      double cur = objective();
      // Count genuine increases only; at convergence the value dithers by ulps.
      rises = cur > prev + 1e-12 * std::max(1.0, std::abs(prev)) ? rises + 1 : 0;
      if (rises >= 5) {
        throw NumericalError("theta-update diverging after " + std::to_string(s + 1) +
                             " steps; use a smaller local step size");
      }
      prev = cur;
    }
  }
}

void admm_solve_linear(LocalModel& model, const AdmmLocalTerm& term, double beta) {
  if (model.spec().kind != ModelKind::linear) {
    throw ConfigError("closed-form theta-update requires a linear model");
  }
  const Index d_c = model.spec().output_dim;
  const Index d = model.param_count() / d_c;
  Matrix x = term.rows;
  if (model.spec().bias) {
    x.conservativeResize(Eigen::NoChange, x.cols() + 1);
    x.col(x.cols() - 1).setOnes();
  }
  Matrix lhs = term.inv_n * term.rho *
               (x.transpose() * term.counts.cast<double>().asDiagonal() * x);
  for (Index r = 0; r < d; ++r) {
    // Bias coordinates carry no penalty; reg_mask is per flat coordinate but
    // uniform across output columns for row r.
    lhs(r, r) += 2.0 * beta * model.reg_mask()(r);
  }
  Matrix rhs = -term.inv_n * (x.transpose() * term.Y);
  Eigen::Map<Matrix>(model.params().data(), d, d_c) = lhs.ldlt().solve(rhs);
}

}  // namespace rfl
