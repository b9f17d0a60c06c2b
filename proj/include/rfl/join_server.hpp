#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rfl/loss.hpp"
#include "rfl/mapping.hpp"
#include "rfl/model.hpp"

namespace rfl {

/// Cached client predictions mapped onto joined rows: H[i] is N x d_c with
/// H[i].row(j) = f_i(theta_i; T_{i, p_i(j)}).
using PredictionCache = std::vector<Matrix>;

PredictionCache make_prediction_cache(const IndexMapping& mapping, Index output_dim);

/// Installs one organization's per-source-row predictions (n_i x d_c,
/// horizontal partitions concatenated in offset order) into H via p_i.
void gather_predictions(PredictionCache& cache, const IndexMapping& mapping, int table,
                        const Eigen::Ref<const Matrix>& source_predictions, Index table_rows);

/// Same, restricted to the given source rows (mini-batch path).
void gather_predictions_sparse(PredictionCache& cache, const IndexMapping& mapping, int table,
                               std::span<const Index> source_rows,
                               const Eigen::Ref<const Matrix>& predictions);

/// Server state for decomposed SGD: the prediction cache plus the current
/// batch of joined-row indices.
struct SgdServerState {
  PredictionCache cache;
  std::vector<Index> batch;
};

/// Batch-restricted aggregates for one organization: upstream loss
/// derivatives summed over each source row's joined duplicates, with the
/// per-batch duplicate counts. Only rows with a nonzero count are present.
struct SparseAggregate {
  std::vector<Index> rows;  // source rows, ascending
  IntVector counts;         // |G_i(j) ∩ batch|
  Matrix values;            // sum of dl/dz over the row's batched duplicates

  Index entries() const { return static_cast<Index>(rows.size()); }
};

/// Computes z_j = sum_i H_{i,j} and v_j = dl_j/dz_j over the batch, then
/// groups v by source row for every organization.
std::vector<SparseAggregate> sgd_server_step(const SgdServerState& state, const LossSpec& loss,
                                             const Vector& y, std::span<const Index> batch,
                                             const IndexMapping& mapping);

/// Source rows of `table` touched by the batch, ascending.
std::vector<Index> touched_source_rows(const IndexMapping& mapping, int table,
                                       std::span<const Index> batch);

/// Server state for sharing ADMM over the join: auxiliary z, duals lambda,
/// cached predictions, and the penalty rho.
struct AdmmServerState {
  Matrix z;       // N x d_c
  Matrix lambda;  // N x d_c
  PredictionCache cache;
  double rho = 1.0;

  static AdmmServerState init(const IndexMapping& mapping, Index output_dim, double rho);
  Matrix prediction_sum() const;  // N x d_c, sum_i H_{i,j}
};

/// Per-row argmin of l(z; y_j) - lambda_j^T z + (rho/2)||sum_i H_{i,j} - z||^2.
/// Squared loss solves in closed form; other losses use damped Newton
/// (tolerance 1e-10, at most 50 iterations), warm-started from the stored z.
void admm_z_update(AdmmServerState& state, const LossSpec& loss, const Vector& y);

/// lambda_j += rho * (sum_i H_{i,j} - z_j).
void admm_lambda_update(AdmmServerState& state);

/// Duplicate-aggregated server variables for one organization:
///ated Y_{i,j} = sum_{g in G_i(j)} (lambda_g + rho * s_{i,g}) with
/// s_{i,g} = sum_{k != i} H_{k,g} - z_g, plus the counts G_{i,j}.
struct AggregatedVars {
  Matrix Y;         // n_i x d_c
  IntVector counts; // n_i
};

AggregatedVars admm_aggregate(const AdmmServerState& state, const ReverseMapping& reverse,
                              int table);

/// Client-side data term of the duplicate-aggregated ADMM theta-subproblem:
///   (1/N) sum_j [ Y_j . f(theta; x_j) + (rho
///   G_j / 2) ||f(theta; x_j)||^2 ]
/// over one client's source rows.
struct AdmmLocalTerm {
  const Eigen::Ref<const Matrix> rows;    // n x d_i features
  const Eigen::Ref<const Matrix> Y;       // n x d_c
  const Eigen::Ref<const IntVector> counts;
  double rho = 1.0;
  double inv_n = 1.0;  // 1/N of the joined table

  double value(const LocalModel& model) const;
  Vector gradient(const LocalModel& model) const;
  /// Per-source-row gradient contributions (unscaled by 1/N), for DP clipping.
  Matrix per_row_gradients(const LocalModel& model) const;
};

/// Exact minimizer of the theta-subproblem for a linear model with L2
/// regularization: solves (rho/N * X^T diag(G) X + 2 beta D) theta = -X^T Y / N
/// column by column (D excludes bias coordinates).
void admm_solve_linear(LocalModel& model, const AdmmLocalTerm& term, double beta);

/// One standard-normal draw per coordinate; set when the step is DP.
struct GradientNoise {
  double clip = 1.0;
  double sigma = 0.0;
  std::function<double()> gaussian;
};

/// Inexact theta-subproblem solver for the single-client-per-organization
/// case: `steps` gradient descent steps on term + beta * R(theta), with the
/// optional DP transform applied to the data term.
void admm_solve_gradient_steps(LocalModel& model, const AdmmLocalTerm& term, double beta,
                               int steps, double eta,
                               const std::optional<GradientNoise>& dp = std::nullopt);

}  // namespace rfl
