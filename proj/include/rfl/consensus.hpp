#pragma once

#include <functional>
#include <optional>
#include <span>

#include "rfl/join_server.hpp"

namespace rfl {

/// Averages per-partition partial gradients: scale * sum_q partials, where
/// scale is 1/N for full batches and 1/B for mini-batches.
Vector sgd_aggregate(std::span<const Vector> partials, double scale);

/// Consensus state for one organization: the shared parameters w_i, one
/// scaled dual u_i^q per partition, the horizontal penalty, and the
/// inner-round / local-step counts.
struct ConsensusState {
  Vector w;
  std::vector<Vector> u;  // Q_i duals
  double rho_h = 1.0;
  int inner_rounds = 10;  // T'
  int local_steps = 20;   // S

  static ConsensusState init(Index param_count, int clients, double rho_h, int inner_rounds,
                             int local_steps);
};

/// Per-step DP transform applied to the summed clipped data-term gradient;
/// absent means no feature DP.
struct DpStep {
  double clip = 1.0;
  double sigma = 0.0;
  std::function<double()> gaussian;  // one standard normal per coordinate
};

struct ThetaUpdateOptions {
  double rho_h = 1.0;
  int steps = 20;          // S
  double eta = 0.1;        // local step size
  std::optional<DpStep> dp;
};

/// Approximately minimizes
///   (1/N) l(theta; T_i^q) + (rho_h/2) ||theta - w + u||^2
/// with S fixed-size gradient steps, warm-started from the model's current
/// parameters. Empty partitions solve exactly: theta = w - u.
void consensus_theta_update(LocalModel& model, const AdmmLocalTerm& term, const Vector& w,
                            const Vector& u, const ThetaUpdateOptions& opts);

/// Closed-form w-update: for L2 regularization
///   w = m rho_h (theta_bar + u_bar) / (2 beta + m rho_h)
/// per coordinate (bias coordinates skip the penalty); identity when reg is
/// none or beta == 0. `m` follows the organization count by default; a
/// config flag can substitute the partition count.
Vector consensus_w_update(const Vector& theta_bar, const Vector& u_bar, RegKind reg,
                          double beta, int m, double rho_h, const Vector& reg_mask);

/// u += theta - w, elementwise.
void consensus_u_update(Vector& u, const Vector& theta, const Vector& w);

}  // namespace rfl
