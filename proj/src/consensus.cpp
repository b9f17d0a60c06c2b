#include "rfl/consensus.hpp"

#include <algorithm>
#include <cmath>

#include "rfl/privacy.hpp"

namespace rfl {

Vector sgd_aggregate(std::span<const Vector> partials, double scale) {
  if (partials.empty()) throw ProtocolError("gradient aggregation: no client messages");
  Vector sum = partials[0];
  for (std::size_t q = 1; q < partials.size(); ++q) {
    if (partials[q].size() != sum.size()) {
      throw ProtocolError("gradient aggregation: partial from client " + std::to_string(q) +
                          " has wrong shape");
    }
    sum += partials[q];
  }
  return scale * sum;
}

ConsensusState ConsensusState::init(Index param_count, int clients, double rho_h,
                                    int inner_rounds, int local_steps) {
  if (rho_h <= 0) throw ConfigError("horizontal penalty rho_h must be positive");
  if (inner_rounds < 1 || local_steps < 1) {
    throw ConfigError("consensus needs inner_rounds >= 1 and local_steps >= 1");
  }
  ConsensusState s;
  s.w = Vector::Zero(param_count);
  s.u.assign(clients, Vector::Zero(param_count));
  s.rho_h = rho_h;
  s.inner_rounds = inner_rounds;
  s.local_steps = local_steps;
  return s;
}

void consensus_theta_update(LocalModel& model, const AdmmLocalTerm& term, const Vector& w,
                            const Vector& u, const ThetaUpdateOptions& opts) {
  if (term.rows.rows() == 0) {
    // Proximal term only; the minimizer is exact.
    model.params() = w - u;
    return;
  }
  auto objective = [&] {
    return term.value(model) + 0.5 * opts.rho_h * (model.params() - w + u).squaredNorm();
  };
  double prev = objective();
  int rises = 0;
  for (int s = 0; s < opts.steps; ++s) {
    Vector data_grad;
    if (opts.dp) {
      // DP step: clip per-row data-term gradients, add one Gaussian draw per
      // coordinate to the sum, scale by 1/N. The proximal part depends only
      // on parameters, never on rows, so it is added after the noise.
      Matrix per_row = term.per_row_gradients(model);
      Vector noisy = clipped_noisy_sum(per_row, opts.dp->clip, opts.dp->sigma, opts.dp->gaussian);
      data_grad = term.inv_n * noisy;
    } else {
      data_grad = term.gradient(model);
    }
    Vector grad = data_grad + opts.rho_h * (model.params() - w + u);
    model.params() -= opts.eta * grad;
    if (!opts.dp) {
      // Noise-free path only: with DP the objective is expected to wander.
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

Vector consensus_w_update(const Vector& theta_bar, const Vector& u_bar, RegKind reg,
                          double beta, int m, double rho_h, const Vector& reg_mask) {
  Vector a = theta_bar + u_bar;
  if (reg == RegKind::none || beta == 0.0) return a;
  const double mp = static_cast<double>(m) * rho_h;
  Vector w(a.size());
  for (Index k = 0; k < a.size(); ++k) {
    w(k) = reg_mask(k) != 0.0 ? mp * a(k) / (2.0 * beta + mp) : a(k);
  }
  return w;
}

void consensus_u_update(Vector& u, const Vector& theta, const Vector& w) { u += theta - w; }

}  // namespace rfl
