#include "rfl/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

namespace rfl {

void DpConfig::validate() const {
  if (label_lambda < 0) throw ConfigError("label_lambda must be >= 0");
  if (feature_dp()) {
    if (clip_c <= 0) throw ConfigError("clipping threshold must be positive");
    if (delta <= 0 || delta >= 1) throw ConfigError("delta must lie in (0, 1)");
    if (subsample_r < 0 || subsample_r > 1) throw ConfigError("subsample_r must lie in [0, 1]");
  }
}

double label_epsilon(double lambda) {
  if (lambda < 0) throw ConfigError("label_lambda must be >= 0");
  if (lambda == 0) return std::numeric_limits<double>::infinity();
  return 2.0 * std::numbers::sqrt2 / lambda;
}

LabelPerturbation perturb_labels(const Vector& y, int class_count, double lambda, Rng& rng) {
  LabelPerturbation out;
  out.epsilon = label_epsilon(lambda);
  out.labels = y;
  if (lambda == 0) return out;

  const double scale = lambda / std::numbers::sqrt2;  // Laplace scale b, std = lambda
  if (class_count <= 1) {
    for (Index j = 0; j < y.size(); ++j) out.labels(j) = y(j) + rng.laplace(scale);
    return out;
  }
  for (Index j = 0; j < y.size(); ++j) {
    const int c = static_cast<int>(y(j));
    if (c < 0 || c >= class_count || static_cast<double>(c) != y(j)) {
      throw SchemaError("label " + std::to_string(y(j)) + " is not a class in [0, " +
                        std::to_string(class_count) + ")");
    }
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < class_count; ++k) {
      double noised = (k == c ? 1.0 : 0.0) + rng.laplace(scale);
      if (noised > best_value) {
        best_value = noised;
        best = k;
      }
    }
    out.labels(j) = best;
  }
  return out;
}

void clip_rows(Matrix& per_sample, double c) {
  if (c <= 0) throw ConfigError("clipping threshold must be positive");
  for (Index j = 0; j < per_sample.rows(); ++j) {
    const double norm = per_sample.row(j).norm();
    if (norm > c) per_sample.row(j) *= c / norm;
  }
}

Vector clipped_noisy_sum(const Eigen::Ref<const Matrix>& per_sample, double c, double sigma,
                         const std::function<double()>& gaussian) {
  Matrix clipped = per_sample;
  clip_rows(clipped, c);
  Vector sum = clipped.colwise().sum().transpose();
  if (sigma > 0) {
    for (Index k = 0; k < sum.size(); ++k) sum(k) += sigma * c * gaussian();
  }
  return sum;
}

Vector clip_and_noise(const Eigen::Ref<const Matrix>& per_sample, double c, double sigma,
                      Rng& rng) {
  if (per_sample.rows() < 1) throw ConfigError("clip_and_noise needs at least one gradient");
  Vector sum = clipped_noisy_sum(per_sample, c, sigma, [&] { return rng.gaussian(); });
  return sum / static_cast<double>(per_sample.rows());
}

namespace {

// log E_{t~N(0,1)} [ ((1-q) + q * exp(t/sigma - 1/(2 sigma^2)))^alpha ],
// the per-step Renyi moment of the subsampled Gaussian at integer order
// alpha, integrated in log space on a uniform grid.
double log_moment(int alpha, double q, double sigma) {
  if (q >= 1.0) return alpha * (alpha - 1.0) / (2.0 * sigma * sigma);
  const double lo = -12.0;
  const double hi = static_cast<double>(alpha) / sigma + 12.0;
  const double h = 1.0 / 256.0;
  const Index steps = static_cast<Index>((hi - lo) / h) + 1;

  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(steps);
  for (Index i = 0; i < steps; ++i) {
    const double t = lo + h * static_cast<double>(i);
    const double log_ratio_exp = t / sigma - 1.0 / (2.0 * sigma * sigma);
    // log((1-q) + q e^x) computed stably for either sign of x.
    double log_mix;
    const double lq = std::log(q), l1q = std::log1p(-q);
    if (log_ratio_exp + lq > l1q) {
      log_mix = lq + log_ratio_exp + std::log1p(std::exp(l1q - lq - log_ratio_exp));
    } else {
      log_mix = l1q + std::log1p(std::exp(lq + log_ratio_exp - l1q));
    }
    double weight = (i == 0 || i == steps - 1) ? 0.5 : 1.0;  // trapezoid
    terms[i] = -0.5 * t * t + alpha * log_mix + std::log(weight);
    max_term = std::max(max_term, terms[i]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  const double log_integral = max_term + std::log(acc) + std::log(h) -
                              0.5 * std::log(2.0 * std::numbers::pi);
  return std::max(0.0, log_integral);
}

const std::vector<int>& order_grid() {
  static const std::vector<int> grid = [] {
    std::vector<int> g;
    for (int a = 2; a <= 64; ++a) g.push_back(a);
    for (int a : {80, 96, 128, 160, 192, 256, 320, 384, 448, 512}) g.push_back(a);
    return g;
  }();
  return grid;
}

// The moments depend on (alpha, q, sigma) only; composition across steps is
// a multiplication, so epoch-by-epoch accounting reuses them.
double cached_log_moment(int alpha, double q, double sigma) {
  struct Key {
    int alpha;
    double q, sigma;
    bool operator<(const Key& o) const {
      return std::tie(alpha, q, sigma) < std::tie(o.alpha, o.q, o.sigma);
    }
  };
  static std::map<Key, double> cache;
  const Key key{alpha, q, sigma};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  double v = log_moment(alpha, q, sigma);
  cache.emplace(key, v);
  return v;
}

}  // namespace

double account(long steps, double r, double sigma, double delta) {
  if (steps < 0) throw ConfigError("step count must be >= 0");
  if (r < 0 || r > 1) throw ConfigError("subsampling ratio must lie in [0, 1]");
  if (delta <= 0 || delta >= 1) throw ConfigError("delta must lie in (0, 1)");
  if (steps == 0 || r == 0.0) return 0.0;
  if (sigma <= 0) return std::numeric_limits<double>::infinity();

  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();
  for (int alpha : order_grid()) {
    const double rdp = static_cast<double>(steps) * cached_log_moment(alpha, r, sigma);
    best = std::min(best, (rdp + log_inv_delta) / (alpha - 1.0));
  }
  return best;
}

}  // namespace rfl
