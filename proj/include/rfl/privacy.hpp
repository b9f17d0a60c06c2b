#pragma once

#include <functional>

#include "rfl/rng.hpp"
#include "rfl/types.hpp"

namespace rfl {

/// Differential-privacy settings. label_lambda is the per-coordinate
/// standard deviation of the Laplace noise added to labels (0 = off);
/// sigma is the Gaussian noise multiplier for clipped gradients (0 = off).
struct DpConfig {
  double label_lambda = 0.0;
  double clip_c = 1.0;
  double sigma = 0.0;
  double delta = 1e-5;
  double subsample_r = 0.0;  // 0 = derive from batch/N

  bool label_dp() const { return label_lambda > 0.0; }
  bool feature_dp() const { return sigma > 0.0; }
  void validate() const;
};

struct LabelPerturbation {
  Vector labels;
  double epsilon;  // +inf when the mechanism is off
};

/// One-shot label mechanism: adds Laplace noise with per-coordinate standard
/// deviation `lambda` to the one-hot encoding and re-labels by argmax
/// (class_count >= 2), or adds the noise directly for numeric labels
/// (class_count == 1). Applied client-side, once, before labels leave the
/// label owner. The reported budget is epsilon = 2*sqrt(2)/lambda.
LabelPerturbation perturb_labels(const Vector& y, int class_count, double lambda, Rng& rng);

double label_epsilon(double lambda);

/// Rescales each row to L2 norm <= c (multiply by min(1, c/||g||)).
void clip_rows(Matrix& per_sample, double c);

/// sum_j Clip(g_j, c) + N(0, sigma^2 c^2) per coordinate. The Gaussian
/// source is injected so distributed callers control their own streams.
Vector clipped_noisy_sum(const Eigen::Ref<const Matrix>& per_sample, double c, double sigma,
                         const std::function<double()>& gaussian);

/// The full DP-SGD batch transform: (1/B)(sum_j Clip(g_j, c) + noise).
Vector clip_and_noise(const Eigen::Ref<const Matrix>& per_sample, double c, double sigma,
                      Rng& rng);

/// (epsilon, delta) spent by `steps` subsampled-Gaussian steps at sampling
/// ratio r and noise multiplier sigma, via numerically integrated Renyi
/// moments converted at the given delta. Monotone nondecreasing in steps
/// and r, nonincreasing in sigma.
double account(long steps, double r, double sigma, double delta);

}  // namespace rfl
