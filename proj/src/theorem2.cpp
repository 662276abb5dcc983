#include "sspo/theorem2.hpp"

#include <algorithm>
#include <cmath>

#include "sspo/error.hpp"

namespace sspo {
namespace {

double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

// KL between N(mu_hat, s I) and N(mu, s I) from the mean shift alone.
double kl_from_mean_shift(std::span<const double> bias, double abar, double sigma0_sq) {
  const double shift_scale = -std::sqrt(1.0 - abar) / std::sqrt(abar);
  double acc = 0.0;
  for (double b : bias) {
    const double shift = shift_scale * b;
    acc += shift * shift;
  }
  return acc / (2.0 * sigma0_sq);
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

Theorem2Report theorem2_bias_check(const NoiseSchedule& schedule, int t, double sigma0_sq,
                                   std::span<const double> bias1, std::span<const double> bias2) {
  if (!(sigma0_sq > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma0^2 must be positive");
  if (bias1.size() != bias2.size()) {
    throw Error(ErrorCode::kShapeMismatch, "bias vectors differ in length");
  }
  const double abar = schedule.alpha_bar(t);
  Theorem2Report r;
  r.coefficient = (1.0 - abar) / (2.0 * sigma0_sq * abar);
  const double mse1 = squared_norm(bias1);
  const double mse2 = squared_norm(bias2);
  r.kl1 = r.coefficient * mse1;
  r.kl2 = r.coefficient * mse2;
  r.kl1_from_means = kl_from_mean_shift(bias1, abar, sigma0_sq);
  r.kl2_from_means = kl_from_mean_shift(bias2, abar, sigma0_sq);
  r.mse_gap = mse1 - mse2;
  r.kl_gap = r.kl1 - r.kl2;

  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
  };
  // The gap is compared against the larger KL, since it can cancel to ~0.
  const double kl_scale = std::max({r.kl1, r.kl2, 1e-300});
  r.identity_residual = std::max({r.kl1 == 0.0 && r.kl1_from_means == 0.0
                                      ? 0.0
                                      : rel(r.kl1, r.kl1_from_means),
                                  r.kl2 == 0.0 && r.kl2_from_means == 0.0
                                      ? 0.0
                                      : rel(r.kl2, r.kl2_from_means),
                                  std::abs(r.kl_gap - r.coefficient * r.mse_gap) / kl_scale});
  const double route_gap = r.kl1_from_means - r.kl2_from_means;
  r.ordering_agrees = sign_of(route_gap) == sign_of(r.mse_gap) ||
                      std::abs(route_gap) <= 1e-12 * kl_scale;
  return r;
}

}  // namespace sspo
