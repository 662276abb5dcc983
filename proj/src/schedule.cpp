#include "sspo/schedule.hpp"

#include <cmath>
#include <string>

#include "sspo/error.hpp"

namespace sspo {

std::string_view to_string(WeightingMode mode) {
  return mode == WeightingMode::kExact ? "exact" : "constant";
}

WeightingMode parse_weighting_mode(std::string_view text) {
  if (text == "constant") return WeightingMode::kConstant;
  if (text == "exact") return WeightingMode::kExact;
  throw Error(ErrorCode::kConfig, "weighting_mode must be 'constant' or 'exact', got '" +
                                      std::string(text) + "'");
}

NoiseSchedule::NoiseSchedule(double alpha, int steps, WeightingMode mode)
    : alpha_(alpha), steps_(steps), mode_(mode) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  }
  if (steps < 2) throw Error(ErrorCode::kInvalidArgument, "T must be at least 2");
  // Built by repeated multiplication so alpha_bar(t+1) == alpha_bar(t) * alpha.
  alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
  alpha_bar_[0] = 1.0;
  for (int t = 1; t <= steps; ++t) alpha_bar_[t] = alpha_bar_[t - 1] * alpha;
}

void NoiseSchedule::check_timestep(int t) const {
  if (t < 1 || t > steps_) {
    throw Error(ErrorCode::kTimestepOutOfRange,
                "t=" + std::to_string(t) + " outside [1, " + std::to_string(steps_) + "]");
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  check_timestep(t);
  return alpha_bar_[t];
}

void NoiseSchedule::forward_diffuse(std::span<const double> x0, int t,
                                    std::span<const double> eps,
                                    std::span<double> out) const {
  check_timestep(t);
  if (x0.size() != eps.size() || out.size() != x0.size()) {
    throw Error(ErrorCode::kShapeMismatch, "forward_diffuse operands differ in size");
  }
  const double signal = std::sqrt(alpha_bar_[t]);
  const double noise = std::sqrt(1.0 - alpha_bar_[t]);
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
}

Tensor NoiseSchedule::forward_diffuse(const Tensor& x0, int t, const Tensor& eps) const {
  if (x0.shape() != eps.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "x0 and eps have different shapes");
  }
  std::vector<double> out(x0.size());
  forward_diffuse(x0.data(), t, eps.data(), out);
  return Tensor(x0.shape(), std::move(out));
}

double NoiseSchedule::sigma_t_sq(int t) const {
  check_timestep(t);
  if (t == 1) return 0.0;
  const double half_power = std::pow(alpha_, 0.5 * static_cast<double>(t - 1));
  return (1.0 - alpha_) * (1.0 - half_power) / (1.0 - alpha_bar_[t]);
}

double NoiseSchedule::weight_w_t(int t) const {
  check_timestep(t);
  if (mode_ == WeightingMode::kConstant) return 1.0;
  if (t == 1) {
    throw Error(ErrorCode::kDegenerateWeight, "w_1 is undefined because sigma_1^2 = 0");
  }
  const double one_minus_bar = 1.0 - alpha_bar_[t];
  return (1.0 - alpha_) * (1.0 - alpha_) * alpha_bar_[t - 1] /
         (2.0 * sigma_t_sq(t) * one_minus_bar * one_minus_bar);
}

}  // namespace sspo
