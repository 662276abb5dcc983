#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sspo/alignment.hpp"
#include "sspo/policy.hpp"
#include "sspo/replay.hpp"

namespace sspo {

/// Autodiff vs central finite differences for sspo_pair_loss on randomized
/// policies, inputs and modes. The sign is frozen at its autodiff value
/// while differencing.
struct GradcheckCase {
  int index = 0;
  SsrMode mode = SsrMode::kSign;
  int sign = 1;
  double beta = 0.0;
  double max_rel_error = 0.0;
  /// Sign +1 only: the autodiff gradient is projected onto the per-parameter
  /// error term J_w^T(eps_w - eps_theta_w)/d - J_r^T(eps_ref - eps_theta_r)/d;
  /// the coefficient is compared with analytic_gradient_weight.
  std::optional<double> weight_error;
  std::optional<double> decomposition_residual;  // |g - w E| / |g|
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_rel_error = 0.0;
  double max_weight_error = 0.0;
};

struct GradcheckOptions {
  int cases = 20;
  std::uint64_t seed = 0;
  double fd_step = 3e-5;  // five-point stencil; smaller steps are round-off dominated
  std::vector<double> betas = {2000.0, 2.0};  // cycled over cases
  PolicySpec spec;
  /// Elementwise relative error uses max(|a|, |b|, floor_fraction * max|g|)
  /// as denominator so round-off on near-zero components is not amplified.
  double floor_fraction = 1e-6;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options);

/// theorem2_bias_check over a grid of alpha, t, sigma0^2 and bias pairs.
struct Theorem2GridReport {
  std::size_t points = 0;
  std::size_t ordering_agreements = 0;
  double max_identity_residual = 0.0;
  double zero_bias_kl = 0.0;  // KL of the b = 0 row (exactly 0)
  std::string worst_case;
};

Theorem2GridReport run_theorem2_grid(std::uint64_t seed = 0);

/// Chi-square goodness of fit of CheckpointStore::sample_index against
/// uniform over k entries, plus the constant-index behaviour of Initial and
/// Last. The store lives in a temporary directory under `scratch`.
struct ReplayStatsRow {
  std::uint32_t k = 0;
  std::size_t draws = 0;
  std::vector<double> frequencies;
  double chi_square = 0.0;
  double p_value = 0.0;
  bool initial_constant = false;
  bool last_constant = false;
};

std::vector<ReplayStatsRow> run_replay_stats(const std::vector<std::uint32_t>& ks,
                                             std::size_t draws, std::uint64_t seed,
                                             const std::filesystem::path& scratch);

/// Upper tail probability of the chi-square distribution.
double chi_square_sf(double statistic, double dof);

}  // namespace sspo
