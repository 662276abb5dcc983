#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sspo/numerics.hpp"
#include "sspo/policy.hpp"
#include "sspo/schedule.hpp"

namespace sspo {

struct MixtureComponent {
  std::vector<double> mean;
  double std = 1.0;
  double weight = 1.0;
};

using Mixture = std::vector<MixtureComponent>;

/// Geometry of the default toy task. Condition c sits at angle 2*pi*c/C on
/// a circle of `radius`. The base (pretraining) distribution has two broad
/// components offset by +-mode_offset along the tangent; the target has one
/// tight component on the + side, pushed out by target_shift.
struct TaskParams {
  std::uint32_t conditions = 3;
  double radius = 2.0;
  double mode_offset = 1.0;
  double base_std = 0.8;
  double target_std = 0.25;
  double target_shift = 0.0;

  bool operator==(const TaskParams&) const = default;
};

struct MixtureTask {
  std::uint32_t cond_cardinality = 0;
  std::vector<Mixture> base_mixture;    // per condition
  std::vector<Mixture> target_mixture;  // per condition

  static MixtureTask toy(const TaskParams& params);
  void validate() const;
  std::size_t dim() const;
};

std::vector<Tensor> draw_mixture(const Mixture& mixture, SeededRng& rng, std::size_t n);
std::vector<Tensor> draw_winning(const MixtureTask& task, std::uint32_t c, SeededRng& rng,
                                 std::size_t n);
std::vector<Tensor> draw_base(const MixtureTask& task, std::uint32_t c, SeededRng& rng,
                              std::size_t n);

/// Energy distance between the empirical distributions of a and b
/// (V-statistic, all pairs including i == j):
///   2 E|X - Y| - E|X - X'| - E|Y - Y'|.
/// Non-negative and exactly zero for identical sets.
double energy_distance(std::span<const Tensor> a, std::span<const Tensor> b);

struct EvalReport {
  std::vector<double> energy_distance;  // per condition
  double pooled = 0.0;                  // mean over conditions; lower is better
  double eps_mse = 0.0;                 // held-out denoising loss on target data
  std::size_t n_samples = 0;            // per condition
};

/// Scores a policy against the target mixture. Everything random is drawn
/// from streams derived from `eval_seed`, so two policies evaluated with the
/// same seed see the same target sets and the same sampler noise.
EvalReport evaluate(const Policy& policy, const MixtureTask& task, const NoiseSchedule& schedule,
                    std::uint64_t eval_seed, std::size_t n_per_condition);

/// Mean w_t-free denoising loss of `policy` on fresh draws from `mixtures`.
double heldout_denoising_loss(const Policy& policy, const std::vector<Mixture>& mixtures,
                              const NoiseSchedule& schedule, std::uint64_t seed,
                              std::size_t n_per_condition);

}  // namespace sspo
