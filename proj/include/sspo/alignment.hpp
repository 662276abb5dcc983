#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sspo/numerics.hpp"
#include "sspo/policy.hpp"
#include "sspo/schedule.hpp"

namespace sspo {

/// The four per-sample squared errors (element means) behind one pair loss.
struct ErrorQuad {
  double model_w = 0.0;  // |eps_theta(x_t^w) - eps^w|^2
  double ref_w = 0.0;    // |eps_ref(x_t^w) - eps^w|^2
  double model_r = 0.0;  // |eps_theta(x_t^rand) - eps^ref|^2
  double ref_r = 0.0;    // |eps_ref(x_t^rand) - eps^ref|^2

  double winner_gap() const noexcept { return model_w - ref_w; }  // sigma_hat_w^2
  double replay_gap() const noexcept { return model_r - ref_r; }  // sigma_hat_ref^2
  void validate() const;
};

enum class SsrMode {
  kOff,        // plain DPO: the replayed sample is always the loser
  kSign,       // sgn(ref_w - model_w), ties count as -1
  kIndicator,  // 1(ref_w - model_w > 0); otherwise learn from the winner only
};

std::string_view to_string(SsrMode mode);
SsrMode parse_ssr_mode(std::string_view text);

struct LossBreakdown {
  ErrorQuad quad;
  int sign = 1;
  double inside_term = 0.0;
  double loss = 0.0;
  double scale = 0.0;
};

/// +1 treats the replayed sample as a loser (DPO); -1 switches to SFT-style
/// handling. Off always returns +1.
int compute_sign(const ErrorQuad& quad, SsrMode mode);

/// inside = -scale * [(model_w - ref_w) - sign * (model_r - ref_r)],
/// loss = -log sigmoid(inside). In Indicator mode with sign -1 the replay
/// terms are dropped.
LossBreakdown ssr_loss(const ErrorQuad& quad, double scale, SsrMode mode);

/// Same inside term built the way the reference training script does:
/// code = sgn(model_w - ref_w) with code(0) = -1,
/// inside = -scale * ((model_w + code*model_r) - (ref_w + code*ref_r)).
double pseudocode_inside_term(const ErrorQuad& quad, double scale);

/// -2 * scale * sigmoid(scale * (sigma_hat_w^2 - sigma_hat_ref^2)): the
/// logistic weight multiplying the error term in the DPO gradient.
double analytic_gradient_weight(const ErrorQuad& quad, double scale);

struct BatchDiagnostics {
  double ssr_rate = 0.0;      // fraction with sign == -1
  double implicit_acc = 0.0;  // fraction with inside_term > 0
  double mean_loss = 0.0;
};

BatchDiagnostics batch_diagnostics(std::span<const LossBreakdown> items);

/// How the DPO temperature becomes the per-sample scale.
///   constant weighting: scale = beta / 2 (the training script's folding)
///   exact weighting:    scale = beta * T * w_t
struct ScaleConfig {
  double beta = 2000.0;
  double scale_for(const NoiseSchedule& schedule, int t) const;
};

struct PairSample {
  std::span<const double> x0_w;
  std::span<const double> x0_rand;
  std::uint32_t condition = 0;
  int t = 1;
  std::span<const double> eps_w;
  std::span<const double> eps_ref;
};

struct PairResult {
  LossBreakdown breakdown;
  ParamVector gradient;
};

/// Noises both samples, evaluates theta (on a tape) and ref (plain) on both,
/// and returns the loss breakdown with d(loss)/d(theta). The sign is taken
/// from values only, so no gradient flows through it or into ref.
PairResult sspo_pair_loss(const Policy& theta, const Policy& ref, const PairSample& pair,
                          const NoiseSchedule& schedule, const ScaleConfig& scale_cfg,
                          SsrMode mode);

/// Loss value only, from the same arithmetic as sspo_pair_loss. `sign` fixes
/// the sign instead of recomputing it (used for finite differences, where
/// the sign must stay frozen).
double sspo_pair_loss_value(const ParamVector& theta, const Policy& ref,
                            const PairSample& pair, const NoiseSchedule& schedule,
                            const ScaleConfig& scale_cfg, SsrMode mode, int sign);

struct SftResult {
  double loss;
  ParamVector gradient;
};

/// w_t * |eps_theta(x_t) - eps|^2 on a single sample.
SftResult denoising_loss(const Policy& theta, std::span<const double> x0, std::uint32_t c,
                         int t, std::span<const double> eps, const NoiseSchedule& schedule);

}  // namespace sspo
