#include "sspo/alignment.hpp"

#include <cmath>
#include <string>

#include "sspo/error.hpp"

namespace sspo {
namespace {

void require_positive_scale(double scale) {
  if (!(scale > 0.0)) {
    throw Error(ErrorCode::kNonPositiveScale, "scale must be positive, got " + std::to_string(scale));
  }
}

struct NoisyPair {
  std::vector<double> x_t_w;
  std::vector<double> x_t_rand;
};

NoisyPair noise_pair(const PairSample& pair, const NoiseSchedule& schedule) {
  NoisyPair out{std::vector<double>(pair.x0_w.size()), std::vector<double>(pair.x0_rand.size())};
  schedule.forward_diffuse(pair.x0_w, pair.t, pair.eps_w, out.x_t_w);
  schedule.forward_diffuse(pair.x0_rand, pair.t, pair.eps_ref, out.x_t_rand);
  return out;
}

struct RefErrors {
  double ref_w;
  double ref_r;
};

RefErrors reference_errors(const Policy& ref, const NoisyPair& noisy, const PairSample& pair) {
  std::vector<double> pred(ref.spec().input_dim);
  ref.predict_eps(noisy.x_t_w, pair.t, pair.condition, pred);
  const double ref_w = mse(pred, pair.eps_w);
  ref.predict_eps(noisy.x_t_rand, pair.t, pair.condition, pred);
  const double ref_r = mse(pred, pair.eps_ref);
  return {ref_w, ref_r};
}

Var squared_error(Tape& tape, Var pred, std::span<const double> target) {
  return tape.mean(tape.square(tape.sub(pred, tape.constant(target))));
}

// Mirrors ssr_loss() operation for operation so values agree bit for bit.
Var pair_loss_on_tape(Tape& tape, Var model_w, Var model_r, const RefErrors& ref, double scale,
                      SsrMode mode, int sign, Var* inside_out = nullptr) {
  const Var winner_gap = tape.sub(model_w, tape.constant(ref.ref_w));
  Var inner = winner_gap;
  if (!(mode == SsrMode::kIndicator && sign < 0)) {
    const Var replay_gap = tape.sub(model_r, tape.constant(ref.ref_r));
    inner = tape.sub(winner_gap, tape.scale(replay_gap, static_cast<double>(sign)));
  }
  const Var inside = tape.scale(inner, -scale);
  if (inside_out) *inside_out = inside;
  return tape.neg(tape.log_sigmoid(inside));
}

}  // namespace

void ErrorQuad::validate() const {
  for (double v : {model_w, ref_w, model_r, ref_r}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "squared errors must be finite and non-negative");
    }
  }
}

std::string_view to_string(SsrMode mode) {
  switch (mode) {
    case SsrMode::kOff: return "off";
    case SsrMode::kSign: return "sign";
    case SsrMode::kIndicator: return "indicator";
  }
  return "sign";
}

SsrMode parse_ssr_mode(std::string_view text) {
  if (text == "off") return SsrMode::kOff;
  if (text == "sign") return SsrMode::kSign;
  if (text == "indicator") return SsrMode::kIndicator;
  throw Error(ErrorCode::kConfig,
              "ssr mode must be off, sign or indicator, got '" + std::string(text) + "'");
}

int compute_sign(const ErrorQuad& quad, SsrMode mode) {
  if (mode == SsrMode::kOff) return 1;
  // sgn(0) = -1: a tie means the model is not better on the winner.
  return quad.ref_w - quad.model_w > 0.0 ? 1 : -1;
}

LossBreakdown ssr_loss(const ErrorQuad& quad, double scale, SsrMode mode) {
  require_positive_scale(scale);
  LossBreakdown out;
  out.quad = quad;
  out.scale = scale;
  out.sign = compute_sign(quad, mode);
  double inner = quad.model_w - quad.ref_w;
  if (!(mode == SsrMode::kIndicator && out.sign < 0)) {
    inner = inner - static_cast<double>(out.sign) * (quad.model_r - quad.ref_r);
  }
  out.inside_term = -scale * inner;
  out.loss = -log_sigmoid(out.inside_term);
  return out;
}

double pseudocode_inside_term(const ErrorQuad& quad, double scale) {
  const double code = quad.model_w - quad.ref_w > 0.0 ? 1.0 : -1.0;
  const double model_diff = quad.model_w + code * quad.model_r;
  const double ref_diff = quad.ref_w + code * quad.ref_r;
  return -scale * (model_diff - ref_diff);
}

double analytic_gradient_weight(const ErrorQuad& quad, double scale) {
  require_positive_scale(scale);
  return -2.0 * scale * sigmoid(scale * (quad.winner_gap() - quad.replay_gap()));
}

BatchDiagnostics batch_diagnostics(std::span<const LossBreakdown> items) {
  if (items.empty()) throw Error(ErrorCode::kEmptyBatch, "no items to summarise");
  std::size_t flipped = 0, correct = 0;
  double loss_sum = 0.0;
  for (const auto& item : items) {
    if (item.sign < 0) ++flipped;
    if (item.inside_term > 0.0) ++correct;
    loss_sum += item.loss;
  }
  const double n = static_cast<double>(items.size());
  return {static_cast<double>(flipped) / n, static_cast<double>(correct) / n, loss_sum / n};
}

double ScaleConfig::scale_for(const NoiseSchedule& schedule, int t) const {
  if (!(beta > 0.0)) throw Error(ErrorCode::kNonPositiveScale, "beta must be positive");
  if (schedule.weighting() == WeightingMode::kConstant) return 0.5 * beta;
  return beta * static_cast<double>(schedule.steps()) * schedule.weight_w_t(t);
}

PairResult sspo_pair_loss(const Policy& theta, const Policy& ref, const PairSample& pair,
                          const NoiseSchedule& schedule, const ScaleConfig& scale_cfg,
                          SsrMode mode) {
  const double scale = scale_cfg.scale_for(schedule, pair.t);
  require_positive_scale(scale);
  const NoisyPair noisy = noise_pair(pair, schedule);
  const RefErrors ref_errors = reference_errors(ref, noisy, pair);

  Tape tape(theta.params());
  const Var model_w = squared_error(
      tape, predict_eps(tape, theta.spec(), noisy.x_t_w, pair.t, pair.condition), pair.eps_w);
  const Var model_r = squared_error(
      tape, predict_eps(tape, theta.spec(), noisy.x_t_rand, pair.t, pair.condition),
      pair.eps_ref);

  const ErrorQuad quad{tape.scalar(model_w), ref_errors.ref_w, tape.scalar(model_r),
                       ref_errors.ref_r};
  LossBreakdown breakdown = ssr_loss(quad, scale, mode);
  const Var loss = pair_loss_on_tape(tape, model_w, model_r, ref_errors, scale, mode,
                                     breakdown.sign);
  return {breakdown, tape.backward(loss)};
}

double sspo_pair_loss_value(const ParamVector& theta, const Policy& ref,
                            const PairSample& pair, const NoiseSchedule& schedule,
                            const ScaleConfig& scale_cfg, SsrMode mode, int sign) {
  const double scale = scale_cfg.scale_for(schedule, pair.t);
  const NoisyPair noisy = noise_pair(pair, schedule);
  const RefErrors ref_errors = reference_errors(ref, noisy, pair);
  Tape tape(theta);
  const Var model_w = squared_error(
      tape, predict_eps(tape, ref.spec(), noisy.x_t_w, pair.t, pair.condition), pair.eps_w);
  const Var model_r = squared_error(
      tape, predict_eps(tape, ref.spec(), noisy.x_t_rand, pair.t, pair.condition),
      pair.eps_ref);
  return tape.scalar(pair_loss_on_tape(tape, model_w, model_r, ref_errors, scale, mode, sign));
}

SftResult denoising_loss(const Policy& theta, std::span<const double> x0, std::uint32_t c,
                         int t, std::span<const double> eps, const NoiseSchedule& schedule) {
  std::vector<double> x_t(x0.size());
  schedule.forward_diffuse(x0, t, eps, x_t);
  Tape tape(theta.params());
  Var loss = squared_error(tape, predict_eps(tape, theta.spec(), x_t, t, c), eps);
  const double weight = schedule.weight_w_t(t);
  if (weight != 1.0) loss = tape.scale(loss, weight);
  return {tape.scalar(loss), tape.backward(loss)};
}

}  // namespace sspo
