#include "sspo/task.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sspo/error.hpp"

namespace sspo {
namespace {

double pairwise_mean_distance(std::span<const Tensor> a, std::span<const Tensor> b) {
  double acc = 0.0;
  for (const auto& x : a) {
    for (const auto& y : b) {
      double sq = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sq += d * d;
      }
      acc += std::sqrt(sq);
    }
  }
  return acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

MixtureTask MixtureTask::toy(const TaskParams& p) {
  MixtureTask task;
  task.cond_cardinality = p.conditions;
  for (std::uint32_t c = 0; c < p.conditions; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / static_cast<double>(p.conditions);
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double vx = -uy, vy = ux;
    const double cx = p.radius * ux, cy = p.radius * uy;
    task.base_mixture.push_back({
        {{cx + p.mode_offset * vx, cy + p.mode_offset * vy}, p.base_std, 0.5},
        {{cx - p.mode_offset * vx, cy - p.mode_offset * vy}, p.base_std, 0.5},
    });
    task.target_mixture.push_back({
        {{cx + p.mode_offset * vx + p.target_shift * ux, cy + p.mode_offset * vy + p.target_shift * uy},
         p.target_std,
         1.0},
    });
  }
  task.validate();
  return task;
}

void MixtureTask::validate() const {
  if (cond_cardinality == 0 || base_mixture.size() != cond_cardinality ||
      target_mixture.size() != cond_cardinality) {
    throw Error(ErrorCode::kInvalidArgument, "mixture lists must have one entry per condition");
  }
  const std::size_t d = dim();
  for (const auto* family : {&base_mixture, &target_mixture}) {
    for (const auto& mixture : *family) {
      if (mixture.empty()) throw Error(ErrorCode::kInvalidArgument, "empty mixture");
      double total = 0.0;
      for (const auto& comp : mixture) {
        if (!(comp.std > 0.0)) throw Error(ErrorCode::kInvalidArgument, "component std must be > 0");
        if (comp.mean.size() != d) throw Error(ErrorCode::kShapeMismatch, "component dims differ");
        total += comp.weight;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw Error(ErrorCode::kInvalidArgument, "component weights must sum to 1");
      }
    }
  }
}

std::size_t MixtureTask::dim() const {
  return target_mixture.empty() ? 0 : target_mixture.front().front().mean.size();
}

std::vector<Tensor> draw_mixture(const Mixture& mixture, SeededRng& rng, std::size_t n) {
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double cumulative = mixture[0].weight;
    while (u >= cumulative && k + 1 < mixture.size()) cumulative += mixture[++k].weight;
    const auto& comp = mixture[k];
    std::vector<double> x(comp.mean.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = comp.mean[i] + comp.std * rng.normal();
    out.push_back(Tensor::vector(std::move(x)));
  }
  return out;
}

std::vector<Tensor> draw_winning(const MixtureTask& task, std::uint32_t c, SeededRng& rng,
                                 std::size_t n) {
  if (c >= task.cond_cardinality) {
    throw Error(ErrorCode::kConditionOutOfRange, "condition " + std::to_string(c));
  }
  return draw_mixture(task.target_mixture[c], rng, n);
}

std::vector<Tensor> draw_base(const MixtureTask& task, std::uint32_t c, SeededRng& rng,
                              std::size_t n) {
  if (c >= task.cond_cardinality) {
    throw Error(ErrorCode::kConditionOutOfRange, "condition " + std::to_string(c));
  }
  return draw_mixture(task.base_mixture[c], rng, n);
}

double energy_distance(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptySet, "energy distance of an empty set");
  const double cross = pairwise_mean_distance(a, b);
  const double within_a = pairwise_mean_distance(a, a);
  const double within_b = pairwise_mean_distance(b, b);
  return 2.0 * cross - within_a - within_b;
}

double heldout_denoising_loss(const Policy& policy, const std::vector<Mixture>& mixtures,
                              const NoiseSchedule& schedule, std::uint64_t seed,
                              std::size_t n_per_condition) {
  SeededRng root(seed);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> x_t(policy.spec().input_dim), pred(policy.spec().input_dim);
  for (std::uint32_t c = 0; c < mixtures.size(); ++c) {
    SeededRng data_rng = root.child({c, 0});
    SeededRng noise_rng = root.child({c, 1});
    for (const auto& x0 : draw_mixture(mixtures[c], data_rng, n_per_condition)) {
      const int t = 1 + static_cast<int>(noise_rng.uniform_int(schedule.steps()));
      const auto eps = noise_rng.normal_vector(x0.size());
      schedule.forward_diffuse(x0.data(), t, eps, x_t);
      policy.predict_eps(x_t, t, c, pred);
      total += mse(pred, eps);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

EvalReport evaluate(const Policy& policy, const MixtureTask& task, const NoiseSchedule& schedule,
                    std::uint64_t eval_seed, std::size_t n_per_condition) {
  if (n_per_condition == 0) throw Error(ErrorCode::kEmptySet, "evaluation needs samples");
  SeededRng root(eval_seed);
  EvalReport report;
  report.n_samples = n_per_condition;
  for (std::uint32_t c = 0; c < task.cond_cardinality; ++c) {
    SeededRng target_rng = root.child({c, 0});
    const auto target = draw_winning(task, c, target_rng, n_per_condition);
    std::vector<Tensor> generated;
    generated.reserve(n_per_condition);
    for (std::size_t i = 0; i < n_per_condition; ++i) {
      SeededRng gen_rng = root.child({c, 1, i});
      generated.push_back(policy.ancestral_sample(c, gen_rng, schedule));
    }
    report.energy_distance.push_back(energy_distance(generated, target));
  }
  double sum = 0.0;
  for (double v : report.energy_distance) sum += v;
  report.pooled = sum / static_cast<double>(report.energy_distance.size());
  report.eps_mse = heldout_denoising_loss(policy, task.target_mixture, schedule,
                                          SeededRng(eval_seed).child({0xe5}).seed(),
                                          n_per_condition);
  return report;
}

}  // namespace sspo
