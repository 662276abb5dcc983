#include "sspo/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>

#include "sspo/config.hpp"
#include "sspo/error.hpp"

namespace sspo {
namespace {

// Stream tags for SeededRng::child; every random quantity in a run comes
// from (seed, tag, step[, item]) so runs that differ only in strategy or
// loss share their data and noise.
enum StreamTag : std::uint64_t {
  kInitStream = 1,
  kPretrainStream = 2,
  kWinnerStream = 3,
  kReplayStream = 4,
  kGenerateStream = 5,
  kNoiseStream = 6,
  kEvalStream = 7,
};

struct BatchItem {
  std::uint32_t condition = 0;
  int t = 1;
  Tensor x0;
  std::vector<double> eps_w;
  std::vector<double> eps_ref;
};

// Winners, conditions, timesteps and noise for one update.
std::vector<BatchItem> draw_batch(const TrainConfig& cfg, const MixtureTask& task,
                                  const NoiseSchedule& schedule, const SeededRng& root,
                                  std::uint64_t data_tag, std::uint64_t step, int batch_size,
                                  bool use_base) {
  SeededRng data_rng = root.child({data_tag, step});
  SeededRng noise_rng = root.child({kNoiseStream, step});
  const int t_min = schedule.min_train_timestep();
  const auto t_span = static_cast<std::uint64_t>(schedule.steps() - t_min + 1);
  std::vector<BatchItem> batch(static_cast<std::size_t>(batch_size));
  for (auto& item : batch) {
    item.condition = static_cast<std::uint32_t>(data_rng.uniform_int(task.cond_cardinality));
    const Mixture& mixture = use_base ? task.base_mixture[item.condition]
                                      : task.target_mixture[item.condition];
    item.x0 = draw_mixture(mixture, data_rng, 1).front();
    item.t = t_min + static_cast<int>(noise_rng.uniform_int(t_span));
    item.eps_w = noise_rng.normal_vector(cfg.policy.input_dim);
    item.eps_ref = noise_rng.normal_vector(cfg.policy.input_dim);
  }
  return batch;
}

void check_finite(double loss, double grad_norm, int step) {
  if (!std::isfinite(loss) || !std::isfinite(grad_norm)) {
    throw Error(ErrorCode::kDivergedLoss,
                "non-finite loss or gradient at step " + std::to_string(step));
  }
}


}  // namespace

// -------------------------------------------------------------- optimizer

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adamw";
}

OptimizerKind parse_optimizer_kind(std::string_view text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adamw") return OptimizerKind::kAdamW;
  throw Error(ErrorCode::kConfig, "optimizer must be sgd or adamw, got '" + std::string(text) + "'");
}

Optimizer::Optimizer(OptimizerConfig config, double lr, std::size_t n_params)
    : config_(config), lr_(lr), m_(n_params, 0.0), v_(n_params, 0.0) {
  if (!(lr >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be >= 0");
}

void Optimizer::step(ParamVector& params, const ParamVector& gradient) {
  auto theta = params.mutable_values();
  auto g = gradient.values();
  if (theta.size() != g.size() || theta.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match parameters");
  }
  ++t_;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + g[i];
      theta[i] -= lr_ * (m_[i] + config_.weight_decay * theta[i]);
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g[i] * g[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    theta[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * theta[i]);
  }
}

// ------------------------------------------------------------ TrainConfig

std::uint64_t TrainConfig::eval_seed() const {
  return SeededRng(seed).child({kEvalStream}).seed();
}

void TrainConfig::validate() const {
  (void)schedule();
  policy.validate();
  if (K < 1) throw Error(ErrorCode::kConfig, "K must be >= 1");
  if (batch_size < 1 || pretrain_batch_size < 1) {
    throw Error(ErrorCode::kConfig, "batch sizes must be >= 1");
  }
  if (updates_per_checkpoint < 1) throw Error(ErrorCode::kConfig, "updates_per_checkpoint must be >= 1");
  if (!(lr > 0.0) || !(pretrain_lr > 0.0)) throw Error(ErrorCode::kConfig, "learning rates must be > 0");
  if (!(beta > 0.0)) throw Error(ErrorCode::kConfig, "beta must be > 0");
  if (pretrain_steps < 0) throw Error(ErrorCode::kConfig, "pretrain steps must be >= 0");
  if (eval_samples < 1) throw Error(ErrorCode::kConfig, "eval samples must be >= 1");
  if (max_updates < -1) throw Error(ErrorCode::kConfig, "max_updates must be >= -1");
  if (task.conditions != policy.cond_cardinality) {
    throw Error(ErrorCode::kConfig, "task conditions must equal policy cond_cardinality");
  }
  if (policy.input_dim != 2) throw Error(ErrorCode::kConfig, "the toy task is two-dimensional");
}

// ---------------------------------------------------------------- metrics

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::kInvalidArgument, "cannot format double");
  return std::string(buf, end);
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out += std::to_string(r.step) + ',' + std::to_string(r.k) + ',' +
           (r.sampled_ckpt ? std::to_string(*r.sampled_ckpt) : std::string()) + ',' +
           format_double(r.loss) + ',' + opt(r.ssr_rate) + ',' + opt(r.implicit_acc) + ',' +
           opt(r.eval_score) + ',' + format_double(r.grad_norm) + '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << contents;
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

ParamVector mean_gradient(const std::vector<ParamVector>& per_item) {
  if (per_item.empty()) throw Error(ErrorCode::kEmptyBatch, "no gradients to average");
  ParamVector out = ParamVector::zeros_like(per_item.front());
  auto acc = out.mutable_values();
  for (const auto& g : per_item) {
    auto v = g.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double n = static_cast<double>(per_item.size());
  for (double& v : acc) v /= n;
  return out;
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// --------------------------------------------------------------- pretrain

PretrainResult pretrain(const TrainConfig& cfg) {
  cfg.validate();
  const NoiseSchedule schedule = cfg.schedule();
  const MixtureTask task = cfg.mixture_task();
  const SeededRng root(cfg.seed);
  SeededRng init_rng = root.child({kInitStream});
  Policy policy = Policy::initialize(cfg.policy, init_rng);

  const std::uint64_t heldout_seed = root.child({kPretrainStream, 0}).seed();
  const std::size_t heldout_n = 256;
  PretrainResult result{policy, {}, 0.0, 0.0, false};
  result.initial_heldout_loss =
      heldout_denoising_loss(policy, task.base_mixture, schedule, heldout_seed, heldout_n);

  Optimizer opt(cfg.optimizer, cfg.pretrain_lr, policy.params().size());
  for (int step = 1; step <= cfg.pretrain_steps; ++step) {
    const auto batch = draw_batch(cfg, task, schedule, root.child({kPretrainStream}),
                                  kPretrainStream, static_cast<std::uint64_t>(step),
                                  cfg.pretrain_batch_size, /*use_base=*/true);
    std::vector<ParamVector> grads;
    grads.reserve(batch.size());
    double loss = 0.0;
    for (const auto& item : batch) {
      SftResult r = denoising_loss(policy, item.x0.data(), item.condition, item.t, item.eps_w,
                                   schedule);
      loss += r.loss;
      grads.push_back(std::move(r.gradient));
    }
    loss /= static_cast<double>(batch.size());
    const ParamVector g = mean_gradient(grads);
    const double norm = l2_norm(g.values());
    check_finite(loss, norm, step);
    opt.step(policy.mutable_params(), g);
    result.metrics.push_back({step, 0, std::nullopt, loss, std::nullopt, std::nullopt,
                              std::nullopt, norm});
  }
  result.policy = policy;
  result.final_heldout_loss =
      heldout_denoising_loss(policy, task.base_mixture, schedule, heldout_seed, heldout_n);
  result.below_threshold = result.final_heldout_loss < cfg.pretrain_loss_threshold;
  if (!result.below_threshold && cfg.pretrain_steps > 0) {
    std::cerr << "warning: pretraining held-out loss " << result.final_heldout_loss
              << " is not below the threshold " << cfg.pretrain_loss_threshold << '\n';
  }
  return result;
}

// ------------------------------------------------------------- alignment

namespace {

RunResult run_alignment(const TrainConfig& cfg, const Policy& theta0,
                        const std::filesystem::path& run_dir, Method method) {
  cfg.validate();
  if (theta0.spec() != cfg.policy) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                "initial policy " + theta0.spec().describe() + " does not match config " +
                    cfg.policy.describe());
  }
  const NoiseSchedule schedule = cfg.schedule();
  const MixtureTask task = cfg.mixture_task();
  const SeededRng root(cfg.seed);
  const ScaleConfig scale_cfg{cfg.beta};

  write_text_file(run_dir / "config.snapshot", serialize_config(RunConfig{cfg}));
  CheckpointStore store(run_dir, cfg.erd_strategy, cfg.seed);
  store.append(theta0, 0);

  RunResult result{theta0, {}, 0.0, 0};
  result.initial_score =
      evaluate(theta0, task, schedule, cfg.eval_seed(), static_cast<std::size_t>(cfg.eval_samples))
          .pooled;

  Policy theta = theta0;
  Optimizer opt(cfg.optimizer, cfg.lr, theta.params().size());
  const int total = cfg.total_updates();
  const int cadence = cfg.eval_cadence();
  std::optional<std::pair<std::uint32_t, Policy>> iteration_ref;

  for (int step = 1; step <= total; ++step) {
    const int k = (step - 1) / cfg.updates_per_checkpoint + 1;
    const auto batch = draw_batch(cfg, task, schedule, root, kWinnerStream,
                                  static_cast<std::uint64_t>(step), cfg.batch_size,
                                  /*use_base=*/false);
    MetricsRow row;
    row.step = step;
    row.k = k;
    std::vector<ParamVector> grads;
    grads.reserve(batch.size());

    if (method == Method::kSspo) {
      const bool new_iteration = (step - 1) % cfg.updates_per_checkpoint == 0;
      if (!cfg.replay_per_iteration || new_iteration || !iteration_ref) {
        const std::uint64_t replay_key =
            cfg.replay_per_iteration ? static_cast<std::uint64_t>(k) : static_cast<std::uint64_t>(step);
        SeededRng replay_rng = root.child({kReplayStream, replay_key});
        iteration_ref = store.sample(replay_rng);
      }
      const auto& [ref_index, ref] = *iteration_ref;
      row.sampled_ckpt = ref_index;

      std::vector<LossBreakdown> items;
      items.reserve(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const BatchItem& item = batch[i];
        SeededRng gen_rng = root.child({kGenerateStream, static_cast<std::uint64_t>(step), i});
        const Tensor x0_rand = ref.ancestral_sample(item.condition, gen_rng, schedule);
        const PairSample pair{item.x0.data(), x0_rand.data(), item.condition, item.t,
                              item.eps_w,     item.eps_ref};
        PairResult r = sspo_pair_loss(theta, ref, pair, schedule, scale_cfg, cfg.ssr_mode);
        items.push_back(r.breakdown);
        grads.push_back(std::move(r.gradient));
      }
      const BatchDiagnostics diag = batch_diagnostics(items);
      row.loss = diag.mean_loss;
      if (cfg.ssr_mode != SsrMode::kOff) row.ssr_rate = diag.ssr_rate;
      row.implicit_acc = diag.implicit_acc;
    } else {
      double loss = 0.0;
      for (const auto& item : batch) {
        SftResult r = denoising_loss(theta, item.x0.data(), item.condition, item.t, item.eps_w,
                                     schedule);
        loss += r.loss;
        grads.push_back(std::move(r.gradient));
      }
      row.loss = loss / static_cast<double>(batch.size());
    }

    const ParamVector g = mean_gradient(grads);
    row.grad_norm = l2_norm(g.values());
    check_finite(row.loss, row.grad_norm, step);
    opt.step(theta.mutable_params(), g);

    if (step % cfg.updates_per_checkpoint == 0) {
      store.append(theta, static_cast<std::uint32_t>(step / cfg.updates_per_checkpoint));
    }
    if (step % cadence == 0 || step == total) {
      row.eval_score = evaluate(theta, task, schedule, cfg.eval_seed(),
                                static_cast<std::size_t>(cfg.eval_samples))
                           .pooled;
    }
    result.metrics.push_back(row);
  }

  result.final_policy = theta;
  result.checkpoints = store.size();
  write_text_file(run_dir / "metrics.csv", metrics_csv(result.metrics));
  return result;
}

}  // namespace

RunResult sspo_train(const TrainConfig& cfg, const Policy& theta0,
                     const std::filesystem::path& run_dir) {
  return run_alignment(cfg, theta0, run_dir, Method::kSspo);
}

RunResult sft_train(const TrainConfig& cfg, const Policy& theta0,
                    const std::filesystem::path& run_dir) {
  return run_alignment(cfg, theta0, run_dir, Method::kSft);
}

RunResult train_alignment(const TrainConfig& cfg, const Policy& theta0,
                          const std::filesystem::path& run_dir, Method method) {
  return run_alignment(cfg, theta0, run_dir, method);
}

}  // namespace sspo
