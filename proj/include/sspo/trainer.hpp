#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sspo/alignment.hpp"
#include "sspo/policy.hpp"
#include "sspo/replay.hpp"
#include "sspo/schedule.hpp"
#include "sspo/task.hpp"

namespace sspo {

enum class OptimizerKind { kSgd, kAdamW };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double beta1 = 0.9;  // also the SGD momentum
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

/// SGD with momentum or AdamW (decoupled weight decay). State persists for
/// the lifetime of the object, i.e. across SSPO iterations.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, double lr, std::size_t n_params);

  void step(ParamVector& params, const ParamVector& gradient);
  std::uint64_t steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig config_;
  double lr_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TrainConfig {
  // schedule
  double alpha = 0.99;
  int steps_T = 50;
  WeightingMode weighting = WeightingMode::kConstant;
  // policy
  PolicySpec policy;
  // alignment
  double beta = 2000.0;
  int K = 7;
  int updates_per_checkpoint = 30;
  int batch_size = 64;
  double lr = 1e-4;
  OptimizerConfig optimizer;
  ErdStrategy erd_strategy = ErdStrategy::kUniform;
  SsrMode ssr_mode = SsrMode::kSign;
  bool replay_per_iteration = false;
  std::uint64_t seed = 0;
  int max_updates = -1;  // stop early after this many updates; -1 runs K * upc
  // pretraining
  int pretrain_steps = 2000;
  int pretrain_batch_size = 64;
  double pretrain_lr = 1e-3;
  double pretrain_loss_threshold = 0.85;  // the toy task's floor is about 0.77
  // task + evaluation
  TaskParams task;
  int eval_every = 0;  // 0: every updates_per_checkpoint steps
  int eval_samples = 512;

  NoiseSchedule schedule() const { return NoiseSchedule(alpha, steps_T, weighting); }
  MixtureTask mixture_task() const { return MixtureTask::toy(task); }
  int total_updates() const {
    const int full = K * updates_per_checkpoint;
    return max_updates >= 0 && max_updates < full ? max_updates : full;
  }
  int eval_cadence() const { return eval_every > 0 ? eval_every : updates_per_checkpoint; }
  std::uint64_t eval_seed() const;
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

/// One row of metrics.csv. Optional fields are written as empty cells.
struct MetricsRow {
  int step = 0;
  int k = 0;
  std::optional<std::uint32_t> sampled_ckpt;
  double loss = 0.0;
  std::optional<double> ssr_rate;
  std::optional<double> implicit_acc;
  std::optional<double> eval_score;
  double grad_norm = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "step,k,sampled_ckpt,loss,ssr_rate,implicit_acc,eval_score,grad_norm";

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
std::string metrics_csv(const std::vector<MetricsRow>& rows);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

struct PretrainResult {
  Policy policy;
  std::vector<MetricsRow> metrics;
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  bool below_threshold = false;
};

struct RunResult {
  Policy final_policy;
  std::vector<MetricsRow> metrics;
  double initial_score = 0.0;  // pooled energy distance of theta_0
  std::size_t checkpoints = 0;
};

/// Standard denoising training of the base model on the base mixture.
PretrainResult pretrain(const TrainConfig& cfg);

/// SSPO: per update, replay a checkpoint (per cfg.erd_strategy), sample one
/// x0_rand per batch item from it, and step on the mean pair-loss gradient.
/// A checkpoint is appended every updates_per_checkpoint updates; outputs
/// land in run_dir/{config.snapshot, metrics.csv, ckpt/}.
RunResult sspo_train(const TrainConfig& cfg, const Policy& theta0,
                     const std::filesystem::path& run_dir);

/// Supervised fine-tuning on the winning data only, same data stream and
/// update budget as sspo_train.
RunResult sft_train(const TrainConfig& cfg, const Policy& theta0,
                    const std::filesystem::path& run_dir);

enum class Method { kSspo, kSft };

/// Dispatches to sspo_train or sft_train.
RunResult train_alignment(const TrainConfig& cfg, const Policy& theta0,
                          const std::filesystem::path& run_dir, Method method);

/// Mean of per-item gradients, summed in index order.
ParamVector mean_gradient(const std::vector<ParamVector>& per_item);
double l2_norm(std::span<const double> v);

}  // namespace sspo
