#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sspo/trainer.hpp"

namespace sspo {

struct Variant {
  std::string name;
  Method method = Method::kSspo;
  ErdStrategy erd = ErdStrategy::kUniform;
  SsrMode ssr = SsrMode::kSign;
};

/// init / last / uniform, all with the sign criterion.
std::vector<Variant> erd_variants();
/// sspo, wo_ssr, indicator, erd0, erd_last.
std::vector<Variant> ablation_variants();
/// sspo and sft on the same data stream.
std::vector<Variant> sft_compare_variants();

/// Per-run summary. Scores are pooled energy distances (lower is better), so
/// peak is the minimum over the eval curve and drop = final - peak >= 0.
struct RunSummary {
  std::string variant;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double initial_score = 0.0;
  double peak_score = 0.0;
  double final_score = 0.0;
  double drop = 0.0;
  double score_variance = 0.0;  // of successive eval-score differences
  std::optional<double> ssr_rate_first10;
  std::optional<double> ssr_rate_last10;
  std::vector<std::pair<int, double>> curve;  // (step, eval score)
};

RunSummary summarize(const std::string& variant, std::uint64_t seed, const RunResult& run);

struct StudyReport {
  std::vector<RunSummary> rows;  // seed-major, variants in list order

  const RunSummary* find(const std::string& variant, std::uint64_t seed) const;
};

inline constexpr std::string_view kSummaryHeader =
    "variant,seed,peak_score,final_score,drop,ssr_rate_first10,ssr_rate_last10";

std::string summary_csv(const StudyReport& report);
std::string curves_csv(const StudyReport& report);

/// Optional progress callback, called after each finished cell.
using StudyProgress = std::function<void(const RunSummary&)>;

/// Pretrains theta_0 once per seed and runs every variant from it. Output:
/// <study_dir>/<variant>/seed<k>/{config.snapshot, metrics.csv, ckpt/},
/// <study_dir>/summary.csv and <study_dir>/curves.csv. A cell that throws is
/// recorded as failed and the study moves on.
StudyReport run_variants(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                         const std::vector<Variant>& variants,
                         const std::filesystem::path& study_dir,
                         const StudyProgress& progress = {});

StudyReport run_erd_study(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& study_dir,
                          const StudyProgress& progress = {});
StudyReport run_ablation_suite(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                               const std::filesystem::path& study_dir,
                               const StudyProgress& progress = {});

/// Config for one cell: base with the variant's strategy, mode and seed.
TrainConfig variant_config(const TrainConfig& base, const Variant& variant, std::uint64_t seed);

}  // namespace sspo
