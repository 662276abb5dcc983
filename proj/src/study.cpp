#include "sspo/study.hpp"

#include <algorithm>
#include <cmath>

#include "sspo/error.hpp"

namespace sspo {
namespace {

std::optional<double> mean_ssr(const std::vector<MetricsRow>& rows, std::size_t begin,
                               std::size_t end) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = begin; i < end; ++i) {
    if (!rows[i].ssr_rate) return std::nullopt;
    sum += *rows[i].ssr_rate;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::vector<Variant> erd_variants() {
  return {
      {"init", Method::kSspo, ErdStrategy::kInitial, SsrMode::kSign},
      {"last", Method::kSspo, ErdStrategy::kLast, SsrMode::kSign},
      {"uniform", Method::kSspo, ErdStrategy::kUniform, SsrMode::kSign},
  };
}

std::vector<Variant> ablation_variants() {
  return {
      {"sspo", Method::kSspo, ErdStrategy::kUniform, SsrMode::kSign},
      {"wo_ssr", Method::kSspo, ErdStrategy::kUniform, SsrMode::kOff},
      {"indicator", Method::kSspo, ErdStrategy::kUniform, SsrMode::kIndicator},
      {"erd0", Method::kSspo, ErdStrategy::kInitial, SsrMode::kSign},
      {"erd_last", Method::kSspo, ErdStrategy::kLast, SsrMode::kSign},
  };
}

std::vector<Variant> sft_compare_variants() {
  return {
      {"sspo", Method::kSspo, ErdStrategy::kUniform, SsrMode::kSign},
      {"sft", Method::kSft, ErdStrategy::kUniform, SsrMode::kSign},
  };
}

RunSummary summarize(const std::string& variant, std::uint64_t seed, const RunResult& run) {
  RunSummary s;
  s.variant = variant;
  s.seed = seed;
  s.initial_score = run.initial_score;
  for (const auto& row : run.metrics) {
    if (row.eval_score) s.curve.emplace_back(row.step, *row.eval_score);
  }
  if (s.curve.empty()) {
    s.peak_score = s.final_score = run.initial_score;
  } else {
    s.final_score = s.curve.back().second;
    s.peak_score = s.curve.front().second;
    for (const auto& [step, score] : s.curve) s.peak_score = std::min(s.peak_score, score);
  }
  s.drop = s.final_score - s.peak_score;

  if (s.curve.size() > 1) {
    std::vector<double> diffs;
    for (std::size_t i = 1; i < s.curve.size(); ++i) {
      diffs.push_back(s.curve[i].second - s.curve[i - 1].second);
    }
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    s.score_variance = var / static_cast<double>(diffs.size());
  }

  const std::size_t n = run.metrics.size();
  const std::size_t tenth = std::max<std::size_t>(1, n / 10);
  if (n > 0) {
    s.ssr_rate_first10 = mean_ssr(run.metrics, 0, std::min(tenth, n));
    s.ssr_rate_last10 = mean_ssr(run.metrics, n - std::min(tenth, n), n);
  }
  return s;
}

const RunSummary* StudyReport::find(const std::string& variant, std::uint64_t seed) const {
  for (const auto& r : rows) {
    if (r.variant == variant && r.seed == seed) return &r;
  }
  return nullptr;
}

std::string summary_csv(const StudyReport& report) {
  std::string out(kSummaryHeader);
  out += '\n';
  for (const auto& r : report.rows) {
    out += r.variant + ',' + std::to_string(r.seed) + ',';
    if (r.failed) {
      out += "failed,failed,failed,,\n";
      continue;
    }
    out += format_double(r.peak_score) + ',' + format_double(r.final_score) + ',' +
           format_double(r.drop) + ',' + cell(r.ssr_rate_first10) + ',' + cell(r.ssr_rate_last10) +
           '\n';
  }
  return out;
}

std::string curves_csv(const StudyReport& report) {
  std::string out = "variant,seed,step,eval_score\n";
  for (const auto& r : report.rows) {
    if (r.failed) continue;
    out += r.variant + ',' + std::to_string(r.seed) + ",0," + format_double(r.initial_score) + '\n';
    for (const auto& [step, score] : r.curve) {
      out += r.variant + ',' + std::to_string(r.seed) + ',' + std::to_string(step) + ',' +
             format_double(score) + '\n';
    }
  }
  return out;
}

TrainConfig variant_config(const TrainConfig& base, const Variant& variant, std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  cfg.erd_strategy = variant.erd;
  cfg.ssr_mode = variant.ssr;
  return cfg;
}

StudyReport run_variants(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                         const std::vector<Variant>& variants,
                         const std::filesystem::path& study_dir, const StudyProgress& progress) {
  if (seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "study needs at least one seed");
  if (variants.empty()) throw Error(ErrorCode::kInvalidArgument, "study needs at least one variant");
  StudyReport report;
  for (std::uint64_t seed : seeds) {
    TrainConfig seed_cfg = base;
    seed_cfg.seed = seed;
    std::optional<Policy> theta0;
    std::string pretrain_error;
    try {
      theta0 = pretrain(seed_cfg).policy;
    } catch (const Error& e) {
      pretrain_error = e.what();
    }
    for (const auto& variant : variants) {
      RunSummary row;
      if (!theta0) {
        row.variant = variant.name;
        row.seed = seed;
        row.failed = true;
        row.error = pretrain_error;
      } else {
        const auto run_dir = study_dir / variant.name / ("seed" + std::to_string(seed));
        std::error_code ec;
        std::filesystem::remove_all(run_dir, ec);
        try {
          const RunResult run =
              train_alignment(variant_config(base, variant, seed), *theta0, run_dir, variant.method);
          row = summarize(variant.name, seed, run);
        } catch (const Error& e) {
          row.variant = variant.name;
          row.seed = seed;
          row.failed = true;
          row.error = e.what();
        }
      }
      if (progress) progress(row);
      report.rows.push_back(std::move(row));
    }
  }
  write_text_file(study_dir / "summary.csv", summary_csv(report));
  write_text_file(study_dir / "curves.csv", curves_csv(report));
  return report;
}

StudyReport run_erd_study(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& study_dir, const StudyProgress& progress) {
  return run_variants(base, seeds, erd_variants(), study_dir, progress);
}

StudyReport run_ablation_suite(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                               const std::filesystem::path& study_dir,
                               const StudyProgress& progress) {
  return run_variants(base, seeds, ablation_variants(), study_dir, progress);
}

}  // namespace sspo
