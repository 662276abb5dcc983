#include <fstream>

#include <gtest/gtest.h>

#include "sspo/study.hpp"
#include "test_util.hpp"

namespace sspo {
namespace {

using sspo::testing::read_file;
using sspo::testing::TempDir;

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.steps_T = 8;
  cfg.policy = PolicySpec{2, 3, {8}, 4};
  cfg.K = 2;
  cfg.updates_per_checkpoint = 3;
  cfg.batch_size = 4;
  cfg.pretrain_steps = 10;
  cfg.pretrain_batch_size = 8;
  cfg.pretrain_loss_threshold = 10.0;
  cfg.eval_samples = 12;
  return cfg;
}

RunResult run_with(std::vector<MetricsRow> rows, double initial) {
  return RunResult{Policy::zeros(PolicySpec{2, 3, {4}, 2}), std::move(rows), initial, 0};
}

MetricsRow row(int step, std::optional<double> eval, std::optional<double> ssr = std::nullopt) {
  MetricsRow r;
  r.step = step;
  r.eval_score = eval;
  r.ssr_rate = ssr;
  return r;
}

TEST(VariantLists, NamesAndSettings) {
  const auto erd = erd_variants();
  ASSERT_EQ(erd.size(), 3u);
  EXPECT_EQ(erd[0].erd, ErdStrategy::kInitial);
  EXPECT_EQ(erd[2].name, "uniform");
  const auto ab = ablation_variants();
  ASSERT_EQ(ab.size(), 5u);
  EXPECT_EQ(ab[1].ssr, SsrMode::kOff);
  EXPECT_EQ(ab[2].ssr, SsrMode::kIndicator);
  EXPECT_EQ(ab[3].erd, ErdStrategy::kInitial);
  const auto sft = sft_compare_variants();
  EXPECT_EQ(sft[1].method, Method::kSft);
}

TEST(VariantConfig, OverridesOnlyTheVariantFields) {
  const TrainConfig base = tiny_config();
  TrainConfig cfg = variant_config(base, ablation_variants()[2], 42);
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.ssr_mode, SsrMode::kIndicator);
  cfg.seed = base.seed;
  cfg.ssr_mode = base.ssr_mode;
  EXPECT_EQ(cfg, base);
}

TEST(Summarize, PeakFinalDropAndVariance) {
  std::vector<MetricsRow> rows;
  const double scores[] = {0.5, 0.2, 0.3, 0.4};
  for (int i = 0; i < 20; ++i) {
    const bool eval = (i + 1) % 5 == 0;
    rows.push_back(row(i + 1, eval ? std::optional<double>(scores[i / 5]) : std::nullopt,
                       i < 2 ? 0.1 : 0.6));
  }
  const RunSummary s = summarize("v", 3, run_with(rows, 1.0));
  EXPECT_EQ(s.curve.size(), 4u);
  EXPECT_EQ(s.curve.front().first, 5);
  EXPECT_DOUBLE_EQ(s.peak_score, 0.2);
  EXPECT_DOUBLE_EQ(s.final_score, 0.4);
  EXPECT_DOUBLE_EQ(s.drop, 0.2);
  // Differences -0.3, 0.1, 0.1: mean -1/30, population variance 8/225.
  EXPECT_NEAR(s.score_variance, 8.0 / 225.0, 1e-15);
  EXPECT_DOUBLE_EQ(*s.ssr_rate_first10, 0.1);
  EXPECT_DOUBLE_EQ(*s.ssr_rate_last10, 0.6);
}

TEST(Summarize, NoEvalFallsBackToInitialAndMissingSsrIsEmpty) {
  const RunSummary s = summarize("v", 0, run_with({row(1, std::nullopt)}, 0.7));
  EXPECT_EQ(s.peak_score, 0.7);
  EXPECT_EQ(s.final_score, 0.7);
  EXPECT_EQ(s.drop, 0.0);
  EXPECT_FALSE(s.ssr_rate_first10.has_value());
  EXPECT_FALSE(s.ssr_rate_last10.has_value());
}

TEST(Summarize, DropIsNonNegative) {
  SeededRng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MetricsRow> rows;
    for (int i = 1; i <= 10; ++i) rows.push_back(row(i, rng.uniform()));
    EXPECT_GE(summarize("v", 0, run_with(rows, 1.0)).drop, 0.0);
  }
}

TEST(StudyCsv, FailedRowsAndCurves) {
  StudyReport report;
  RunSummary ok;
  ok.variant = "a";
  ok.seed = 1;
  ok.initial_score = 1.0;
  ok.peak_score = 0.25;
  ok.final_score = 0.5;
  ok.drop = 0.25;
  ok.ssr_rate_first10 = 0.125;
  ok.curve = {{3, 0.25}, {6, 0.5}};
  RunSummary bad;
  bad.variant = "b";
  bad.seed = 1;
  bad.failed = true;
  report.rows = {ok, bad};
  EXPECT_EQ(summary_csv(report), std::string(kSummaryHeader) +
                                     "\na,1,0.25,0.5,0.25,0.125,\nb,1,failed,failed,failed,,\n");
  EXPECT_EQ(curves_csv(report), "variant,seed,step,eval_score\na,1,0,1\na,1,3,0.25\na,1,6,0.5\n");
  EXPECT_EQ(report.find("b", 1), &report.rows[1]);
  EXPECT_EQ(report.find("b", 2), nullptr);
}

TEST(RunVariants, LayoutAndSharedBaseModel) {
  TempDir dir;
  std::vector<std::string> seen;
  const StudyReport report = run_variants(tiny_config(), {0, 1}, sft_compare_variants(), dir.path(),
                                          [&](const RunSummary& r) { seen.push_back(r.variant); });
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(seen, (std::vector<std::string>{"sspo", "sft", "sspo", "sft"}));
  for (const auto& r : report.rows) {
    EXPECT_FALSE(r.failed) << r.error;
    const auto run_dir = dir.path() / r.variant / ("seed" + std::to_string(r.seed));
    EXPECT_TRUE(std::filesystem::exists(run_dir / "metrics.csv"));
    EXPECT_TRUE(std::filesystem::exists(run_dir / "config.snapshot"));
    EXPECT_EQ(r.curve.size(), 2u);
  }
  // Both variants start from the same theta_0 and evaluate it identically.
  EXPECT_EQ(report.find("sspo", 0)->initial_score, report.find("sft", 0)->initial_score);
  EXPECT_NE(report.find("sspo", 0)->initial_score, report.find("sspo", 1)->initial_score);
  EXPECT_EQ(read_file(dir.path() / "summary.csv"), summary_csv(report));
  EXPECT_EQ(read_file(dir.path() / "curves.csv"), curves_csv(report));
}

TEST(RunVariants, RerunIsIdentical) {
  TempDir dir;
  const auto a = run_variants(tiny_config(), {3}, ablation_variants(), dir.path() / "a");
  const auto b = run_variants(tiny_config(), {3}, ablation_variants(), dir.path() / "b");
  EXPECT_EQ(summary_csv(a), summary_csv(b));
  EXPECT_EQ(curves_csv(a), curves_csv(b));
}

TEST(RunVariants, FailedCellIsRecordedAndTheStudyContinues) {
  TempDir dir;
  std::ofstream(dir.path() / "sspo") << "in the way";
  const StudyReport report = run_variants(tiny_config(), {0}, sft_compare_variants(), dir.path());
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_TRUE(report.rows[0].failed);
  EXPECT_FALSE(report.rows[0].error.empty());
  EXPECT_FALSE(report.rows[1].failed);
  EXPECT_NE(read_file(dir.path() / "summary.csv").find("sspo,0,failed"), std::string::npos);
}

TEST(RunVariants, PretrainFailureFailsEveryCellOfThatSeed) {
  TempDir dir;
  TrainConfig cfg = tiny_config();
  cfg.pretrain_lr = 1e300;
  cfg.optimizer.kind = OptimizerKind::kSgd;
  const StudyReport report = run_variants(cfg, {0}, sft_compare_variants(), dir.path());
  for (const auto& r : report.rows) EXPECT_TRUE(r.failed);
}

TEST(RunVariants, Errors) {
  TempDir dir;
  EXPECT_SSPO_ERROR(run_variants(tiny_config(), {}, erd_variants(), dir.path()),
                    ErrorCode::kInvalidArgument);
  EXPECT_SSPO_ERROR(run_variants(tiny_config(), {0}, {}, dir.path()), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace sspo
