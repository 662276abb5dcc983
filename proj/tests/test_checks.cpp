#include <gtest/gtest.h>

#include "sspo/checks.hpp"
#include "test_util.hpp"

namespace sspo {
namespace {

using sspo::testing::TempDir;

TEST(ChiSquare, KnownQuantiles) {
  EXPECT_NEAR(chi_square_sf(3.841458820694124, 1.0), 0.05, 1e-12);
  EXPECT_NEAR(chi_square_sf(11.344866730144373, 3.0), 0.01, 1e-12);
  EXPECT_NEAR(chi_square_sf(2.0, 2.0), std::exp(-1.0), 1e-14);
  EXPECT_EQ(chi_square_sf(0.0, 4.0), 1.0);
}

TEST(Gradcheck, SmallNetworkPassesAllModes) {
  GradcheckOptions opt;
  opt.cases = 9;
  opt.seed = 3;
  opt.spec = PolicySpec{2, 3, {8}, 4};
  const GradcheckReport r = run_gradcheck(opt);
  ASSERT_EQ(r.cases.size(), 9u);
  bool saw[3] = {false, false, false};
  for (const auto& c : r.cases) {
    saw[static_cast<int>(c.mode)] = true;
    EXPECT_LT(c.max_rel_error, 1e-4) << c.index;
    EXPECT_EQ(c.weight_error.has_value(), c.sign == 1);
  }
  EXPECT_TRUE(saw[0] && saw[1] && saw[2]);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_LT(r.max_weight_error, 1e-6);
}

TEST(Gradcheck, SameSeedSameReport) {
  GradcheckOptions opt;
  opt.cases = 3;
  opt.spec = PolicySpec{2, 3, {4}, 2};
  EXPECT_EQ(run_gradcheck(opt).max_rel_error, run_gradcheck(opt).max_rel_error);
}

TEST(Theorem2Grid, AllPointsAgree) {
  const Theorem2GridReport r = run_theorem2_grid(1);
  EXPECT_GE(r.points, 1000u);
  EXPECT_EQ(r.ordering_agreements, r.points);
  EXPECT_LE(r.max_identity_residual, 1e-12) << r.worst_case;
}

TEST(ReplayStats, RowsPerK) {
  TempDir dir;
  const auto rows = run_replay_stats({3, 8}, 20000, 2, dir.path());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].k, 8u);
  EXPECT_EQ(rows[1].draws, 20000u);
  double total = 0.0;
  for (double f : rows[1].frequencies) total += f;
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (const auto& row : rows) {
    EXPECT_GT(row.p_value, 0.01);
    EXPECT_TRUE(row.initial_constant);
    EXPECT_TRUE(row.last_constant);
  }
}

}  // namespace
}  // namespace sspo
