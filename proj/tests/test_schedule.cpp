#include <cmath>

#include <gtest/gtest.h>

#include "sspo/schedule.hpp"
#include "test_util.hpp"

namespace sspo {
namespace {

const NoiseSchedule kDefault(0.99, 50);

TEST(AlphaBar, Examples) {
  EXPECT_EQ(kDefault.alpha_bar(1), 0.99);
  EXPECT_NEAR(kDefault.alpha_bar(2), 0.9801, 1e-15);
  for (int t = 1; t < 50; ++t) EXPECT_LT(kDefault.alpha_bar(t + 1), kDefault.alpha_bar(t));
}

TEST(AlphaBar, RecurrenceWithinOneUlp) {
  for (double alpha : {0.5, 0.9, 0.99, 0.999}) {
    const NoiseSchedule s(alpha, 200);
    for (int t = 1; t < 200; ++t) {
      const double next = s.alpha_bar(t + 1);
      const double product = s.alpha_bar(t) * alpha;
      EXPECT_LE(std::abs(next - product), std::nextafter(product, 1.0) - product) << t;
    }
  }
}

TEST(AlphaBar, OutOfRange) {
  EXPECT_SSPO_ERROR(kDefault.alpha_bar(0), ErrorCode::kTimestepOutOfRange);
  EXPECT_SSPO_ERROR(kDefault.alpha_bar(51), ErrorCode::kTimestepOutOfRange);
}

TEST(Schedule, ConstructionValidates) {
  EXPECT_SSPO_ERROR(NoiseSchedule(1.0, 10), ErrorCode::kInvalidArgument);
  EXPECT_SSPO_ERROR(NoiseSchedule(0.0, 10), ErrorCode::kInvalidArgument);
  EXPECT_SSPO_ERROR(NoiseSchedule(0.9, 1), ErrorCode::kInvalidArgument);
}

TEST(ForwardDiffuse, Examples) {
  const Tensor x0 = Tensor::vector({1.5, -2.0});
  const Tensor zero = Tensor::vector({0.0, 0.0});
  const Tensor eps = Tensor::vector({0.3, 0.8});
  const Tensor a = kDefault.forward_diffuse(x0, 7, zero);
  EXPECT_EQ(a[0], std::sqrt(kDefault.alpha_bar(7)) * 1.5);
  const Tensor b = kDefault.forward_diffuse(zero, 7, eps);
  EXPECT_EQ(b[1], std::sqrt(1.0 - kDefault.alpha_bar(7)) * 0.8);
  // Independent float64 oracle: 0.99 + sqrt(0.0199).
  const Tensor c = kDefault.forward_diffuse(Tensor::vector({1.0}), 2, Tensor::vector({1.0}));
  EXPECT_NEAR(c[0], 1.131067359796659, 1e-14);
}

TEST(ForwardDiffuse, Errors) {
  EXPECT_SSPO_ERROR(kDefault.forward_diffuse(Tensor::vector({1}), 2, Tensor::vector({1, 2})),
                    ErrorCode::kShapeMismatch);
  EXPECT_SSPO_ERROR(kDefault.forward_diffuse(Tensor::vector({1}), 0, Tensor::vector({1})),
                    ErrorCode::kTimestepOutOfRange);
}

TEST(ForwardDiffuse, IsExactlyAffine) {
  SeededRng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double a = std::ldexp(1.0, static_cast<int>(rng.uniform_int(9)) - 4);  // powers of two
    const double x = rng.normal(), e = rng.normal();
    const int t = 1 + static_cast<int>(rng.uniform_int(50));
    const Tensor lhs = kDefault.forward_diffuse(Tensor::vector({a * x}), t, Tensor::vector({a * e}));
    const Tensor rhs = kDefault.forward_diffuse(Tensor::vector({x}), t, Tensor::vector({e}));
    ASSERT_EQ(lhs[0], a * rhs[0]);
  }
}

TEST(ForwardDiffuse, VariancePreservation) {
  SeededRng rng(8);
  const int n = 100000;
  for (int t : {1, 10, 50}) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      // unit-variance, non-Gaussian source
      const double x0 = (rng.uniform() < 0.5 ? -1.0 : 1.0);
      const Tensor xt = kDefault.forward_diffuse(Tensor::vector({x0}), t, Tensor::vector({rng.normal()}));
      sum += xt[0];
      sq += xt[0] * xt[0];
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double expected = kDefault.alpha_bar(t) * 1.0 + (1.0 - kDefault.alpha_bar(t));
    // standard error of a sample variance ~ sqrt((m4 - s^4) / n); m4 <= 3 here
    const double se = std::sqrt(2.0 / n);
    EXPECT_NEAR(var, expected, 3.0 * se) << t;
  }
}

TEST(SigmaSq, Examples) {
  EXPECT_EQ(kDefault.sigma_t_sq(1), 0.0);
  EXPECT_NEAR(kDefault.sigma_t_sq(2), 0.0025188758258191113, 1e-16);
  EXPECT_SSPO_ERROR(kDefault.sigma_t_sq(0), ErrorCode::kTimestepOutOfRange);
}

TEST(SigmaSq, NonDecreasingSweep) {
  for (double alpha : {0.9, 0.99, 0.999}) {
    const NoiseSchedule s(alpha, 100);
    for (int t = 2; t < 100; ++t) EXPECT_LE(s.sigma_t_sq(t), s.sigma_t_sq(t + 1)) << alpha << " " << t;
  }
  EXPECT_NEAR(kDefault.sigma_t_sq(50), 0.005530, 1e-5);
}

TEST(WeightWt, ConstantModeIsOne) {
  for (int t = 1; t <= 50; ++t) EXPECT_EQ(kDefault.weight_w_t(t), 1.0);
}

TEST(WeightWt, ExactMode) {
  const NoiseSchedule exact(0.99, 50, WeightingMode::kExact);
  EXPECT_SSPO_ERROR(exact.weight_w_t(1), ErrorCode::kDegenerateWeight);
  EXPECT_NEAR(exact.weight_w_t(2), 49.624059365215004, 1e-10);
  EXPECT_EQ(exact.min_train_timestep(), 2);
  EXPECT_EQ(kDefault.min_train_timestep(), 1);
}

TEST(WeightingMode, Parse) {
  EXPECT_EQ(parse_weighting_mode("exact"), WeightingMode::kExact);
  EXPECT_EQ(parse_weighting_mode("constant"), WeightingMode::kConstant);
  EXPECT_SSPO_ERROR(parse_weighting_mode("cosine"), ErrorCode::kConfig);
}

}  // namespace
}  // namespace sspo
