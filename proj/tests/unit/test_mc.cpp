#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "covtest/error.hpp"
#include "covtest/mc.hpp"

using namespace covtest;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected covtest::Error";
  return ErrorCode::ParameterOutOfRange;
}

SimulationPlan small_plan() {
  SimulationPlan plan;
  plan.n = 20;
  plan.p = 8;
  plan.replicates = 2000;
  plan.seed = 99;
  plan.statistics = {Statistic::Tn, Statistic::CLR};
  plan.calibration_replicates = 2000;
  return plan;
}

}  // namespace

TEST(PowerEstimate, FromCounts) {
  const auto e = PowerEstimate::from_counts(30, 100);
  EXPECT_EQ(e.estimate, 0.3);
  EXPECT_NEAR(e.standard_error, std::sqrt(0.3 * 0.7 / 100.0), 1e-15);
  EXPECT_NEAR(e.ci_low, 0.3 - 1.959963984540054 * e.standard_error, 1e-15);
  const auto zero = PowerEstimate::from_counts(0, 50);
  EXPECT_EQ(zero.ci_low, 0.0);
  EXPECT_EQ(zero.ci_high, 0.0);
  const auto one = PowerEstimate::from_counts(1, 2);
  EXPECT_GE(one.ci_low, 0.0);
  EXPECT_LE(one.ci_high, 1.0);
  EXPECT_EQ(code_of([] { PowerEstimate::from_counts(3, 2); }), ErrorCode::ParameterOutOfRange);
}

TEST(Quantile, OrderStatistic) {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  EXPECT_EQ(empirical_upper_quantile(v, 0.05), 95.0);
  EXPECT_EQ(empirical_upper_quantile(v, 0.051), 95.0);
  EXPECT_EQ(empirical_upper_quantile(v, 0.999), 1.0);
  std::vector<double> big(100000);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<double>(i + 1);
  EXPECT_EQ(empirical_upper_quantile(big, 0.05), 95000.0);
}

TEST(Calibrate, ConstantTestDouble) {
  const auto constant = [](RngStream&) { return 2.5; };
  EXPECT_EQ(calibrate_null_threshold(constant, 0.05, 500, 1), 2.5);
  EXPECT_EQ(code_of([&] { calibrate_null_threshold(constant, 0.05, 99, 1); }),
            ErrorCode::TooFewSamples);
}

TEST(Calibrate, TnNullQuantile) {
  // Reference 1.7144 is the 95% point of 4e5 null draws from an independent
  // simulation (sd of the estimate ~0.0034). The null T_n is right-skewed at
  // this size, so it sits ~0.04 above the asymptotic 1.6758.
  const double t = calibrate_null_threshold(Statistic::Tn, 80, 40, 0.05, 100000, 1);
  EXPECT_NEAR(t, 1.7144, 0.03);
  EXPECT_GT(t, psi_asymptotic_threshold(40, 80, 0.05));
}

TEST(Calibrate, DeterministicAcrossWorkers) {
  const double a = calibrate_null_threshold(Statistic::CLR, 30, 10, 0.05, 3000, 7, 1);
  const double b = calibrate_null_threshold(Statistic::CLR, 30, 10, 0.05, 3000, 7, 1);
  const double c = calibrate_null_threshold(Statistic::CLR, 30, 10, 0.05, 3000, 7, 4);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Calibrate, NonincreasingInAlpha) {
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
    const double t = calibrate_null_threshold(Statistic::Tn, 25, 10, alpha, 2000, 3);
    EXPECT_LE(t, prev);
    prev = t;
  }
}

TEST(Calibrate, MultiStatisticMatchesSingle) {
  const Statistic both[] = {Statistic::Tn, Statistic::CLR};
  const auto pair = calibrate_null_thresholds(both, 30, 10, 0.1, 1000, 5);
  EXPECT_EQ(pair[0], calibrate_null_threshold(Statistic::Tn, 30, 10, 0.1, 1000, 5));
  EXPECT_EQ(pair[1], calibrate_null_threshold(Statistic::CLR, 30, 10, 0.1, 1000, 5));
}

TEST(Plan, Validation) {
  auto plan = small_plan();
  EXPECT_NO_THROW(plan.validate());
  plan.p = 20;
  EXPECT_EQ(code_of([&] { plan.validate(); }), ErrorCode::RequiresPLessThanN);
  plan.statistics = {Statistic::Tn};
  EXPECT_NO_THROW(plan.validate());
  plan.alpha = 1.5;
  EXPECT_EQ(code_of([&] { plan.validate(); }), ErrorCode::ParameterOutOfRange);
  plan = small_plan();
  plan.replicates = 0;
  EXPECT_EQ(code_of([&] { plan.validate(); }), ErrorCode::ParameterOutOfRange);
  plan = small_plan();
  plan.grid = {CovarianceModel::identity(3)};
  EXPECT_EQ(code_of([&] { plan.validate(); }), ErrorCode::DimensionMismatch);
}

TEST(EstimatePower, SizeAtNullWithCalibratedThreshold) {
  SimulationPlan plan;
  plan.n = 20;
  plan.p = 10;
  plan.replicates = 100000;
  plan.seed = 1234;
  plan.statistics = {Statistic::Tn, Statistic::CLR};
  plan.calibration_replicates = 100000;
  const auto thresholds = resolve_thresholds(plan);
  const auto est = estimate_power(plan, CovarianceModel::identity(10), thresholds);
  for (const auto& e : est) {
    EXPECT_NEAR(e.estimate, 0.05, 3.0 * std::sqrt(0.05 * 0.95 / 100000.0));
  }
}

TEST(EstimatePower, WorkerCountInvariant) {
  auto plan = small_plan();
  const std::vector<double> thresholds{0.5, 1.0};
  const auto model = CovarianceModel::equi_correlation(8, 0.1);
  plan.workers = 1;
  const auto a = estimate_power(plan, model, thresholds);
  for (int w : {2, 3, 8, 16}) {
    plan.workers = w;
    const auto b = estimate_power(plan, model, thresholds);
    for (std::size_t s = 0; s < a.size(); ++s) EXPECT_EQ(a[s].rejections, b[s].rejections);
  }
}

TEST(EstimatePower, ReplicateUsesItsOwnStream) {
  auto plan = small_plan();
  plan.statistics = {Statistic::Tn};
  plan.replicates = 1;
  const auto model = CovarianceModel::tridiagonal(8, 0.2);
  RngStream stream(plan.seed, 0);
  const double t = statistic_T(sample(model, plan.n, stream));
  const double below[] = {std::nextafter(t, -1e300)};
  const double at[] = {t};
  EXPECT_EQ(estimate_power(plan, model, below)[0].rejections, 1);
  EXPECT_EQ(estimate_power(plan, model, at)[0].rejections, 0);
}

TEST(PowerCurve, Shape) {
  auto plan = small_plan();
  EXPECT_EQ(code_of([&] { power_curve(plan); }), ErrorCode::EmptyGrid);
  for (double rho : {0.05, 0.1, 0.2}) plan.grid.push_back(CovarianceModel::equi_correlation(8, rho));
  const auto curve = power_curve(plan);
  ASSERT_EQ(curve.points.size(), 3u);
  ASSERT_EQ(curve.thresholds.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(curve.points[i].estimates.size(), 2u);
    if (i > 0) EXPECT_GT(curve.points[i].frobenius, curve.points[i - 1].frobenius);
  }
  EXPECT_GT(curve.points[2].estimates[0].estimate, curve.points[0].estimates[0].estimate);

  plan.grid = {CovarianceModel::equi_correlation(8, 0.2), CovarianceModel::equi_correlation(8, 0.1)};
  EXPECT_EQ(code_of([&] { power_curve(plan); }), ErrorCode::ParameterOutOfRange);
}

TEST(Replicates, ExceptionPropagates) {
  EXPECT_THROW(for_each_replicate(1000, 4,
                                  [](std::int64_t r) {
                                    if (r == 517) throw std::runtime_error("boom");
                                  }),
               std::runtime_error);
}

TEST(Kolmogorov, QuantileConstruction) {
  for (int m : {100, 250, 1000}) {
    std::vector<double> x;
    for (int i = 1; i <= m; ++i) x.push_back(normal_quantile((i - 0.5) / m));
    EXPECT_NEAR(empirical_kolmogorov_distance(x), 0.5 / m, 1e-12);
  }
  std::vector<double> few(99, 0.0);
  EXPECT_EQ(code_of([&] { empirical_kolmogorov_distance(few); }), ErrorCode::TooFewSamples);
  std::vector<double> far(200, 50.0);
  EXPECT_NEAR(empirical_kolmogorov_distance(far), 1.0, 1e-12);
}

TEST(Statistics, Names) {
  EXPECT_EQ(to_string(Statistic::Tn), "tn");
  EXPECT_EQ(to_string(Statistic::CLR), "clrt");
  EXPECT_EQ(parse_statistic("clrt"), Statistic::CLR);
  EXPECT_FALSE(parse_statistic("nope").has_value());
}

TEST(NullDistribution, ClrIsStandardNormal) {
  const Statistic clr[] = {Statistic::CLR};
  const auto values =
      simulate_statistics(clr, factorize(Matrix::Identity(40, 40)), 200, 100000, 3).front();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(sd, 1.0, 0.05);
}

TEST(NullDistribution, PsiSizeWhenPEqualsN) {
  SimulationPlan plan;
  plan.n = 200;
  plan.p = 200;
  plan.replicates = 100000;
  plan.seed = 3;
  plan.statistics = {Statistic::Tn};
  plan.threshold_mode = ThresholdMode::Asymptotic;
  const auto size =
      estimate_power(plan, CovarianceModel::identity(200), resolve_thresholds(plan)).front();
  EXPECT_GE(size.estimate, 0.03);
  EXPECT_LE(size.estimate, 0.08);
}
