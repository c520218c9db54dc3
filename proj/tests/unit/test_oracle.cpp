#include <gtest/gtest.h>

#include <cmath>

#include "covtest/error.hpp"
#include "covtest/oracle.hpp"
#include "covtest/stats.hpp"
#include "oracles.hpp"

using namespace covtest;
using covtest::testing::Gen;

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

void expect_pass(const CheckReport& r) {
  EXPECT_TRUE(r.pass) << r.name;
  for (const auto& c : r.comparisons) {
    EXPECT_TRUE(c.pass) << r.name << ": " << c.label << " analytic=" << c.analytic
                        << " oracle=" << c.oracle << " scale=" << c.scale;
  }
}

}  // namespace

TEST(MomentIdentities, IdentitySpecializations) {
  const Index p = 5;
  const Matrix i = Matrix::Identity(p, p);
  const auto r = check_moment_identities(i, i, 200000, 3);
  expect_pass(r);
  EXPECT_EQ(r.comparisons[0].analytic, 25.0 + 10.0);
  EXPECT_EQ(r.comparisons[2].analytic, 48.0 * 5 + 12.0 * 25);
}

TEST(MomentIdentities, RandomPsdPasses) { expect_pass(check_moment_identities(4, 1000000, 17)); }

TEST(MomentIdentities, InjectedFaultFails) {
  EXPECT_FALSE(check_moment_identities(4, 200000, 17, true).pass);
}

TEST(KernelMoments, NullValues) {
  for (Index p = 1; p <= 8; ++p) {
    const auto t = TraceMoments::from_matrix(Matrix::Identity(p, p));
    EXPECT_EQ(kernel_variance(t), 2.0 * (p * p + p));
    EXPECT_EQ(kernel_overlap_covariance(t), 0.0);
    EXPECT_EQ(kernel_mean(t), 0.0);
  }
  expect_pass(check_h_moments(Matrix::Identity(3, 3), 200000, 5));
}

TEST(KernelMoments, TridiagonalPasses) {
  expect_pass(check_h_moments(CovarianceModel::tridiagonal(4, 0.3).build(), 1000000, 8));
}

TEST(Martingale, TwoSamples) {
  Gen g(1);
  const Matrix s = g.psd_matrix(3, 0.2);
  const DataMatrix x(g.normal_matrix(2, 3));
  const auto d = martingale_differences(x, s);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR(d[0] + d[1], statistic_T(x) - mean_T(s), 1e-10);
}

TEST(Martingale, TridiagonalTightTolerance) {
  const Matrix s = CovarianceModel::tridiagonal(3, 0.3).build();
  RngStream stream(4, 0);
  const auto x = sample(CovarianceModel::tridiagonal(3, 0.3), 5, stream);
  const auto d = martingale_differences(x, s);
  double sum = 0.0;
  for (double v : d) sum += v;
  const double rhs = statistic_T(x) - mean_T(s);
  EXPECT_NEAR(sum, rhs, 1e-10 * std::abs(rhs));
}

TEST(Martingale, AdversarialDataStillExact) {
  Gen g(2);
  for (int t = 0; t < 200; ++t) {
    const Index p = g.integer(1, 8);
    const Index n = g.integer(2, 15);
    Matrix x = g.normal_matrix(n, p) * g.uniform(0.01, 30.0);
    x(0, 0) += 100.0;
    expect_pass(check_martingale_identity(DataMatrix(x), g.psd_matrix(p, 0.5)));
  }
  EXPECT_EQ(code_of([] {
              check_martingale_identity(DataMatrix(Matrix::Zero(3, 2)), Matrix::Identity(3, 3));
            }),
            ErrorCode::DimensionMismatch);
}

TEST(ConditionalVariance, FirstStepAtNullIsDegenerate) {
  // Q_0 = 0 and Sigma = I: every term of the formula vanishes, and D_n1 is
  // identically zero.
  for (Index p : {1, 3, 6}) {
    const Matrix i = Matrix::Identity(p, p);
    EXPECT_EQ(conditional_variance(i, 10, Matrix::Zero(p, p)), 0.0);
    Gen g(static_cast<std::uint64_t>(p));
    for (int t = 0; t < 10; ++t) {
      const Vector x = g.normal_matrix(p, 1);
      EXPECT_NEAR(martingale_difference(i, 10, Matrix::Zero(p, p), x), 0.0, 1e-14);
    }
  }
  expect_pass(check_conditional_variance(Matrix::Identity(3, 3), 8, 1, 10000, 1));
}

TEST(ConditionalVariance, NullExpectation) {
  const auto t = TraceMoments::from_matrix(Matrix::Identity(4, 4));
  for (Index k = 1; k <= 9; ++k) {
    EXPECT_NEAR(expected_conditional_variance(t, 9, k), 8.0 * (k - 1) * 20.0 / (81.0 * 64.0),
                1e-15);
  }
}

TEST(ConditionalVariance, SumMatchesVarianceExactly) {
  const Matrix s = CovarianceModel::equi_correlation(4, 0.2).build();
  const auto r = check_conditional_variance(s, 7, 3, 2000, 1);
  const auto& last = r.comparisons.back();
  EXPECT_EQ(last.kind, ToleranceKind::Relative);
  EXPECT_TRUE(last.pass);
  EXPECT_NEAR(last.oracle, variance_T(s, 7), 1e-10 * variance_T(s, 7));
}

TEST(ConditionalVariance, MonteCarloPasses) {
  expect_pass(check_conditional_variance(CovarianceModel::equi_correlation(4, 0.2).build(), 7, 4,
                                         400000, 21));
  EXPECT_EQ(code_of([] { check_conditional_variance(Matrix::Identity(3, 3), 5, 3,
                                                    Matrix::Zero(1, 3), 100, 1); }),
            ErrorCode::DimensionMismatch);
}

TEST(TrM, Specializations) {
  const auto t = TraceMoments::from_matrix(Matrix::Identity(4, 4));
  EXPECT_EQ(trM_mean(t, 1), 0.0);
  EXPECT_EQ(trM_variance(t, 1), 0.0);
  EXPECT_EQ(trM_mean(t, 2), 16.0 + 4.0);
  expect_pass(check_trM_moments(Matrix::Identity(4, 4), 1, 1000, 2));
}

TEST(TrM, NullSecondStepVariance) {
  // k = 2, Sigma = I: tr(M^2) = (x'x)^2 - 2 x'x + p with x'x ~ chi^2_p, whose
  // variance follows from the chi-square raw moments.
  for (Index p = 1; p <= 6; ++p) {
    const double d = static_cast<double>(p);
    const double m1 = d, m2 = d * (d + 2), m3 = m2 * (d + 4), m4 = m3 * (d + 6);
    const double var = (m4 - 4 * m3 + 4 * m2) - std::pow(m2 - 2 * m1, 2);
    const auto t = TraceMoments::from_matrix(Matrix::Identity(p, p));
    EXPECT_NEAR(trM_variance(t, 2), var, 1e-9 * var);
  }
}

TEST(TrM, TridiagonalPasses) {
  expect_pass(check_trM_moments(CovarianceModel::tridiagonal(4, 0.3).build(), 4, 100000, 9));
}

TEST(Divergence, ZeroSeparation) {
  EXPECT_NEAR(chisq_divergence(DivergenceInputs::make(6, 20, 0.0)), 1.0, 1e-15);
  EXPECT_NEAR(chisq_divergence(DivergenceInputs::make(40, 80, 1e-9)), 1.0, 1e-12);
}

TEST(Divergence, FrozenValue) {
  // Frozen from an independent evaluation of the determinant form
  // E_{V,U} det(Sigma_V)^{-n/2} det(Sigma_U)^{-n/2} det(Sigma_V^-1 + Sigma_U^-1 - I)^{-n/2}.
  const auto in = DivergenceInputs::make(6, 20, 0.3);
  EXPECT_NEAR(chisq_divergence(in), 1.0026985307421, 1e-12);
  EXPECT_GT(chisq_divergence(in), 1.0);
}

TEST(Divergence, BinomialCollapseMatchesEnumeration) {
  Gen g(3);
  for (int t = 0; t < 60; ++t) {
    const Index p = g.integer(2, 12);
    const Index n = g.integer(1, 200);
    const double b = g.uniform(0.0, 0.999) * DivergenceInputs::b_cap(p, n);
    const auto in = DivergenceInputs::make(p, n, b);
    const double exact = chisq_divergence(in);
    EXPECT_NEAR(chisq_divergence_enumerated(in), exact, 1e-12 * exact);
  }
}

TEST(Divergence, TwoVectorMonteCarlo) {
  expect_pass(check_divergence(DivergenceInputs::make(6, 20, 0.3), 1000000, 4));
}

TEST(Divergence, MonotoneInB) {
  for (auto [p, n] : {std::pair<Index, Index>{6, 20}, {40, 80}, {100, 50}}) {
    double prev = 0.0;
    const double cap = DivergenceInputs::b_cap(p, n);
    for (int i = 0; i < 200; ++i) {
      const double v = chisq_divergence(DivergenceInputs::make(p, n, cap * i / 200.0));
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Divergence, ConditionViolated) {
  EXPECT_EQ(code_of([] { DivergenceInputs::make(6, 20, 1.0); }), ErrorCode::ConditionViolated);
  // b p / sqrt(n (p - 1)) must stay below 1/sqrt(2).
  EXPECT_EQ(code_of([] { DivergenceInputs::make(40, 10, 0.5); }), ErrorCode::ConditionViolated);
  EXPECT_EQ(code_of([] { DivergenceInputs::make(6, 20, -0.1); }), ErrorCode::ConditionViolated);
}

TEST(LowerBound, SmallSeparationGivesSmallB) {
  double prev = 1.0;
  for (double gap : {0.1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    const double b = find_lower_bound_constant(40, 80, gap);
    EXPECT_GT(b, 0.0);
    EXPECT_LT(b, prev);
    prev = b;
  }
  EXPECT_LT(prev, 0.01);
}

TEST(LowerBound, RespectsCapAndBound) {
  Gen g(5);
  for (int t = 0; t < 30; ++t) {
    const Index p = g.integer(2, 80);
    const Index n = g.integer(2, 300);
    const double gap = g.uniform(0.01, 0.99);
    const double b = find_lower_bound_constant(p, n, gap);
    EXPECT_LT(b, 1.0);
    EXPECT_LT(b, std::sqrt(double(n) * (p - 1)) / (std::sqrt(2.0) * p));
    EXPECT_LE(chisq_divergence(DivergenceInputs{p, n, b}) - 1.0, 4.0 * gap * gap + 1e-12);
  }
}

TEST(LowerBound, BisectionIsSharp) {
  const double b = find_lower_bound_constant(40, 80, 0.2);
  EXPECT_LE(chisq_divergence(DivergenceInputs{40, 80, b}) - 1.0, 0.16);
  if (b + 1e-3 < DivergenceInputs::b_cap(40, 80)) {
    EXPECT_GT(chisq_divergence(DivergenceInputs{40, 80, b + 1e-3}) - 1.0, 0.16);
  }
  expect_pass(check_lower_bound_constant(40, 80, 0.2));
}

TEST(Suite, FilteringAndFaults) {
  SuiteOptions only;
  only.only = {"martingale"};
  const auto reports = run_verification_suite(only);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].name, "martingale");
  EXPECT_EQ(reports[0].replicates, 1000);
  EXPECT_TRUE(reports[0].pass);

  SuiteOptions fault;
  fault.only = {"moments"};
  fault.replicates = 100000;
  fault.inject_fault = true;
  EXPECT_FALSE(run_verification_suite(fault)[0].pass);

  SuiteOptions bad;
  bad.only = {"nope"};
  EXPECT_EQ(code_of([&] { run_verification_suite(bad); }), ErrorCode::ParameterOutOfRange);
}
