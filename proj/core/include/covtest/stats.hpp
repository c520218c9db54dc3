#pragma once

#include <span>
#include <string_view>
#include <variant>

#include "covtest/covmodels.hpp"

// Test statistics for H0: Sigma = I and their closed-form moments and power
// approximations.

namespace covtest {

double normal_cdf(double x);

// Inverse of normal_cdf; q must lie in (0, 1).
double normal_quantile(double q);

// Threshold taken from the asymptotic null distribution.
struct AsymptoticThreshold {};

// Threshold supplied by the caller, typically a simulated null quantile.
struct CalibratedThreshold {
  double value = 0.0;
};

using ThresholdSource = std::variant<AsymptoticThreshold, CalibratedThreshold>;

std::string_view threshold_source_name(const ThresholdSource& source) noexcept;

struct TestOutcome {
  double statistic = 0.0;
  double standardized = 0.0;
  double threshold = 0.0;
  bool reject = false;
  double alpha = 0.0;
  ThresholdSource threshold_source;
};

// ---------------------------------------------------------------------------
// U-statistic test

// h(x1, x2) = (x1'x2)^2 - (x1'x1 + x2'x2) + p.
double kernel_h(std::span<const double> x1, std::span<const double> x2);

enum class GramPath {
  Auto,        // n x n Gram when n <= p, otherwise p x p
  SampleGram,  // n x n Gram X X'
  FeatureGram  // p x p Gram X'X
};

// T_n = 2 / (n (n - 1)) * sum_{i<j} h(X_i, X_j), evaluated in O(n p min(n, p))
// through a Gram matrix. Unbiased for ||Sigma - I||_F^2.
double statistic_T(const DataMatrix& data, GramPath path = GramPath::Auto);

// p x p Gram matrix X'X (lower triangle filled) plus the squared row norms;
// both T_n and L_n can be read off it, so a replicate pays for one product.
struct FeatureGram {
  Index n = 0;
  Index p = 0;
  Matrix lower;     // lower triangle of X'X
  Vector row_norms; // ||X_i||^2

  static FeatureGram compute(const DataMatrix& data);
};

double statistic_T(const FeatureGram& gram);

// mu_n(Sigma) = tr (Sigma - I)^2.
double mean_T(const Matrix& sigma);

// sigma_n^2(Sigma) = 4/(n(n-1)) [tr^2(Sigma^2) + tr(Sigma^4)]
//                  + 8/n tr(Sigma^2 (Sigma - I)^2).
double variance_T(const Matrix& sigma, Index n);
double variance_T(const TraceMoments& traces, Index n);

// sigma_n^2(I) = 4 p (p + 1) / (n (n - 1)).
double null_variance_T(Index p, Index n);

// z_{1-alpha} * 2 sqrt(p (p + 1) / (n (n - 1))).
double psi_asymptotic_threshold(Index p, Index n, double alpha);

// Rejects when T_n exceeds the threshold. `standardized` is T_n / sigma_n(I).
TestOutcome test_psi(const DataMatrix& data, double alpha,
                     const ThresholdSource& source = AsymptoticThreshold{});

// ---------------------------------------------------------------------------
// Corrected likelihood ratio test

// Centering and scaling of the corrected LRT at c = p / n.
struct ClrtParameters {
  Index n = 0;
  Index p = 0;
  double ratio = 0.0;   // c_n
  double center = 0.0;  // p * d(c_n) - 1/2 log(1 - c_n)
  double scale = 0.0;   // sqrt(-2 log(1 - c_n) - 2 c_n)

  // Throws DegenerateRatio when 1 - p/n <= 1e-8 (this includes p >= n).
  static ClrtParameters make(Index n, Index p);
};

// L_n = tr S - log det S - p with S = (1/n) sum X_i X_i' (no centering).
// log det S comes from the Cholesky factor of S.
double statistic_L(const DataMatrix& data);
double statistic_L(const FeatureGram& gram);

// CLR_n = (L_n - p d(c_n) + 1/2 log(1 - c_n)) / sqrt(-2 log(1 - c_n) - 2 c_n),
// d(c) = 1 - (1 - 1/c) log(1 - c). Asymptotically N(0, 1) under H0.
double statistic_CLR(const DataMatrix& data);
double statistic_CLR_from_L(double L, const ClrtParameters& params);

TestOutcome test_clr(const DataMatrix& data, double alpha,
                     const ThresholdSource& source = AsymptoticThreshold{});

// ---------------------------------------------------------------------------
// Power formulas

// Phi(tau^2 / 2 - z_{1-alpha}) with tau = ||Sigma - I||_F / sqrt(p / n).
double power_approx_psi(double tau, double alpha);

// h(tau, c) = (tau sqrt(c) - log(1 + tau sqrt(c))) / sqrt(-2 log(1 - c) - 2c).
double clrt_power_shift(double tau, double c);

// Phi(h(tau, c) - z_{1-alpha}); tau in (0, 1), c in (0, 1).
double power_asymptotic_clrt(double tau, double c, double alpha);

}  // namespace covtest
