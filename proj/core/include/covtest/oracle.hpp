#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "covtest/covmodels.hpp"

// Brute-force and Monte Carlo checks of the closed-form moment identities the
// test statistics rest on. A failing identity is a failing report, not an
// exception; exceptions are reserved for invalid inputs.

namespace covtest {

enum class ToleranceKind {
  StandardErrors,  // |analytic - oracle| <= tolerance * scale, scale = MC standard error
  Relative,        // |analytic - oracle| <= tolerance * scale, scale = reference magnitude
  AtMost,          // oracle <= analytic (analytic is a bound)
  AtLeast,         // oracle >= analytic
};

std::string_view to_string(ToleranceKind kind) noexcept;

struct Comparison {
  std::string label;
  double analytic = 0.0;
  double oracle = 0.0;
  double scale = 0.0;
  ToleranceKind kind = ToleranceKind::StandardErrors;
  double tolerance = 4.0;
  bool pass = false;

  // Exact zero-variance cases (e.g. an identically vanishing quantity) get a
  // 1e-12 absolute floor on top of the SE band.
  static Comparison within_se(std::string label, double analytic, double oracle, double se,
                              double multiple = 4.0);
  static Comparison within_relative(std::string label, double analytic, double oracle,
                                    double magnitude, double tolerance);
  static Comparison at_most(std::string label, double bound, double value);
  static Comparison at_least(std::string label, double bound, double value);
};

struct CheckReport {
  std::string name;
  std::vector<Comparison> comparisons;
  std::int64_t replicates = 0;
  bool pass = false;

  void add(Comparison c);
};

// Mean and standard error of a sample, and of its sample variance.
struct MomentSummary {
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;
  double variance_se = 0.0;

  static MomentSummary of(const std::vector<double>& values);
};

// Three Gaussian quadratic-form moment identities for random PSD M, N = B B'/p
// drawn from the seed; `inject_fault` deliberately breaks one analytic constant.
CheckReport check_moment_identities(Index p, std::int64_t replicates, std::uint64_t seed,
                                    bool inject_fault = false);
CheckReport check_moment_identities(const Matrix& m, const Matrix& n, std::int64_t replicates,
                                    std::uint64_t seed, bool inject_fault = false);

// Mean, variance and overlapping-pair covariance of the kernel h under Sigma,
// plus the exact assembly of those pieces into variance_T.
double kernel_mean(const TraceMoments& t);
double kernel_variance(const TraceMoments& t);
double kernel_overlap_covariance(const TraceMoments& t);
CheckReport check_h_moments(const Matrix& sigma, std::int64_t replicates, std::uint64_t seed);

// D_nk for k = 1..n, with Q_{k-1} = sum_{i<k} (X_i X_i' - Sigma).
std::vector<double> martingale_differences(const DataMatrix& data, const Matrix& sigma);
double martingale_difference(const Matrix& sigma, Index n, const Matrix& q, const Vector& x);
CheckReport check_martingale_identity(const DataMatrix& data, const Matrix& sigma);

// Conditional variance of D_nk given Q_{k-1}, and its expectation over Q_{k-1}.
double conditional_variance(const Matrix& sigma, Index n, const Matrix& q);
double expected_conditional_variance(const TraceMoments& t, Index n, Index k);

// prefix holds the k - 1 fixed rows X_1..X_{k-1} (possibly zero rows).
CheckReport check_conditional_variance(const Matrix& sigma, Index n, Index k,
                                       const Matrix& prefix, std::int64_t replicates,
                                       std::uint64_t seed);
// Same, with the fixed prefix drawn from the seed.
CheckReport check_conditional_variance(const Matrix& sigma, Index n, Index k,
                                       std::int64_t replicates, std::uint64_t seed);

// Moments of tr(M_{k-1}^2) = tr(Q Sigma Q Sigma).
double trM_mean(const TraceMoments& t, Index k);
double trM_variance(const TraceMoments& t, Index k);
CheckReport check_trM_moments(const Matrix& sigma, Index k, std::int64_t replicates,
                              std::uint64_t seed);

// Parameters of the random-sign rank-one prior and its chi-square divergence.
struct DivergenceInputs {
  Index p = 0;
  Index n = 0;
  double b = 0.0;

  double a() const;            // b / sqrt(n (p - 1))
  double contraction() const;  // (p a / (1 + (p - 1) a^2))^2

  // Largest admissible b (exclusive): min(1, sqrt(n (p - 1)) / (sqrt(2) p)).
  static double b_cap(Index p, Index n);
  // Throws ConditionViolated unless 0 <= b < b_cap(p, n); p >= 2, n >= 1.
  static DivergenceInputs make(Index p, Index n, double b);
};

// Value of the integral f1^2 / f0 (1 at b = 0), with the sign expectation
// collapsed onto Binomial(p, 1/2).
double chisq_divergence(const DivergenceInputs& in);
double log_chisq_divergence(const DivergenceInputs& in);
// Same value by summing over all 2^p sign vectors (p <= 20).
double chisq_divergence_enumerated(const DivergenceInputs& in);

struct MonteCarloValue {
  double mean = 0.0;
  double se = 0.0;
};

// Two-vector representation with independent Rademacher V, U.
MonteCarloValue chisq_divergence_two_vector_mc(const DivergenceInputs& in,
                                               std::int64_t replicates, std::uint64_t seed);

CheckReport check_divergence(const DivergenceInputs& in, std::int64_t replicates,
                             std::uint64_t seed);

// Largest b (to 1e-4, bisection) with chisq_divergence(b) - 1 <= 4 (beta - alpha)^2
// under the admissibility cap. Throws NoFeasibleB if no b > 0 qualifies.
double find_lower_bound_constant(Index p, Index n, double beta_minus_alpha);
CheckReport check_lower_bound_constant(Index p, Index n, double beta_minus_alpha);

struct SuiteOptions {
  std::vector<std::string> only;           // empty runs every check
  bool inject_fault = false;
  std::optional<std::int64_t> replicates;  // overrides every MC size
  std::uint64_t seed = 20240917;
};

// Names accepted by SuiteOptions::only.
std::vector<std::string> suite_check_names();

// Runs the named checks at their default sizes: 1e6 replicates for the
// moment, kernel, conditional-variance and divergence checks, 1e5 for tr(M^2),
// 1000 random instances for the martingale identity. Unknown names throw.
std::vector<CheckReport> run_verification_suite(const SuiteOptions& options);

}  // namespace covtest
