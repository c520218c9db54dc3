#include "covtest/stats.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "covtest/error.hpp"

namespace covtest {
namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    std::ostringstream os;
    os << "alpha = " << alpha << " outside (0, 1)";
    throw Error(ErrorCode::ParameterOutOfRange, os.str());
  }
}

void require_two_samples(Index n) {
  if (n < 2) {
    throw Error(ErrorCode::NeedAtLeastTwoSamples, "the U-statistic needs n >= 2");
  }
}

// sum of squares of the strict lower triangle
double strict_lower_sum_squares(const Matrix& m) {
  double sum = 0.0;
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = j + 1; i < m.rows(); ++i) sum += m(i, j) * m(i, j);
  }
  return sum;
}

double assemble_T(double off_diagonal_sum, double row_norm_sum, Index n, Index p) {
  const double dn = static_cast<double>(n);
  return 2.0 / (dn * (dn - 1.0)) * (off_diagonal_sum - (dn - 1.0) * row_norm_sum) +
         static_cast<double>(p);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    std::ostringstream os;
    os << "quantile level " << q << " outside (0, 1)";
    throw Error(ErrorCode::ParameterOutOfRange, os.str());
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

std::string_view threshold_source_name(const ThresholdSource& source) noexcept {
  return std::holds_alternative<AsymptoticThreshold>(source) ? "asymptotic" : "calibrated";
}

double kernel_h(std::span<const double> x1, std::span<const double> x2) {
  if (x1.size() != x2.size()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel arguments differ in length");
  }
  double cross = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    cross += x1[i] * x2[i];
    n1 += x1[i] * x1[i];
    n2 += x2[i] * x2[i];
  }
  return cross * cross - (n1 + n2) + static_cast<double>(x1.size());
}

FeatureGram FeatureGram::compute(const DataMatrix& data) {
  FeatureGram g;
  g.n = data.n();
  g.p = data.p();
  g.lower = Matrix::Zero(g.p, g.p);
  g.lower.selfadjointView<Eigen::Lower>().rankUpdate(data.values().transpose());
  g.row_norms = data.values().rowwise().squaredNorm();
  return g;
}

double statistic_T(const FeatureGram& gram) {
  require_two_samples(gram.n);
  // sum_{i<j} (X_i'X_j)^2 = (||X'X||_F^2 - sum_i ||X_i||^4) / 2
  const double frob = gram.lower.diagonal().squaredNorm() +
                      2.0 * strict_lower_sum_squares(gram.lower);
  const double off = 0.5 * (frob - gram.row_norms.squaredNorm());
  return assemble_T(off, gram.row_norms.sum(), gram.n, gram.p);
}

double statistic_T(const DataMatrix& data, GramPath path) {
  const Index n = data.n();
  const Index p = data.p();
  require_two_samples(n);
  if (path == GramPath::Auto) path = n <= p ? GramPath::SampleGram : GramPath::FeatureGram;
  if (path == GramPath::FeatureGram) return statistic_T(FeatureGram::compute(data));

  Matrix g = Matrix::Zero(n, n);
  g.selfadjointView<Eigen::Lower>().rankUpdate(data.values());
  return assemble_T(strict_lower_sum_squares(g), g.diagonal().sum(), n, p);
}

double mean_T(const Matrix& sigma) {
  const double d = frobenius_distance_to_identity(sigma);
  return d * d;
}

double variance_T(const TraceMoments& t, Index n) {
  require_two_samples(n);
  const double dn = static_cast<double>(n);
  const double t2 = t.tr(2);
  const double t4 = t.tr(4);
  return 4.0 * (t2 * t2 + t4) / (dn * (dn - 1.0)) + 8.0 / dn * t.shifted;
}

double variance_T(const Matrix& sigma, Index n) {
  return variance_T(TraceMoments::from_matrix(sigma), n);
}

double null_variance_T(Index p, Index n) {
  require_two_samples(n);
  const double dn = static_cast<double>(n);
  const double dp = static_cast<double>(p);
  return 4.0 * (dp * dp + dp) / (dn * (dn - 1.0));
}

double psi_asymptotic_threshold(Index p, Index n, double alpha) {
  require_alpha(alpha);
  require_two_samples(n);
  const double dn = static_cast<double>(n);
  const double dp = static_cast<double>(p);
  return normal_quantile(1.0 - alpha) * 2.0 * std::sqrt(dp * (dp + 1.0) / (dn * (dn - 1.0)));
}

TestOutcome test_psi(const DataMatrix& data, double alpha, const ThresholdSource& source) {
  require_alpha(alpha);
  TestOutcome out;
  out.statistic = statistic_T(data);
  out.standardized = out.statistic / std::sqrt(null_variance_T(data.p(), data.n()));
  out.threshold = std::holds_alternative<CalibratedThreshold>(source)
                      ? std::get<CalibratedThreshold>(source).value
                      : psi_asymptotic_threshold(data.p(), data.n(), alpha);
  out.reject = out.statistic > out.threshold;
  out.alpha = alpha;
  out.threshold_source = source;
  return out;
}

ClrtParameters ClrtParameters::make(Index n, Index p) {
  if (n < 1 || p < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "n and p must be positive");
  }
  const double c = static_cast<double>(p) / static_cast<double>(n);
  if (!(1.0 - c > 1e-8)) {
    std::ostringstream os;
    os << "1 - p/n = " << 1.0 - c << " is not above 1e-8";
    throw Error(ErrorCode::DegenerateRatio, os.str());
  }
  ClrtParameters params;
  params.n = n;
  params.p = p;
  params.ratio = c;
  const double log1mc = std::log1p(-c);
  const double d = 1.0 - (1.0 - 1.0 / c) * log1mc;
  params.center = static_cast<double>(p) * d - 0.5 * log1mc;
  params.scale = std::sqrt(-2.0 * log1mc - 2.0 * c);
  return params;
}

double statistic_L(const FeatureGram& gram) {
  if (gram.p >= gram.n) {
    throw Error(ErrorCode::RequiresPLessThanN, "the likelihood ratio needs p < n");
  }
  const double dn = static_cast<double>(gram.n);
  const Matrix s = gram.lower / dn;
  Eigen::LLT<Matrix, Eigen::Lower> llt(s);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularSampleCovariance, "sample covariance is not positive definite");
  }
  const auto lower = llt.matrixL();
  // lambda_min(S) >= 1 / tr(S^{-1}) = 1 / ||L^{-1}||_F^2; only fall back to an
  // exact eigenvalue when this cheap bound is inconclusive.
  const Matrix inv = lower.solve(Matrix::Identity(gram.p, gram.p));
  if (1.0 / inv.squaredNorm() <= 1e-12) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::EigenvaluesOnly);
    if (solver.eigenvalues().minCoeff() <= 1e-12) {
      throw Error(ErrorCode::SingularSampleCovariance,
                  "smallest eigenvalue of the sample covariance is <= 1e-12");
    }
  }
  const Matrix& factor = llt.matrixLLT();
  double log_det = 0.0;
  for (Index i = 0; i < gram.p; ++i) log_det += std::log(factor(i, i));
  log_det *= 2.0;
  const double trace = gram.row_norms.sum() / dn;
  return trace - log_det - static_cast<double>(gram.p);
}

double statistic_L(const DataMatrix& data) {
  if (data.p() >= data.n()) {
    throw Error(ErrorCode::RequiresPLessThanN, "the likelihood ratio needs p < n");
  }
  return statistic_L(FeatureGram::compute(data));
}

double statistic_CLR_from_L(double L, const ClrtParameters& params) {
  return (L - params.center) / params.scale;
}

double statistic_CLR(const DataMatrix& data) {
  const ClrtParameters params = ClrtParameters::make(data.n(), data.p());
  return statistic_CLR_from_L(statistic_L(data), params);
}

TestOutcome test_clr(const DataMatrix& data, double alpha, const ThresholdSource& source) {
  require_alpha(alpha);
  TestOutcome out;
  out.statistic = statistic_CLR(data);
  out.standardized = out.statistic;
  out.threshold = std::holds_alternative<CalibratedThreshold>(source)
                      ? std::get<CalibratedThreshold>(source).value
                      : normal_quantile(1.0 - alpha);
  out.reject = out.statistic > out.threshold;
  out.alpha = alpha;
  out.threshold_source = source;
  return out;
}

double power_approx_psi(double tau, double alpha) {
  require_alpha(alpha);
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::ParameterOutOfRange, "tau must be finite and >= 0");
  }
  return normal_cdf(0.5 * tau * tau - normal_quantile(1.0 - alpha));
}

double clrt_power_shift(double tau, double c) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::ParameterOutOfRange, "tau must lie in (0, 1)");
  }
  if (!(c > 0.0 && c < 1.0)) {
    throw Error(ErrorCode::ParameterOutOfRange, "c must lie in (0, 1)");
  }
  const double x = tau * std::sqrt(c);
  return (x - std::log1p(x)) / std::sqrt(-2.0 * std::log1p(-c) - 2.0 * c);
}

double power_asymptotic_clrt(double tau, double c, double alpha) {
  require_alpha(alpha);
  return normal_cdf(clrt_power_shift(tau, c) - normal_quantile(1.0 - alpha));
}

}  // namespace covtest
