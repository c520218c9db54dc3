#include "covtest/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "covtest/error.hpp"
#include "covtest/rng.hpp"
#include "covtest/stats.hpp"

namespace covtest {

namespace {

// Purpose tags for derived seeds, so each check owns its streams.
enum : std::uint64_t {
  kTagMatrices = 1,
  kTagDraws,
  kTagPrefix,
  kTagPrefixAverage,
  kTagInstances,
};

constexpr double kSeMultiple = 4.0;
constexpr double kZeroFloor = 1e-12;

void require_replicates(std::int64_t replicates, std::int64_t minimum = 2) {
  if (replicates < minimum) {
    throw Error(ErrorCode::TooFewSamples,
                "need at least " + std::to_string(minimum) + " replicates, got " +
                    std::to_string(replicates));
  }
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be square and nonempty");
  }
}

void require_small(Index p, Index limit, const char* what) {
  if (p < 1 || p > limit) {
    throw Error(ErrorCode::ParameterOutOfRange, std::string(what) + " must lie in [1, " +
                                                    std::to_string(limit) + "], got " +
                                                    std::to_string(p));
  }
}

Vector draw(const GaussianFactor& factor, RngStream& stream) {
  const Index p = factor.dimension();
  Vector z(p);
  stream.fill_normal(std::span<double>(z.data(), static_cast<std::size_t>(p)));
  if (factor.kind == FactorKind::Identity) return z;
  return factor.gamma * z;
}

// Sum over rows of X_i X_i' - Sigma.
Matrix centered_scatter(const Matrix& rows, const Matrix& sigma) {
  Matrix q = rows.transpose() * rows;
  q -= static_cast<double>(rows.rows()) * sigma;
  return q;
}

Matrix draw_rows(const GaussianFactor& factor, Index count, RngStream& stream) {
  return sample(factor, count, stream).values();
}

double log_sum_exp(const std::vector<double>& terms) {
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

}  // namespace

std::string_view to_string(ToleranceKind kind) noexcept {
  switch (kind) {
    case ToleranceKind::StandardErrors: return "standard_errors";
    case ToleranceKind::Relative: return "relative";
    case ToleranceKind::AtMost: return "at_most";
    case ToleranceKind::AtLeast: return "at_least";
  }
  return "unknown";
}

Comparison Comparison::within_se(std::string label, double analytic, double oracle, double se,
                                 double multiple) {
  Comparison c{std::move(label), analytic, oracle, se, ToleranceKind::StandardErrors, multiple};
  const double floor = kZeroFloor * std::max(1.0, std::abs(analytic));
  c.pass = std::abs(analytic - oracle) <= multiple * se + floor;
  return c;
}

Comparison Comparison::within_relative(std::string label, double analytic, double oracle,
                                       double magnitude, double tolerance) {
  Comparison c{std::move(label), analytic, oracle, magnitude, ToleranceKind::Relative, tolerance};
  const double scale = std::max(std::abs(magnitude), std::numeric_limits<double>::min());
  c.pass = std::abs(analytic - oracle) <= tolerance * scale;
  return c;
}

Comparison Comparison::at_most(std::string label, double bound, double value) {
  Comparison c{std::move(label), bound, value, 0.0, ToleranceKind::AtMost, 0.0};
  c.pass = value <= bound;
  return c;
}

Comparison Comparison::at_least(std::string label, double bound, double value) {
  Comparison c{std::move(label), bound, value, 0.0, ToleranceKind::AtLeast, 0.0};
  c.pass = value >= bound;
  return c;
}

void CheckReport::add(Comparison c) {
  comparisons.push_back(std::move(c));
  pass = std::all_of(comparisons.begin(), comparisons.end(),
                     [](const Comparison& x) { return x.pass; });
}

MomentSummary MomentSummary::of(const std::vector<double>& values) {
  const auto m = static_cast<double>(values.size());
  if (values.size() < 2) {
    throw Error(ErrorCode::TooFewSamples, "need at least two values");
  }
  MomentSummary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / m;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : values) {
    const double d2 = (v - s.mean) * (v - s.mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  s.variance = m2 / (m - 1.0);
  s.mean_se = std::sqrt(s.variance / m);
  const double pop_var = m2 / m;
  s.variance_se = std::sqrt(std::max(m4 / m - pop_var * pop_var, 0.0) / m);
  return s;
}

CheckReport check_moment_identities(Index p, std::int64_t replicates, std::uint64_t seed,
                                    bool inject_fault) {
  require_small(p, 8, "p");
  RngStream stream(derive_seed(seed, kTagMatrices), 0);
  Matrix b1(p, p);
  Matrix b2(p, p);
  stream.fill_normal(std::span<double>(b1.data(), static_cast<std::size_t>(p * p)));
  stream.fill_normal(std::span<double>(b2.data(), static_cast<std::size_t>(p * p)));
  const Matrix m = b1 * b1.transpose() / static_cast<double>(p);
  const Matrix n = b2 * b2.transpose() / static_cast<double>(p);
  return check_moment_identities(m, n, replicates, seed, inject_fault);
}

CheckReport check_moment_identities(const Matrix& m, const Matrix& n, std::int64_t replicates,
                                    std::uint64_t seed, bool inject_fault) {
  require_square(m, "M");
  require_square(n, "N");
  if (m.rows() != n.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "M and N must have the same size");
  }
  require_replicates(replicates);
  const Index p = m.rows();
  const auto count = static_cast<std::size_t>(replicates);
  std::vector<double> product(count);
  std::vector<double> cross4(count);
  std::vector<double> centered4(count);
  const double tr_m = m.trace();
  Vector z1(p);
  Vector z2(p);
  const auto draws = derive_seed(seed, kTagDraws);
  for (std::size_t r = 0; r < count; ++r) {
    RngStream stream(draws, r);
    stream.fill_normal(std::span<double>(z1.data(), static_cast<std::size_t>(p)));
    stream.fill_normal(std::span<double>(z2.data(), static_cast<std::size_t>(p)));
    const double qm = z1.dot(m * z1);
    const double qn = z1.dot(n * z1);
    const double c = z1.dot(m * z2);
    product[r] = qm * qn;
    cross4[r] = c * c * c * c;
    centered4[r] = std::pow(qm - tr_m, 4);
  }

  const Matrix m2 = m * m;
  const double tr_m2 = m2.trace();
  const double tr_m4 = (m2 * m2).trace();
  const double mn_coefficient = inject_fault ? 3.0 : 2.0;

  CheckReport report{"moments", {}, replicates, false};
  const auto a = MomentSummary::of(product);
  report.add(Comparison::within_se("E[(Z'MZ)(Z'NZ)] = trM trN + 2 tr(MN)",
                                   tr_m * n.trace() + mn_coefficient * (m * n).trace(), a.mean,
                                   a.mean_se));
  const auto b = MomentSummary::of(cross4);
  report.add(Comparison::within_se("E[(Z1'MZ2)^4] = 3 tr^2(M^2) + 6 tr(M^4)",
                                   3.0 * tr_m2 * tr_m2 + 6.0 * tr_m4, b.mean, b.mean_se));
  const auto c = MomentSummary::of(centered4);
  report.add(Comparison::within_se("E[(Z'MZ - trM)^4] = 48 tr(M^4) + 12 tr^2(M^2)",
                                   48.0 * tr_m4 + 12.0 * tr_m2 * tr_m2, c.mean, c.mean_se));
  return report;
}

double kernel_mean(const TraceMoments& t) {
  return t.tr(2) - 2.0 * t.tr(1) + static_cast<double>(t.p);
}

double kernel_variance(const TraceMoments& t) {
  return 2.0 * (t.tr(2) * t.tr(2) + t.tr(4)) + 4.0 * t.shifted;
}

double kernel_overlap_covariance(const TraceMoments& t) { return 2.0 * t.shifted; }

CheckReport check_h_moments(const Matrix& sigma, std::int64_t replicates, std::uint64_t seed) {
  require_square(sigma, "Sigma");
  require_small(sigma.rows(), 8, "p");
  require_replicates(replicates);
  const GaussianFactor factor = factorize(sigma);
  const auto count = static_cast<std::size_t>(replicates);
  std::vector<double> h12(count);
  std::vector<double> h13(count);
  const auto draws = derive_seed(seed, kTagDraws);
  for (std::size_t r = 0; r < count; ++r) {
    RngStream stream(draws, r);
    const Vector x1 = draw(factor, stream);
    const Vector x2 = draw(factor, stream);
    const Vector x3 = draw(factor, stream);
    h12[r] = kernel_h(std::span<const double>(x1.data(), x1.size()),
                      std::span<const double>(x2.data(), x2.size()));
    h13[r] = kernel_h(std::span<const double>(x1.data(), x1.size()),
                      std::span<const double>(x3.data(), x3.size()));
  }

  const TraceMoments t = TraceMoments::from_matrix(sigma);
  CheckReport report{"h_moments", {}, replicates, false};
  const auto s12 = MomentSummary::of(h12);
  report.add(Comparison::within_se("E h = ||Sigma - I||_F^2", kernel_mean(t), s12.mean,
                                   s12.mean_se));
  report.add(Comparison::within_se("Var h", kernel_variance(t), s12.variance, s12.variance_se));

  const double pooled = 0.5 * (s12.mean + MomentSummary::of(h13).mean);
  std::vector<double> cross(count);
  for (std::size_t r = 0; r < count; ++r) cross[r] = (h12[r] - pooled) * (h13[r] - pooled);
  const auto sc = MomentSummary::of(cross);
  report.add(Comparison::within_se("Cov(h12, h13)", kernel_overlap_covariance(t), sc.mean,
                                   sc.mean_se));

  // Pair counting: Var(sum_{i<j} h_ij) = C(n,2) Var h + n(n-1)(n-2) Cov.
  for (Index n : {2, 5, 40}) {
    const double dn = static_cast<double>(n);
    const double assembled =
        4.0 / (dn * dn * (dn - 1.0) * (dn - 1.0)) *
        (dn * (dn - 1.0) / 2.0 * kernel_variance(t) +
         dn * (dn - 1.0) * (dn - 2.0) * kernel_overlap_covariance(t));
    const double direct = variance_T(t, n);
    report.add(Comparison::within_relative("pair counting reproduces variance_T, n=" +
                                               std::to_string(n),
                                           direct, assembled, direct, 1e-12));
  }
  return report;
}

double martingale_difference(const Matrix& sigma, Index n, const Matrix& q, const Vector& x) {
  const double dn = static_cast<double>(n);
  const double quad_q = x.dot(q * x) - (q * sigma).trace();
  const double quad_s = x.dot(sigma * x) - sigma.squaredNorm();
  const double quad_i = x.squaredNorm() - sigma.trace();
  return 2.0 / (dn * (dn - 1.0)) * quad_q + 2.0 / dn * quad_s - 2.0 / dn * quad_i;
}

std::vector<double> martingale_differences(const DataMatrix& data, const Matrix& sigma) {
  require_square(sigma, "Sigma");
  if (sigma.rows() != data.p()) {
    throw Error(ErrorCode::DimensionMismatch, "Sigma is " + std::to_string(sigma.rows()) +
                                                  "x" + std::to_string(sigma.rows()) +
                                                  " but data has p=" + std::to_string(data.p()));
  }
  if (data.n() < 2) {
    throw Error(ErrorCode::NeedAtLeastTwoSamples, "need n >= 2");
  }
  const Index n = data.n();
  const Index p = data.p();
  Matrix q = Matrix::Zero(p, p);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Vector x = data.row(k).transpose();
    d.push_back(martingale_difference(sigma, n, q, x));
    q += x * x.transpose() - sigma;
  }
  return d;
}

CheckReport check_martingale_identity(const DataMatrix& data, const Matrix& sigma) {
  const auto d = martingale_differences(data, sigma);
  double sum = 0.0;
  double magnitude = 0.0;
  for (double v : d) {
    sum += v;
    magnitude += std::abs(v);
  }
  const double rhs = statistic_T(data) - mean_T(sigma);
  CheckReport report{"martingale", {}, 1, false};
  report.add(Comparison::within_relative("sum_k D_nk = T_n - mu_n", rhs, sum,
                                         std::max(std::abs(rhs), magnitude), 1e-8));
  return report;
}

double conditional_variance(const Matrix& sigma, Index n, const Matrix& q) {
  const double dn = static_cast<double>(n);
  const Matrix qs = q * sigma;
  const Matrix s2 = sigma * sigma;
  const Matrix shift = sigma - Matrix::Identity(sigma.rows(), sigma.cols());
  const double shifted = (s2 * shift * shift).trace();
  return 8.0 / (dn * dn * (dn - 1.0) * (dn - 1.0)) * (qs * qs).trace() +
         16.0 / (dn * dn * (dn - 1.0)) * (q * s2 * sigma).trace() -
         16.0 / (dn * dn * (dn - 1.0)) * (q * s2).trace() + 8.0 / (dn * dn) * shifted;
}

double expected_conditional_variance(const TraceMoments& t, Index n, Index k) {
  const double dn = static_cast<double>(n);
  const double km1 = static_cast<double>(k - 1);
  return 8.0 * km1 / (dn * dn * (dn - 1.0) * (dn - 1.0)) * (t.tr(2) * t.tr(2) + t.tr(4)) +
         8.0 / (dn * dn) * t.shifted;
}

CheckReport check_conditional_variance(const Matrix& sigma, Index n, Index k,
                                       const Matrix& prefix, std::int64_t replicates,
                                       std::uint64_t seed) {
  require_square(sigma, "Sigma");
  const Index p = sigma.rows();
  require_small(p, 6, "p");
  if (n < 2 || k < 1 || k > n) {
    throw Error(ErrorCode::ParameterOutOfRange, "need n >= 2 and 1 <= k <= n");
  }
  if (prefix.rows() != k - 1 || (prefix.rows() > 0 && prefix.cols() != p)) {
    throw Error(ErrorCode::DimensionMismatch, "prefix must hold k - 1 rows of length p");
  }
  require_replicates(replicates);
  const GaussianFactor factor = factorize(sigma);
  const auto count = static_cast<std::size_t>(replicates);
  CheckReport report{"conditional_variance", {}, replicates, false};

  // (i) variance of D_nk over fresh X_k with the prefix held fixed.
  const Matrix q = prefix.rows() > 0 ? centered_scatter(prefix, sigma) : Matrix::Zero(p, p);
  std::vector<double> d(count);
  const auto draws = derive_seed(seed, kTagDraws);
  for (std::size_t r = 0; r < count; ++r) {
    RngStream stream(draws, r);
    d[r] = martingale_difference(sigma, n, q, draw(factor, stream));
  }
  const auto sd = MomentSummary::of(d);
  report.add(Comparison::within_se("E[D_nk | prefix] = 0", 0.0, sd.mean, sd.mean_se));
  report.add(Comparison::within_se("Var[D_nk | prefix] = sigma_nk^2(Q)",
                                   conditional_variance(sigma, n, q), sd.variance,
                                   sd.variance_se));

  // (ii) average of sigma_nk^2(Q) over fresh prefixes.
  std::vector<double> sig(count);
  const auto prefixes = derive_seed(seed, kTagPrefixAverage);
  for (std::size_t r = 0; r < count; ++r) {
    RngStream stream(prefixes, r);
    const Matrix qr = k > 1 ? centered_scatter(draw_rows(factor, k - 1, stream), sigma)
                            : Matrix::Zero(p, p);
    sig[r] = conditional_variance(sigma, n, qr);
  }
  const TraceMoments t = TraceMoments::from_matrix(sigma);
  const auto ss = MomentSummary::of(sig);
  report.add(Comparison::within_se("E[sigma_nk^2]", expected_conditional_variance(t, n, k),
                                   ss.mean, ss.mean_se));

  // (iii) summing the expectations over k recovers variance_T.
  double total = 0.0;
  for (Index j = 1; j <= n; ++j) total += expected_conditional_variance(t, n, j);
  const double direct = variance_T(t, n);
  report.add(Comparison::within_relative("sum_k E[sigma_nk^2] = variance_T", direct, total,
                                         direct, 1e-10));
  return report;
}

CheckReport check_conditional_variance(const Matrix& sigma, Index n, Index k,
                                       std::int64_t replicates, std::uint64_t seed) {
  require_square(sigma, "Sigma");
  if (k < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "need k >= 1");
  }
  Matrix prefix(k - 1, sigma.rows());
  if (k > 1) {
    RngStream stream(derive_seed(seed, kTagPrefix), 0);
    prefix = draw_rows(factorize(sigma), k - 1, stream);
  }
  return check_conditional_variance(sigma, n, k, prefix, replicates, seed);
}

double trM_mean(const TraceMoments& t, Index k) {
  return static_cast<double>(k - 1) * (t.tr(2) * t.tr(2) + t.tr(4));
}

double trM_variance(const TraceMoments& t, Index k) {
  const double km1 = static_cast<double>(k - 1);
  const double t2 = t.tr(2);
  const double t4 = t.tr(4);
  const double v1 = 24.0 * t.tr(8) + 16.0 * t.tr(6) * t2 + 8.0 * t4 * t4 + 8.0 * t4 * t2 * t2;
  const double v2 = 2.0 * t4 * t4 + 2.0 * t.tr(8);
  return km1 * v1 + 2.0 * km1 * (km1 - 1.0) * v2;
}

CheckReport check_trM_moments(const Matrix& sigma, Index k, std::int64_t replicates,
                              std::uint64_t seed) {
  require_square(sigma, "Sigma");
  const Index p = sigma.rows();
  require_small(p, 6, "p");
  if (k < 1 || k > 10) {
    throw Error(ErrorCode::ParameterOutOfRange, "k must lie in [1, 10]");
  }
  require_replicates(replicates);
  const GaussianFactor factor = factorize(sigma);
  const auto count = static_cast<std::size_t>(replicates);
  std::vector<double> values(count, 0.0);
  const auto draws = derive_seed(seed, kTagDraws);
  for (std::size_t r = 0; r < count && k > 1; ++r) {
    RngStream stream(draws, r);
    const Matrix qs = centered_scatter(draw_rows(factor, k - 1, stream), sigma) * sigma;
    values[r] = (qs * qs).trace();
  }
  const TraceMoments t = TraceMoments::from_matrix(sigma);
  const auto s = MomentSummary::of(values);
  CheckReport report{"trM", {}, replicates, false};
  report.add(Comparison::within_se("E tr(M^2)", trM_mean(t, k), s.mean, s.mean_se));
  report.add(Comparison::within_se("Var tr(M^2)", trM_variance(t, k), s.variance,
                                   s.variance_se));
  return report;
}

double DivergenceInputs::a() const {
  return b / std::sqrt(static_cast<double>(n) * static_cast<double>(p - 1));
}

double DivergenceInputs::contraction() const {
  const double aa = a();
  const double dp = static_cast<double>(p);
  const double v = dp * aa / (1.0 + (dp - 1.0) * aa * aa);
  return v * v;
}

double DivergenceInputs::b_cap(Index p, Index n) {
  const double dp = static_cast<double>(p);
  return std::min(1.0, std::sqrt(static_cast<double>(n) * (dp - 1.0)) / (std::sqrt(2.0) * dp));
}

DivergenceInputs DivergenceInputs::make(Index p, Index n, double b) {
  if (p < 2 || n < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "need p >= 2 and n >= 1");
  }
  const double cap = b_cap(p, n);
  if (!(b >= 0.0 && b < cap)) {
    throw Error(ErrorCode::ConditionViolated,
                "need 0 <= b < min(1, sqrt(n(p-1))/(sqrt(2) p)) = " + std::to_string(cap) +
                    ", got b=" + std::to_string(b));
  }
  return DivergenceInputs{p, n, b};
}

namespace {

double log_prefactor(const DivergenceInputs& in) {
  const double aa = in.a();
  const double dp = static_cast<double>(in.p);
  const double dn = static_cast<double>(in.n);
  return (dn - dn * dp / 2.0) * std::log1p(-aa * aa) - dn * std::log1p((dp - 1.0) * aa * aa);
}

// log of (1 - c t^2)^(-n/2) with t = s / p.
double log_integrand(const DivergenceInputs& in, double c, double s) {
  const double t = s / static_cast<double>(in.p);
  return -0.5 * static_cast<double>(in.n) * std::log1p(-c * t * t);
}

void validate(const DivergenceInputs& in) {
  DivergenceInputs::make(in.p, in.n, in.b);
}

}  // namespace

double log_chisq_divergence(const DivergenceInputs& in) {
  validate(in);
  if (in.b == 0.0) return 0.0;  // f1 = f0
  const double c = in.contraction();
  const double dp = static_cast<double>(in.p);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(in.p + 1));
  for (Index k = 0; k <= in.p; ++k) {
    const double dk = static_cast<double>(k);
    const double log_weight =
        std::lgamma(dp + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dp - dk + 1.0) - dp * std::log(2.0);
    terms.push_back(log_weight + log_integrand(in, c, 2.0 * dk - dp));
  }
  return log_prefactor(in) + log_sum_exp(terms);
}

double chisq_divergence(const DivergenceInputs& in) { return std::exp(log_chisq_divergence(in)); }

double chisq_divergence_enumerated(const DivergenceInputs& in) {
  validate(in);
  if (in.p > 20) {
    throw Error(ErrorCode::ParameterOutOfRange, "enumeration limited to p <= 20");
  }
  const double c = in.contraction();
  const std::uint64_t total = std::uint64_t{1} << in.p;
  double acc = 0.0;
  for (std::uint64_t v = 0; v < total; ++v) {
    const double plus = static_cast<double>(std::popcount(v));
    acc += std::exp(log_integrand(in, c, 2.0 * plus - static_cast<double>(in.p)));
  }
  return std::exp(log_prefactor(in)) * acc / static_cast<double>(total);
}

MonteCarloValue chisq_divergence_two_vector_mc(const DivergenceInputs& in,
                                               std::int64_t replicates, std::uint64_t seed) {
  validate(in);
  require_replicates(replicates);
  const double c = in.contraction();
  const double prefactor = std::exp(log_prefactor(in));
  const auto draws = derive_seed(seed, kTagDraws);
  std::vector<double> values(static_cast<std::size_t>(replicates));
  for (std::int64_t r = 0; r < replicates; ++r) {
    RngStream stream(draws, static_cast<std::uint64_t>(r));
    double dot = 0.0;
    std::uint64_t vb = 0;
    std::uint64_t ub = 0;
    for (Index j = 0; j < in.p; ++j) {
      if (j % 64 == 0) {
        vb = stream.next_u64();
        ub = stream.next_u64();
      }
      const double v = (vb & 1) ? 1.0 : -1.0;
      const double u = (ub & 1) ? 1.0 : -1.0;
      vb >>= 1;
      ub >>= 1;
      dot += v * u;
    }
    values[static_cast<std::size_t>(r)] = prefactor * std::exp(log_integrand(in, c, dot));
  }
  const auto s = MomentSummary::of(values);
  return {s.mean, s.mean_se};
}

CheckReport check_divergence(const DivergenceInputs& in, std::int64_t replicates,
                             std::uint64_t seed) {
  CheckReport report{"divergence", {}, replicates, false};
  const double exact = chisq_divergence(in);
  const auto mc = chisq_divergence_two_vector_mc(in, replicates, seed);
  report.add(Comparison::within_se("binomial collapse vs two-vector Monte Carlo", exact, mc.mean,
                                   mc.se));
  if (in.p <= 12) {
    report.add(Comparison::within_relative("binomial collapse vs 2^p enumeration", exact,
                                           chisq_divergence_enumerated(in), exact, 1e-12));
  }
  return report;
}

double find_lower_bound_constant(Index p, Index n, double beta_minus_alpha) {
  if (!(beta_minus_alpha > 0.0 && beta_minus_alpha < 1.0)) {
    throw Error(ErrorCode::ParameterOutOfRange, "beta - alpha must lie in (0, 1)");
  }
  DivergenceInputs::make(p, n, 0.0);
  const double bound = 4.0 * beta_minus_alpha * beta_minus_alpha;
  const auto excess = [&](double b) {
    return std::expm1(log_chisq_divergence(DivergenceInputs{p, n, b}));
  };
  const double cap = DivergenceInputs::b_cap(p, n);
  double lo = 0.0;
  double hi = std::nextafter(cap, 0.0);
  if (excess(hi) <= bound) return hi;
  constexpr double kSmallest = 1e-8;
  if (excess(kSmallest) > bound) {
    throw Error(ErrorCode::NoFeasibleB, "divergence exceeds 4(beta-alpha)^2 even at b=1e-8");
  }
  lo = kSmallest;
  // Bisect well below the documented 1e-4 resolution.
  while (hi - lo > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) <= bound ? lo : hi) = mid;
  }
  return lo;
}

CheckReport check_lower_bound_constant(Index p, Index n, double beta_minus_alpha) {
  const double b = find_lower_bound_constant(p, n, beta_minus_alpha);
  const double bound = 4.0 * beta_minus_alpha * beta_minus_alpha;
  const double cap = DivergenceInputs::b_cap(p, n);
  CheckReport report{"lower_bound", {}, 0, false};
  report.add(Comparison::at_most("chi^2(b) - 1 <= 4(beta-alpha)^2", bound,
                                 std::expm1(log_chisq_divergence(DivergenceInputs{p, n, b}))));
  report.add(Comparison::at_most("b below admissibility cap", cap, b));
  const double step = b + 1e-3;
  if (step < cap) {
    Comparison c = Comparison::at_least(
        "chi^2(b + 1e-3) - 1 > 4(beta-alpha)^2", bound,
        std::expm1(log_chisq_divergence(DivergenceInputs{p, n, step})));
    c.pass = c.oracle > bound;
    report.add(std::move(c));
  } else {
    report.add(Comparison::at_least("b + 1e-3 reaches the admissibility cap", cap, step));
  }
  return report;
}

std::vector<std::string> suite_check_names() {
  return {"moments", "h_moments", "martingale", "conditional_variance",
          "trM", "divergence", "lower_bound"};
}

namespace {

CheckReport run_martingale_instances(std::int64_t instances, std::uint64_t seed) {
  CheckReport report{"martingale", {}, instances, false};
  const auto base = derive_seed(seed, kTagInstances);
  Comparison worst;
  double worst_ratio = -1.0;
  bool all = true;
  for (std::int64_t i = 0; i < instances; ++i) {
    RngStream stream(base, static_cast<std::uint64_t>(i));
    const Index n = 2 + static_cast<Index>(stream.next_u64() % 11);
    const Index p = 1 + static_cast<Index>(stream.next_u64() % 8);
    // Sigma is any symmetric PSD matrix; the data are unrelated to it and
    // scaled arbitrarily, since the identity is pathwise.
    Matrix b(p, p);
    stream.fill_normal(std::span<double>(b.data(), static_cast<std::size_t>(p * p)));
    const Matrix sigma = b * b.transpose() / static_cast<double>(p);
    Matrix x(n, p);
    stream.fill_normal(std::span<double>(x.data(), static_cast<std::size_t>(n * p)));
    x *= 0.25 + 2.0 * stream.uniform();
    const auto one = check_martingale_identity(DataMatrix(x), sigma);
    const Comparison& c = one.comparisons.front();
    all = all && c.pass;
    const double ratio = std::abs(c.analytic - c.oracle) / c.scale;
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst = c;
      worst.label = "worst of " + std::to_string(instances) + " instances (#" +
                    std::to_string(i) + ", n=" + std::to_string(n) + ", p=" +
                    std::to_string(p) + "): sum_k D_nk = T_n - mu_n";
    }
  }
  worst.pass = all;
  report.add(std::move(worst));
  return report;
}

}  // namespace

std::vector<CheckReport> run_verification_suite(const SuiteOptions& options) {
  const auto names = suite_check_names();
  for (const auto& name : options.only) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw Error(ErrorCode::ParameterOutOfRange, "unknown check '" + name + "'");
    }
  }
  const auto wanted = [&](const std::string& name) {
    return options.only.empty() ||
           std::find(options.only.begin(), options.only.end(), name) != options.only.end();
  };
  const auto reps = [&](std::int64_t fallback) { return options.replicates.value_or(fallback); };
  const std::uint64_t seed = options.seed;

  std::vector<CheckReport> reports;
  if (wanted("moments")) {
    reports.push_back(check_moment_identities(4, reps(1'000'000), seed, options.inject_fault));
  }
  if (wanted("h_moments")) {
    reports.push_back(
        check_h_moments(CovarianceModel::tridiagonal(4, 0.3).build(), reps(1'000'000), seed));
  }
  if (wanted("martingale")) {
    reports.push_back(run_martingale_instances(1000, seed));
  }
  if (wanted("conditional_variance")) {
    reports.push_back(check_conditional_variance(
        CovarianceModel::equi_correlation(4, 0.2).build(), 7, 4, reps(1'000'000), seed));
  }
  if (wanted("trM")) {
    reports.push_back(
        check_trM_moments(CovarianceModel::tridiagonal(4, 0.3).build(), 4, reps(100'000), seed));
  }
  if (wanted("divergence")) {
    auto report = check_divergence(DivergenceInputs::make(6, 20, 0.3), reps(1'000'000), seed);
    for (Index p : {2, 5, 9, 12}) {
      const auto in = DivergenceInputs::make(p, 3 * p, 0.5 * DivergenceInputs::b_cap(p, 3 * p));
      const double exact = chisq_divergence(in);
      report.add(Comparison::within_relative(
          "binomial collapse vs 2^p enumeration, p=" + std::to_string(p), exact,
          chisq_divergence_enumerated(in), exact, 1e-12));
    }
    reports.push_back(std::move(report));
  }
  if (wanted("lower_bound")) {
    reports.push_back(check_lower_bound_constant(40, 80, 0.2));
  }
  return reports;
}

}  // namespace covtest
