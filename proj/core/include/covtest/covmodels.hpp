#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "covtest/rng.hpp"

// Structured covariance matrices, their scalar functionals, and Gaussian
// sampling.
//
// Everything here works in the whitened frame: testing H0: Sigma = Sigma0 is
// done by transforming each sample to Sigma0^{-1/2} X_i first, which is left to
// the caller. Samples are mean-zero by assumption and are never centered.

namespace covtest {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ModelKind {
  Identity,
  EquiCorrelation,
  Tridiagonal,
  RankOneSpike,
  LeastFavorable,
  Dense,
};

std::string_view to_string(ModelKind kind) noexcept;

class CovarianceModel {
 public:
  static CovarianceModel identity(Index p);

  // Unit diagonal, constant off-diagonal rho; rho in (-1/(p-1), 1).
  static CovarianceModel equi_correlation(Index p, double rho);

  // Unit diagonal, rho on the first off-diagonals. |rho| < 1/2 always gives a
  // positive definite matrix; larger |rho| is accepted when the (closed-form)
  // smallest eigenvalue 1 - 2|rho|cos(pi/(p+1)) is still positive.
  static CovarianceModel tridiagonal(Index p, double rho);

  // I + tau * sqrt(p/n) * u u'. `u` must have unit norm; defaults to e_1.
  static CovarianceModel rank_one_spike(Index p, Index n, double tau,
                                        std::optional<Vector> u = std::nullopt);

  // (1 - a) I + a v v' with a = b / sqrt(n (p - 1)) and v a sign vector.
  static CovarianceModel least_favorable(Index p, Index n, double b,
                                         std::vector<int> signs);

  static CovarianceModel dense(Matrix sigma);

  ModelKind kind() const noexcept { return kind_; }
  Index dimension() const noexcept { return p_; }

  // rho, tau or b depending on the kind; 0 for Identity and Dense.
  double parameter() const noexcept { return parameter_; }

  // Sample size the model is tied to (RankOneSpike, LeastFavorable), else 0.
  Index sample_size() const noexcept { return n_; }

  // a = b / sqrt(n (p - 1)); only meaningful for LeastFavorable.
  double least_favorable_scale() const noexcept;

  Matrix build() const;

  // Eigenvalues known in closed form; std::nullopt for Dense.
  std::optional<Vector> analytic_eigenvalues() const;

 private:
  CovarianceModel(ModelKind kind, Index p) : kind_(kind), p_(p) {}

  ModelKind kind_;
  Index p_;
  Index n_ = 0;
  double parameter_ = 0.0;
  Vector direction_;  // u for the spike, v for the least-favorable family
  Matrix dense_;
};

inline Matrix build(const CovarianceModel& model) { return model.build(); }

double frobenius_distance_to_identity(const Matrix& sigma);

// Largest |eigenvalue| of sigma - I.
double spectral_distance_to_identity(const Matrix& sigma);

// tr(sigma^k) for k in 1..8. k = 1, 2 are read off the entries; k >= 3 goes
// through one symmetric eigendecomposition.
double trace_power(const Matrix& sigma, int k);

// All spectral functionals the moment formulas need, from one
// eigendecomposition.
struct TraceMoments {
  Index p = 0;
  std::array<double, 9> power{};  // power[k] = tr(sigma^k), power[0] = p
  double shifted = 0.0;           // tr(sigma^2 (sigma - I)^2)
  double shifted_high = 0.0;      // tr(sigma^6 (sigma - I)^2)

  double tr(int k) const { return power.at(static_cast<std::size_t>(k)); }

  static TraceMoments from_eigenvalues(const Vector& eigenvalues);
  static TraceMoments from_matrix(const Matrix& sigma);
};

enum class FactorKind { Identity, Cholesky, EigenSquareRoot };

struct GaussianFactor {
  Matrix gamma;  // gamma * gamma' == sigma
  FactorKind kind = FactorKind::Cholesky;

  Index dimension() const noexcept { return gamma.rows(); }
};

// Cholesky when sigma is positive definite; otherwise the symmetric square
// root from an eigendecomposition, provided the smallest eigenvalue is no
// lower than -1e-10 * ||sigma||_s.
GaussianFactor factorize(const Matrix& sigma);

// n samples of dimension p, one sample per row. Entries must be finite.
class DataMatrix {
 public:
  explicit DataMatrix(Matrix values);

  Index n() const noexcept { return values_.rows(); }
  Index p() const noexcept { return values_.cols(); }
  const Matrix& values() const noexcept { return values_; }
  auto row(Index i) const { return values_.row(i); }

 private:
  Matrix values_;
};

// Rows are gamma * z with z drawn row by row, entry by entry, from `stream`.
DataMatrix sample(const GaussianFactor& factor, Index n, RngStream& stream);
DataMatrix sample(const CovarianceModel& model, Index n, RngStream& stream);

}  // namespace covtest
