#include "covtest/covmodels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "covtest/error.hpp"

namespace covtest {
namespace {

void require_dimension(Index p) {
  if (p < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "dimension p must be >= 1");
  }
}

void require_square(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "matrix must be square");
  }
}

std::string fmt_bound(const char* what, double value, double lo, double hi) {
  std::ostringstream os;
  os.precision(17);
  os << what << " = " << value << " outside (" << lo << ", " << hi << ")";
  return os.str();
}

Vector symmetric_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Identity: return "identity";
    case ModelKind::EquiCorrelation: return "equi";
    case ModelKind::Tridiagonal: return "tridiag";
    case ModelKind::RankOneSpike: return "spike";
    case ModelKind::LeastFavorable: return "least_favorable";
    case ModelKind::Dense: return "dense";
  }
  return "unknown";
}

CovarianceModel CovarianceModel::identity(Index p) {
  require_dimension(p);
  return CovarianceModel(ModelKind::Identity, p);
}

CovarianceModel CovarianceModel::equi_correlation(Index p, double rho) {
  require_dimension(p);
  if (!std::isfinite(rho)) {
    throw Error(ErrorCode::ParameterOutOfRange, "rho must be finite");
  }
  if (p >= 2) {
    const double lo = -1.0 / static_cast<double>(p - 1);
    if (!(rho > lo && rho < 1.0)) {
      throw Error(ErrorCode::ParameterOutOfRange, fmt_bound("rho", rho, lo, 1.0));
    }
  }
  CovarianceModel m(ModelKind::EquiCorrelation, p);
  m.parameter_ = rho;
  return m;
}

CovarianceModel CovarianceModel::tridiagonal(Index p, double rho) {
  require_dimension(p);
  if (!std::isfinite(rho)) {
    throw Error(ErrorCode::ParameterOutOfRange, "rho must be finite");
  }
  if (p >= 2 && std::abs(rho) >= 0.5) {
    const double smallest =
        1.0 - 2.0 * std::abs(rho) *
                  std::cos(std::numbers::pi / static_cast<double>(p + 1));
    if (!(smallest > 0.0)) {
      throw Error(ErrorCode::ParameterOutOfRange,
                  fmt_bound("rho", rho, -0.5, 0.5) +
                      " and the tridiagonal matrix is not positive definite");
    }
  }
  CovarianceModel m(ModelKind::Tridiagonal, p);
  m.parameter_ = rho;
  return m;
}

CovarianceModel CovarianceModel::rank_one_spike(Index p, Index n, double tau,
                                                std::optional<Vector> u) {
  require_dimension(p);
  if (n < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "sample size n must be >= 1");
  }
  if (!std::isfinite(tau)) {
    throw Error(ErrorCode::ParameterOutOfRange, "tau must be finite");
  }
  Vector direction = u ? std::move(*u) : Vector::Unit(p, 0);
  if (direction.size() != p) {
    throw Error(ErrorCode::DimensionMismatch, "spike direction must have length p");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-12) {
    throw Error(ErrorCode::ParameterOutOfRange, "spike direction must have unit norm");
  }
  const double top = 1.0 + tau * std::sqrt(static_cast<double>(p) / static_cast<double>(n));
  if (!(top > 0.0)) {
    throw Error(ErrorCode::ParameterOutOfRange,
                "tau gives a non-positive spike eigenvalue 1 + tau*sqrt(p/n)");
  }
  CovarianceModel m(ModelKind::RankOneSpike, p);
  m.n_ = n;
  m.parameter_ = tau;
  m.direction_ = std::move(direction);
  return m;
}

CovarianceModel CovarianceModel::least_favorable(Index p, Index n, double b,
                                                 std::vector<int> signs) {
  if (p < 2) {
    throw Error(ErrorCode::ParameterOutOfRange, "least-favorable family needs p >= 2");
  }
  if (n < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "sample size n must be >= 1");
  }
  if (static_cast<Index>(signs.size()) != p) {
    throw Error(ErrorCode::DimensionMismatch, "sign vector must have length p");
  }
  if (!std::isfinite(b)) {
    throw Error(ErrorCode::ParameterOutOfRange, "b must be finite");
  }
  Vector v(p);
  for (Index i = 0; i < p; ++i) {
    const int s = signs[static_cast<std::size_t>(i)];
    if (s != 1 && s != -1) {
      throw Error(ErrorCode::ParameterOutOfRange, "sign vector entries must be +1 or -1");
    }
    v(i) = s;
  }
  CovarianceModel m(ModelKind::LeastFavorable, p);
  m.n_ = n;
  m.parameter_ = b;
  m.direction_ = std::move(v);
  const double a = m.least_favorable_scale();
  if (!(1.0 - a > 0.0) || !(1.0 + static_cast<double>(p - 1) * a > 0.0)) {
    throw Error(ErrorCode::ParameterOutOfRange,
                "b gives a non-positive-definite least-favorable matrix");
  }
  return m;
}

CovarianceModel CovarianceModel::dense(Matrix sigma) {
  require_square(sigma);
  require_dimension(sigma.rows());
  if (!sigma.allFinite()) {
    throw Error(ErrorCode::ParameterOutOfRange, "matrix entries must be finite");
  }
  if (sigma != sigma.transpose()) {
    throw Error(ErrorCode::ParameterOutOfRange, "matrix must be exactly symmetric");
  }
  CovarianceModel m(ModelKind::Dense, sigma.rows());
  m.dense_ = std::move(sigma);
  return m;
}

double CovarianceModel::least_favorable_scale() const noexcept {
  if (kind_ != ModelKind::LeastFavorable) return 0.0;
  return parameter_ / std::sqrt(static_cast<double>(n_) * static_cast<double>(p_ - 1));
}

Matrix CovarianceModel::build() const {
  const Index p = p_;
  switch (kind_) {
    case ModelKind::Identity:
      return Matrix::Identity(p, p);
    case ModelKind::EquiCorrelation: {
      Matrix s = Matrix::Constant(p, p, parameter_);
      s.diagonal().setOnes();
      return s;
    }
    case ModelKind::Tridiagonal: {
      Matrix s = Matrix::Identity(p, p);
      for (Index i = 0; i + 1 < p; ++i) {
        s(i, i + 1) = parameter_;
        s(i + 1, i) = parameter_;
      }
      return s;
    }
    case ModelKind::RankOneSpike: {
      const double scale =
          parameter_ * std::sqrt(static_cast<double>(p) / static_cast<double>(n_));
      Matrix s(p, p);
      for (Index j = 0; j < p; ++j) {
        for (Index i = j; i < p; ++i) {
          const double value = scale * (direction_(i) * direction_(j));
          s(i, j) = value;
          s(j, i) = value;
        }
        s(j, j) += 1.0;
      }
      return s;
    }
    case ModelKind::LeastFavorable: {
      const double a = least_favorable_scale();
      Matrix s(p, p);
      for (Index j = 0; j < p; ++j) {
        for (Index i = j + 1; i < p; ++i) {
          const double value = a * direction_(i) * direction_(j);
          s(i, j) = value;
          s(j, i) = value;
        }
        s(j, j) = 1.0;
      }
      return s;
    }
    case ModelKind::Dense:
      return dense_;
  }
  return Matrix();
}

std::optional<Vector> CovarianceModel::analytic_eigenvalues() const {
  const Index p = p_;
  const double dp = static_cast<double>(p);
  switch (kind_) {
    case ModelKind::Identity:
      return Vector::Ones(p);
    case ModelKind::EquiCorrelation: {
      Vector ev = Vector::Constant(p, 1.0 - parameter_);
      ev(0) = 1.0 + (dp - 1.0) * parameter_;
      return ev;
    }
    case ModelKind::Tridiagonal: {
      Vector ev(p);
      for (Index j = 1; j <= p; ++j) {
        ev(j - 1) = 1.0 + 2.0 * parameter_ *
                              std::cos(static_cast<double>(j) * std::numbers::pi / (dp + 1.0));
      }
      return ev;
    }
    case ModelKind::RankOneSpike: {
      Vector ev = Vector::Ones(p);
      ev(0) = 1.0 + parameter_ * std::sqrt(dp / static_cast<double>(n_));
      return ev;
    }
    case ModelKind::LeastFavorable: {
      const double a = least_favorable_scale();
      Vector ev = Vector::Constant(p, 1.0 - a);
      ev(0) = 1.0 + (dp - 1.0) * a;
      return ev;
    }
    case ModelKind::Dense:
      return std::nullopt;
  }
  return std::nullopt;
}

double frobenius_distance_to_identity(const Matrix& sigma) {
  require_square(sigma);
  double sum = 0.0;
  for (Index j = 0; j < sigma.cols(); ++j) {
    for (Index i = 0; i < sigma.rows(); ++i) {
      const double d = sigma(i, j) - (i == j ? 1.0 : 0.0);
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

double spectral_distance_to_identity(const Matrix& sigma) {
  require_square(sigma);
  if (sigma.size() == 0) return 0.0;
  const Matrix shifted = sigma - Matrix::Identity(sigma.rows(), sigma.cols());
  return symmetric_eigenvalues(shifted).cwiseAbs().maxCoeff();
}

double trace_power(const Matrix& sigma, int k) {
  require_square(sigma);
  if (k < 1 || k > 8) {
    throw Error(ErrorCode::ParameterOutOfRange, "trace power k must be in 1..8");
  }
  if (k == 1) return sigma.trace();
  if (k == 2) return sigma.cwiseProduct(sigma.transpose()).sum();
  return TraceMoments::from_matrix(sigma).tr(k);
}

TraceMoments TraceMoments::from_eigenvalues(const Vector& eigenvalues) {
  TraceMoments t;
  t.p = eigenvalues.size();
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    const double lambda = eigenvalues(i);
    double power = 1.0;
    for (std::size_t k = 0; k < t.power.size(); ++k) {
      t.power[k] += power;
      power *= lambda;
    }
    const double l2 = lambda * lambda;
    const double shift2 = (lambda - 1.0) * (lambda - 1.0);
    t.shifted += l2 * shift2;
    t.shifted_high += l2 * l2 * l2 * shift2;
  }
  return t;
}

TraceMoments TraceMoments::from_matrix(const Matrix& sigma) {
  require_square(sigma);
  return from_eigenvalues(symmetric_eigenvalues(sigma));
}

GaussianFactor factorize(const Matrix& sigma) {
  require_square(sigma);
  const Index p = sigma.rows();
  if (!sigma.allFinite()) {
    throw Error(ErrorCode::ParameterOutOfRange, "matrix entries must be finite");
  }
  if (sigma == Matrix::Identity(p, p)) {
    return {Matrix::Identity(p, p), FactorKind::Identity};
  }
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) {
    Matrix lower = llt.matrixL();
    return {std::move(lower), FactorKind::Cholesky};
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sigma);
  const Vector& ev = solver.eigenvalues();
  const double spectral = ev.cwiseAbs().maxCoeff();
  if (ev.minCoeff() < -1e-10 * spectral) {
    std::ostringstream os;
    os << "smallest eigenvalue " << ev.minCoeff() << " below -1e-10 * ||sigma||_s";
    throw Error(ErrorCode::NotPositiveSemiDefinite, os.str());
  }
  const Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  Matrix gamma = solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose();
  return {std::move(gamma), FactorKind::EigenSquareRoot};
}

DataMatrix::DataMatrix(Matrix values) : values_(std::move(values)) {
  if (!values_.allFinite()) {
    throw Error(ErrorCode::ParameterOutOfRange, "data entries must be finite");
  }
}

DataMatrix sample(const GaussianFactor& factor, Index n, RngStream& stream) {
  if (n < 1) {
    throw Error(ErrorCode::ParameterOutOfRange, "sample size n must be >= 1");
  }
  const Index p = factor.dimension();
  // Row-major fill so that sample i consumes the stream contiguously.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z(n, p);
  stream.fill_normal(std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
  if (factor.kind == FactorKind::Identity) {
    return DataMatrix(Matrix(z));
  }
  Matrix x = z * factor.gamma.transpose();
  return DataMatrix(std::move(x));
}

DataMatrix sample(const CovarianceModel& model, Index n, RngStream& stream) {
  return sample(factorize(model.build()), n, stream);
}

}  // namespace covtest
