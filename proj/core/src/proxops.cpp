#include "marca/proxops.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "marca/errors.hpp"

namespace marca::proxops {

namespace {

void require_nonneg_threshold(double tau) {
  if (!std::isfinite(tau) || tau < 0.0)
    throw InvalidArgument("shrinkage threshold must be finite and >= 0, got " +
                          std::to_string(tau));
}

template <class Svd>
void check_svd(const Svd& svd) {
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD did not converge");
}

}  // namespace

double shrink(double sigma, double tau) {
  require_nonneg_threshold(tau);
  if (!std::isfinite(sigma))
    throw InvalidArgument("shrink: non-finite input");
  const double mag = std::abs(sigma) - tau;
  if (mag <= 0.0) return 0.0;
  return sigma > 0.0 ? mag : -mag;
}

Matrix shrink(const Matrix& m, double tau) {
  require_nonneg_threshold(tau);
  require_finite(m, "shrink");
  return m.unaryExpr([tau](double s) {
    const double mag = std::abs(s) - tau;
    if (mag <= 0.0) return 0.0;
    return s > 0.0 ? mag : -mag;
  });
}

Vector shrink(const Vector& v, double tau) {
  return shrink(Matrix(v), tau).col(0);
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite())
    throw InvalidArgument(std::string(what) + ": non-finite entries");
}

SvdFactors thin_svd(const Matrix& m) {
  if (m.size() == 0) throw InvalidArgument("thin_svd: empty matrix");
  require_finite(m, "thin_svd");
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  check_svd(svd);

  SvdFactors out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Index k = 0; k < out.u.cols(); ++k) {
    Index pivot = 0;
    out.u.col(k).cwiseAbs().maxCoeff(&pivot);
    if (out.u(pivot, k) < 0.0) {
      out.u.col(k) = -out.u.col(k);
      out.v.col(k) = -out.v.col(k);
    }
  }
  return out;
}

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  require_finite(m, "singular_values");
  Eigen::BDCSVD<Matrix> svd(m);
  check_svd(svd);
  return svd.singularValues();
}

double spectral_norm(const Matrix& m) {
  const Vector s = singular_values(m);
  return s.size() ? s(0) : 0.0;
}

double nuclear_norm(const Matrix& m) { return singular_values(m).sum(); }

Matrix svt(const Matrix& m, double tau) {
  require_nonneg_threshold(tau);
  const SvdFactors f = thin_svd(m);
  Index keep = 0;
  while (keep < f.sigma.size() && f.sigma(keep) > tau) ++keep;
  if (keep == 0) return Matrix::Zero(m.rows(), m.cols());
  const Vector shrunk = (f.sigma.head(keep).array() - tau).matrix();
  return f.u.leftCols(keep) * shrunk.asDiagonal() *
         f.v.leftCols(keep).transpose();
}

Matrix procrustes(const Matrix& m) {
  const SvdFactors f = thin_svd(m);
  return f.u * f.v.transpose();
}

Index numerical_rank(const Vector& sigma, Index rows, Index cols) {
  if (sigma.size() == 0 || sigma(0) <= 0.0) return 0;
  const double tol = static_cast<double>(std::max(rows, cols)) *
                     std::numeric_limits<double>::epsilon() * sigma(0);
  Index r = 0;
  while (r < sigma.size() && sigma(r) > tol) ++r;
  return r;
}

Index rank_for_energy(const Vector& sigma, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InvalidArgument("energy fraction must lie in (0, 1]");
  const double total = sigma.squaredNorm();
  if (total <= 0.0) return 0;
  const double target = fraction * total;
  double acc = 0.0;
  Index r = 0;
  while (r < sigma.size()) {
    acc += sigma(r) * sigma(r);
    ++r;
    if (acc >= target) break;
  }
  return r;
}

Matrix rank_r_span(const Matrix& m, const RankRule& rule) {
  const Index min_dim = std::min(m.rows(), m.cols());
  if (rule.kind == RankRule::Kind::Explicit) {
    if (rule.rank < 0 || rule.rank > min_dim)
      throw InvalidArgument("explicit rank " + std::to_string(rule.rank) +
                            " exceeds min dimension " +
                            std::to_string(min_dim));
    if (rule.rank == 0) return Matrix(m.rows(), 0);
  }
  const SvdFactors f = thin_svd(m);
  const Index nrank = numerical_rank(f.sigma, m.rows(), m.cols());
  if (nrank == 0)
    throw DegenerateInput(
        "rank_r_span: matrix is numerically zero; use an explicit rank or "
        "skip the individual component");

  Index r = rule.rank;
  if (rule.kind == RankRule::Kind::Energy)
    r = std::min(rank_for_energy(f.sigma, rule.fraction), nrank);
  return f.u.leftCols(r);
}

double orthonormality_defect(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

Matrix random_orthonormal(Index rows, Index cols, std::mt19937_64& rng) {
  if (rows < cols || cols < 0)
    throw InvalidArgument("random_orthonormal: need rows >= cols");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Fix the sign ambiguity of QR so the draw is Haar distributed.
  const Matrix r = qr.matrixQR().topLeftCorner(cols, cols);
  for (Index j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace marca::proxops
