// Reference low-rank plus sparse solver (inexact ALM, Lin, Chen & Ma 2010)
// extended with an observation mask. Intentionally self-contained: it uses
// its own SVD call and thresholding so that agreement with the trainer in the
// J = 0 case is a meaningful cross-check.

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "marca/errors.hpp"
#include "marca/synthbench.hpp"

namespace marca::synth {

namespace {

double soft(double v, double tau) {
  if (v > tau) return v - tau;
  if (v < -tau) return v + tau;
  return 0.0;
}

}  // namespace

RpcaResult rpca_reference(const Matrix& X, const Matrix& W, double lambda,
                          double eps, int t_max) {
  if (X.rows() != W.rows() || X.cols() != W.cols())
    throw InvalidArgument("rpca_reference: mask shape mismatch");
  if (!(lambda > 0.0) || !(eps > 0.0) || t_max < 1)
    throw InvalidArgument("rpca_reference: invalid parameters");

  RpcaResult out;
  out.low_rank = Matrix::Zero(X.rows(), X.cols());
  out.sparse = Matrix::Zero(X.rows(), X.cols());
  const double xnorm = X.norm();
  if (xnorm == 0.0) {
    out.converged = true;
    return out;
  }

  Eigen::JacobiSVD<Matrix> norm_svd(X);
  const double two_norm = norm_svd.singularValues()(0);
  const double inf_norm = X.cwiseAbs().maxCoeff() / lambda;
  Matrix Y = X / std::max(two_norm, inf_norm);
  double mu = 1.25 / two_norm;
  const double mu_bar = mu * 1e7;
  const double rho = 1.5;

  Matrix& L = out.low_rank;
  Matrix& S = out.sparse;
  for (int it = 0; it < t_max; ++it) {
    Eigen::JacobiSVD<Matrix> svd(X - S + Y / mu,
                                 Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    Eigen::Index keep = 0;
    while (keep < sv.size() && sv(keep) > 1.0 / mu) ++keep;
    L = svd.matrixU().leftCols(keep) *
        (sv.head(keep).array() - 1.0 / mu).matrix().asDiagonal() *
        svd.matrixV().leftCols(keep).transpose();

    const Matrix T = X - L + Y / mu;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        S(i, j) = W(i, j) != 0.0 ? soft(T(i, j), lambda / mu) : T(i, j);

    const Matrix Z = X - L - S;
    Y += mu * Z;
    mu = std::min(mu * rho, mu_bar);
    out.iterations = it + 1;

    const double gap = Z.norm() / xnorm;
    if (!std::isfinite(gap))
      throw DivergedError("rpca_reference diverged", out.iterations);
    if (gap < eps) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace marca::synth
