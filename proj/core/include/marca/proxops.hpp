#pragma once

#include <random>

#include "marca/types.hpp"

/// Deterministic linear-algebra kernels shared by the training and
/// reconstruction solvers. Every function here is pure and thread-safe.
namespace marca::proxops {

/// Thin SVD with a fixed sign convention: the largest-magnitude entry of each
/// left-singular vector is positive (first such entry on ties).
struct SvdFactors {
  Matrix u;
  Vector sigma;  ///< nonincreasing, nonnegative
  Matrix v;
};

/// Soft threshold sgn(sigma) * max(|sigma| - tau, 0).
double shrink(double sigma, double tau);

/// Elementwise soft threshold.
Matrix shrink(const Matrix& m, double tau);
Vector shrink(const Vector& v, double tau);

SvdFactors thin_svd(const Matrix& m);

/// Singular values only, nonincreasing.
Vector singular_values(const Matrix& m);

double spectral_norm(const Matrix& m);
double nuclear_norm(const Matrix& m);

/// Singular value thresholding: U * diag(shrink(sigma, tau)) * V^T.
Matrix svt(const Matrix& m, double tau);

/// Orthogonal Procrustes projection U * V^T of the thin SVD of m.
///
/// For m = B * A^T this is the minimiser of ||Omega * A - B||_F over
/// Omega with orthonormal columns. When m is rank deficient the minimiser is
/// not unique; the singular vectors returned by thin_svd are used as-is.
Matrix procrustes(const Matrix& m);

/// How many leading singular directions to keep.
struct RankRule {
  enum class Kind { Explicit, Energy };

  Kind kind = Kind::Energy;
  Index rank = 0;         ///< Explicit: number of columns, 0 gives an empty span
  double fraction = 0.99; ///< Energy: cumulative sigma^2 fraction in (0, 1]

  static RankRule explicit_rank(Index r) { return {Kind::Explicit, r, 0.0}; }
  static RankRule energy(double f) { return {Kind::Energy, 0, f}; }
};

/// Smallest r with sum_{k<r} sigma_k^2 >= fraction * sum sigma_k^2, capped at
/// the numerical rank of the spectrum.
Index rank_for_energy(const Vector& sigma, double fraction);

/// Number of singular values above max(rows, cols) * eps * sigma_max.
Index numerical_rank(const Vector& sigma, Index rows, Index cols);

/// First r left-singular vectors of m as an orthonormal-column matrix.
/// Throws DegenerateInput for the zero matrix.
Matrix rank_r_span(const Matrix& m, const RankRule& rule);

/// ||Q^T Q - I||_F.
double orthonormality_defect(const Matrix& q);

/// Haar-distributed matrix with orthonormal columns (rows >= cols).
Matrix random_orthonormal(Index rows, Index cols, std::mt19937_64& rng);

/// Throws InvalidArgument naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

}  // namespace marca::proxops
