#pragma once

#include <Eigen/Dense>

namespace mnar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thin SVD: u is rows x k, v is cols x k, k = min(rows, cols).
/// Singular values are non-increasing; the first nonzero entry of each
/// column of u is positive.
struct SvdFactors {
  Matrix u;
  Vector singular_values;
  Matrix v;

  Matrix reconstruct() const;
};

/// Relative cutoff below which singular values count as zero for rank.
inline constexpr double kRankTolerance = 1e-12;

SvdFactors svd(const Matrix& x);

double nuclear_norm(const Matrix& x);

/// Number of singular values above kRankTolerance * sigma_max.
Index numerical_rank(const Vector& singular_values);
Index numerical_rank(const Matrix& x);

double spectral_norm(const Matrix& x);

struct ProxResult {
  Matrix value;
  /// Nuclear norm of `value`, i.e. the sum of the thresholded singular values.
  double nuclear_norm = 0.0;
  Index rank = 0;
};

/// Proximal operator of lambda * ||.||_* : shrink every singular value by
/// lambda and clip at zero.
ProxResult soft_threshold_prox(const Matrix& x, double lambda);

Matrix svd_soft_threshold(const Matrix& x, double lambda);

bool all_finite(const Matrix& x);

}  // namespace mnar
