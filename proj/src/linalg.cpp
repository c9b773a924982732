#include "mnar/linalg.hpp"

#include <Eigen/SVD>
#include <string>

#include "mnar/error.hpp"

namespace mnar {

Matrix SvdFactors::reconstruct() const {
  return u * singular_values.asDiagonal() * v.transpose();
}

bool all_finite(const Matrix& x) { return x.allFinite(); }

SvdFactors svd(const Matrix& x) {
  require(x.rows() >= 1 && x.cols() >= 1, "svd: empty matrix");
  if (!x.allFinite()) fail(ErrorCode::NumericalFailure, "svd: input has non-finite entries");

  Eigen::BDCSVD<Matrix> dec(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    fail(ErrorCode::NumericalFailure, "svd: decomposition did not converge");
  }

  SvdFactors f{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  for (Index k = 0; k < f.u.cols(); ++k) {
    for (Index i = 0; i < f.u.rows(); ++i) {
      const double entry = f.u(i, k);
      if (entry == 0.0) continue;
      if (entry < 0.0) {
        f.u.col(k) = -f.u.col(k);
        f.v.col(k) = -f.v.col(k);
      }
      break;
    }
  }
  return f;
}

double nuclear_norm(const Matrix& x) { return svd(x).singular_values.sum(); }

Index numerical_rank(const Vector& singular_values) {
  if (singular_values.size() == 0) return 0;
  const double cutoff = kRankTolerance * singular_values(0);
  Index rank = 0;
  for (Index k = 0; k < singular_values.size(); ++k) {
    if (singular_values(k) > cutoff && singular_values(k) > 0.0) ++rank;
  }
  return rank;
}

Index numerical_rank(const Matrix& x) { return numerical_rank(svd(x).singular_values); }

double spectral_norm(const Matrix& x) { return svd(x).singular_values(0); }

ProxResult soft_threshold_prox(const Matrix& x, double lambda) {
  require(lambda >= 0.0, "soft_threshold_prox: lambda must be non-negative, got " +
                             std::to_string(lambda));
  SvdFactors f = svd(x);
  ProxResult out;
  if (lambda == 0.0) {
    out.value = x;
    out.nuclear_norm = f.singular_values.sum();
    out.rank = numerical_rank(f.singular_values);
    return out;
  }

  Index keep = 0;
  while (keep < f.singular_values.size() && f.singular_values(keep) > lambda) ++keep;
  if (keep == 0) {
    out.value = Matrix::Zero(x.rows(), x.cols());
    return out;
  }
  const Vector shrunk = (f.singular_values.head(keep).array() - lambda).matrix();
  out.value.noalias() =
      f.u.leftCols(keep) * shrunk.asDiagonal() * f.v.leftCols(keep).transpose();
  out.nuclear_norm = shrunk.sum();
  out.rank = numerical_rank(shrunk);
  return out;
}

Matrix svd_soft_threshold(const Matrix& x, double lambda) {
  return soft_threshold_prox(x, lambda).value;
}

}  // namespace mnar
