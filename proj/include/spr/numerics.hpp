#pragma once

#include <Eigen/Dense>

#include <vector>

#include "spr/types.hpp"

// Core dense primitives: PCA reduction, least squares, and the annihilator
// projection used to strip the regression fit out of a response.
namespace spr {

// Singular values below rank_cutoff * sigma_max count as zero everywhere a
// rank decision is made.
inline constexpr double rank_cutoff = 1e-10;

// Principal-component model fit by SVD of the column-centered data matrix.
// The centering vector is kept so later data can be projected consistently.
template <class Scalar>
struct Pca {
  Vector<Scalar> center;            // column means of the fitting data
  Matrix<Scalar> basis;             // p x k, orthonormal columns
  Vector<Scalar> singular_values;   // all min(n, p) values, descending
  Index rank = 0;                   // values above rank_cutoff * max

  [[nodiscard]] Matrix<Scalar> transform(const Matrix<Scalar>& x) const {
    if (x.cols() != center.size())
      throw dimension_error("Pca::transform: column count mismatch");
    return (x.rowwise() - center.transpose()) * basis;
  }
};

template <class Scalar>
[[nodiscard]] Pca<Scalar> pca_fit(const Matrix<Scalar>& x, Index target_dim) {
  const Index n = x.rows(), p = x.cols();
  if (n < 1 || p < 1) throw dimension_error("pca_fit: empty matrix");
  if (target_dim < 1 || target_dim > std::min(n, p))
    throw dimension_error("pca_fit: target_dim outside [1, min(n, p)]");
  Matrix<Scalar> centered = x.rowwise() - x.colwise().mean();
  Eigen::BDCSVD<Matrix<Scalar>> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= Scalar(0))
    throw degenerate_input_error("pca_fit: input has no variance");
  Pca<Scalar> model;
  model.center = x.colwise().mean().transpose();
  model.basis = svd.matrixV().leftCols(target_dim);
  model.singular_values = sv;
  model.rank = (sv.array() > Scalar(rank_cutoff) * sv(0)).count();
  return model;
}

// Projects X onto its top target_dim principal directions.  The returned
// matrix has full column rank whenever the top target_dim singular values
// are strictly positive.
template <class Scalar>
[[nodiscard]] Matrix<Scalar> pca_reduce(const Matrix<Scalar>& x, Index target_dim) {
  return pca_fit(x, target_dim).transform(x);
}

// Least squares of Y on X restricted to `subset` rows.  X restricted must
// have full column rank; the fit is by column-pivoted QR.
template <class Scalar>
[[nodiscard]] Matrix<Scalar> ols_fit(const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                                     const std::vector<Index>& subset) {
  const Index p = x.cols();
  if (x.rows() != y.rows()) throw dimension_error("ols_fit: row count mismatch");
  if (static_cast<Index>(subset.size()) < p)
    throw dimension_error("ols_fit: subset smaller than feature dimension");
  Matrix<Scalar> xs(static_cast<Index>(subset.size()), p);
  Matrix<Scalar> ys(static_cast<Index>(subset.size()), y.cols());
  for (std::size_t r = 0; r < subset.size(); ++r) {
    const Index i = subset[r];
    if (i < 0 || i >= x.rows()) throw dimension_error("ols_fit: subset index out of range");
    xs.row(static_cast<Index>(r)) = x.row(i);
    ys.row(static_cast<Index>(r)) = y.row(i);
  }
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(xs);
  qr.setThreshold(Scalar(rank_cutoff));
  if (qr.rank() < p)
    throw singular_system_error("ols_fit: design is rank deficient on the subset");
  return qr.solve(ys);
}

template <class Scalar>
[[nodiscard]] Matrix<Scalar> ols_fit(const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  std::vector<Index> all(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
  return ols_fit(x, y, all);
}

// Annihilator pair of the regression of Y on X: design = I - X (X^T X)^+ X^T
// (symmetric, idempotent, annihilates col(X)), response = design * Y.
// X must have full column rank.
template <class Scalar>
struct Residualized {
  Matrix<Scalar> design;    // n x n annihilator
  Matrix<Scalar> response;  // n x c
};

template <class Scalar>
[[nodiscard]] Residualized<Scalar> residualize(const Matrix<Scalar>& x,
                                               const Matrix<Scalar>& y) {
  const Index n = x.rows(), p = x.cols();
  if (y.rows() != n) throw dimension_error("residualize: row count mismatch");
  if (p < 1 || n <= p)
    throw dimension_error("residualize: need n > p >= 1");
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(x);
  qr.setThreshold(Scalar(rank_cutoff));
  if (qr.rank() < p)
    throw singular_system_error("residualize: X is rank deficient");
  // Q1 spans col(X); the annihilator is I - Q1 Q1^T.
  Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(n, p);
  Residualized<Scalar> out;
  out.design = Matrix<Scalar>::Identity(n, n) - q * q.transpose();
  out.response = out.design * y;
  return out;
}

}  // namespace spr
