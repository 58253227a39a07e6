#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spr/numerics.hpp"
#include "spr/types.hpp"

// Row-grouped lasso over a descending lambda grid:
//
//   min_G  1/2 || R - D G ||_F^2  +  lambda * sum_i || G.row(i) ||_2
//
// solved by block coordinate descent with warm starts.  The per-sample entry
// time Z_i is the first (largest) grid lambda at which row i becomes nonzero;
// it is never revised if the row later re-zeros, so "activated by index k" is
// monotone in k by construction.
namespace spr {

// Multiplicative row shrinkage: (1 - t/||v||)_+ * v; zero when ||v|| <= t.
template <class Derived>
[[nodiscard]] typename Derived::PlainObject group_soft_threshold(
    const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  if (t < Scalar(0)) throw invalid_config_error("group_soft_threshold: negative threshold");
  const Scalar norm = v.norm();
  if (norm <= t) return Derived::PlainObject::Zero(v.rows(), v.cols());
  return ((norm - t) / norm) * v;
}

// Smallest penalty at which the all-zero solution is optimal:
// max over rows of || (D^T R).row(i) ||_2.
template <class Scalar>
[[nodiscard]] Scalar lambda_max(const Matrix<Scalar>& design, const Matrix<Scalar>& response) {
  if (design.rows() != response.rows())
    throw dimension_error("lambda_max: row count mismatch");
  Matrix<Scalar> gram = design.transpose() * response;
  return gram.rows() == 0 ? Scalar(0) : gram.rowwise().norm().maxCoeff();
}

// Descending log-spaced penalty grid from lambda_max down to floor*lambda_max.
struct LambdaGrid {
  VectorXd values;  // strictly decreasing, all positive

  [[nodiscard]] Index size() const { return values.size(); }
  [[nodiscard]] bool empty() const { return values.size() == 0; }
};

[[nodiscard]] inline LambdaGrid make_lambda_grid(double lam_max, Index count = 100,
                                                 double floor_ratio = 1e-3) {
  if (!(lam_max > 0.0)) throw degenerate_input_error("make_lambda_grid: lambda_max must be > 0");
  if (count < 2) throw invalid_config_error("make_lambda_grid: need at least 2 values");
  if (!(floor_ratio > 0.0) || floor_ratio >= 1.0)
    throw invalid_config_error("make_lambda_grid: floor ratio must lie in (0, 1)");
  LambdaGrid grid;
  grid.values.resize(count);
  const double step = std::log(floor_ratio) / static_cast<double>(count - 1);
  for (Index k = 0; k < count; ++k)
    grid.values(k) = lam_max * std::exp(step * static_cast<double>(k));
  grid.values(0) = lam_max;
  grid.values(count - 1) = lam_max * floor_ratio;
  return grid;
}

// Structural hints let the solver skip work it can prove unnecessary:
// `projector` means D is symmetric idempotent (an annihilator), `identity`
// means D == I, for which every lambda has the closed-form row shrinkage.
enum class DesignStructure { general, projector, identity };

struct PathOptions {
  double tol = 1e-6;       // relative Frobenius change and KKT certificate scale
  int max_sweeps = 10000;  // per lambda
  DesignStructure structure = DesignStructure::general;
};

template <class Scalar>
struct SolutionPath {
  VectorXd lambdas;                    // copy of the grid (may be empty: degenerate)
  std::vector<Matrix<Scalar>> gammas;  // one n x c matrix per lambda
  Vector<Scalar> entry_times;          // Z_i, 0 = never activated on the grid
  std::vector<int> sweeps;             // BCD sweeps spent per lambda

  [[nodiscard]] Index samples() const { return entry_times.size(); }
};

// Worst relative optimality violation of G at penalty lambda, measured the
// way the certificate is stated: active rows need the gradient to cancel the
// penalty subgradient within tol*lambda, inactive rows need gradient norm
// <= lambda*(1+tol).  Returns the max over rows of violation/lambda.
template <class Scalar>
[[nodiscard]] Scalar kkt_violation(const Matrix<Scalar>& design, const Matrix<Scalar>& response,
                                   const Matrix<Scalar>& gamma, Scalar lambda) {
  Matrix<Scalar> grad = design.transpose() * (design * gamma - response);
  Scalar worst(0);
  for (Index i = 0; i < gamma.rows(); ++i) {
    const Scalar row_norm = gamma.row(i).norm();
    if (row_norm > Scalar(0)) {
      const Scalar v = (grad.row(i) + lambda * gamma.row(i) / row_norm).norm();
      worst = std::max(worst, v / lambda);
    } else {
      const Scalar v = grad.row(i).norm();
      if (v > lambda) worst = std::max(worst, v / lambda - Scalar(1));
    }
  }
  return worst;
}

namespace detail {

// Shared BCD engine.  `projector` switches on the annihilator identities
// (D^2 = D, D symmetric): I - D has some low rank k, so with its thin
// orthonormal factor B and U = B^T * gamma maintained, a row evaluation and
// its bookkeeping cost O(k c) instead of the dense O(n c).
template <class Scalar>
class PathEngine {
 public:
  PathEngine(const Matrix<Scalar>& design, const Matrix<Scalar>& response, bool projector)
      : d_(design), r_(response), projector_(projector), n_(design.rows()), c_(response.cols()) {
    if (design.rows() != design.cols())
      throw dimension_error("solve_path: design must be square");
    if (design.rows() != response.rows())
      throw dimension_error("solve_path: design/response row mismatch");
    r_scale_ = r_.norm();
    gamma_ = Matrix<Scalar>::Zero(n_, c_);
    if (projector_) {
      w_ = d_ * r_;             // d_i^T R rows
      diag_ = d_.diagonal();    // ||d_i||^2 under idempotency
      Matrix<Scalar> complement = Matrix<Scalar>::Identity(n_, n_) - d_;
      Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(complement);
      qr.setThreshold(Scalar(rank_cutoff));
      const Index k = qr.rank();
      basis_ = qr.householderQ() * Matrix<Scalar>::Identity(n_, k);
      u_ = Matrix<Scalar>::Zero(k, c_);  // B^T * gamma
    } else {
      e_ = r_;                  // residual R - D*gamma
      diag_ = d_.colwise().squaredNorm();
    }
  }

  void start_from(const Matrix<Scalar>& gamma0) {
    if (gamma0.rows() != n_ || gamma0.cols() != c_)
      throw dimension_error("solve_at: warm start has wrong shape");
    gamma_ = gamma0;
    refresh();
  }

  // Solves at one lambda starting from the current gamma; returns sweeps used.
  int solve(Scalar lambda, Scalar tol, int max_sweeps) {
    int used = 0;
    bool refreshed = false;
    for (;;) {
      Scalar moved_sq = sweep(lambda);
      if (projector_) moved_sq += flat_step();
      ++used;
      if (used >= max_sweeps)
        throw convergence_error("solve_path: sweep budget exhausted", static_cast<double>(lambda));
      // The denominator floor carries the response scale: when gamma is
      // essentially zero (lambda at the top of the grid), rounding-level
      // movement must not read as relative change and starve the
      // certificate check below.
      const Scalar change =
          std::sqrt(moved_sq) /
          std::max(gamma_.norm(), std::max(Scalar(1e-4) * r_scale_, Scalar(1e-12)));
      if (change > tol) continue;
      if (certificate(lambda) <= tol) return used;
      // The cheap gradient view can drift after many incremental updates;
      // rebuild it once before spending more sweeps.
      if (!refreshed) {
        refresh();
        refreshed = true;
      }
    }
  }

  [[nodiscard]] const Matrix<Scalar>& gamma() const { return gamma_; }

 private:
  // One full block pass; returns the squared Frobenius movement.
  Scalar sweep(Scalar lambda) {
    Scalar delta_sq(0);
    Eigen::RowVectorX<Scalar> v(c_), step(c_);
    for (Index i = 0; i < n_; ++i) {
      const Scalar a = diag_(i);
      if (projector_) {
        // (D*gamma)_i = gamma_i - B_i * U, so v folds to one O(k c) product.
        v.noalias() = basis_.row(i) * u_;
        v += w_.row(i) + (a - Scalar(1)) * gamma_.row(i);
      } else {
        v.noalias() = d_.col(i).transpose() * e_;
        v += a * gamma_.row(i);
      }
      // Exact block minimizer: group soft threshold of v scaled by 1/a.
      Scalar shrink(0);
      if (a > Scalar(0)) {
        const Scalar norm = v.norm();
        if (norm > lambda) shrink = (norm - lambda) / (norm * a);
      }
      step.noalias() = shrink * v - gamma_.row(i);
      const Scalar moved = step.squaredNorm();
      if (moved > Scalar(0)) {
        delta_sq += moved;
        if (projector_)
          u_.noalias() += basis_.row(i).transpose() * step;
        else
          e_.noalias() -= d_.col(i) * step;
        gamma_.row(i) += step;
      }
    }
    return delta_sq;
  }

  // The data-fit term is blind to col(B) shifts (D*B = 0), so block descent
  // alone crawls along that subspace once lambda is small.  This pass solves
  // min over a of sum_i ||gamma_i + B_i * a|| directly: one reweighted
  // least-squares step, kept only if the exact penalty decreases, with the
  // step halved while it does not.  Returns the squared movement applied.
  Scalar flat_step() {
    const Index k = basis_.cols();
    if (k == 0) return Scalar(0);
    Vector<Scalar> norms = gamma_.rowwise().norm();
    const Scalar top = norms.maxCoeff();
    if (!(top > Scalar(0))) return Scalar(0);
    // Moderated inverse-norm weights; rows at zero stay finite so they do
    // not pin the subspace, the descent gate below keeps the move safe.
    Vector<Scalar> weights =
        (norms.array() < Scalar(1e-3) * top).select(Scalar(1e-3) * top, norms).cwiseInverse();
    Matrix<Scalar> wb = weights.asDiagonal() * basis_;           // n x k
    Matrix<Scalar> h = basis_.transpose() * wb;                  // k x k, SPD
    Matrix<Scalar> a = Eigen::LDLT<Matrix<Scalar>>(h).solve(-wb.transpose() * gamma_);
    Matrix<Scalar> shift = basis_ * a;                           // n x c
    for (Scalar t(1); t > Scalar(0.05); t *= Scalar(0.5)) {
      const Scalar after = (gamma_ + t * shift).rowwise().norm().sum();
      if (after < norms.sum()) {
        gamma_.noalias() += t * shift;
        u_.noalias() += t * a;
        return t * t * shift.squaredNorm();
      }
    }
    return Scalar(0);
  }

  // Max relative KKT violation from the maintained gradient view.
  Scalar certificate(Scalar lambda) const {
    Scalar worst(0);
    Eigen::RowVectorX<Scalar> grad(c_);
    Matrix<Scalar> dense_grad;
    if (!projector_) dense_grad = -(d_.transpose() * e_);
    for (Index i = 0; i < n_; ++i) {
      if (projector_) {
        grad.noalias() = -(basis_.row(i) * u_);
        grad += gamma_.row(i) - w_.row(i);
      } else {
        grad = dense_grad.row(i);
      }
      const Scalar row_norm = gamma_.row(i).norm();
      if (row_norm > Scalar(0)) {
        worst = std::max(worst, (grad + lambda * gamma_.row(i) / row_norm).norm() / lambda);
      } else {
        const Scalar v = grad.norm();
        if (v > lambda) worst = std::max(worst, v / lambda - Scalar(1));
      }
    }
    return worst;
  }

  void refresh() {
    if (projector_)
      u_.noalias() = basis_.transpose() * gamma_;
    else
      e_.noalias() = r_ - d_ * gamma_;
  }

  const Matrix<Scalar>& d_;
  const Matrix<Scalar>& r_;
  bool projector_;
  Index n_, c_;
  Matrix<Scalar> gamma_, w_, e_;
  Matrix<Scalar> basis_, u_;  // thin factor of I - D and B^T * gamma
  Vector<Scalar> diag_;
  Scalar r_scale_ = Scalar(0);
};

}  // namespace detail

// Full path over the grid with warm starts.  Every returned gamma satisfies
// the optimality certificate at its lambda within opt.tol.
template <class Scalar>
[[nodiscard]] SolutionPath<Scalar> solve_path(const Matrix<Scalar>& design,
                                              const Matrix<Scalar>& response,
                                              const LambdaGrid& grid, PathOptions opt = {}) {
  const Index n = design.rows(), c = response.cols();
  SolutionPath<Scalar> path;
  path.lambdas = grid.values;
  path.entry_times = Vector<Scalar>::Zero(n);
  path.gammas.reserve(static_cast<std::size_t>(grid.size()));
  path.sweeps.reserve(static_cast<std::size_t>(grid.size()));
  if (grid.empty()) return path;  // degenerate: all-zero response upstream

  if (opt.structure == DesignStructure::identity) {
    // Closed form: each row shrinks independently, one "sweep" per lambda.
    Vector<Scalar> norms = response.rowwise().norm();
    for (Index k = 0; k < grid.size(); ++k) {
      const Scalar lambda = static_cast<Scalar>(grid.values(k));
      Matrix<Scalar> g = Matrix<Scalar>::Zero(n, c);
      for (Index i = 0; i < n; ++i) {
        if (norms(i) > lambda) {
          g.row(i) = ((norms(i) - lambda) / norms(i)) * response.row(i);
          if (path.entry_times(i) == Scalar(0)) path.entry_times(i) = lambda;
        }
      }
      path.gammas.push_back(std::move(g));
      path.sweeps.push_back(1);
    }
    return path;
  }

  detail::PathEngine<Scalar> engine(design, response,
                                    opt.structure == DesignStructure::projector);
  for (Index k = 0; k < grid.size(); ++k) {
    const Scalar lambda = static_cast<Scalar>(grid.values(k));
    path.sweeps.push_back(engine.solve(lambda, static_cast<Scalar>(opt.tol), opt.max_sweeps));
    path.gammas.push_back(engine.gamma());
    for (Index i = 0; i < n; ++i)
      if (path.entry_times(i) == Scalar(0) && engine.gamma().row(i).norm() > Scalar(0))
        path.entry_times(i) = lambda;
  }
  return path;
}

// Single-penalty solve from an explicit starting point (cold by default).
template <class Scalar>
[[nodiscard]] Matrix<Scalar> solve_at(const Matrix<Scalar>& design,
                                      const Matrix<Scalar>& response, Scalar lambda,
                                      PathOptions opt = {},
                                      const Matrix<Scalar>* warm = nullptr) {
  if (!(lambda > Scalar(0))) throw invalid_config_error("solve_at: lambda must be positive");
  if (opt.structure == DesignStructure::identity) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(response.rows(), response.cols());
    for (Index i = 0; i < response.rows(); ++i)
      g.row(i) = group_soft_threshold(response.row(i), lambda);
    return g;
  }
  detail::PathEngine<Scalar> engine(design, response,
                                    opt.structure == DesignStructure::projector);
  if (warm) engine.start_from(*warm);
  engine.solve(lambda, static_cast<Scalar>(opt.tol), opt.max_sweeps);
  return engine.gamma();
}

// Noisiest-first sample permutation: entry time descending, then final-lambda
// row norm descending, then index ascending.  Never-activated samples sort last.
template <class Scalar>
[[nodiscard]] std::vector<Index> entry_rank(const SolutionPath<Scalar>& path) {
  const Index n = path.samples();
  Vector<Scalar> final_norm = Vector<Scalar>::Zero(n);
  if (!path.gammas.empty()) final_norm = path.gammas.back().rowwise().norm();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (path.entry_times(a) != path.entry_times(b))
      return path.entry_times(a) > path.entry_times(b);
    if (final_norm(a) != final_norm(b)) return final_norm(a) > final_norm(b);
    return a < b;
  });
  return order;
}

}  // namespace spr
