#include "spr/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spr {

namespace {

// A residualized response whose rows all vanish at this scale relative to the
// raw labels carries no ranking signal; the path is declared degenerate and
// every entry time is zero.
constexpr double degenerate_scale = 1e-10;

}  // namespace

MatrixXd FeatureMap::apply(const MatrixXd& x) const {
  MatrixXd reduced = pca.transform(x);
  MatrixXd out(reduced.rows(), reduced.cols() + 1);
  out.leftCols(reduced.cols()) = reduced;
  out.col(reduced.cols()).setOnes();
  return out;
}

FeatureMap fit_feature_map(const MatrixXd& x, Index max_dim) {
  const Index n = x.rows(), p = x.cols();
  if (n < 4) throw dimension_error("fit_feature_map: need at least 4 samples");
  Index target = std::min({max_dim, p, n - 2});
  if (target < 1) throw dimension_error("fit_feature_map: no usable feature dimension");
  FeatureMap map;
  map.pca = pca_fit(x, target);
  if (map.pca.rank < target) {
    target = map.pca.rank;
    map.pca.basis = map.pca.basis.leftCols(target).eval();
  }
  map.reduced_dim = target;
  return map;
}

std::vector<Index> clean_order(const SolutionPath<double>& path) {
  const Index n = path.samples();
  VectorXd final_norm = VectorXd::Zero(n);
  if (!path.gammas.empty()) final_norm = path.gammas.back().rowwise().norm();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (path.entry_times(a) != path.entry_times(b))
      return path.entry_times(a) < path.entry_times(b);
    if (final_norm(a) != final_norm(b)) return final_norm(a) < final_norm(b);
    return a < b;
  });
  return order;
}

SprSelection spr_select_on_features(const MatrixXd& features, const MatrixXd& y,
                                    const SelectorConfig& cfg) {
  validate(cfg);
  const Index n = features.rows();
  if (y.rows() != n) throw dimension_error("spr_select: feature/label row mismatch");
  if (y.cols() < 2) throw invalid_config_error("spr_select: need at least 2 classes");

  SprSelection sel;
  Residualized<double> rz = residualize(features, y);
  const double lam_max = lambda_max(rz.design, rz.response);
  const double label_scale = y.rowwise().norm().maxCoeff();
  if (lam_max <= degenerate_scale * std::max(label_scale, 1.0)) {
    sel.degenerate = true;
    sel.path.entry_times = VectorXd::Zero(n);
  } else {
    LambdaGrid grid = make_lambda_grid(lam_max, cfg.grid_size, cfg.grid_floor);
    PathOptions opt;
    opt.tol = cfg.tol;
    opt.max_sweeps = cfg.max_sweeps;
    opt.structure = DesignStructure::projector;
    sel.path = solve_path(rz.design, rz.response, grid, opt);
  }

  const std::vector<Index> order = clean_order(sel.path);
  const auto keep = static_cast<std::size_t>(
      std::ceil(cfg.keep_fraction * static_cast<double>(n)));
  sel.outcome.total = n;
  sel.outcome.clean_indices.assign(order.begin(),
                                   order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(sel.outcome.clean_indices.begin(), sel.outcome.clean_indices.end());
  return sel;
}

SprSelection spr_select(const MatrixXd& x, const MatrixXd& y, const SelectorConfig& cfg) {
  FeatureMap map = fit_feature_map(x, y.cols());
  return spr_select_on_features(map.apply(x), y, cfg);
}

}  // namespace spr
