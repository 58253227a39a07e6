#pragma once

#include <vector>

#include "spr/numerics.hpp"
#include "spr/solution_path.hpp"
#include "spr/types.hpp"

// Clean-sample selection by penalized-regression entry times: residualize the
// one-hot labels against the feature span, trace the row-grouped lasso path,
// and keep the samples that activate latest (or never).
namespace spr {

// Feature preprocessing shared by the selector and the knockoff pipeline:
// PCA reduction to at most `max_dim` components (capped by the input rank)
// followed by a constant column, so the downstream annihilator also kills the
// intercept direction.
struct FeatureMap {
  Pca<double> pca;
  Index reduced_dim = 0;

  [[nodiscard]] MatrixXd apply(const MatrixXd& x) const;
};

// Fits the map on x; max_dim is clamped to [1, min(rank, p, n - 2)].
[[nodiscard]] FeatureMap fit_feature_map(const MatrixXd& x, Index max_dim);

struct SprSelection {
  SelectionOutcome outcome;
  SolutionPath<double> path;  // over the annihilator; empty grid when degenerate
  bool degenerate = false;    // residualized response was numerically zero
};

// Cleanest-first sample order for a solved path: entry time ascending, then
// final-lambda row norm ascending, then index ascending.
[[nodiscard]] std::vector<Index> clean_order(const SolutionPath<double>& path);

// Runs the path on features that are already reduced and intercept-augmented.
[[nodiscard]] SprSelection spr_select_on_features(const MatrixXd& features, const MatrixXd& y,
                                                  const SelectorConfig& cfg);

// Full pipeline: feature map -> annihilator -> path -> rank -> keep the
// ceil(keep_fraction * n) cleanest samples.
[[nodiscard]] SprSelection spr_select(const MatrixXd& x, const MatrixXd& y,
                                      const SelectorConfig& cfg);

}  // namespace spr
