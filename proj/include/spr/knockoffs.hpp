#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spr/selector.hpp"
#include "spr/solution_path.hpp"
#include "spr/types.hpp"

// Knockoff-filtered clean-sample selection.  Labels of a select half are
// compared against permuted copies through paired solution paths on the
// residual offsets; the signed entry-time gap W drives an adaptive threshold
// whose positive/negative count ratio bounds the false-selection rate.
namespace spr {

struct PermutationPlan {
  PermuteStrategy strategy = PermuteStrategy::random;
  std::vector<int> permuted;  // permuted[i] != labels[i] for every i
  std::uint64_t seed = 0;     // engine seed (random strategy only)
};

// Draws a label permutation.  `random` picks uniformly among the other c-1
// classes; `most_confident` picks the highest-scoring class other than the
// observed one (ties to the lowest class index) and requires `scores`
// (rows of X * beta-hat).
[[nodiscard]] PermutationPlan permute_labels(const std::vector<int>& labels, int num_classes,
                                             PermuteStrategy strategy, std::uint64_t seed,
                                             const MatrixXd* scores = nullptr);

struct KnockoffStats {
  VectorXd z;        // entry times under observed labels
  VectorXd z_tilde;  // entry times under permuted labels
  VectorXd w;        // z * sign(z - z_tilde); 0 when the gap is 0
  LambdaGrid grid;   // shared grid; empty when both offsets are numerically zero
};

// Identity-design paths on the offsets R = Y - X*beta and R~ = Y~ - X*beta
// over one shared grid (built from the larger of the two lambda_max values
// when `grid` is null).  Closed form: a row activates at the first grid value
// strictly below its norm.
[[nodiscard]] KnockoffStats paired_paths(const MatrixXd& x, const MatrixXd& y,
                                         const MatrixXd& y_perm, const MatrixXd& beta,
                                         const LambdaGrid* grid = nullptr,
                                         Index grid_size = 100, double grid_floor = 1e-3);

// Largest t among {|w_j| : w_j != 0} with
// (1 + #{0 < w_j <= t}) / max(#{-t <= w_j < 0}, 1) <= q; 0 when none qualifies.
[[nodiscard]] double adaptive_threshold(const VectorXd& w, double q);

// One select half's threshold decision.  selected indexes the half's rows.
struct ThresholdDecision {
  std::vector<Index> selected;
  std::optional<double> realized_t;
  std::optional<double> realized_q;
  bool fallback_used = false;
};

// Sweeps q over 0.02, 0.04, ... capped at min(0.5, cfg.target_q) (cap
// included), testing adaptive_threshold at level q (nominal) or
// (c-2)/(2c) * q (theorem-corrected).  With per-class thresholds each
// observed class sweeps independently and the union is returned; if no class
// accepts, the fallback keeps the ceil(m/2) samples with largest w.
[[nodiscard]] ThresholdDecision sweep_thresholds(const VectorXd& w,
                                                 const std::vector<int>& labels,
                                                 int num_classes, const SelectorConfig& cfg);

// Coefficients fit on a fit half: SPR keeps the cleanest keep_fraction, then
// least squares of the one-hot labels on the kept rows.  Depends on the fit
// half only.
struct FittedHead {
  FeatureMap map;
  MatrixXd beta;                 // (reduced_dim + 1) x c, intercept row last
  std::vector<Index> clean_fit;  // fit-half rows used in the least squares
};

[[nodiscard]] FittedHead fit_head(const LabeledDataset& fit, const SelectorConfig& cfg);

struct HalfRun {
  SelectionOutcome outcome;  // indices relative to the select half
  KnockoffStats stats;
  FittedHead head;
  PermutationPlan permutation;
};

[[nodiscard]] HalfRun knockoff_spr_half(const LabeledDataset& fit, const LabeledDataset& select,
                                        const SelectorConfig& cfg,
                                        std::uint64_t permutation_seed);

struct KnockoffOutcome {
  SelectionOutcome outcome;         // dataset-level indices
  std::vector<Index> half1, half2;  // sorted dataset indices, sizes ceil/floor n/2
  HalfRun select_on_half2;          // head fit on half1
  HalfRun select_on_half1;          // head fit on half2
};

// Seeded random halving, two independent half runs (concurrent when
// parallelism > 1), union of the selected clean samples.
[[nodiscard]] KnockoffOutcome knockoff_spr(const LabeledDataset& data, const SelectorConfig& cfg,
                                           int parallelism = 1);

// Row-subset copy preserving label metadata.
[[nodiscard]] LabeledDataset gather(const LabeledDataset& data, const std::vector<Index>& rows);

}  // namespace spr
