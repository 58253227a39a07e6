#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Dense scalar-templated aliases used throughout the library.  Everything is
// column-major Eigen; rows index samples, columns index classes or features.
namespace spr {

using Index = Eigen::Index;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using VectorXi = std::vector<int>;

// --- error taxonomy ------------------------------------------------------

// Shape or argument mismatch detectable before any numerics run.
struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input is structurally valid but carries no usable signal (all-zero X, ...).
struct degenerate_input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A linear system that must be solvable is rank deficient.
struct singular_system_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative solve exhausted its sweep budget; carries the offending lambda.
struct convergence_error : std::runtime_error {
  convergence_error(const std::string& what, double lambda)
      : std::runtime_error(what), lambda(lambda) {}
  double lambda;
};

struct invalid_config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed on-disk artifact (dataset container, config file, ...).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- data containers ------------------------------------------------------

// Observed supervised sample set.  labels[i] in [0, num_classes); true_labels
// is present only for synthetic data where ground truth is known.
struct LabeledDataset {
  MatrixXd x;                          // n x p features
  std::vector<int> labels;             // observed, size n
  std::vector<int> true_labels;        // empty when unknown
  int num_classes = 0;

  [[nodiscard]] Index size() const { return x.rows(); }
  [[nodiscard]] Index dim() const { return x.cols(); }
  [[nodiscard]] bool has_ground_truth() const { return !true_labels.empty(); }

  // clean_mask[i] == true when the observed label matches ground truth.
  [[nodiscard]] std::vector<bool> clean_mask() const {
    std::vector<bool> mask(static_cast<std::size_t>(size()), false);
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = labels[i] == true_labels[i];
    return mask;
  }
};

// Rows of the one-hot matrix for a label vector, c >= 2 enforced by callers.
[[nodiscard]] inline MatrixXd one_hot(const std::vector<int>& labels, int num_classes) {
  if (num_classes < 2) throw invalid_config_error("one_hot: need at least 2 classes");
  MatrixXd y = MatrixXd::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw dimension_error("one_hot: label out of range");
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// Result of a clean-sample selection run over some indexed sample set.
struct SelectionOutcome {
  std::vector<Index> clean_indices;    // sorted ascending, no duplicates
  Index total = 0;                     // size of the indexed sample set
  std::optional<double> realized_t;    // accepted threshold, none if fallback/degenerate
  std::optional<double> realized_q;    // accepting swept q, none if fallback/degenerate
  bool fallback_used = false;

  [[nodiscard]] std::vector<Index> noisy_indices() const {
    std::vector<bool> clean(static_cast<std::size_t>(total), false);
    for (Index i : clean_indices) clean[static_cast<std::size_t>(i)] = true;
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(total) - clean_indices.size());
    for (Index i = 0; i < total; ++i)
      if (!clean[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
  }
};

enum class Mode { nominal, theorem_corrected };
enum class PermuteStrategy { random, most_confident };

// Knobs shared by the SPR and knockoff selectors.  Defaults mirror the
// reference configuration; per_class thresholds are on by default.
// most_confident is the default permutation: random permutation concentrates
// negative W at small magnitudes when noisy patterns leak into the head fit,
// which erodes false-selection control at high noise rates.
struct SelectorConfig {
  Mode mode = Mode::nominal;
  double target_q = 0.5;                 // cap of the q sweep
  bool per_class = true;
  PermuteStrategy permute = PermuteStrategy::most_confident;
  double keep_fraction = 0.5;            // SPR keep rate (also used on fit halves)
  int grid_size = 100;
  double grid_floor = 1e-3;              // last lambda = floor * lambda_max
  double tol = 1e-6;
  int max_sweeps = 10000;
  std::uint64_t seed = 0;
};

inline void validate(const SelectorConfig& cfg) {
  if (!(cfg.target_q > 0.0) || cfg.target_q > 1.0)
    throw invalid_config_error("target_q must lie in (0, 1]");
  if (!(cfg.keep_fraction > 0.0) || cfg.keep_fraction > 1.0)
    throw invalid_config_error("keep_fraction must lie in (0, 1]");
  if (cfg.grid_size < 2) throw invalid_config_error("grid_size must be >= 2");
  if (!(cfg.grid_floor > 0.0) || cfg.grid_floor >= 1.0)
    throw invalid_config_error("grid_floor must lie in (0, 1)");
  if (!(cfg.tol > 0.0)) throw invalid_config_error("tol must be positive");
  if (cfg.max_sweeps < 1) throw invalid_config_error("max_sweeps must be >= 1");
}

}  // namespace spr
