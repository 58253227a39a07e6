#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spr/knockoffs.hpp"
#include "spr/types.hpp"

// Scales the knockoff selector to many classes and samples: classes are
// grouped by prototype similarity, each group is cut into fixed-size pieces
// (over-sampling small classes), and the selector runs per piece with results
// merged by an OR rule.
namespace spr {

struct Prototypes {
  MatrixXd means;                 // num_classes x p, zero row when no sample
  std::vector<int> support;       // samples averaged into each row
  std::vector<int> fell_back;     // classes whose clean subset was empty
};

// Per-class mean of the rows flagged clean (all rows when `clean` is null).
// A class whose clean subset is empty falls back to its whole-class mean.
[[nodiscard]] Prototypes compute_prototypes(const MatrixXd& x, const std::vector<int>& labels,
                                            int num_classes,
                                            const std::vector<bool>* clean = nullptr);

// Greedy grouping by prototype inner product: the lowest-index unassigned
// class seeds a group and pulls in the group_size - 1 most similar unassigned
// classes (ties to the lower index).  c <= group_size yields a single group.
[[nodiscard]] std::vector<std::vector<int>> group_classes(const Prototypes& protos,
                                                          int group_size);

struct Piece {
  int group = 0;
  std::vector<Index> samples;  // piece_size slots per participating class
};

struct PiecePlan {
  std::vector<Piece> pieces;
  std::vector<int> multiplicity;     // appearances of each sample across pieces
  std::vector<int> skipped_classes;  // classes with no samples (warned, skipped)
};

// Shuffles each class (seeded), cuts runs of piece_size, and pads short runs
// by resampling already-used indices of the same class.  A group produces as
// many pieces as its largest class needs; smaller classes over-sample.
[[nodiscard]] PiecePlan make_pieces(const std::vector<int>& labels, int num_classes,
                                    const std::vector<std::vector<int>>& groups,
                                    int piece_size, std::uint64_t seed);

struct SplitterConfig {
  int group_size = 10;
  int piece_size = 75;
  int parallelism = 1;
};

struct PieceFailure {
  std::size_t piece = 0;
  std::string message;
};

struct SplitOutcome {
  SelectionOutcome outcome;  // dataset-level; OR over piece selections
  PiecePlan plan;
  std::vector<std::optional<KnockoffOutcome>> piece_results;  // slot per piece
  std::vector<PieceFailure> failures;
};

// Full pipeline: prototypes -> groups -> pieces -> knockoff selector per
// piece on a worker pool.  Piece seeds derive from (cfg.seed, piece index),
// so results are identical for every parallelism value.  A piece that throws
// is recorded as failed and contributes no selections.
[[nodiscard]] SplitOutcome run_pieces(const LabeledDataset& data, const SelectorConfig& cfg,
                                      const SplitterConfig& split);

}  // namespace spr
