#include "spr/splitter.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "spr/parallel.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

// Plan shuffles use their own stream family so piece-run seeds stay disjoint.
constexpr std::uint64_t stream_plan_shuffle = 0x2000;

}  // namespace

Prototypes compute_prototypes(const MatrixXd& x, const std::vector<int>& labels,
                              int num_classes, const std::vector<bool>* clean) {
  if (static_cast<Index>(labels.size()) != x.rows())
    throw dimension_error("compute_prototypes: label/in row mismatch");
  if (clean && clean->size() != labels.size())
    throw dimension_error("compute_prototypes: clean mask size mismatch");
  Prototypes out;
  out.means = MatrixXd::Zero(num_classes, x.cols());
  out.support.assign(static_cast<std::size_t>(num_classes), 0);
  MatrixXd class_sum = MatrixXd::Zero(num_classes, x.cols());
  std::vector<int> class_count(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= num_classes)
      throw dimension_error("compute_prototypes: label out of range");
    class_sum.row(k) += x.row(static_cast<Index>(i));
    ++class_count[static_cast<std::size_t>(k)];
    if (!clean || (*clean)[i]) {
      out.means.row(k) += x.row(static_cast<Index>(i));
      ++out.support[static_cast<std::size_t>(k)];
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    if (out.support[static_cast<std::size_t>(k)] > 0) {
      out.means.row(k) /= out.support[static_cast<std::size_t>(k)];
    } else if (class_count[static_cast<std::size_t>(k)] > 0) {
      out.means.row(k) = class_sum.row(k) / class_count[static_cast<std::size_t>(k)];
      out.support[static_cast<std::size_t>(k)] = class_count[static_cast<std::size_t>(k)];
      out.fell_back.push_back(k);
    }
  }
  return out;
}

std::vector<std::vector<int>> group_classes(const Prototypes& protos, int group_size) {
  if (group_size < 1) throw invalid_config_error("group_classes: group size must be >= 1");
  const int c = static_cast<int>(protos.means.rows());
  std::vector<std::vector<int>> groups;
  if (c <= group_size) {
    std::vector<int> all(static_cast<std::size_t>(c));
    std::iota(all.begin(), all.end(), 0);
    groups.push_back(std::move(all));
    return groups;
  }
  std::vector<bool> assigned(static_cast<std::size_t>(c), false);
  int remaining = c;
  while (remaining > 0) {
    int seed = -1;
    for (int k = 0; k < c; ++k)
      if (!assigned[static_cast<std::size_t>(k)]) {
        seed = k;
        break;
      }
    assigned[static_cast<std::size_t>(seed)] = true;
    --remaining;
    std::vector<std::pair<double, int>> sims;  // (-similarity, index) for stable pick
    for (int j = 0; j < c; ++j)
      if (!assigned[static_cast<std::size_t>(j)])
        sims.emplace_back(-protos.means.row(seed).dot(protos.means.row(j)), j);
    std::sort(sims.begin(), sims.end());
    std::vector<int> group{seed};
    const int take = std::min<int>(group_size - 1, static_cast<int>(sims.size()));
    for (int t = 0; t < take; ++t) {
      group.push_back(sims[static_cast<std::size_t>(t)].second);
      assigned[static_cast<std::size_t>(sims[static_cast<std::size_t>(t)].second)] = true;
      --remaining;
    }
    std::sort(group.begin(), group.end());
    groups.push_back(std::move(group));
  }
  return groups;
}

PiecePlan make_pieces(const std::vector<int>& labels, int num_classes,
                      const std::vector<std::vector<int>>& groups, int piece_size,
                      std::uint64_t seed) {
  if (piece_size < 2) throw invalid_config_error("make_pieces: piece size must be >= 2");
  const auto m = static_cast<std::size_t>(piece_size);
  PiecePlan plan;
  plan.multiplicity.assign(labels.size(), 0);

  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw dimension_error("make_pieces: label out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  }

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::size_t runs_needed = 0;
    for (int cls : groups[gi]) {
      const std::size_t count = by_class[static_cast<std::size_t>(cls)].size();
      if (count == 0) {
        plan.skipped_classes.push_back(cls);
        continue;
      }
      runs_needed = std::max(runs_needed, (count + m - 1) / m);
    }
    if (runs_needed == 0) continue;

    // runs[cls][r] laid out per class first, then assembled into pieces.
    std::vector<std::vector<std::vector<Index>>> runs;
    for (int cls : groups[gi]) {
      const auto& members = by_class[static_cast<std::size_t>(cls)];
      if (members.empty()) continue;
      auto eng = rng::engine(seed, stream_plan_shuffle + (static_cast<std::uint64_t>(gi) << 20) +
                                       static_cast<std::uint64_t>(cls));
      std::vector<Index> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), eng);
      std::vector<std::vector<Index>> class_runs(runs_needed);
      for (std::size_t r = 0; r < runs_needed; ++r) {
        auto& run = class_runs[r];
        const std::size_t start = r * m;
        for (std::size_t j = start; j < std::min(start + m, shuffled.size()); ++j)
          run.push_back(shuffled[j]);
        if (run.size() < m) {
          // Pad from indices used in earlier runs; a first short run can only
          // resample itself.
          std::vector<Index> pool(shuffled.begin(),
                                  shuffled.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(start, shuffled.size())));
          if (pool.empty()) pool = run;
          std::vector<Index> pad;
          while (pad.size() < m - run.size()) {
            std::vector<Index> cycle = pool;
            std::shuffle(cycle.begin(), cycle.end(), eng);
            for (Index v : cycle) {
              pad.push_back(v);
              if (pad.size() == m - run.size()) break;
            }
          }
          run.insert(run.end(), pad.begin(), pad.end());
        }
      }
      runs.push_back(std::move(class_runs));
    }

    for (std::size_t r = 0; r < runs_needed; ++r) {
      Piece piece;
      piece.group = static_cast<int>(gi);
      for (const auto& class_runs : runs)
        piece.samples.insert(piece.samples.end(), class_runs[r].begin(), class_runs[r].end());
      for (Index v : piece.samples) ++plan.multiplicity[static_cast<std::size_t>(v)];
      plan.pieces.push_back(std::move(piece));
    }
  }
  return plan;
}

SplitOutcome run_pieces(const LabeledDataset& data, const SelectorConfig& cfg,
                        const SplitterConfig& split) {
  validate(cfg);
  if (split.group_size < 1 || split.piece_size < 2)
    throw invalid_config_error("run_pieces: bad group or piece size");

  SplitOutcome out;
  const Prototypes protos = compute_prototypes(data.x, data.labels, data.num_classes);
  const std::vector<std::vector<int>> groups = group_classes(protos, split.group_size);
  out.plan = make_pieces(data.labels, data.num_classes, groups, split.piece_size, cfg.seed);

  const std::size_t count = out.plan.pieces.size();
  out.piece_results.assign(count, std::nullopt);
  std::vector<std::optional<std::string>> errors(count);
  parallel_for(count, split.parallelism, [&](std::size_t k) {
    SelectorConfig piece_cfg = cfg;
    piece_cfg.seed = rng::derive(cfg.seed, rng::stream_piece + k);
    try {
      out.piece_results[k] =
          knockoff_spr(gather(data, out.plan.pieces[k].samples), piece_cfg, 1);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t k = 0; k < count; ++k)
    if (errors[k]) out.failures.push_back({k, *errors[k]});

  std::vector<bool> clean(static_cast<std::size_t>(data.size()), false);
  out.outcome.total = data.size();
  for (std::size_t k = 0; k < count; ++k) {
    if (!out.piece_results[k]) continue;
    const auto& piece = out.plan.pieces[k];
    const auto& res = out.piece_results[k]->outcome;
    for (Index j : res.clean_indices)
      clean[static_cast<std::size_t>(piece.samples[static_cast<std::size_t>(j)])] = true;
    if (res.realized_t)
      out.outcome.realized_t = std::max(out.outcome.realized_t.value_or(0.0), *res.realized_t);
    if (res.realized_q)
      out.outcome.realized_q = std::max(out.outcome.realized_q.value_or(0.0), *res.realized_q);
    out.outcome.fallback_used = out.outcome.fallback_used || res.fallback_used;
  }
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (clean[i]) out.outcome.clean_indices.push_back(static_cast<Index>(i));
  return out;
}

}  // namespace spr
