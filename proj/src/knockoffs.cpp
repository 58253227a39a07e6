#include "spr/knockoffs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spr/parallel.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

constexpr double degenerate_scale = 1e-10;

// First grid value strictly below `norm` (grid descending); 0 when none.
double entry_time_for_norm(const LambdaGrid& grid, double norm) {
  const auto& v = grid.values;
  // v is descending: find the first k with v[k] < norm.
  Index lo = 0, hi = v.size();
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (v(mid) < norm)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo < v.size() ? v(lo) : 0.0;
}

std::vector<double> swept_q_values(double target_q) {
  const double cap = std::min(0.5, target_q);
  std::vector<double> swept;
  for (int k = 1;; ++k) {
    const double q = 0.02 * k;
    if (q < cap - 1e-12)
      swept.push_back(q);
    else
      break;
  }
  swept.push_back(cap);
  return swept;
}

struct SweepAccept {
  double q = 0.0;
  double t = 0.0;
  bool accepted = false;
};

SweepAccept sweep_one(const VectorXd& w, const std::vector<double>& swept, Mode mode,
                      int num_classes) {
  SweepAccept result;
  for (double q : swept) {
    const double level =
        mode == Mode::theorem_corrected
            ? q * static_cast<double>(num_classes - 2) / (2.0 * num_classes)
            : q;
    const double t = adaptive_threshold(w, level);
    if (t > 0.0) {
      result = {q, t, true};
      break;
    }
  }
  return result;
}

}  // namespace

PermutationPlan permute_labels(const std::vector<int>& labels, int num_classes,
                               PermuteStrategy strategy, std::uint64_t seed,
                               const MatrixXd* scores) {
  if (num_classes < 2)
    throw invalid_config_error("permute_labels: no valid permutation with fewer than 2 classes");
  PermutationPlan plan;
  plan.strategy = strategy;
  plan.seed = seed;
  plan.permuted.resize(labels.size());
  if (strategy == PermuteStrategy::random) {
    std::mt19937_64 eng(seed);
    std::uniform_int_distribution<int> pick(0, num_classes - 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes)
        throw dimension_error("permute_labels: label out of range");
      const int k = pick(eng);
      plan.permuted[i] = k >= labels[i] ? k + 1 : k;
    }
  } else {
    if (scores == nullptr)
      throw invalid_config_error("permute_labels: most_confident needs scores");
    if (scores->rows() != static_cast<Index>(labels.size()) || scores->cols() != num_classes)
      throw dimension_error("permute_labels: score shape mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      int best = -1;
      double best_score = 0.0;
      for (int k = 0; k < num_classes; ++k) {
        if (k == labels[i]) continue;
        const double s = (*scores)(static_cast<Index>(i), k);
        if (best < 0 || s > best_score) {
          best = k;
          best_score = s;
        }
      }
      plan.permuted[i] = best;
    }
  }
  return plan;
}

KnockoffStats paired_paths(const MatrixXd& x, const MatrixXd& y, const MatrixXd& y_perm,
                           const MatrixXd& beta, const LambdaGrid* grid, Index grid_size,
                           double grid_floor) {
  if (y.rows() != x.rows() || y_perm.rows() != x.rows())
    throw dimension_error("paired_paths: row count mismatch");
  if (x.cols() != beta.rows())
    throw dimension_error("paired_paths: beta shape incompatible with features");
  const MatrixXd scores = x * beta;
  const MatrixXd r = y - scores;
  const MatrixXd r_perm = y_perm - scores;
  const VectorXd rn = r.rowwise().norm();
  const VectorXd rpn = r_perm.rowwise().norm();

  KnockoffStats stats;
  const Index m = x.rows();
  stats.z = VectorXd::Zero(m);
  stats.z_tilde = VectorXd::Zero(m);
  stats.w = VectorXd::Zero(m);

  if (grid != nullptr) {
    stats.grid = *grid;
  } else {
    const double lam = std::max(rn.size() ? rn.maxCoeff() : 0.0,
                                rpn.size() ? rpn.maxCoeff() : 0.0);
    const double label_scale =
        std::max({y.rowwise().norm().maxCoeff(), y_perm.rowwise().norm().maxCoeff(), 1.0});
    if (lam <= degenerate_scale * label_scale) return stats;  // no signal at all
    stats.grid = make_lambda_grid(lam, grid_size, grid_floor);
  }

  for (Index i = 0; i < m; ++i) {
    stats.z(i) = entry_time_for_norm(stats.grid, rn(i));
    stats.z_tilde(i) = entry_time_for_norm(stats.grid, rpn(i));
    const double gap = stats.z(i) - stats.z_tilde(i);
    stats.w(i) = gap > 0.0 ? stats.z(i) : (gap < 0.0 ? -stats.z(i) : 0.0);
  }
  return stats;
}

double adaptive_threshold(const VectorXd& w, double q) {
  if (!(q > 0.0)) throw invalid_config_error("adaptive_threshold: level must be positive");
  std::vector<std::pair<double, bool>> items;  // (|w|, is_positive)
  items.reserve(static_cast<std::size_t>(w.size()));
  for (Index i = 0; i < w.size(); ++i)
    if (w(i) != 0.0) items.emplace_back(std::abs(w(i)), w(i) > 0.0);
  if (items.empty()) return 0.0;
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Prefix counts over ascending |w|: at candidate t = items[i].first the
  // numerator counts positives with |w| <= t and the denominator negatives.
  const std::size_t k = items.size();
  std::vector<int> pos(k), neg(k);
  int cp = 0, cn = 0;
  for (std::size_t i = 0; i < k; ++i) {
    (items[i].second ? cp : cn)++;
    pos[i] = cp;
    neg[i] = cn;
  }
  std::size_t i = k;
  while (i > 0) {
    --i;
    // Evaluate each distinct candidate once, at the end of its equal run.
    if (i + 1 < k && items[i].first == items[i + 1].first) continue;
    const double ratio =
        (1.0 + pos[i]) / static_cast<double>(std::max(neg[i], 1));
    if (ratio <= q) return items[i].first;
  }
  return 0.0;
}

ThresholdDecision sweep_thresholds(const VectorXd& w, const std::vector<int>& labels,
                                   int num_classes, const SelectorConfig& cfg) {
  validate(cfg);
  if (static_cast<Index>(labels.size()) != w.size())
    throw dimension_error("sweep_thresholds: label/w size mismatch");
  if (cfg.mode == Mode::theorem_corrected && num_classes < 3)
    throw invalid_config_error("sweep_thresholds: theorem correction needs >= 3 classes");
  const std::vector<double> swept = swept_q_values(cfg.target_q);
  const Index m = w.size();
  ThresholdDecision decision;

  if (cfg.per_class) {
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(num_classes));
    for (Index i = 0; i < m; ++i) {
      if (labels[static_cast<std::size_t>(i)] < 0 ||
          labels[static_cast<std::size_t>(i)] >= num_classes)
        throw dimension_error("sweep_thresholds: label out of range");
      members[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    }
    for (const auto& rows : members) {
      if (rows.empty()) continue;
      VectorXd wk(static_cast<Index>(rows.size()));
      for (std::size_t j = 0; j < rows.size(); ++j) wk(static_cast<Index>(j)) = w(rows[j]);
      const SweepAccept acc = sweep_one(wk, swept, cfg.mode, num_classes);
      if (!acc.accepted) continue;
      for (Index i : rows)
        if (-acc.t <= w(i) && w(i) < 0.0) decision.selected.push_back(i);
      decision.realized_t = std::max(decision.realized_t.value_or(0.0), acc.t);
      decision.realized_q = std::max(decision.realized_q.value_or(0.0), acc.q);
    }
  } else {
    const SweepAccept acc = sweep_one(w, swept, cfg.mode, num_classes);
    if (acc.accepted) {
      for (Index i = 0; i < m; ++i)
        if (-acc.t <= w(i) && w(i) < 0.0) decision.selected.push_back(i);
      decision.realized_t = acc.t;
      decision.realized_q = acc.q;
    }
  }

  if (decision.selected.empty()) {
    // Every sweep exhausted: keep the half of the samples with largest w.
    decision.realized_t.reset();
    decision.realized_q.reset();
    decision.fallback_used = true;
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index(0));
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      if (w(a) != w(b)) return w(a) > w(b);
      return a < b;
    });
    const auto keep = static_cast<std::size_t>((m + 1) / 2);
    decision.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(decision.selected.begin(), decision.selected.end());
  return decision;
}

FittedHead fit_head(const LabeledDataset& fit, const SelectorConfig& cfg) {
  if (fit.num_classes < 2) throw invalid_config_error("fit_head: need at least 2 classes");
  FittedHead head;
  head.map = fit_feature_map(fit.x, fit.num_classes);
  const MatrixXd feats = head.map.apply(fit.x);
  const MatrixXd y = one_hot(fit.labels, fit.num_classes);
  SprSelection sel = spr_select_on_features(feats, y, cfg);
  head.clean_fit = sel.outcome.clean_indices;
  if (static_cast<Index>(head.clean_fit.size()) < feats.cols())
    throw invalid_config_error("fit_head: kept fit rows fewer than coefficient count");
  head.beta = ols_fit(feats, y, head.clean_fit);
  return head;
}

HalfRun knockoff_spr_half(const LabeledDataset& fit, const LabeledDataset& select,
                          const SelectorConfig& cfg, std::uint64_t permutation_seed) {
  validate(cfg);
  if (fit.num_classes != select.num_classes)
    throw dimension_error("knockoff_spr_half: class count mismatch");
  if (cfg.mode == Mode::theorem_corrected && fit.num_classes < 3)
    throw invalid_config_error("knockoff_spr_half: theorem correction needs >= 3 classes");

  HalfRun run;
  run.head = fit_head(fit, cfg);
  const MatrixXd xsel = run.head.map.apply(select.x);
  const MatrixXd scores = xsel * run.head.beta;
  run.permutation = permute_labels(select.labels, select.num_classes, cfg.permute,
                                   permutation_seed, &scores);
  const MatrixXd y = one_hot(select.labels, select.num_classes);
  const MatrixXd y_perm = one_hot(run.permutation.permuted, select.num_classes);
  run.stats = paired_paths(xsel, y, y_perm, run.head.beta, nullptr, cfg.grid_size,
                           cfg.grid_floor);
  ThresholdDecision decision =
      sweep_thresholds(run.stats.w, select.labels, select.num_classes, cfg);
  run.outcome.clean_indices = std::move(decision.selected);
  run.outcome.total = select.size();
  run.outcome.realized_t = decision.realized_t;
  run.outcome.realized_q = decision.realized_q;
  run.outcome.fallback_used = decision.fallback_used;
  return run;
}

LabeledDataset gather(const LabeledDataset& data, const std::vector<Index>& rows) {
  LabeledDataset out;
  out.num_classes = data.num_classes;
  out.x.resize(static_cast<Index>(rows.size()), data.x.cols());
  out.labels.resize(rows.size());
  if (data.has_ground_truth()) out.true_labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index i = rows[r];
    if (i < 0 || i >= data.size()) throw dimension_error("gather: row index out of range");
    out.x.row(static_cast<Index>(r)) = data.x.row(i);
    out.labels[r] = data.labels[static_cast<std::size_t>(i)];
    if (data.has_ground_truth())
      out.true_labels[r] = data.true_labels[static_cast<std::size_t>(i)];
  }
  return out;
}

KnockoffOutcome knockoff_spr(const LabeledDataset& data, const SelectorConfig& cfg,
                             int parallelism) {
  validate(cfg);
  const Index n = data.size();
  if (data.num_classes < 2) throw invalid_config_error("knockoff_spr: need at least 2 classes");
  if (cfg.mode == Mode::theorem_corrected && data.num_classes < 3)
    throw invalid_config_error("knockoff_spr: theorem correction needs >= 3 classes");
  const Index d_bound = std::min<Index>(data.num_classes, data.x.cols());
  const Index half_min = n / 2;
  if (half_min < d_bound + 2 ||
      static_cast<Index>(std::ceil(cfg.keep_fraction * static_cast<double>(half_min))) <
          d_bound + 1)
    throw invalid_config_error("knockoff_spr: dataset too small to fit on a half");

  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index(0));
  auto eng = rng::engine(cfg.seed, rng::stream_partition);
  std::shuffle(idx.begin(), idx.end(), eng);

  KnockoffOutcome out;
  const auto cut = static_cast<std::ptrdiff_t>((n + 1) / 2);
  out.half1.assign(idx.begin(), idx.begin() + cut);
  out.half2.assign(idx.begin() + cut, idx.end());
  std::sort(out.half1.begin(), out.half1.end());
  std::sort(out.half2.begin(), out.half2.end());

  const LabeledDataset d1 = gather(data, out.half1);
  const LabeledDataset d2 = gather(data, out.half2);

  HalfRun runs[2];
  parallel_for(2, parallelism, [&](std::size_t task) {
    if (task == 0)
      runs[0] = knockoff_spr_half(d1, d2, cfg,
                                  rng::derive(cfg.seed, rng::stream_permutation + 2));
    else
      runs[1] = knockoff_spr_half(d2, d1, cfg,
                                  rng::derive(cfg.seed, rng::stream_permutation + 1));
  });
  out.select_on_half2 = std::move(runs[0]);
  out.select_on_half1 = std::move(runs[1]);

  out.outcome.total = n;
  for (Index j : out.select_on_half2.outcome.clean_indices)
    out.outcome.clean_indices.push_back(out.half2[static_cast<std::size_t>(j)]);
  for (Index j : out.select_on_half1.outcome.clean_indices)
    out.outcome.clean_indices.push_back(out.half1[static_cast<std::size_t>(j)]);
  std::sort(out.outcome.clean_indices.begin(), out.outcome.clean_indices.end());

  auto merge_opt = [](const std::optional<double>& a, const std::optional<double>& b) {
    if (a && b) return std::optional<double>(std::max(*a, *b));
    return a ? a : b;
  };
  out.outcome.realized_t =
      merge_opt(out.select_on_half1.outcome.realized_t, out.select_on_half2.outcome.realized_t);
  out.outcome.realized_q =
      merge_opt(out.select_on_half1.outcome.realized_q, out.select_on_half2.outcome.realized_q);
  out.outcome.fallback_used = out.select_on_half1.outcome.fallback_used ||
                              out.select_on_half2.outcome.fallback_used;
  return out;
}

}  // namespace spr
