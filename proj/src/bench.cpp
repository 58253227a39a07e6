#include "spr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "spr/csv.hpp"
#include "spr/numerics.hpp"
#include "spr/parallel.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

double sample_sd(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

struct MeanSd {
  std::optional<double> mean, sd;
};

MeanSd summarize(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  return {mean, sample_sd(xs, mean)};
}

}  // namespace

const char* to_string(NoiseKind kind) {
  return kind == NoiseKind::symmetric ? "symmetric" : "asymmetric";
}

const char* to_string(Mode mode) { return mode == Mode::nominal ? "nominal" : "theorem"; }

GeneratedData generate(const SyntheticSpec& spec) {
  if (spec.c < 2) throw invalid_config_error("generate: need at least 2 classes");
  if (spec.n < spec.c) throw invalid_config_error("generate: need n >= c");
  if (spec.p < 1) throw invalid_config_error("generate: need p >= 1");
  if (spec.rho < 0.0 || spec.rho >= 1.0)
    throw invalid_config_error("generate: rho must lie in [0, 1)");
  if (spec.sigma < 0.0) throw invalid_config_error("generate: sigma must be >= 0");

  auto eng = rng::engine(spec.seed, rng::stream_dataset);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Draw order is fixed: X0 row-major, beta row-major, corruption choices,
  // corrupted labels, then feature noise row-major.
  MatrixXd x0(spec.n, spec.p);
  for (Index i = 0; i < spec.n; ++i)
    for (Index j = 0; j < spec.p; ++j) x0(i, j) = gauss(eng);
  MatrixXd beta(spec.p, spec.c);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.p));
  for (Index j = 0; j < spec.p; ++j)
    for (int k = 0; k < spec.c; ++k) beta(j, k) = gauss(eng) * scale;

  GeneratedData out;
  out.beta_star = beta;
  out.data.num_classes = spec.c;
  out.data.true_labels.resize(static_cast<std::size_t>(spec.n));
  const MatrixXd scores = x0 * beta;
  for (Index i = 0; i < spec.n; ++i) {
    Index arg = 0;
    scores.row(i).maxCoeff(&arg);
    out.data.true_labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  out.data.labels = out.data.true_labels;

  const auto corrupt = static_cast<Index>(std::floor(spec.rho * static_cast<double>(spec.n)));
  std::vector<Index> idx(static_cast<std::size_t>(spec.n));
  std::iota(idx.begin(), idx.end(), Index(0));
  for (Index k = 0; k < corrupt; ++k) {  // partial Fisher-Yates
    std::uniform_int_distribution<Index> pick(k, spec.n - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(eng))]);
  }
  for (Index k = 0; k < corrupt; ++k) {
    const Index i = idx[static_cast<std::size_t>(k)];
    const int truth = out.data.true_labels[static_cast<std::size_t>(i)];
    int corrupted;
    if (spec.noise == NoiseKind::symmetric) {
      std::uniform_int_distribution<int> other(0, spec.c - 2);
      const int draw = other(eng);
      corrupted = draw >= truth ? draw + 1 : draw;
    } else {
      corrupted = (truth + 1) % spec.c;
    }
    out.data.labels[static_cast<std::size_t>(i)] = corrupted;
  }

  out.data.x = x0;
  if (spec.sigma > 0.0) {
    for (Index i = 0; i < spec.n; ++i)
      for (Index j = 0; j < spec.p; ++j) out.data.x(i, j) += spec.sigma * gauss(eng);
  }
  return out;
}

QualityReport quality(const std::vector<Index>& selected, const std::vector<bool>& clean_mask) {
  QualityReport report;
  report.selected = static_cast<Index>(selected.size());
  Index clean_total = 0;
  for (bool b : clean_mask)
    if (b) ++clean_total;
  Index sel_clean = 0, sel_noisy = 0;
  for (Index i : selected) {
    if (i < 0 || static_cast<std::size_t>(i) >= clean_mask.size())
      throw dimension_error("quality: selected index out of range");
    (clean_mask[static_cast<std::size_t>(i)] ? sel_clean : sel_noisy)++;
  }
  report.fsr = static_cast<double>(sel_noisy) /
               static_cast<double>(std::max<Index>(report.selected, 1));
  if (clean_total > 0) {
    report.recall = static_cast<double>(sel_clean) / static_cast<double>(clean_total);
    const double precision = 1.0 - report.fsr;
    const double denom = precision + *report.recall;
    report.f1 = denom > 0.0 ? 2.0 * precision * *report.recall / denom : 0.0;
  }
  return report;
}

TheoremOneDiagnostics theorem1_diagnostics(const MatrixXd& features, const MatrixXd& gamma_star,
                                           double lambda, double eta, double sigma) {
  const Index n = features.rows();
  const Index c = gamma_star.cols();
  if (gamma_star.rows() != n) throw dimension_error("theorem1_diagnostics: row mismatch");
  if (!(lambda > 0.0) || !(eta > 0.0) || eta >= 1.0)
    throw invalid_config_error("theorem1_diagnostics: need lambda > 0 and eta in (0, 1)");
  if (sigma < 0.0) throw invalid_config_error("theorem1_diagnostics: sigma must be >= 0");

  // Annihilator of the feature span; response is irrelevant here.
  const MatrixXd design = residualize<double>(features, MatrixXd::Zero(n, 1)).design;

  std::vector<std::vector<Index>> blocks(static_cast<std::size_t>(c));
  Index support_entries = 0;
  double gamma_min = 0.0;
  for (Index k = 0; k < c; ++k)
    for (Index i = 0; i < n; ++i)
      if (gamma_star(i, k) != 0.0) {
        blocks[static_cast<std::size_t>(k)].push_back(i);
        const double mag = std::abs(gamma_star(i, k));
        gamma_min = support_entries == 0 ? mag : std::min(gamma_min, mag);
        ++support_entries;
      }
  if (support_entries == 0)
    throw degenerate_input_error("theorem1_diagnostics: gamma* has empty support");

  TheoremOneDiagnostics diag;
  diag.lambda = lambda;
  diag.eta = eta;
  diag.gamma_min = gamma_min;

  std::vector<bool> row_noisy(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i)
    row_noisy[static_cast<std::size_t>(i)] = (gamma_star.row(i).array() != 0.0).any();

  // mu: largest squared column norm over entries outside the support; the
  // column norm does not depend on the class, only on sample membership.
  diag.mu = 0.0;
  for (Index j = 0; j < n; ++j) {
    const Index nonzeros = (gamma_star.row(j).array() != 0.0).count();
    if (nonzeros < c)  // at least one zero-class entry for this sample
      diag.mu = std::max(diag.mu, design.col(j).squaredNorm());
  }

  // The support Gram is block diagonal over classes, so its extreme
  // eigenvalues and inverse factor through the per-class blocks.
  diag.c_min = 0.0;
  double h_inf = 0.0;
  bool first_block = true, singular = false;
  std::vector<VectorXd> irr_per_class;  // l1 norms per sample, one vector per class
  irr_per_class.reserve(static_cast<std::size_t>(c));
  for (Index k = 0; k < c; ++k) {
    const auto& rows = blocks[static_cast<std::size_t>(k)];
    if (rows.empty()) {
      irr_per_class.emplace_back(VectorXd::Zero(n));
      continue;
    }
    MatrixXd xk(n, static_cast<Index>(rows.size()));
    VectorXd sign_k(static_cast<Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
      xk.col(static_cast<Index>(t)) = design.col(rows[t]);
      sign_k(static_cast<Index>(t)) = gamma_star(rows[t], k) > 0.0 ? 1.0 : -1.0;
    }
    const MatrixXd gram = xk.transpose() * xk;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    const double block_min = eig.eigenvalues().minCoeff();
    const double block_max = eig.eigenvalues().maxCoeff();
    diag.c_min = first_block ? block_min : std::min(diag.c_min, block_min);
    first_block = false;
    if (block_min <= rank_cutoff * std::max(block_max, 0.0)) {
      singular = true;
      irr_per_class.emplace_back(VectorXd::Zero(n));
      continue;
    }

    Eigen::LDLT<MatrixXd> solver(gram);
    h_inf = std::max(h_inf, solver.solve(sign_k).cwiseAbs().maxCoeff());
    // Row (j, k) of the irrepresentability matrix: x_j^T X_k Gram^{-1}.
    const MatrixXd weights = solver.solve(xk.transpose() * design).transpose();  // n x |B_k|
    irr_per_class.push_back(weights.cwiseAbs().rowwise().sum());
  }

  if (singular) {
    // A deficient support makes C2/C3 quantities undefined; report C1 as 0
    // and leave every condition failing.
    diag.c_min = 0.0;
    diag.irr_max = std::numeric_limits<double>::infinity();
    diag.h = std::numeric_limits<double>::infinity();
    diag.lambda_lower_bound = 0.0;
    diag.lambda_ok = false;
    return diag;
  }

  diag.irr_max = 0.0;
  for (Index j = 0; j < n; ++j) {
    double sample_max = 0.0;
    for (Index k = 0; k < c; ++k) {
      if (gamma_star(j, k) != 0.0) continue;  // (j, k) in the support
      const double v = irr_per_class[static_cast<std::size_t>(k)](j);
      sample_max = std::max(sample_max, v);
      diag.irr_max = std::max(diag.irr_max, v);
    }
    if (!row_noisy[static_cast<std::size_t>(j)]) diag.irr_values.push_back(sample_max);
  }

  if (diag.c_min > 0.0 && diag.mu > 0.0)
    diag.h = lambda * eta / std::sqrt(diag.c_min * diag.mu) + lambda * h_inf;
  else
    diag.h = std::numeric_limits<double>::infinity();
  diag.lambda_lower_bound =
      diag.mu > 0.0 ? 2.0 * sigma * std::sqrt(diag.mu) / eta *
                          std::sqrt(std::log(static_cast<double>(c) * static_cast<double>(n)))
                    : 0.0;
  diag.lambda_ok = lambda >= diag.lambda_lower_bound;
  diag.conditions_hold = {diag.c_min > 0.0, diag.irr_max <= 1.0 - eta,
                          diag.gamma_min > diag.h};
  return diag;
}

FsrExperiment fsr_experiment(const SyntheticSpec& base, const SelectorConfig& cfg, int repeats,
                             int parallelism) {
  if (repeats < 1) throw invalid_config_error("fsr_experiment: repeats must be >= 1");
  FsrExperiment exp;
  exp.rows.resize(static_cast<std::size_t>(repeats));
  parallel_for(static_cast<std::size_t>(repeats), parallelism, [&](std::size_t i) {
    const std::uint64_t root = base.seed + i;
    SyntheticSpec spec = base;
    spec.seed = root;
    SelectorConfig run_cfg = cfg;
    run_cfg.seed = root;
    const auto t0 = std::chrono::steady_clock::now();
    const GeneratedData gen = generate(spec);
    const KnockoffOutcome out = knockoff_spr(gen.data, run_cfg, 1);
    const auto t1 = std::chrono::steady_clock::now();
    const QualityReport rep = quality(out.outcome.clean_indices, gen.data.clean_mask());
    FsrRow& row = exp.rows[i];
    row.seed = root;
    row.spec = spec;
    row.mode = cfg.mode;
    row.target_q = cfg.target_q;
    row.realized_q = out.outcome.realized_q;
    row.fsr = rep.fsr;
    row.recall = rep.recall;
    row.f1 = rep.f1;
    row.fallback_used = out.outcome.fallback_used;
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  });

  std::vector<double> fsrs, qs, recalls, f1s;
  int fallbacks = 0;
  for (const FsrRow& row : exp.rows) {
    fsrs.push_back(row.fsr);
    if (row.realized_q) qs.push_back(*row.realized_q);
    if (row.recall) recalls.push_back(*row.recall);
    if (row.f1) f1s.push_back(*row.f1);
    if (row.fallback_used) ++fallbacks;
    exp.summary.wall_ms_total += row.wall_ms;
  }
  exp.summary.runs = repeats;
  const MeanSd fsr_ms = summarize(fsrs);
  exp.summary.fsr_mean = fsr_ms.mean.value_or(0.0);
  exp.summary.fsr_sd = fsr_ms.sd.value_or(0.0);
  const MeanSd q_ms = summarize(qs);
  exp.summary.realized_q_mean = q_ms.mean;
  exp.summary.realized_q_sd = q_ms.sd;
  const MeanSd recall_ms = summarize(recalls);
  exp.summary.recall_mean = recall_ms.mean;
  exp.summary.recall_sd = recall_ms.sd;
  const MeanSd f1_ms = summarize(f1s);
  exp.summary.f1_mean = f1_ms.mean;
  exp.summary.f1_sd = f1_ms.sd;
  exp.summary.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(repeats);
  return exp;
}

void write_rows_csv(std::ostream& os, const std::vector<FsrRow>& rows, bool header) {
  if (header)
    csv::write_row(os, {"seed", "n", "p", "c", "noise_kind", "rho", "sigma", "mode", "target_q",
                        "realized_q", "fsr", "recall", "f1", "fallback_used", "wall_ms"});
  for (const FsrRow& row : rows) {
    csv::write_row(
        os, {csv::field(row.seed), csv::field(static_cast<long long>(row.spec.n)),
             csv::field(static_cast<long long>(row.spec.p)),
             csv::field(static_cast<long long>(row.spec.c)), to_string(row.spec.noise),
             csv::field(row.spec.rho), csv::field(row.spec.sigma), to_string(row.mode),
             csv::field(row.target_q), csv::field(row.realized_q), csv::field(row.fsr),
             csv::field(row.recall), csv::field(row.f1), csv::field(row.fallback_used),
             csv::field(row.wall_ms)});
  }
}

void write_summary_csv(std::ostream& os, const SyntheticSpec& spec, Mode mode, double target_q,
                       const FsrSummary& summary, bool header) {
  if (header)
    csv::write_row(os, {"n", "p", "c", "noise_kind", "rho", "sigma", "mode", "target_q", "runs",
                        "fsr_mean", "fsr_sd", "realized_q_mean", "realized_q_sd", "recall_mean",
                        "recall_sd", "f1_mean", "f1_sd", "fallback_rate", "wall_ms_total"});
  csv::write_row(
      os, {csv::field(static_cast<long long>(spec.n)), csv::field(static_cast<long long>(spec.p)),
           csv::field(static_cast<long long>(spec.c)), to_string(spec.noise),
           csv::field(spec.rho), csv::field(spec.sigma), to_string(mode), csv::field(target_q),
           csv::field(static_cast<long long>(summary.runs)), csv::field(summary.fsr_mean),
           csv::field(summary.fsr_sd), csv::field(summary.realized_q_mean),
           csv::field(summary.realized_q_sd), csv::field(summary.recall_mean),
           csv::field(summary.recall_sd), csv::field(summary.f1_mean), csv::field(summary.f1_sd),
           csv::field(summary.fallback_rate), csv::field(summary.wall_ms_total)});
}

}  // namespace spr
