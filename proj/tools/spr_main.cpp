#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spr/bench.hpp"
#include "spr/csv.hpp"
#include "spr/dataset_io.hpp"
#include "spr/knockoffs.hpp"
#include "spr/selector.hpp"
#include "spr/splitter.hpp"
#include "spr/types.hpp"

// Command-line front end.  Every run is a pure function of its dataset, its
// flags, and one root seed; outputs land atomically so a crashed run never
// leaves a partial file behind.
namespace {

const std::map<std::string, spr::Mode> mode_names{
    {"nominal", spr::Mode::nominal}, {"theorem", spr::Mode::theorem_corrected}};
const std::map<std::string, spr::PermuteStrategy> permute_names{
    {"random", spr::PermuteStrategy::random},
    {"confident", spr::PermuteStrategy::most_confident}};
const std::map<std::string, spr::NoiseKind> noise_names{
    {"symmetric", spr::NoiseKind::symmetric}, {"asymmetric", spr::NoiseKind::asymmetric}};

void add_selector_options(CLI::App* cmd, spr::SelectorConfig& cfg) {
  cmd->add_option("--mode", cfg.mode, "Threshold level rule: nominal uses q directly")
      ->transform(CLI::CheckedTransformer(mode_names, CLI::ignore_case));
  cmd->add_option("--q", cfg.target_q, "Target false-selection level (sweep cap)")
      ->check(CLI::Range(1e-9, 1.0));
  cmd->add_option("--per-class", cfg.per_class, "Sweep the threshold per class");
  cmd->add_option("--permute", cfg.permute, "Label permutation strategy")
      ->transform(CLI::CheckedTransformer(permute_names, CLI::ignore_case));
  cmd->add_option("--keep", cfg.keep_fraction, "Kept fraction for the plain path selector")
      ->check(CLI::Range(1e-9, 1.0));
  cmd->add_option("--grid-size", cfg.grid_size, "Number of path grid values")
      ->check(CLI::Range(2, 100000));
  cmd->add_option("--grid-floor", cfg.grid_floor, "Last grid value as a fraction of the first")
      ->check(CLI::Range(1e-12, 0.999999));
  cmd->add_option("--tol", cfg.tol, "Path solver tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--max-sweeps", cfg.max_sweeps, "Path solver sweep budget per grid value")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", cfg.seed, "Root seed; all randomness derives from it");
}

[[nodiscard]] std::filesystem::path summary_path(std::filesystem::path out) {
  const auto ext = out.extension();
  out.replace_extension();
  out += "_summary";
  out += ext;
  return out;
}

struct GenerateArgs {
  spr::SyntheticSpec spec;
  std::string out;
  bool force = false;
};

int run_generate(const GenerateArgs& args) {
  const spr::GeneratedData gen = spr::generate(args.spec);
  spr::io::save_dataset(args.out, gen.data, args.force);
  Eigen::Index corrupted = 0;
  for (bool clean : gen.data.clean_mask())
    if (!clean) ++corrupted;
  std::cout << "wrote " << args.out << ": n=" << args.spec.n << " p=" << args.spec.p
            << " c=" << args.spec.c << " corrupted=" << corrupted << " ("
            << spr::to_string(args.spec.noise) << ")\n";
  return 0;
}

struct SelectArgs {
  std::string dataset, out;
  spr::SelectorConfig cfg;
  spr::SplitterConfig split;
  bool plain_spr = false;
  bool force = false;
};

void write_quality_csv(const std::filesystem::path& path, const spr::QualityReport& report,
                       Eigen::Index total, bool force) {
  spr::io::atomic_write(path, force, [&](std::ostream& os) {
    spr::csv::write_row(os, {"selected", "total", "fsr", "recall", "f1"});
    spr::csv::write_row(os, {spr::csv::field(static_cast<long long>(report.selected)),
                             spr::csv::field(static_cast<long long>(total)),
                             spr::csv::field(report.fsr), spr::csv::field(report.recall),
                             spr::csv::field(report.f1)});
  });
}

int run_select(const SelectArgs& args) {
  const spr::LabeledDataset data = spr::io::load_dataset(args.dataset);
  std::vector<spr::Index> selected;
  int failed_pieces = 0;

  if (args.plain_spr) {
    const spr::SprSelection sel =
        spr::spr_select(data.x, spr::one_hot(data.labels, data.num_classes), args.cfg);
    selected = sel.outcome.clean_indices;
    if (sel.degenerate)
      std::cerr << "note: residualized labels are numerically zero; selection is by index\n";
  } else {
    const spr::SplitOutcome split = spr::run_pieces(data, args.cfg, args.split);
    selected = split.outcome.clean_indices;
    for (int cls : split.plan.skipped_classes)
      std::cerr << "warning: class " << cls << " has no samples; skipped\n";
    for (const spr::PieceFailure& failure : split.failures)
      std::cerr << "piece " << failure.piece << " failed: " << failure.message << '\n';
    failed_pieces = static_cast<int>(split.failures.size());
    if (split.outcome.realized_q)
      std::cout << "realized q=" << *split.outcome.realized_q
                << " threshold=" << *split.outcome.realized_t << '\n';
    if (split.outcome.fallback_used)
      std::cout << "fallback threshold used on at least one piece\n";
  }

  spr::io::atomic_write(args.out, args.force, [&](std::ostream& os) {
    for (spr::Index i : selected) os << i << '\n';
  });
  std::cout << "selected " << selected.size() << " of " << data.size() << " samples -> "
            << args.out << '\n';

  if (data.has_ground_truth()) {
    const spr::QualityReport report = spr::quality(selected, data.clean_mask());
    const std::filesystem::path quality_path = args.out + ".quality.csv";
    write_quality_csv(quality_path, report, data.size(), args.force);
    std::cout << "quality: fsr=" << report.fsr;
    if (report.recall) std::cout << " recall=" << *report.recall;
    if (report.f1) std::cout << " f1=" << *report.f1;
    std::cout << " -> " << quality_path.string() << '\n';
  }
  return failed_pieces == 0 ? 0 : 1;
}

struct BenchArgs {
  spr::SyntheticSpec spec;
  spr::SelectorConfig cfg;
  std::vector<double> rhos{0.2};
  std::vector<double> qs{0.5};
  int repeats = 10;
  int parallelism = 1;
  std::string out;
  bool force = false;
};

int run_bench(const BenchArgs& args) {
  std::ostringstream rows, summaries;
  bool first_cell = true;
  for (double rho : args.rhos) {
    for (double q : args.qs) {
      spr::SyntheticSpec spec = args.spec;
      spec.rho = rho;
      spr::SelectorConfig cfg = args.cfg;
      cfg.target_q = q;
      const spr::FsrExperiment exp =
          spr::fsr_experiment(spec, cfg, args.repeats, args.parallelism);
      spr::write_rows_csv(rows, exp.rows, first_cell);
      spr::write_summary_csv(summaries, spec, cfg.mode, q, exp.summary, first_cell);
      first_cell = false;
      std::cout << "rho=" << rho << " q=" << q << " mode=" << spr::to_string(cfg.mode)
                << ": fsr_mean=" << exp.summary.fsr_mean << " (sd " << exp.summary.fsr_sd
                << ") fallback_rate=" << exp.summary.fallback_rate << " ["
                << exp.summary.wall_ms_total / 1000.0 << " s]\n";
    }
  }
  spr::io::atomic_write(args.out, args.force,
                        [&](std::ostream& os) { os << rows.str(); });
  const std::filesystem::path summary = summary_path(args.out);
  spr::io::atomic_write(summary, args.force,
                        [&](std::ostream& os) { os << summaries.str(); });
  std::cout << "wrote per-seed rows -> " << args.out << "\nwrote cell summaries -> "
            << summary.string() << '\n';
  return 0;
}

struct DiagnoseArgs {
  std::string dataset, out;
  double lambda = 0.0;  // 0 means use the recommended lower bound
  double eta = 0.5;
  double sigma = 0.1;
  bool force = false;
};

int run_diagnose(const DiagnoseArgs& args) {
  const spr::LabeledDataset data = spr::io::load_dataset(args.dataset);
  if (!data.has_ground_truth())
    throw spr::invalid_config_error(
        "diagnose needs ground-truth labels; only synthetic containers carry them");

  const spr::Index n = data.size();
  spr::MatrixXd gamma = spr::MatrixXd::Zero(n, data.num_classes);
  spr::Index corrupted = 0;
  for (spr::Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (data.labels[idx] == data.true_labels[idx]) continue;
    gamma(i, data.labels[idx]) = 1.0;
    gamma(i, data.true_labels[idx]) = -1.0;
    ++corrupted;
  }
  if (corrupted == 0)
    throw spr::degenerate_input_error("dataset has no corrupted samples; nothing to diagnose");

  const spr::FeatureMap map = spr::fit_feature_map(data.x, data.num_classes);
  const spr::MatrixXd features = map.apply(data.x);
  double lambda = args.lambda;
  if (lambda <= 0.0) {
    const auto probe = spr::theorem1_diagnostics(features, gamma, 1.0, args.eta, args.sigma);
    lambda = probe.lambda_lower_bound > 0.0 ? probe.lambda_lower_bound : 1.0;
  }
  const auto diag = spr::theorem1_diagnostics(features, gamma, lambda, args.eta, args.sigma);

  std::cout << "instance: n=" << n << " reduced_dim=" << map.reduced_dim << "+intercept c="
            << data.num_classes << " corrupted=" << corrupted << '\n';
  std::cout << "lambda=" << diag.lambda << " (lower bound " << diag.lambda_lower_bound << ", "
            << (diag.lambda_ok ? "satisfied" : "NOT satisfied") << ") eta=" << diag.eta
            << " mu=" << diag.mu << '\n';
  std::cout << "C1 restricted eigenvalue: c_min=" << diag.c_min << " -> "
            << (diag.conditions_hold[0] ? "holds" : "fails") << '\n';
  std::cout << "C2 irrepresentability: irr_max=" << diag.irr_max << " (limit "
            << 1.0 - diag.eta << ") -> " << (diag.conditions_hold[1] ? "holds" : "fails")
            << '\n';
  std::cout << "C3 signal size: gamma_min=" << diag.gamma_min << " vs h=" << diag.h << " -> "
            << (diag.conditions_hold[2] ? "holds" : "fails") << '\n';
  const bool all =
      diag.conditions_hold[0] && diag.conditions_hold[1] && diag.conditions_hold[2];
  std::cout << "noisy-set recovery conditions: " << (all ? "all hold" : "not all hold")
            << '\n';

  if (!args.out.empty()) {
    spr::io::atomic_write(args.out, args.force, [&](std::ostream& os) {
      spr::csv::write_row(os, {"sample", "irr_l1"});
      std::size_t next = 0;
      for (spr::Index i = 0; i < n; ++i) {
        if ((gamma.row(i).array() != 0.0).any()) continue;
        spr::csv::write_row(os, {spr::csv::field(static_cast<long long>(i)),
                                 spr::csv::field(diag.irr_values.at(next++))});
      }
    });
    std::cout << "wrote per-sample irrepresentability values -> " << args.out << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clean-sample selection by knockoff-filtered penalized regression", "spr"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "Key = value manifest with one [section] per subcommand; "
                                 "command-line flags win")
      ->check(CLI::ExistingFile);

  GenerateArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("generate", "Write a synthetic noisy-label dataset");
  cmd_gen->add_option("--n", gen.spec.n, "Samples")->check(CLI::Range(2, 100000000));
  cmd_gen->add_option("--p", gen.spec.p, "Feature dimension")->check(CLI::PositiveNumber);
  cmd_gen->add_option("--c", gen.spec.c, "Classes")->check(CLI::Range(2, 1000000));
  cmd_gen->add_option("--rho", gen.spec.rho, "Corrupted-label fraction")
      ->check(CLI::Range(0.0, 0.999999));
  cmd_gen->add_option("--sigma", gen.spec.sigma, "Feature noise scale")
      ->check(CLI::NonNegativeNumber);
  cmd_gen->add_option("--noise", gen.spec.noise, "Corruption pattern")
      ->transform(CLI::CheckedTransformer(noise_names, CLI::ignore_case));
  cmd_gen->add_option("--seed", gen.spec.seed, "Root seed");
  cmd_gen->add_option("--out", gen.out, "Output dataset path")->required();
  cmd_gen->add_flag("--force", gen.force, "Replace existing outputs");

  SelectArgs sel;
  CLI::App* cmd_sel = app.add_subcommand("select", "Select clean samples from a dataset");
  cmd_sel->add_option("dataset", sel.dataset, "Dataset container")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_sel->add_option("--out", sel.out, "Clean-index output path (one index per line)")
      ->required();
  cmd_sel->add_flag("--spr", sel.plain_spr,
                    "Plain path selector keeping --keep of the samples (no knockoffs)");
  add_selector_options(cmd_sel, sel.cfg);
  cmd_sel->add_option("--group-size", sel.split.group_size, "Classes per similarity group")
      ->check(CLI::PositiveNumber);
  cmd_sel->add_option("--piece-size", sel.split.piece_size, "Samples per class per piece")
      ->check(CLI::Range(2, 100000000));
  cmd_sel->add_option("--parallelism", sel.split.parallelism, "Concurrent pieces")
      ->check(CLI::PositiveNumber);
  cmd_sel->add_flag("--force", sel.force, "Replace existing outputs");

  BenchArgs bench;
  CLI::App* cmd_bench = app.add_subcommand(
      "bench", "Monte-Carlo false-selection-rate experiment over a (rho, q) grid");
  cmd_bench->add_option("--n", bench.spec.n, "Samples per dataset")
      ->check(CLI::Range(2, 100000000));
  cmd_bench->add_option("--p", bench.spec.p, "Feature dimension")->check(CLI::PositiveNumber);
  cmd_bench->add_option("--c", bench.spec.c, "Classes")->check(CLI::Range(2, 1000000));
  cmd_bench->add_option("--sigma", bench.spec.sigma, "Feature noise scale")
      ->check(CLI::NonNegativeNumber);
  cmd_bench->add_option("--noise", bench.spec.noise, "Corruption pattern")
      ->transform(CLI::CheckedTransformer(noise_names, CLI::ignore_case));
  cmd_bench->add_option("--rho", bench.rhos, "Corrupted fractions to sweep")
      ->check(CLI::Range(0.0, 0.999999));
  cmd_bench->add_option("--q", bench.qs, "Target levels to sweep")
      ->check(CLI::Range(1e-9, 1.0));
  cmd_bench->add_option("--repeats", bench.repeats, "Seeds per cell")
      ->check(CLI::PositiveNumber);
  cmd_bench->add_option("--parallelism", bench.parallelism, "Concurrent seeds")
      ->check(CLI::PositiveNumber);
  cmd_bench->add_option("--mode", bench.cfg.mode, "Threshold level rule")
      ->transform(CLI::CheckedTransformer(mode_names, CLI::ignore_case));
  cmd_bench->add_option("--per-class", bench.cfg.per_class, "Sweep the threshold per class");
  cmd_bench->add_option("--permute", bench.cfg.permute, "Label permutation strategy")
      ->transform(CLI::CheckedTransformer(permute_names, CLI::ignore_case));
  cmd_bench->add_option("--keep", bench.cfg.keep_fraction, "Kept fraction for head fits")
      ->check(CLI::Range(1e-9, 1.0));
  cmd_bench->add_option("--seed", bench.spec.seed, "Base seed; run i uses seed + i");
  cmd_bench->add_option("--out", bench.out, "Per-seed CSV path; summary lands beside it")
      ->required();
  cmd_bench->add_flag("--force", bench.force, "Replace existing outputs");

  DiagnoseArgs diag;
  CLI::App* cmd_diag = app.add_subcommand(
      "diagnose", "Report the noisy-set recovery conditions on a ground-truth dataset");
  cmd_diag->add_option("dataset", diag.dataset, "Dataset container with true labels")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_diag->add_option("--lambda", diag.lambda,
                       "Penalty level; defaults to the recommended lower bound")
      ->check(CLI::NonNegativeNumber);
  cmd_diag->add_option("--eta", diag.eta, "Irrepresentability margin in (0, 1)")
      ->check(CLI::Range(1e-9, 0.999999));
  cmd_diag->add_option("--sigma", diag.sigma, "Residual noise scale for the penalty bound")
      ->check(CLI::NonNegativeNumber);
  cmd_diag->add_option("--out", diag.out, "Optional per-sample irrepresentability CSV");
  cmd_diag->add_flag("--force", diag.force, "Replace existing outputs");

  int exit_code = 0;
  cmd_gen->callback([&] { exit_code = run_generate(gen); });
  cmd_sel->callback([&] { exit_code = run_select(sel); });
  cmd_bench->callback([&] { exit_code = run_bench(bench); });
  cmd_diag->callback([&] { exit_code = run_diagnose(diag); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
