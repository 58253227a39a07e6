#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "spr/bench.hpp"
#include "spr/csv.hpp"
#include "test_support.hpp"

using namespace spr;

TEST_SUITE("bench") {

TEST_CASE("generator plants exactly the requested corruption") {
  SyntheticSpec spec;
  spec.n = 200;
  spec.p = 4;
  spec.c = 5;
  spec.rho = 0.3;
  spec.seed = 3;
  const GeneratedData gen = generate(spec);
  REQUIRE(gen.data.size() == 200);
  REQUIRE(gen.data.has_ground_truth());
  CHECK(gen.beta_star.rows() == 4);
  CHECK(gen.beta_star.cols() == 5);

  int mismatches = 0;
  for (Index i = 0; i < spec.n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    CHECK(gen.data.labels[u] >= 0);
    CHECK(gen.data.labels[u] < 5);
    if (gen.data.labels[u] != gen.data.true_labels[u]) ++mismatches;
  }
  CHECK(mismatches == 60);  // floor(0.3 * 200)

  // The same spec regenerates bit-identically.
  const GeneratedData again = generate(spec);
  CHECK((gen.data.x - again.data.x).norm() == 0.0);
  CHECK(gen.data.labels == again.data.labels);

  // sigma only perturbs the features: labels and coefficients are unchanged.
  SyntheticSpec noiseless = spec;
  noiseless.sigma = 0.0;
  const GeneratedData base = generate(noiseless);
  CHECK(base.data.labels == gen.data.labels);
  CHECK(base.data.true_labels == gen.data.true_labels);
  CHECK((base.beta_star - gen.beta_star).norm() == 0.0);
  CHECK((base.data.x - gen.data.x).norm() > 0.0);

  SyntheticSpec clean = spec;
  clean.rho = 0.0;
  CHECK(generate(clean).data.labels == generate(clean).data.true_labels);

  SyntheticSpec asym = spec;
  asym.noise = NoiseKind::asymmetric;
  const GeneratedData shifted = generate(asym);
  for (Index i = 0; i < spec.n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (shifted.data.labels[u] != shifted.data.true_labels[u])
      CHECK(shifted.data.labels[u] == (shifted.data.true_labels[u] + 1) % 5);
  }
}

TEST_CASE("symmetric corruption is uniform over the other classes") {
  SyntheticSpec spec;
  spec.n = 10000;
  spec.p = 3;
  spec.c = 10;
  spec.rho = 0.4;
  spec.seed = 12;
  const GeneratedData gen = generate(spec);
  // Slot of the observed label within the ordered non-true classes.
  std::vector<int> counts(9, 0);
  int corrupted = 0;
  for (Index i = 0; i < spec.n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const int truth = gen.data.true_labels[u], label = gen.data.labels[u];
    if (label == truth) continue;
    ++corrupted;
    counts[static_cast<std::size_t>(label > truth ? label - 1 : label)]++;
  }
  REQUIRE(corrupted == 4000);
  const double expected = corrupted / 9.0;
  double chi2 = 0.0;
  for (int count : counts) {
    const double d = count - expected;
    chi2 += d * d / expected;
  }
  // df 8: mean 8, sd 4; stay within 3 sigma of the mean.
  CHECK(chi2 < 8.0 + 3.0 * 4.0);
}

TEST_CASE("generator rejects invalid parameters") {
  SyntheticSpec spec;
  spec.c = 1;
  CHECK_THROWS_AS((void)generate(spec), invalid_config_error);
  spec.c = 10;
  spec.n = 5;
  CHECK_THROWS_AS((void)generate(spec), invalid_config_error);
  spec.n = 100;
  spec.rho = 1.0;
  CHECK_THROWS_AS((void)generate(spec), invalid_config_error);
  spec.rho = 0.2;
  spec.sigma = -0.1;
  CHECK_THROWS_AS((void)generate(spec), invalid_config_error);
  spec.sigma = 0.1;
  spec.p = 0;
  CHECK_THROWS_AS((void)generate(spec), invalid_config_error);
}

TEST_CASE("quality metrics on pinned examples") {
  const std::vector<bool> mask{true, true, true, false, true, true};
  const QualityReport rep = quality({1, 2, 3}, mask);
  CHECK(rep.selected == 3);
  CHECK(rep.fsr == doctest::Approx(1.0 / 3.0));
  CHECK(*rep.recall == doctest::Approx(2.0 / 5.0));
  CHECK(*rep.f1 == doctest::Approx(0.5));  // precision 2/3, recall 2/5

  const QualityReport none = quality({}, mask);
  CHECK(none.fsr == 0.0);
  CHECK(*none.recall == 0.0);
  CHECK(*none.f1 == 0.0);

  // Selecting everything on a 40%-noisy set: fsr 0.4, recall 1, f1 0.75.
  std::vector<bool> forty(10, true);
  for (std::size_t i = 0; i < 4; ++i) forty[i] = false;
  std::vector<Index> all;
  for (Index i = 0; i < 10; ++i) all.push_back(i);
  const QualityReport bulk = quality(all, forty);
  CHECK(bulk.fsr == doctest::Approx(0.4));
  CHECK(*bulk.recall == doctest::Approx(1.0));
  CHECK(*bulk.f1 == doctest::Approx(0.75));

  // No clean samples at all: recall and f1 are undefined.
  const QualityReport hopeless = quality({0}, {false, false});
  CHECK(hopeless.fsr == 1.0);
  CHECK(!hopeless.recall.has_value());
  CHECK(!hopeless.f1.has_value());

  CHECK_THROWS_AS((void)quality({9}, mask), dimension_error);
}

TEST_CASE("f1 is the harmonic mean of precision and recall") {
  std::mt19937_64 eng(51);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<bool> mask(30);
    std::vector<Index> selected;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = coin(eng) == 1;
      if (coin(eng)) selected.push_back(static_cast<Index>(i));
    }
    const QualityReport rep = quality(selected, mask);
    if (!rep.f1) continue;
    const double precision = 1.0 - rep.fsr;
    const double denom = precision + *rep.recall;
    const double expect = denom > 0.0 ? 2.0 * precision * *rep.recall / denom : 0.0;
    CHECK(*rep.f1 == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("recovery diagnostics: orthogonal support has no interference") {
  const Index n = 8;
  MatrixXd features = MatrixXd::Zero(n, 1);
  features(n - 1, 0) = 1.0;  // annihilator is identity off the last coordinate
  MatrixXd gamma = MatrixXd::Zero(n, 3);
  gamma(0, 0) = 1.0;
  gamma(1, 0) = -1.0;

  const TheoremOneDiagnostics diag = theorem1_diagnostics(features, gamma, 0.1, 0.5, 0.001);
  CHECK(diag.c_min == doctest::Approx(1.0));
  CHECK(diag.irr_max == doctest::Approx(0.0));
  CHECK(diag.mu == doctest::Approx(1.0));
  CHECK(diag.gamma_min == doctest::Approx(1.0));
  CHECK(diag.h == doctest::Approx(0.1 * 0.5 + 0.1));
  CHECK(diag.lambda_ok);
  CHECK(diag.conditions_hold[0]);
  CHECK(diag.conditions_hold[1]);
  CHECK(diag.conditions_hold[2]);
  REQUIRE(diag.irr_values.size() == 6);  // the six fully clean rows
  for (double v : diag.irr_values) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("recovery diagnostics: a shared column defeats the interference bound") {
  const Index n = 6;
  MatrixXd features(n, 1);
  features.setZero();
  features(0, 0) = 1.0 / std::sqrt(2.0);
  features(1, 0) = -1.0 / std::sqrt(2.0);
  // The annihilator maps e0 and e1 to the same column, so the clean sample 1
  // interferes with the support at weight exactly 1.
  MatrixXd gamma = MatrixXd::Zero(n, 2);
  gamma(0, 0) = 2.0;

  const double lambda = 0.05, eta = 0.3;
  const TheoremOneDiagnostics diag = theorem1_diagnostics(features, gamma, lambda, eta, 0.0);
  CHECK(diag.c_min == doctest::Approx(0.5));
  CHECK(diag.irr_max == doctest::Approx(1.0));
  CHECK(diag.mu == doctest::Approx(1.0));
  CHECK(diag.h == doctest::Approx(lambda * eta / std::sqrt(0.5) + 2.0 * lambda));
  CHECK(diag.conditions_hold[0]);
  CHECK(!diag.conditions_hold[1]);
  CHECK(diag.conditions_hold[2]);
  REQUIRE(diag.irr_values.size() == 5);
  CHECK(diag.irr_values[0] == doctest::Approx(1.0));
  CHECK(diag.irr_values[1] == doctest::Approx(0.0));
}

TEST_CASE("recovery diagnostics recompute from first principles") {
  std::mt19937_64 eng(52);
  const Index n = 12;
  const int c = 3;
  const MatrixXd features = oracle::random_matrix(n, 2, eng);
  MatrixXd gamma = MatrixXd::Zero(n, c);
  gamma(2, 0) = 1.5;
  gamma(7, 0) = -1.5;
  gamma(4, 1) = -2.0;
  const double lambda = 0.2, eta = 0.4, sigma = 0.05;

  const TheoremOneDiagnostics diag = theorem1_diagnostics(features, gamma, lambda, eta, sigma);

  // Independent evaluation of every reported quantity.
  const MatrixXd m = MatrixXd::Identity(n, n) -
                     features * (features.transpose() * features).ldlt().solve(
                                    features.transpose());
  double c_min = 0.0, h_inf = 0.0;
  bool first = true;
  std::vector<MatrixXd> xk(c);
  std::vector<std::vector<Index>> blocks(c);
  for (int k = 0; k < c; ++k) {
    for (Index i = 0; i < n; ++i)
      if (gamma(i, k) != 0.0) blocks[static_cast<std::size_t>(k)].push_back(i);
    const auto& rows = blocks[static_cast<std::size_t>(k)];
    if (rows.empty()) continue;
    MatrixXd cols(n, static_cast<Index>(rows.size()));
    VectorXd sign(static_cast<Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
      cols.col(static_cast<Index>(t)) = m.col(rows[t]);
      sign(static_cast<Index>(t)) = gamma(rows[t], k) > 0.0 ? 1.0 : -1.0;
    }
    xk[static_cast<std::size_t>(k)] = cols;
    const MatrixXd gram = cols.transpose() * cols;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    c_min = first ? eig.eigenvalues().minCoeff()
                  : std::min(c_min, eig.eigenvalues().minCoeff());
    first = false;
    h_inf = std::max(h_inf, gram.ldlt().solve(sign).cwiseAbs().maxCoeff());
  }
  double mu = 0.0;
  for (Index j = 0; j < n; ++j)
    if ((gamma.row(j).array() == 0.0).any()) mu = std::max(mu, m.col(j).squaredNorm());
  double irr_max = 0.0;
  for (Index j = 0; j < n; ++j)
    for (int k = 0; k < c; ++k) {
      if (gamma(j, k) != 0.0 || blocks[static_cast<std::size_t>(k)].empty()) continue;
      const MatrixXd& cols = xk[static_cast<std::size_t>(k)];
      const VectorXd weights =
          (cols.transpose() * cols).ldlt().solve(cols.transpose() * m.col(j));
      irr_max = std::max(irr_max, weights.cwiseAbs().sum());
    }

  CHECK(diag.c_min == doctest::Approx(c_min).epsilon(1e-10));
  CHECK(diag.mu == doctest::Approx(mu).epsilon(1e-10));
  CHECK(diag.irr_max == doctest::Approx(irr_max).epsilon(1e-10));
  CHECK(diag.gamma_min == doctest::Approx(1.5));
  CHECK(diag.h ==
        doctest::Approx(lambda * eta / std::sqrt(c_min * mu) + lambda * h_inf).epsilon(1e-10));
  const double lower =
      2.0 * sigma * std::sqrt(mu) / eta * std::sqrt(std::log(static_cast<double>(c * n)));
  CHECK(diag.lambda_lower_bound == doctest::Approx(lower).epsilon(1e-10));
  CHECK(diag.lambda_ok == (lambda >= lower));
  CHECK(diag.conditions_hold[0] == (c_min > 0.0));
  CHECK(diag.conditions_hold[1] == (irr_max <= 1.0 - eta));
  CHECK(diag.conditions_hold[2] == (1.5 > diag.h));
}

TEST_CASE("recovery diagnostics report a singular support without throwing") {
  const Index n = 6;
  MatrixXd features(n, 1);
  features.setZero();
  features(0, 0) = 1.0 / std::sqrt(2.0);
  features(1, 0) = -1.0 / std::sqrt(2.0);
  MatrixXd gamma = MatrixXd::Zero(n, 2);
  gamma(0, 0) = 1.0;
  gamma(1, 0) = 1.0;  // same annihilator column twice: singular block

  const TheoremOneDiagnostics diag = theorem1_diagnostics(features, gamma, 0.1, 0.5, 0.1);
  CHECK(diag.c_min == 0.0);
  CHECK(std::isinf(diag.irr_max));
  CHECK(std::isinf(diag.h));
  CHECK(!diag.lambda_ok);
  CHECK(!diag.conditions_hold[0]);
  CHECK(!diag.conditions_hold[1]);
  CHECK(!diag.conditions_hold[2]);
}

TEST_CASE("recovery diagnostics validate inputs") {
  const MatrixXd features = MatrixXd::Identity(5, 1);
  const MatrixXd zero = MatrixXd::Zero(5, 2);
  CHECK_THROWS_AS((void)theorem1_diagnostics(features, zero, 0.1, 0.5, 0.1),
                  degenerate_input_error);
  MatrixXd gamma = zero;
  gamma(2, 0) = 1.0;
  CHECK_THROWS_AS((void)theorem1_diagnostics(features, gamma, 0.0, 0.5, 0.1),
                  invalid_config_error);
  CHECK_THROWS_AS((void)theorem1_diagnostics(features, gamma, 0.1, 1.0, 0.1),
                  invalid_config_error);
  CHECK_THROWS_AS((void)theorem1_diagnostics(features, gamma, 0.1, 0.5, -0.1),
                  invalid_config_error);
  CHECK_THROWS_AS((void)theorem1_diagnostics(features, MatrixXd::Ones(4, 2), 0.1, 0.5, 0.1),
                  dimension_error);
}

TEST_CASE("experiment rows are seed-addressable and clean data has zero error") {
  SyntheticSpec spec;
  spec.n = 120;
  spec.p = 3;
  spec.c = 3;
  spec.rho = 0.0;
  spec.seed = 500;
  SelectorConfig cfg;
  cfg.target_q = 0.3;

  const FsrExperiment a = fsr_experiment(spec, cfg, 3, 1);
  const FsrExperiment b = fsr_experiment(spec, cfg, 3, 2);
  REQUIRE(a.rows.size() == 3);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].seed == 500 + i);
    CHECK(a.rows[i].fsr == 0.0);  // no noisy samples exist to select
    CHECK(a.rows[i].recall.has_value());
    // Thread count must not change any reported number.
    CHECK(a.rows[i].fsr == b.rows[i].fsr);
    CHECK(a.rows[i].realized_q == b.rows[i].realized_q);
    CHECK(a.rows[i].f1 == b.rows[i].f1);
    CHECK(a.rows[i].fallback_used == b.rows[i].fallback_used);
  }
  CHECK(a.summary.runs == 3);
  CHECK(a.summary.fsr_mean == 0.0);
  const double mean_f1 = (*a.rows[0].f1 + *a.rows[1].f1 + *a.rows[2].f1) / 3.0;
  CHECK(*a.summary.f1_mean == doctest::Approx(mean_f1).epsilon(1e-12));
  CHECK_THROWS_AS((void)fsr_experiment(spec, cfg, 0, 1), invalid_config_error);
}

TEST_CASE("csv writers pin the schema") {
  FsrRow row;
  row.seed = 7;
  row.spec.n = 100;
  row.spec.p = 10;
  row.spec.c = 5;
  row.spec.noise = NoiseKind::symmetric;
  row.spec.rho = 0.25;
  row.spec.sigma = 0.1;
  row.mode = Mode::nominal;
  row.target_q = 0.3;
  row.realized_q = std::nullopt;  // fallback rows leave the field empty
  row.fsr = 0.125;
  row.recall = 0.5;
  row.f1 = 0.6;
  row.fallback_used = true;
  row.wall_ms = 1.5;

  std::ostringstream os;
  write_rows_csv(os, {row});
  CHECK(os.str() ==
        "seed,n,p,c,noise_kind,rho,sigma,mode,target_q,realized_q,fsr,recall,f1,"
        "fallback_used,wall_ms\n"
        "7,100,10,5,symmetric,0.25,0.1,nominal,0.3,,0.125,0.5,0.6,true,1.5\n");

  FsrSummary summary;
  summary.runs = 2;
  summary.fsr_mean = 0.05;
  summary.fsr_sd = 0.01;
  summary.fallback_rate = 0.5;
  summary.wall_ms_total = 3.25;
  std::ostringstream ss;
  write_summary_csv(ss, row.spec, Mode::theorem_corrected, 0.3, summary);
  CHECK(ss.str() ==
        "n,p,c,noise_kind,rho,sigma,mode,target_q,runs,fsr_mean,fsr_sd,realized_q_mean,"
        "realized_q_sd,recall_mean,recall_sd,f1_mean,f1_sd,fallback_rate,wall_ms_total\n"
        "100,10,5,symmetric,0.25,0.1,theorem,0.3,2,0.05,0.01,,,,,,,0.5,3.25\n");

  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a,\"b\"") == "\"a,\"\"b\"\"\"");
}

}  // TEST_SUITE
