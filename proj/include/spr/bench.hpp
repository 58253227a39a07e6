#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "spr/knockoffs.hpp"
#include "spr/types.hpp"

// Synthetic-data harness: generator with planted label noise, selection
// quality metrics, recovery-condition diagnostics, and the Monte-Carlo
// false-selection-rate experiment driver.
namespace spr {

enum class NoiseKind { symmetric, asymmetric };

struct SyntheticSpec {
  Index n = 1000;
  Index p = 10;
  int c = 10;
  NoiseKind noise = NoiseKind::symmetric;
  double rho = 0.2;    // corrupted fraction, floor(rho * n) samples
  double sigma = 0.1;  // residual noise scale, injected through the features
  std::uint64_t seed = 0;
};

struct GeneratedData {
  LabeledDataset data;
  MatrixXd beta_star;  // p x c generating coefficients
};

// Draws X0 ~ N(0,1), beta* ~ N(0,1)/sqrt(p); true label = argmax of the
// noiseless scores x_i^T beta*; exactly floor(rho*n) uniformly chosen samples
// get a corrupted observed label (symmetric: uniform over the other c-1;
// asymmetric: next class mod c).  Returned features are X0 + sigma * G, so
// sigma sets the scale of the per-class response residuals.
[[nodiscard]] GeneratedData generate(const SyntheticSpec& spec);

struct QualityReport {
  Index selected = 0;
  double fsr = 0.0;               // selected-and-noisy / max(selected, 1)
  std::optional<double> recall;   // selected-and-clean / clean; none if no clean
  std::optional<double> f1;       // harmonic mean of (1 - fsr) and recall
};

[[nodiscard]] QualityReport quality(const std::vector<Index>& selected,
                                    const std::vector<bool>& clean_mask);

// Recovery conditions of the vectorized row-sparse program on an instance
// with known mean-shift gamma*.  The design is I_c (x) M with M the
// annihilator of `features`; support S is the nonzero entries of gamma*.
struct TheoremOneDiagnostics {
  double c_min = 0.0;     // min eigenvalue over per-class support Grams
  double irr_max = 0.0;   // max l1 row norm of the irrepresentability matrix
  double mu = 0.0;        // max squared column norm outside the support
  double gamma_min = 0.0; // min |gamma*| over the support
  double h = 0.0;         // required signal size at (lambda, eta)
  double lambda = 0.0;
  double eta = 0.0;
  double lambda_lower_bound = 0.0;  // 2 sigma sqrt(mu)/eta * sqrt(log(c n))
  bool lambda_ok = false;
  std::vector<double> irr_values;   // per clean sample: max l1 over its classes
  std::array<bool, 3> conditions_hold{false, false, false};
};

[[nodiscard]] TheoremOneDiagnostics theorem1_diagnostics(const MatrixXd& features,
                                                         const MatrixXd& gamma_star,
                                                         double lambda, double eta,
                                                         double sigma);

struct FsrRow {
  std::uint64_t seed = 0;  // root seed of the run
  SyntheticSpec spec;
  Mode mode = Mode::nominal;
  double target_q = 0.5;
  std::optional<double> realized_q;
  double fsr = 0.0;
  std::optional<double> recall;
  std::optional<double> f1;
  bool fallback_used = false;
  double wall_ms = 0.0;
};

struct FsrSummary {
  int runs = 0;
  double fsr_mean = 0.0, fsr_sd = 0.0;
  std::optional<double> realized_q_mean, realized_q_sd;
  std::optional<double> recall_mean, recall_sd;
  std::optional<double> f1_mean, f1_sd;
  double fallback_rate = 0.0;
  double wall_ms_total = 0.0;
};

struct FsrExperiment {
  std::vector<FsrRow> rows;  // one per seed, ordered by seed index
  FsrSummary summary;
};

// Runs generate -> knockoff_spr for root seeds base.seed, base.seed + 1, ...
// base.seed + repeats - 1 on a worker pool; rows land in seed order whatever
// the parallelism.
[[nodiscard]] FsrExperiment fsr_experiment(const SyntheticSpec& base, const SelectorConfig& cfg,
                                           int repeats, int parallelism);

// Pinned per-seed CSV schema (header included):
// seed,n,p,c,noise_kind,rho,sigma,mode,target_q,realized_q,fsr,recall,f1,fallback_used,wall_ms
void write_rows_csv(std::ostream& os, const std::vector<FsrRow>& rows, bool header = true);

// One summary row per experiment cell.
void write_summary_csv(std::ostream& os, const SyntheticSpec& spec, Mode mode, double target_q,
                       const FsrSummary& summary, bool header = true);

[[nodiscard]] const char* to_string(NoiseKind kind);
[[nodiscard]] const char* to_string(Mode mode);

}  // namespace spr
