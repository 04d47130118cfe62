#ifndef ADASTAB_EXPERIMENT_HPP
#define ADASTAB_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adastab/diagnostics.hpp"
#include "adastab/noise.hpp"
#include "adastab/objective.hpp"
#include "adastab/vector.hpp"

namespace adastab {

enum class OptimizerKind { adagrad_norm, rmsprop, sgd };

/// Test-only hook: multiplies the recorded accumulator of one row by
/// (1 + scale) before checkers and sinks see it, so checker failure paths
/// can be exercised end to end.
struct FaultInjection {
  std::int64_t run = 0;
  std::int64_t step = 1;
  double scale = 1e-6;
};

struct ExperimentConfig {
  std::string problem_id = "quadratic";
  int dim = 2;
  std::map<std::string, double> problem_params;

  std::string noise_id = "deterministic";
  std::map<std::string, double> noise_params;

  OptimizerKind optimizer = OptimizerKind::adagrad_norm;
  double alpha0 = 1.0;
  double s0 = 1.0;
  double beta1 = 0.9;
  double eps = 1e-8;
  double v0 = 1e-3;
  double sgd_lr = 0.1;

  std::vector<double> theta1;  // empty: zeros(dim)

  std::int64_t horizon = 1000;
  std::int64_t runs = 1;
  std::uint64_t seed = 1;
  std::vector<std::int64_t> checkpoints;
  std::set<std::string> checks;  // empty set = all applicable
  std::optional<double> delta_tau_override;
  double sigma0_floor = 1.0;
  double lemsu_delta = 0.5;
  double as_threshold = 0.3;  // |grad| level for the a.s. convergence probe
  std::string output;           // directory; empty = no persistence
  std::int64_t record_runs = -1;  // persist records for run_id < record_runs; -1 = all
  int threads = 0;                // 0 = automatic
  std::optional<FaultInjection> inject;
};

/// Names understood by ExperimentConfig::checks.
const std::set<std::string>& known_check_names();

/// Validates ranges and cross-field consistency (checkpoint bounds, noise /
/// problem pairing, declared envelope floors). Throws std::invalid_argument
/// naming the offending field.
void validate_config(const ExperimentConfig& cfg);

struct CheckpointStat {
  std::int64_t n = 0;
  double grad_sq = 0.0;   // |grad g(theta_n)|^2 at the pre-step iterate
  double sup_g = 0.0;     // max_{k <= n} g(theta_k)
};

struct RunSummary {
  std::int64_t run_id = 0;
  bool diverged = false;
  std::int64_t steps_completed = 0;
  double sup_g = 0.0;
  double final_grad_norm = 0.0;
  double tail_mean_grad_sq = 0.0;  // mean |grad|^2 over the last 10% of steps
  double tail_sup_grad_norm = 0.0; // sup |grad| over the last 10% of steps
  double sigma_gamma_final = 0.0;
  std::int64_t excursion_count = 0;
  std::int64_t reached_2delta_count = 0;
  std::map<std::string, std::int64_t> checker_violations;
  GammaSeriesResult gamma_series;  // AdaGrad runs
  RmsPropCheckReport rms_report;   // RMSProp runs
  double lemsu_sum = 0.0;
  double ghat1 = 0.0;
  std::vector<CheckpointStat> checkpoints;
};

struct BatchResult {
  ExperimentConfig config;
  TheoryConstants constants;
  double sigma0_eff = 0.0;
  double sigma1 = 0.0;
  std::vector<RunSummary> runs;
  std::int64_t diverged_runs = 0;
  std::int64_t total_checker_violations = 0;
};

/// Runs one seeded trajectory; records are streamed to on_record when it is
/// non-null (bounded memory), checkers run online.
RunSummary run_trajectory(
    const ExperimentConfig& cfg, const Objective& obj, const NoiseModel& noise,
    const TheoryConstants& constants, std::int64_t run_id,
    const std::function<void(const TrajectoryRecord&)>& on_record = nullptr);

/// Runs the whole batch, optionally in parallel; results are merged in
/// run_id order so the outcome is independent of the worker count. Persists
/// records and the batch summary when cfg.output is set.
BatchResult run_batch(const ExperimentConfig& cfg);

struct StabilityEstimate {
  double mean_sup_g = 0.0;
  double ci95_half_width = 0.0;
  double max_sup_g = 0.0;
  std::int64_t used_runs = 0;
  std::int64_t excluded_diverged = 0;
};

StabilityEstimate estimate_stability(const std::vector<RunSummary>& runs);

struct MseCurvePoint {
  std::int64_t n = 0;
  double mean_grad_sq = 0.0;
  double ci95_half_width = 0.0;
};

std::vector<MseCurvePoint> estimate_mse_curve(
    const std::vector<RunSummary>& runs);

/// Fraction of non-diverged runs whose sup of |grad| over the last 10% of
/// steps is strictly below the threshold.
double as_convergence_probe(const std::vector<RunSummary>& runs,
                            double threshold);

/// CSV record schema (exact column order; RMSProp runs append the extras).
std::string record_csv_header(bool rms);
std::string record_csv_row(const TrajectoryRecord& rec);

/// Parses a record file produced by persist; throws std::invalid_argument on
/// malformed headers or rows.
std::vector<TrajectoryRecord> parse_record_csv(const std::string& text);

/// Writes run_#####.csv files (per record_runs) plus summary.json under
/// cfg.output. Byte-stable: identical inputs produce identical bytes.
void persist_batch(const BatchResult& batch);

/// Serialized batch summary (JSON text used by persist_batch).
std::string batch_summary_json(const BatchResult& batch);

}  // namespace adastab

#endif  // ADASTAB_EXPERIMENT_HPP
