#ifndef ADASTAB_DIAGNOSTICS_HPP
#define ADASTAB_DIAGNOSTICS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adastab/noise.hpp"
#include "adastab/objective.hpp"
#include "adastab/optimizer.hpp"
#include "adastab/rng.hpp"
#include "adastab/vector.hpp"

namespace adastab {

/// One instrumented step. Row n (1-based) describes the transition from the
/// pre-step iterate theta_n to theta_{n+1}:
///   g, grad_norm    objective and true gradient norm at theta_n
///   sgrad_norm      oracle draw norm |grad g(theta_n, xi_n)|
///   s_prev, s       accumulator before/after (AdaGrad: scalar S; RMSProp:
///                   the auxiliary per-coordinate sums S_n^(i) totalled)
///   zeta            |grad|^2 / sqrt(S_{n-1})        (AdaGrad)
///                   sum_i grad_i^2 alpha_{n-1}^(i)  (RMSProp)
///   gamma           |draw|^2 / S_n
///   lambda          |draw|^2 / (sqrt(S_n)(sqrt(S_{n-1}) + sqrt(S_n)))
///   ghat            Lyapunov value at theta_n
///   step_norm       |theta_{n+1} - theta_n|
///   sigma_gamma     running sum of step sizes up to n
/// RMSProp rows additionally carry per-coordinate extremes of v and of the
/// effective step, and min_i n v_n^(i) / S_n^(i).
struct TrajectoryRecord {
  std::int64_t n = 0;
  double g = 0, grad_norm = 0, sgrad_norm = 0;
  double s_prev = 0, s = 0;
  double zeta = 0, gamma = 0, lambda = 0, ghat = 0;
  double step_norm = 0, sigma_gamma = 0;
  bool rms = false;
  double v_min = 0, v_max = 0, alpha_min = 0, alpha_max = 0,
         nv_over_s_min = 0;
};

/// Derived constants of the descent machinery.
struct TheoryConstants {
  double smoothness = 0, sigma0 = 0, sigma1 = 0, alpha0 = 0, s0 = 0;
  double c_gamma1 = 0;  // alpha0 sigma1 / (2 sqrt(S0)) + L alpha0^2 / 2
  double c_gamma2 = 0;  // sigma0 (2 sigma0 + 1) alpha0^3 L^2 / 2
  double h_a = 0, h_b = 0;  // h(x) = h_a sqrt(x) + h_b
  double c0 = 0;            // positive root of x/2 = h(x)
  double delta_tau = 0;     // filled by compute_delta_tau
  double m_const = 0;       // filled by compute_M
  double r1 = 0;            // min(beta1, 1 - beta1) when beta1 given
};

TheoryConstants compute_constants(double smoothness, double sigma0,
                                  double sigma1, double alpha0, double s0,
                                  std::optional<double> beta1 = std::nullopt);

double lyapunov_h(const TheoryConstants& c, double x);

/// M = 4 y1 ghat1 / alpha0 + 12 C_{G,1} / (alpha0 sqrt(S0))
///     + 8 C_{G,2} / (alpha0 S0),  y1 = 1 / sqrt(S0).
double compute_M(double ghat1, double alpha0, double s0,
                 const TheoryConstants& c);

/// max(2 ghat1, C0, c_hat_g) with c_hat_g = sublevel bound + sigma0 alpha0
/// delta_tilde^2 / (2 sqrt(S0)) when the objective ships one; an explicit
/// override wins when provided.
double compute_delta_tau(double ghat1, const TheoryConstants& c,
                         std::optional<double> c_hat_g,
                         std::optional<double> override_value = std::nullopt);

/// AdaGrad Lyapunov value at the pre-step iterate.
double adagrad_ghat(double g, double grad_norm, double s_prev, double sigma0,
                    double alpha0);

struct CheckResult {
  bool pass = true;
  double residual = 0.0;
};

/// Step-size identity on one row: 1/sqrt(S_{n-1}) - 1/sqrt(S_n) against
/// |draw|^2 / (sqrt(S_{n-1}) sqrt(S_n) (sqrt(S_{n-1}) + sqrt(S_n))). Both
/// sides are evaluated over the common denominator so the comparison is not
/// polluted by cancellation; the tolerance is 1e-12 relative plus one ulp of
/// the recorded accumulator (records round S to a single double).
CheckResult check_step_identity(const TrajectoryRecord& rec);

/// Smoothness descent inequality for one step: needs the true-gradient /
/// draw inner product and the objective value at the next iterate.
CheckResult check_smooth_descent(const TrajectoryRecord& rec,
                                 double grad_dot_draw, double g_next,
                                 double smoothness, double alpha0);

struct GammaSeriesResult {
  double sum1 = 0, bound1 = 0;  // sum Gamma_n / sqrt(S_n)     < 2/sqrt(S0)
  double sum2 = 0, bound2 = 0;  // sum Gamma_n / sqrt(S_{n-1}) <= 3/sqrt(S0)
  double sum3 = 0, bound3 = 0;  // sum Gamma_n / (sqrt(S_{n-1}) sqrt(S_n)) <= 2/S0
  bool pass = false;
};

GammaSeriesResult check_gamma_series(const std::vector<TrajectoryRecord>& rows,
                                     double s0);

/// Adjacent-iterate Lyapunov bound: ghat_{n+1} - ghat_n <= h(ghat_n), with
/// tolerance 1e-9 (1 + |ghat_n|).
CheckResult check_adjacent_lyapunov(const TrajectoryRecord& rec,
                                    const TrajectoryRecord& next,
                                    const TheoryConstants& c);

/// One excursion of the Lyapunov series above delta_tau.
struct Excursion {
  std::int64_t tau_start = 0;  // first k with ghat > delta_tau
  std::int64_t tau_mid = 0;    // first k >= tau_start with ghat <= delta_tau
                               // or ghat > 2 delta_tau
  std::int64_t tau_end = 0;    // first k >= tau_mid with ghat <= delta_tau
  double peak_ghat = 0.0;
  bool reached_2delta = false;  // tau_mid < tau_end
  bool truncated = false;       // horizon ended inside the excursion
};

/// Stopping-time segmentation of a Lyapunov series (1-based indices).
/// Requires delta_tau > ghat(theta_1); indices beyond the horizon are
/// truncated at T and flagged.
std::vector<Excursion> partition_stopping_times(
    const std::vector<double>& ghat_series, double delta_tau);

/// Streaming form of the segmentation; feeds one ghat value at a time.
class ExcursionTracker {
 public:
  explicit ExcursionTracker(double delta_tau);
  void observe(std::int64_t n, double ghat);
  /// Emits the trailing open excursion (if any) with the truncated flag.
  std::vector<Excursion> finish();
  const std::vector<Excursion>& excursions() const { return excursions_; }
  std::int64_t band_violations() const { return band_violations_; }

 private:
  enum class Phase { below, band1, above };
  double delta_tau_;
  Phase phase_ = Phase::below;
  std::int64_t first_n_ = -1;
  std::int64_t last_n_ = 0;
  Excursion open_{};
  std::vector<Excursion> excursions_;
  std::int64_t band_violations_ = 0;
  bool finished_ = false;
};

/// Band conditions over a completed partition: delta_tau < ghat <= 2 delta_tau
/// on [tau_start, tau_mid) and ghat <= delta_tau on [tau_end, next tau_start).
/// Returns the number of offending rows.
std::int64_t check_excursion_bands(const std::vector<Excursion>& excursions,
                                   const std::vector<double>& ghat_series,
                                   double delta_tau);

/// Frozen-state resampling estimate of the martingale term: at a fixed
/// (theta, S_prev), K fresh oracle draws split into two halves; the first
/// half estimates the conditional mean of
///   W = <grad, draw>/sqrt(S) + sigma1/(2 sqrt(S0)) Gamma^2
///       + sigma0/2 zeta Lambda^2,
/// the second half averages X_hat = E[W] - W. Exactly enumerable oracles
/// (deterministic, minibatch) use the closed-form conditional mean instead.
struct MdsEstimate {
  double mean = 0.0;
  double se = 0.0;
  double cond_mean = 0.0;     // the E[W|F] value used
  bool enumerated = false;    // cond_mean computed exactly
};

MdsEstimate estimate_mds_terms(const Objective& obj, const NoiseModel& noise,
                               const Vector& theta, double s_prev, double s0,
                               double sigma0_eff, int resamples,
                               RandomStream& stream,
                               bool allow_enumeration = true);

/// Monte Carlo check of the indicator-gated gradient-energy sum: per-run
/// statistics Q_r = sum_n 1{grad_norm > delta} sgrad^2 / S_{n-1} against the
/// bound (sigma0 + sigma1/delta^2) M.
struct LemSuResult {
  double estimate = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool pass = false;
};

LemSuResult check_lem_su(const std::vector<double>& per_run_sums, double delta,
                         const TheoryConstants& c);

/// Pathwise RMSProp structure report over one trajectory.
struct RmsPropCheckReport {
  std::int64_t recursion_violations = 0;
  double recursion_max_residual = 0.0;
  std::int64_t alpha_monotone_violations = 0;
  std::int64_t nv_bound_violations = 0;
  double nv_over_s_min = 0.0;
  std::int64_t omega_violations = 0;
  double omega_margin_min = 0.0;     // min of rhs - lhs over the path
  double bounded_v_stat = 0.0;       // sup_n sum_i v_n^(i) / ln^2(n+1)
  double zeta_halfpow_sum = 0.0;     // sum_n zeta(n) / sqrt(n) (reported)
  bool pass = false;
};

/// Record-level shadow of the RMSProp lemmas for offline re-verification.
/// Per-coordinate v values are not persisted, so this re-checks what the
/// rows carry: min_i n v / S >= r1, non-increasing alpha extremes, and the
/// omega partial-sum inequality rebuilt from (sgrad, S) columns.
struct RmsRecordCheck {
  std::int64_t nv_bound_violations = 0;
  std::int64_t alpha_monotone_violations = 0;
  std::int64_t omega_violations = 0;
  bool pass = false;
};

RmsRecordCheck recheck_rmsprop_records(
    const std::vector<TrajectoryRecord>& rows, double r1);

}  // namespace adastab

#endif  // ADASTAB_DIAGNOSTICS_HPP
