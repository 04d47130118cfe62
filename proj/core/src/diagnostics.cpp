#include "adastab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace adastab {

TheoryConstants compute_constants(double smoothness, double sigma0,
                                  double sigma1, double alpha0, double s0,
                                  std::optional<double> beta1) {
  if (smoothness <= 0 || alpha0 <= 0 || s0 <= 0) {
    throw std::invalid_argument(
        "compute_constants: smoothness, alpha0, s0 must be > 0");
  }
  if (sigma0 <= 0) {
    // The Lyapunov weight divides by sigma0; a zero-variance oracle must
    // declare sigma0 = 1 (or the config floor) explicitly.
    throw std::invalid_argument("compute_constants: sigma0 must be > 0");
  }
  if (sigma1 < 0) {
    throw std::invalid_argument("compute_constants: sigma1 must be >= 0");
  }
  TheoryConstants c;
  c.smoothness = smoothness;
  c.sigma0 = sigma0;
  c.sigma1 = sigma1;
  c.alpha0 = alpha0;
  c.s0 = s0;
  const double rs0 = std::sqrt(s0);
  c.c_gamma1 = alpha0 * sigma1 / (2.0 * rs0) + smoothness * alpha0 * alpha0 / 2.0;
  c.c_gamma2 = sigma0 * (2.0 * sigma0 + 1.0) * alpha0 * alpha0 * alpha0 *
               smoothness * smoothness / 2.0;
  const double w = 1.0 + sigma0 * alpha0 * smoothness / rs0;
  c.h_a = std::sqrt(2.0 * smoothness) * w * alpha0;
  c.h_b = w * smoothness * alpha0 * alpha0 / 2.0;
  // x/2 = h_a sqrt(x) + h_b; substituting u = sqrt(x) gives the positive root
  // u = h_a + sqrt(h_a^2 + 2 h_b).
  const double u = c.h_a + std::sqrt(c.h_a * c.h_a + 2.0 * c.h_b);
  c.c0 = u * u;
  if (beta1) {
    if (*beta1 <= 0.0 || *beta1 >= 1.0) {
      throw std::invalid_argument("compute_constants: beta1 must be in (0,1)");
    }
    c.r1 = std::min(*beta1, 1.0 - *beta1);
  }
  return c;
}

double lyapunov_h(const TheoryConstants& c, double x) {
  return c.h_a * std::sqrt(std::max(x, 0.0)) + c.h_b;
}

double compute_M(double ghat1, double alpha0, double s0,
                 const TheoryConstants& c) {
  if (ghat1 < 0 || alpha0 <= 0 || s0 <= 0) {
    throw std::invalid_argument("compute_M: bad inputs");
  }
  const double y1 = 1.0 / std::sqrt(s0);
  return 4.0 * y1 * ghat1 / alpha0 + 12.0 * c.c_gamma1 / (alpha0 * std::sqrt(s0)) +
         8.0 * c.c_gamma2 / (alpha0 * s0);
}

double compute_delta_tau(double ghat1, const TheoryConstants& c,
                         std::optional<double> c_hat_g,
                         std::optional<double> override_value) {
  if (override_value) {
    if (*override_value <= ghat1) {
      throw std::invalid_argument(
          "delta_tau override must exceed ghat(theta_1)");
    }
    return *override_value;
  }
  double dt = std::max(2.0 * ghat1, c.c0);
  if (c_hat_g) dt = std::max(dt, *c_hat_g);
  return dt;
}

double adagrad_ghat(double g, double grad_norm, double s_prev, double sigma0,
                    double alpha0) {
  return g + 0.5 * sigma0 * alpha0 * grad_norm * grad_norm / std::sqrt(s_prev);
}

CheckResult check_step_identity(const TrajectoryRecord& rec) {
  const double sp = rec.s_prev;
  const double s = rec.s;
  const double g2 = rec.sgrad_norm * rec.sgrad_norm;
  CheckResult r;
  if (sp <= 0 || s < sp) {
    r.pass = false;
    r.residual = std::numeric_limits<double>::infinity();
    return r;
  }
  const double rsp = std::sqrt(sp);
  const double rs = std::sqrt(s);
  const double denom = rsp * rs * (rsp + rs);
  // 1/sqrt(S_{n-1}) - 1/sqrt(S_n) == (S_n - S_{n-1}) / denom exactly in real
  // arithmetic; evaluating both sides over the shared denominator keeps the
  // comparison free of catastrophic cancellation.
  const double lhs = (s - sp) / denom;
  const double rhs = g2 / denom;
  r.residual = std::abs(lhs - rhs);
  // Records round the accumulator to a single double, so the recorded
  // transition can sit up to one ulp of S away from |draw|^2 on each side.
  const double ulp_floor =
      2.0 * (std::nextafter(s, std::numeric_limits<double>::infinity()) - s) /
      denom;
  r.pass = r.residual <= 1e-12 * std::max(std::abs(lhs), 1e-300) + ulp_floor;
  return r;
}

CheckResult check_smooth_descent(const TrajectoryRecord& rec,
                                 double grad_dot_draw, double g_next,
                                 double smoothness, double alpha0) {
  CheckResult r;
  const double lhs = g_next - rec.g;
  const double rhs = -alpha0 * grad_dot_draw / std::sqrt(rec.s) +
                     0.5 * smoothness * alpha0 * alpha0 * rec.gamma;
  const double tol = 1e-10 * (1.0 + std::abs(rec.g));
  r.residual = lhs - rhs;
  r.pass = lhs <= rhs + tol;
  return r;
}

GammaSeriesResult check_gamma_series(const std::vector<TrajectoryRecord>& rows,
                                     double s0) {
  GammaSeriesResult res;
  res.bound1 = 2.0 / std::sqrt(s0);
  res.bound2 = 3.0 / std::sqrt(s0);
  res.bound3 = 2.0 / s0;
  for (const auto& rec : rows) {
    res.sum1 += rec.gamma / std::sqrt(rec.s);
    res.sum2 += rec.gamma / std::sqrt(rec.s_prev);
    res.sum3 += rec.gamma / (std::sqrt(rec.s_prev) * std::sqrt(rec.s));
  }
  res.pass = res.sum1 < res.bound1 && res.sum2 <= res.bound2 &&
             res.sum3 <= res.bound3;
  return res;
}

CheckResult check_adjacent_lyapunov(const TrajectoryRecord& rec,
                                    const TrajectoryRecord& next,
                                    const TheoryConstants& c) {
  CheckResult r;
  const double diff = next.ghat - rec.ghat;
  const double bound = lyapunov_h(c, rec.ghat);
  const double tol = 1e-9 * (1.0 + std::abs(rec.ghat));
  r.residual = diff - bound;
  r.pass = diff <= bound + tol;
  return r;
}

ExcursionTracker::ExcursionTracker(double delta_tau) : delta_tau_(delta_tau) {
  if (!(delta_tau > 0)) {
    throw std::invalid_argument("ExcursionTracker: delta_tau must be > 0");
  }
}

void ExcursionTracker::observe(std::int64_t n, double ghat) {
  if (finished_) throw std::logic_error("ExcursionTracker: already finished");
  if (first_n_ < 0) {
    first_n_ = n;
    if (ghat > delta_tau_) {
      // The segmentation assumes delta_tau > ghat(theta_1), so tau_1 > 1.
      throw std::invalid_argument(
          "ExcursionTracker: ghat(theta_1) must lie below delta_tau");
    }
  }
  last_n_ = n;
  // A single index can close one phase and open the next, so loop until the
  // value is consumed by the current phase.
  for (;;) {
    switch (phase_) {
      case Phase::below:
        if (ghat > delta_tau_) {
          open_ = Excursion{};
          open_.tau_start = n;
          open_.peak_ghat = ghat;
          phase_ = Phase::band1;
          continue;  // re-examine against the band-1 exit rule
        }
        return;
      case Phase::band1:
        open_.peak_ghat = std::max(open_.peak_ghat, ghat);
        if (ghat <= delta_tau_) {
          open_.tau_mid = n;
          open_.tau_end = n;
          open_.reached_2delta = false;
          excursions_.push_back(open_);
          phase_ = Phase::below;
          return;
        }
        if (ghat > 2.0 * delta_tau_) {
          open_.tau_mid = n;
          open_.reached_2delta = true;
          phase_ = Phase::above;
          return;
        }
        // Interior of [tau_start, tau_mid): definitionally in (delta, 2 delta].
        if (!(ghat > delta_tau_ && ghat <= 2.0 * delta_tau_)) {
          band_violations_ += 1;
        }
        return;
      case Phase::above:
        open_.peak_ghat = std::max(open_.peak_ghat, ghat);
        if (ghat <= delta_tau_) {
          open_.tau_end = n;
          excursions_.push_back(open_);
          phase_ = Phase::below;
          return;
        }
        return;
    }
  }
}

std::vector<Excursion> ExcursionTracker::finish() {
  if (!finished_) {
    finished_ = true;
    if (phase_ != Phase::below) {
      // tau ^ T convention: stopping times that have not fired truncate at
      // the horizon T = last observed index.
      open_.truncated = true;
      if (phase_ == Phase::band1) {
        open_.tau_mid = open_.tau_end = last_n_;
        open_.reached_2delta = false;
      } else {
        open_.tau_end = last_n_;
      }
      excursions_.push_back(open_);
    }
  }
  return excursions_;
}

std::vector<Excursion> partition_stopping_times(
    const std::vector<double>& ghat_series, double delta_tau) {
  ExcursionTracker tracker(delta_tau);
  for (std::size_t i = 0; i < ghat_series.size(); ++i) {
    tracker.observe(static_cast<std::int64_t>(i) + 1, ghat_series[i]);
  }
  return tracker.finish();
}

std::int64_t check_excursion_bands(const std::vector<Excursion>& excursions,
                                   const std::vector<double>& ghat_series,
                                   double delta_tau) {
  std::int64_t violations = 0;
  auto ghat_at = [&](std::int64_t n) { return ghat_series[n - 1]; };
  const std::int64_t horizon = static_cast<std::int64_t>(ghat_series.size());
  for (std::size_t e = 0; e < excursions.size(); ++e) {
    const Excursion& ex = excursions[e];
    for (std::int64_t n = ex.tau_start; n < std::min(ex.tau_mid, horizon + 1);
         ++n) {
      const double v = ghat_at(n);
      if (!(v > delta_tau && v <= 2.0 * delta_tau)) violations += 1;
    }
    // A truncated excursion never re-entered the low band, so there is no
    // [tau_3i, tau_3i+1) interval to scan.
    if (ex.truncated) continue;
    const std::int64_t next_start = e + 1 < excursions.size()
                                        ? excursions[e + 1].tau_start
                                        : horizon + 1;
    for (std::int64_t n = ex.tau_end; n < next_start; ++n) {
      if (n > horizon) break;
      if (!(ghat_at(n) <= delta_tau)) violations += 1;
    }
  }
  return violations;
}

namespace {

double mds_w(const Vector& grad_true, double grad_norm, double s_prev,
             double s0, double sigma0, double sigma1, const Vector& draw) {
  const double g2 = squared_norm(draw);
  const double s = s_prev + g2;
  const double rs = std::sqrt(s);
  const double rsp = std::sqrt(s_prev);
  const double gamma = g2 / s;
  const double lambda = g2 / (rs * (rsp + rs));
  const double zeta = grad_norm * grad_norm / rsp;
  return dot(grad_true, draw) / rs +
         sigma1 / (2.0 * std::sqrt(s0)) * gamma * gamma +
         0.5 * sigma0 * zeta * lambda * lambda;
}

}  // namespace

MdsEstimate estimate_mds_terms(const Objective& obj, const NoiseModel& noise,
                               const Vector& theta, double s_prev, double s0,
                               double sigma0_eff, int resamples,
                               RandomStream& stream, bool allow_enumeration) {
  if (resamples < 1000) {
    throw std::invalid_argument("estimate_mds_terms: resamples must be >= 1000");
  }
  const Vector grad_true = grad(obj, theta);
  const double grad_norm = norm(grad_true);
  const double sigma1 = noise.sigma1;
  auto w_of = [&](const Vector& draw) {
    return mds_w(grad_true, grad_norm, s_prev, s0, sigma0_eff, sigma1, draw);
  };

  MdsEstimate est;
  if (allow_enumeration && noise.kind == NoiseKind::deterministic) {
    est.cond_mean = w_of(grad(obj, theta));
    est.enumerated = true;
    est.mean = 0.0;
    est.se = 0.0;
    return est;
  }

  std::optional<double> exact_mean;
  if (allow_enumeration && noise.kind == NoiseKind::minibatch &&
      noise.batch_size == 1 && noise.component_count <= 16) {
    double acc = 0.0;
    for (int i = 0; i < noise.component_count; ++i) {
      acc += w_of(obj.components->component_grad(i, theta));
    }
    exact_mean = acc / noise.component_count;
  }

  if (exact_mean) {
    // Conditional mean known in closed form: average X_hat = E[W] - W over
    // all K draws.
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < resamples; ++k) {
      const double x = *exact_mean - w_of(stoch_grad(obj, noise, theta, stream));
      sum += x;
      sum_sq += x * x;
    }
    const double mean = sum / resamples;
    const double var =
        std::max(0.0, (sum_sq - resamples * mean * mean) / (resamples - 1));
    est.mean = mean;
    est.se = std::sqrt(var / resamples);
    est.cond_mean = *exact_mean;
    est.enumerated = true;
    return est;
  }

  // Split-sample: first half estimates E[W|F], second half averages
  // X_hat = E_est[W] - W; the two halves are independent so the standard
  // errors add in quadrature.
  const int k1 = resamples / 2;
  const int k2 = resamples - k1;
  double sum1 = 0.0, sq1 = 0.0;
  for (int k = 0; k < k1; ++k) {
    const double w = w_of(stoch_grad(obj, noise, theta, stream));
    sum1 += w;
    sq1 += w * w;
  }
  const double mean1 = sum1 / k1;
  const double var1 = std::max(0.0, (sq1 - k1 * mean1 * mean1) / (k1 - 1));
  double sum2 = 0.0, sq2 = 0.0;
  for (int k = 0; k < k2; ++k) {
    const double w = w_of(stoch_grad(obj, noise, theta, stream));
    sum2 += w;
    sq2 += w * w;
  }
  const double mean2 = sum2 / k2;
  const double var2 = std::max(0.0, (sq2 - k2 * mean2 * mean2) / (k2 - 1));
  est.cond_mean = mean1;
  est.mean = mean1 - mean2;
  est.se = std::sqrt(var1 / k1 + var2 / k2);
  est.enumerated = false;
  return est;
}

RmsRecordCheck recheck_rmsprop_records(
    const std::vector<TrajectoryRecord>& rows, double r1) {
  RmsRecordCheck res;
  double lambda4_sum = 0.0;
  double prev_alpha_min = 0.0, prev_alpha_max = 0.0;
  const double omega_base = rows.empty() ? 0.0 : std::sqrt(rows.front().s_prev);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& rec = rows[i];
    if (rec.nv_over_s_min < r1 * (1.0 - 1e-12)) res.nv_bound_violations += 1;
    if (i >= 1) {
      // Coordinate-wise monotonicity implies the extremes are monotone.
      if (rec.alpha_min > prev_alpha_min * (1.0 + 1e-12) ||
          rec.alpha_max > prev_alpha_max * (1.0 + 1e-12)) {
        res.alpha_monotone_violations += 1;
      }
    }
    prev_alpha_min = rec.alpha_min;
    prev_alpha_max = rec.alpha_max;
    const double kp1 = static_cast<double>(rec.n) + 1.0;
    const double pow4 = kp1 * kp1 * kp1 * kp1;
    lambda4_sum +=
        rec.sgrad_norm * rec.sgrad_norm / (pow4 * std::sqrt(rec.s_prev));
    const double lhs = std::sqrt(rec.s) / pow4;
    const double rhs = omega_base + lambda4_sum;
    if (lhs > rhs * (1.0 + 1e-12)) res.omega_violations += 1;
  }
  res.pass = res.nv_bound_violations == 0 &&
             res.alpha_monotone_violations == 0 && res.omega_violations == 0;
  return res;
}

LemSuResult check_lem_su(const std::vector<double>& per_run_sums, double delta,
                         const TheoryConstants& c) {
  if (per_run_sums.size() < 2) {
    throw std::invalid_argument("check_lem_su: need at least 2 runs");
  }
  if (delta <= 0) throw std::invalid_argument("check_lem_su: delta must be > 0");
  LemSuResult res;
  double sum = 0.0;
  for (double q : per_run_sums) sum += q;
  const double n = static_cast<double>(per_run_sums.size());
  res.estimate = sum / n;
  double var = 0.0;
  for (double q : per_run_sums) {
    var += (q - res.estimate) * (q - res.estimate);
  }
  var /= (n - 1.0);
  res.se = std::sqrt(var / n);
  res.bound = (c.sigma0 + c.sigma1 / (delta * delta)) * c.m_const;
  res.pass = res.estimate + 3.0 * res.se <= res.bound;
  return res;
}

}  // namespace adastab
