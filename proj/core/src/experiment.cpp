#include "adastab/experiment.hpp"

#include "adastab/probes.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace adastab {

namespace {

using json = nlohmann::ordered_json;

const std::set<std::string> kCheckNames = {
    "identity",       "gamma_series", "gamma_lambda", "smooth_descent",
    "adjacent_lyapunov", "step_bound",  "gradient_energy", "excursion_bands",
    "lem_su",         "rms_recursion", "rms_alpha",    "rms_nv",
    "rms_omega"};

std::set<std::string> applicable_checks(const ExperimentConfig& cfg) {
  std::set<std::string> out;
  switch (cfg.optimizer) {
    case OptimizerKind::adagrad_norm:
      out = {"identity",          "gamma_series",   "gamma_lambda",
             "smooth_descent",    "adjacent_lyapunov", "step_bound",
             "gradient_energy",   "excursion_bands", "lem_su"};
      break;
    case OptimizerKind::rmsprop:
      out = {"rms_recursion", "rms_alpha", "rms_nv", "rms_omega",
             "gradient_energy"};
      if (cfg.delta_tau_override) out.insert("excursion_bands");
      break;
    case OptimizerKind::sgd:
      out = {"gradient_energy"};
      break;
  }
  if (!cfg.checks.empty()) {
    std::set<std::string> filtered;
    for (const auto& name : cfg.checks) {
      if (out.count(name)) filtered.insert(name);
    }
    out = std::move(filtered);
  }
  return out;
}

double sigma0_effective(const ExperimentConfig& cfg, const NoiseModel& noise) {
  return std::max(noise.sigma0, cfg.sigma0_floor);
}

Vector initial_theta(const ExperimentConfig& cfg) {
  if (cfg.theta1.empty()) return Vector(static_cast<std::size_t>(cfg.dim), 0.0);
  return Vector(cfg.theta1);
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

// Exact-transition identity residual: states carry the accumulator as a
// compensated pair, so (S_n - S_{n-1}) reproduces |draw|^2 to a few ulps and
// the 1e-12 relative criterion is meaningful on every row. Increments below
// eps^2 * S are beyond even the compensated resolution and count as zero on
// both sides.
CheckResult identity_from_states(const AdaGradNormState& before,
                                 const AdaGradNormState& after, double g2) {
  CheckResult r;
  const double delta = (after.s_hi - before.s_hi) + (after.s_lo - before.s_lo);
  constexpr double kEpsSq = 4.93e-32;  // 2^-104
  r.residual = std::abs(delta - g2);
  r.pass = r.residual <=
           1e-12 * std::max(std::abs(delta), g2) + kEpsSq * after.s_hi;
  return r;
}

struct TailWindow {
  std::int64_t start = 1;  // first step index inside the last 10%
  double sum_grad_sq = 0.0;
  double sup_grad = 0.0;
  std::int64_t count = 0;
};

}  // namespace

const std::set<std::string>& known_check_names() { return kCheckNames; }

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.dim < 1) throw std::invalid_argument("config: dim must be >= 1");
  if (cfg.horizon < 1) throw std::invalid_argument("config: horizon must be >= 1");
  if (cfg.runs < 1) throw std::invalid_argument("config: runs must be >= 1");
  if (cfg.alpha0 <= 0) throw std::invalid_argument("config: alpha0 must be > 0");
  if (cfg.s0 <= 0) throw std::invalid_argument("config: s0 must be > 0");
  if (cfg.beta1 <= 0 || cfg.beta1 >= 1) {
    throw std::invalid_argument("config: beta1 must be in (0,1)");
  }
  if (cfg.eps <= 0) throw std::invalid_argument("config: eps must be > 0");
  if (cfg.v0 <= 0) throw std::invalid_argument("config: v0 must be > 0");
  if (cfg.sgd_lr <= 0) throw std::invalid_argument("config: sgd_lr must be > 0");
  if (cfg.sigma0_floor <= 0) {
    throw std::invalid_argument("config: sigma0_floor must be > 0");
  }
  if (cfg.lemsu_delta <= 0) {
    throw std::invalid_argument("config: lemsu_delta must be > 0");
  }
  if (cfg.as_threshold < 0) {
    throw std::invalid_argument("config: as_threshold must be >= 0");
  }
  if (!cfg.theta1.empty() &&
      static_cast<int>(cfg.theta1.size()) != cfg.dim) {
    throw std::invalid_argument("config: theta1 length must equal dim");
  }
  for (auto n : cfg.checkpoints) {
    if (n < 1 || n > cfg.horizon) {
      throw std::invalid_argument(
          "config: checkpoints must lie in [1, horizon]");
    }
  }
  for (const auto& name : cfg.checks) {
    if (!kCheckNames.count(name)) {
      throw std::invalid_argument("config: unknown check name '" + name + "'");
    }
  }
  // Cross-validates the problem/noise pairing (throws on mismatch) and the
  // envelope floor.
  Objective obj = make_objective(cfg.problem_id, cfg.dim, cfg.problem_params);
  NoiseModel noise = make_noise(cfg.noise_id, obj, cfg.noise_params);
  if (sigma0_effective(cfg, noise) <= 0) {
    throw std::invalid_argument("config: effective sigma0 must be > 0");
  }
}

RunSummary run_trajectory(
    const ExperimentConfig& cfg, const Objective& obj, const NoiseModel& noise,
    const TheoryConstants& constants, std::int64_t run_id,
    const std::function<void(const TrajectoryRecord&)>& on_record) {
  RunSummary sum;
  sum.run_id = run_id;
  const std::int64_t T = cfg.horizon;
  const auto checks = applicable_checks(cfg);
  const bool adagrad = cfg.optimizer == OptimizerKind::adagrad_norm;
  const bool rmsprop = cfg.optimizer == OptimizerKind::rmsprop;
  const double sigma0 = sigma0_effective(cfg, noise);
  const double L = obj.smoothness;

  for (const auto& name : checks) sum.checker_violations[name] = 0;
  auto bump = [&](const char* name) {
    auto it = sum.checker_violations.find(name);
    if (it != sum.checker_violations.end()) it->second += 1;
  };

  RandomStream stream(SeedSpec{cfg.seed, static_cast<std::uint64_t>(run_id), 0});

  AdaGradNormState ag;
  RmsPropState rp;
  Vector theta_sgd;
  if (adagrad) {
    ag = make_adagrad_state(initial_theta(cfg), cfg.alpha0, cfg.s0);
  } else if (rmsprop) {
    rp = make_rmsprop_state(initial_theta(cfg), cfg.beta1, cfg.eps, cfg.v0);
  } else {
    theta_sgd = initial_theta(cfg);
  }

  // RMSProp per-coordinate auxiliary accumulators S_n^(i) = v0 + sum |draw_i|^2
  // live in the instrumenter; they exist only for the analysis.
  std::vector<double> rms_s(rmsprop ? cfg.dim : 0, cfg.v0);
  double rms_s_total = rmsprop ? cfg.v0 * cfg.dim : 0.0;
  std::vector<double> alpha_prev(rmsprop ? cfg.dim : 0, 0.0);
  if (rmsprop) {
    // Convention for the first row: alpha_0^(0) = 1.
    for (int i = 0; i < cfg.dim; ++i) {
      alpha_prev[i] = 1.0 / (std::sqrt(cfg.v0) + cfg.eps);
    }
  }
  double omega_lambda_sum = 0.0;  // sum of |draw|^2 / ((n+1)^4 sqrt(S_{n-1}))
  const double omega_base = rmsprop ? std::sqrt(cfg.v0 * cfg.dim) : 0.0;
  if (rmsprop) {
    sum.rms_report.omega_margin_min = std::numeric_limits<double>::infinity();
    sum.rms_report.nv_over_s_min = std::numeric_limits<double>::infinity();
  }

  GammaSeriesResult gamma_acc;
  gamma_acc.bound1 = 2.0 / std::sqrt(cfg.s0);
  gamma_acc.bound2 = 3.0 / std::sqrt(cfg.s0);
  gamma_acc.bound3 = 2.0 / cfg.s0;

  std::optional<ExcursionTracker> tracker;
  if (checks.count("excursion_bands")) tracker.emplace(constants.delta_tau);

  TailWindow tail;
  tail.start = T - std::max<std::int64_t>(T / 10, 1) + 1;

  double sigma_gamma = 0.0;
  double prev_ghat = 0.0;
  double prev_g = 0.0;
  bool have_prev = false;
  TrajectoryRecord prev_rec;
  double prev_dot = 0.0;

  auto checkpoint_it = cfg.checkpoints.begin();
  double sup_g = -std::numeric_limits<double>::infinity();
  double last_grad_norm = 0.0;

  for (std::int64_t n = 1; n <= T; ++n) {
    double g = 0.0, grad_norm = 0.0;
    Vector grad_true;
    Vector theta = adagrad ? ag.theta : (rmsprop ? rp.theta : theta_sgd);
    try {
      g = value(obj, theta);
      grad_true = grad(obj, theta);
      grad_norm = norm(grad_true);
      if (!std::isfinite(g) || !std::isfinite(grad_norm)) {
        throw std::domain_error("non-finite objective state");
      }
    } catch (const std::exception&) {
      sum.diverged = true;
      break;
    }
    sup_g = std::max(sup_g, g);
    last_grad_norm = grad_norm;

    if (checkpoint_it != cfg.checkpoints.end() && *checkpoint_it == n) {
      sum.checkpoints.push_back(
          CheckpointStat{n, grad_norm * grad_norm, sup_g});
      ++checkpoint_it;
    }
    if (n >= tail.start) {
      tail.sum_grad_sq += grad_norm * grad_norm;
      tail.sup_grad = std::max(tail.sup_grad, grad_norm);
      tail.count += 1;
    }
    if (checks.count("gradient_energy") &&
        grad_norm * grad_norm >
            2.0 * L * g * (1.0 + 1e-9) + 1e-12) {
      bump("gradient_energy");
    }

    TrajectoryRecord rec;
    rec.n = n;
    rec.g = g;
    rec.grad_norm = grad_norm;

    Vector draw;
    try {
      draw = stoch_grad(obj, noise, theta, stream);
    } catch (const std::exception&) {
      sum.diverged = true;
      break;
    }
    const double draw_norm = norm(draw);
    const double g2 = draw_norm * draw_norm;
    rec.sgrad_norm = draw_norm;

    try {
      if (adagrad) {
        AdaGradNormState next = adagrad_step(ag, draw);
        rec.s_prev = ag.s_hi;
        rec.s = next.s_hi;
        rec.zeta = grad_norm * grad_norm / std::sqrt(ag.s_hi);
        rec.gamma = g2 / next.s_hi;
        rec.lambda =
            g2 / (std::sqrt(next.s_hi) * (std::sqrt(ag.s_hi) + std::sqrt(next.s_hi)));
        rec.ghat = adagrad_ghat(g, grad_norm, ag.s_hi, sigma0, cfg.alpha0);
        rec.step_norm = norm(sub(next.theta, ag.theta));
        sigma_gamma += cfg.alpha0 / std::sqrt(next.s_hi);
        rec.sigma_gamma = sigma_gamma;

        if (checks.count("identity")) {
          if (!identity_from_states(ag, next, g2).pass) bump("identity");
        }
        ag = std::move(next);
      } else if (rmsprop) {
        RmsPropState next = rmsprop_step(rp, draw);
        const std::int64_t k = next.n;  // step index of the new state
        rec.rms = true;
        rec.s_prev = rms_s_total;
        double zeta = 0.0, alpha_prev_sum = 0.0;
        for (int i = 0; i < cfg.dim; ++i) {
          zeta += grad_true[i] * grad_true[i] * alpha_prev[i];
          alpha_prev_sum += alpha_prev[i];
        }
        rec.zeta = zeta;
        rec.ghat = g + zeta + 0.5 * noise.sigma1_coord * alpha_prev_sum;

        const double a0_k = schedule_alpha0(k);
        double v_min = std::numeric_limits<double>::infinity(), v_max = 0.0;
        double a_min = std::numeric_limits<double>::infinity(), a_max = 0.0;
        double nv_over_s_min = std::numeric_limits<double>::infinity();
        for (int i = 0; i < cfg.dim; ++i) {
          const double di = draw[i];
          rms_s[i] += di * di;
          const double vi = next.v[i];
          const double ai = a0_k / (std::sqrt(vi) + cfg.eps);
          v_min = std::min(v_min, vi);
          v_max = std::max(v_max, vi);
          a_min = std::min(a_min, ai);
          a_max = std::max(a_max, ai);
          nv_over_s_min =
              std::min(nv_over_s_min, static_cast<double>(k) * vi / rms_s[i]);

          if (k >= 2 && checks.count("rms_recursion")) {
            const double lhs = static_cast<double>(k) * vi;
            const double rhs = static_cast<double>(k - 1) * rp.v[i] + di * di;
            const double resid = std::abs(lhs - rhs) / std::max(lhs, 1e-300);
            sum.rms_report.recursion_max_residual =
                std::max(sum.rms_report.recursion_max_residual, resid);
            if (resid > 1e-12) {
              sum.rms_report.recursion_violations += 1;
              bump("rms_recursion");
            }
          }
          if (k >= 2 && checks.count("rms_alpha")) {
            if (ai > alpha_prev[i] * (1.0 + 1e-12)) {
              sum.rms_report.alpha_monotone_violations += 1;
              bump("rms_alpha");
            }
          }
          if (checks.count("rms_nv")) {
            if (static_cast<double>(k) * vi <
                constants.r1 * rms_s[i] * (1.0 - 1e-12)) {
              sum.rms_report.nv_bound_violations += 1;
              bump("rms_nv");
            }
          }
          alpha_prev[i] = ai;
        }
        const double s_prev_total = rms_s_total;
        rms_s_total += g2;
        rec.s = rms_s_total;
        rec.gamma = g2 / rms_s_total;
        rec.lambda = g2 / (std::sqrt(rms_s_total) *
                           (std::sqrt(s_prev_total) + std::sqrt(rms_s_total)));
        rec.v_min = v_min;
        rec.v_max = v_max;
        rec.alpha_min = a_min;
        rec.alpha_max = a_max;
        rec.nv_over_s_min = nv_over_s_min;
        rec.step_norm = norm(sub(next.theta, rp.theta));
        sigma_gamma += a0_k;
        rec.sigma_gamma = sigma_gamma;

        sum.rms_report.nv_over_s_min =
            std::min(sum.rms_report.nv_over_s_min, nv_over_s_min);
        if (checks.count("rms_omega")) {
          const double kp1 = static_cast<double>(k) + 1.0;
          omega_lambda_sum +=
              g2 / (kp1 * kp1 * kp1 * kp1 * std::sqrt(s_prev_total));
          const double lhs = std::sqrt(rms_s_total) / (kp1 * kp1 * kp1 * kp1);
          const double rhs = omega_base + omega_lambda_sum;
          sum.rms_report.omega_margin_min =
              std::min(sum.rms_report.omega_margin_min, rhs - lhs);
          if (lhs > rhs * (1.0 + 1e-12)) {
            sum.rms_report.omega_violations += 1;
            bump("rms_omega");
          }
        }
        const double sum_v = [&] {
          double s = 0.0;
          for (int i = 0; i < cfg.dim; ++i) s += next.v[i];
          return s;
        }();
        const double logn = std::log(static_cast<double>(k) + 1.0);
        sum.rms_report.bounded_v_stat =
            std::max(sum.rms_report.bounded_v_stat, sum_v / (logn * logn));
        sum.rms_report.zeta_halfpow_sum +=
            zeta / std::sqrt(static_cast<double>(k));
        rp = std::move(next);
      } else {
        Vector next = sgd_step(theta_sgd, draw, cfg.sgd_lr);
        rec.s_prev = 0.0;
        rec.s = 0.0;
        rec.ghat = g;
        rec.step_norm = norm(sub(next, theta_sgd));
        sigma_gamma += cfg.sgd_lr;
        rec.sigma_gamma = sigma_gamma;
        theta_sgd = std::move(next);
      }
    } catch (const std::exception&) {
      sum.diverged = true;
      break;
    }

    if (cfg.inject && cfg.inject->run == run_id && cfg.inject->step == n) {
      rec.s *= (1.0 + cfg.inject->scale);
    }

    if (adagrad) {
      if (checks.count("identity") && !check_step_identity(rec).pass) {
        bump("identity");
      }
      if (checks.count("gamma_lambda")) {
        const bool ok = rec.gamma <= 1.0 + 1e-12 &&
                        rec.lambda <= rec.gamma * (1.0 + 1e-12) &&
                        rec.lambda >= 0.5 * rec.gamma * (1.0 - 1e-12);
        if (!ok) bump("gamma_lambda");
      }
      if (checks.count("step_bound") &&
          rec.step_norm > cfg.alpha0 * (1.0 + 1e-12)) {
        bump("step_bound");
      }
      if (checks.count("gamma_series")) {
        gamma_acc.sum1 += rec.gamma / std::sqrt(rec.s);
        gamma_acc.sum2 += rec.gamma / std::sqrt(rec.s_prev);
        gamma_acc.sum3 += rec.gamma / (std::sqrt(rec.s_prev) * std::sqrt(rec.s));
      }
      if (checks.count("lem_su") && grad_norm > cfg.lemsu_delta) {
        sum.lemsu_sum += g2 / rec.s_prev;
      }
      if (have_prev) {
        if (checks.count("smooth_descent")) {
          const double lhs = g - prev_g;
          const double rhs = -cfg.alpha0 * prev_dot / std::sqrt(prev_rec.s) +
                             0.5 * L * cfg.alpha0 * cfg.alpha0 * prev_rec.gamma;
          if (lhs > rhs + 1e-10 * (1.0 + std::abs(prev_g))) {
            bump("smooth_descent");
          }
        }
        if (checks.count("adjacent_lyapunov")) {
          const double diff = rec.ghat - prev_ghat;
          const double bound = lyapunov_h(constants, prev_ghat);
          if (diff > bound + 1e-9 * (1.0 + std::abs(prev_ghat))) {
            bump("adjacent_lyapunov");
          }
        }
      }
      prev_dot = dot(grad_true, draw);
    }

    if (tracker) tracker->observe(n, rec.ghat);
    if (n == 1) sum.ghat1 = rec.ghat;
    if (on_record) on_record(rec);

    prev_rec = rec;
    prev_ghat = rec.ghat;
    prev_g = g;
    have_prev = true;
    sum.steps_completed = n;
  }

  sum.sup_g = sup_g == -std::numeric_limits<double>::infinity() ? 0.0 : sup_g;
  sum.final_grad_norm = last_grad_norm;
  if (tail.count > 0) {
    sum.tail_mean_grad_sq = tail.sum_grad_sq / tail.count;
    sum.tail_sup_grad_norm = tail.sup_grad;
  }
  sum.sigma_gamma_final = sigma_gamma;

  if (adagrad && checks.count("gamma_series")) {
    gamma_acc.pass = gamma_acc.sum1 < gamma_acc.bound1 &&
                     gamma_acc.sum2 <= gamma_acc.bound2 &&
                     gamma_acc.sum3 <= gamma_acc.bound3;
    sum.gamma_series = gamma_acc;
    if (!gamma_acc.pass) bump("gamma_series");
  }
  if (tracker) {
    auto excursions = tracker->finish();
    sum.excursion_count = static_cast<std::int64_t>(excursions.size());
    for (const auto& ex : excursions) {
      if (ex.reached_2delta) sum.reached_2delta_count += 1;
    }
    for (std::int64_t k = 0; k < tracker->band_violations(); ++k) {
      bump("excursion_bands");
    }
  }
  if (rmsprop) {
    if (!std::isfinite(sum.rms_report.nv_over_s_min)) {
      sum.rms_report.nv_over_s_min = 0.0;
    }
    if (!std::isfinite(sum.rms_report.omega_margin_min)) {
      sum.rms_report.omega_margin_min = 0.0;
    }
    sum.rms_report.pass = sum.rms_report.recursion_violations == 0 &&
                          sum.rms_report.alpha_monotone_violations == 0 &&
                          sum.rms_report.nv_bound_violations == 0 &&
                          sum.rms_report.omega_violations == 0;
  }
  return sum;
}

BatchResult run_batch(const ExperimentConfig& cfg) {
  validate_config(cfg);
  BatchResult batch;
  batch.config = cfg;
  const Objective obj =
      make_objective(cfg.problem_id, cfg.dim, cfg.problem_params);
  const NoiseModel noise = make_noise(cfg.noise_id, obj, cfg.noise_params);
  batch.sigma0_eff = sigma0_effective(cfg, noise);
  batch.sigma1 = noise.sigma1;

  TheoryConstants constants =
      compute_constants(obj.smoothness, batch.sigma0_eff, noise.sigma1,
                        cfg.alpha0, cfg.s0, cfg.beta1);
  // ghat(theta_1) is common to all runs (theta_1 comes from the config).
  {
    const Vector theta1 = initial_theta(cfg);
    const double g1 = value(obj, theta1);
    const double gn1 = norm(grad(obj, theta1));
    double ghat1;
    if (cfg.optimizer == OptimizerKind::rmsprop) {
      const double a0 = 1.0 / (std::sqrt(cfg.v0) + cfg.eps);
      ghat1 = g1 + gn1 * gn1 * a0 +
              0.5 * noise.sigma1_coord * a0 * cfg.dim;
    } else {
      ghat1 = adagrad_ghat(g1, gn1, cfg.s0, batch.sigma0_eff, cfg.alpha0);
    }
    std::optional<double> c_hat_g;
    double sublevel_bound;
    if (obj.sublevel_g_bound) {
      sublevel_bound = *obj.sublevel_g_bound;
    } else {
      // No analytic bound shipped: sampled estimate over the gradient
      // sublevel set (an estimate, and the config can override delta_tau).
      RandomStream probe(SeedSpec{cfg.seed, 0, 3});
      sublevel_bound = estimate_sublevel_bound(obj, probe, 4096);
    }
    c_hat_g = sublevel_bound + batch.sigma0_eff * cfg.alpha0 *
                                   obj.delta_tilde * obj.delta_tilde /
                                   (2.0 * std::sqrt(cfg.s0));
    constants.delta_tau =
        compute_delta_tau(ghat1, constants, c_hat_g, cfg.delta_tau_override);
    constants.m_const = compute_M(ghat1, cfg.alpha0, cfg.s0, constants);
  }
  batch.constants = constants;

  const bool persist = !cfg.output.empty();
  std::filesystem::path out_dir(cfg.output);
  if (persist) std::filesystem::create_directories(out_dir);
  const std::int64_t record_limit =
      cfg.record_runs < 0 ? cfg.runs : std::min(cfg.record_runs, cfg.runs);

  batch.runs.resize(cfg.runs);
  std::atomic<std::int64_t> next_run{0};
  auto worker = [&] {
    for (;;) {
      const std::int64_t run_id = next_run.fetch_add(1);
      if (run_id >= cfg.runs) return;
      std::ofstream csv;
      std::string buffer;
      std::function<void(const TrajectoryRecord&)> sink;
      if (persist && run_id < record_limit) {
        char name[32];
        std::snprintf(name, sizeof(name), "run_%05lld.csv",
                      static_cast<long long>(run_id));
        csv.open(out_dir / name, std::ios::binary | std::ios::trunc);
        csv << record_csv_header(cfg.optimizer == OptimizerKind::rmsprop);
        sink = [&csv](const TrajectoryRecord& rec) {
          csv << record_csv_row(rec);
        };
      }
      batch.runs[run_id] =
          run_trajectory(cfg, obj, noise, constants, run_id, sink);
    }
  };

  int threads = cfg.threads;
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
  }
  if (const char* cap = std::getenv("ADASTAB_THREADS")) {
    const int limit = std::atoi(cap);
    if (limit >= 1) threads = std::min(threads, limit);
  }
  threads = static_cast<int>(
      std::min<std::int64_t>(threads, cfg.runs));

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& run : batch.runs) {
    if (run.diverged) batch.diverged_runs += 1;
    for (const auto& [name, count] : run.checker_violations) {
      batch.total_checker_violations += count;
    }
  }
  if (persist) persist_batch(batch);
  return batch;
}

StabilityEstimate estimate_stability(const std::vector<RunSummary>& runs) {
  StabilityEstimate est;
  std::vector<double> sup;
  for (const auto& r : runs) {
    if (r.diverged) {
      est.excluded_diverged += 1;
      continue;
    }
    sup.push_back(r.sup_g);
  }
  est.used_runs = static_cast<std::int64_t>(sup.size());
  if (sup.empty()) return est;
  double mean = 0.0;
  for (double v : sup) mean += v;
  mean /= sup.size();
  est.mean_sup_g = mean;
  est.max_sup_g = *std::max_element(sup.begin(), sup.end());
  if (sup.size() >= 2) {
    double var = 0.0;
    for (double v : sup) var += (v - mean) * (v - mean);
    var /= (sup.size() - 1.0);
    est.ci95_half_width = 1.96 * std::sqrt(var / sup.size());
  }
  return est;
}

std::vector<MseCurvePoint> estimate_mse_curve(
    const std::vector<RunSummary>& runs) {
  std::map<std::int64_t, std::vector<double>> by_n;
  for (const auto& r : runs) {
    if (r.diverged) continue;
    for (const auto& cp : r.checkpoints) by_n[cp.n].push_back(cp.grad_sq);
  }
  std::vector<MseCurvePoint> curve;
  for (const auto& [n, values] : by_n) {
    MseCurvePoint pt;
    pt.n = n;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= values.size();
    pt.mean_grad_sq = mean;
    if (values.size() >= 2) {
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= (values.size() - 1.0);
      pt.ci95_half_width = 1.96 * std::sqrt(var / values.size());
    }
    curve.push_back(pt);
  }
  return curve;
}

double as_convergence_probe(const std::vector<RunSummary>& runs,
                            double threshold) {
  if (threshold < 0.0) {
    throw std::invalid_argument("as_convergence_probe: threshold must be >= 0");
  }
  std::int64_t used = 0, hit = 0;
  for (const auto& r : runs) {
    if (r.diverged) continue;
    used += 1;
    if (r.tail_sup_grad_norm < threshold) hit += 1;
  }
  return used == 0 ? 0.0 : static_cast<double>(hit) / used;
}

std::string record_csv_header(bool rms) {
  std::string h =
      "n,g,grad_norm,sgrad_norm,S_prev,S,zeta,gamma,lambda,ghat,step_norm,"
      "sigma_gamma";
  if (rms) h += ",v_min,v_max,alpha_min,alpha_max,nv_over_S_min";
  h += "\n";
  return h;
}

std::vector<TrajectoryRecord> parse_record_csv(const std::string& text) {
  std::vector<TrajectoryRecord> rows;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    line = text.substr(pos, end == std::string::npos ? end : end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    return true;
  };
  std::string header;
  if (!next_line(header)) {
    throw std::invalid_argument("record csv: empty file");
  }
  bool rms;
  if (header + "\n" == record_csv_header(false)) {
    rms = false;
  } else if (header + "\n" == record_csv_header(true)) {
    rms = true;
  } else {
    throw std::invalid_argument("record csv: unrecognized header");
  }
  const std::size_t expected_cols = rms ? 17 : 12;
  std::string line;
  while (next_line(line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    vals.reserve(expected_cols);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0;
      auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc() || res.ptr != comma) {
        throw std::invalid_argument("record csv: bad number in row " +
                                    std::to_string(rows.size() + 1));
      }
      vals.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    if (vals.size() != expected_cols) {
      throw std::invalid_argument("record csv: wrong column count in row " +
                                  std::to_string(rows.size() + 1));
    }
    TrajectoryRecord rec;
    rec.n = static_cast<std::int64_t>(vals[0]);
    rec.g = vals[1];
    rec.grad_norm = vals[2];
    rec.sgrad_norm = vals[3];
    rec.s_prev = vals[4];
    rec.s = vals[5];
    rec.zeta = vals[6];
    rec.gamma = vals[7];
    rec.lambda = vals[8];
    rec.ghat = vals[9];
    rec.step_norm = vals[10];
    rec.sigma_gamma = vals[11];
    rec.rms = rms;
    if (rms) {
      rec.v_min = vals[12];
      rec.v_max = vals[13];
      rec.alpha_min = vals[14];
      rec.alpha_max = vals[15];
      rec.nv_over_s_min = vals[16];
    }
    rows.push_back(rec);
  }
  return rows;
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["problem"] = {{"id", cfg.problem_id}, {"dim", cfg.dim}};
  if (!cfg.problem_params.empty()) j["problem"]["params"] = cfg.problem_params;
  j["noise"] = {{"id", cfg.noise_id}};
  if (!cfg.noise_params.empty()) j["noise"]["params"] = cfg.noise_params;
  json opt;
  switch (cfg.optimizer) {
    case OptimizerKind::adagrad_norm:
      opt = {{"id", "adagrad_norm"}, {"alpha0", cfg.alpha0}, {"s0", cfg.s0}};
      break;
    case OptimizerKind::rmsprop:
      opt = {{"id", "rmsprop"},
             {"beta1", cfg.beta1},
             {"eps", cfg.eps},
             {"v0", cfg.v0}};
      break;
    case OptimizerKind::sgd:
      opt = {{"id", "sgd"}, {"lr", cfg.sgd_lr}};
      break;
  }
  j["optimizer"] = opt;
  if (!cfg.theta1.empty()) j["init"] = {{"theta", cfg.theta1}};
  j["horizon"] = cfg.horizon;
  j["runs"] = cfg.runs;
  j["seed"] = cfg.seed;
  if (!cfg.checkpoints.empty()) j["checkpoints"] = cfg.checkpoints;
  if (!cfg.checks.empty()) j["checks"] = cfg.checks;
  if (cfg.delta_tau_override) j["delta_tau_override"] = *cfg.delta_tau_override;
  j["sigma0_floor"] = cfg.sigma0_floor;
  j["lemsu_delta"] = cfg.lemsu_delta;
  j["as_threshold"] = cfg.as_threshold;
  if (!cfg.output.empty()) j["output"] = cfg.output;
  j["record_runs"] = cfg.record_runs;
  j["threads"] = cfg.threads;
  if (cfg.inject) {
    j["inject"] = {{"kind", "corrupt_s"},
                   {"run", cfg.inject->run},
                   {"step", cfg.inject->step},
                   {"scale", cfg.inject->scale}};
  }
  return j;
}

}  // namespace

std::string batch_summary_json(const BatchResult& batch) {
  json j;
  j["schema"] = "adastab-batch-v1";
  j["config"] = config_to_json(batch.config);
  const TheoryConstants& c = batch.constants;
  j["constants"] = {{"smoothness", c.smoothness},
                    {"sigma0_eff", batch.sigma0_eff},
                    {"sigma1", batch.sigma1},
                    {"alpha0", c.alpha0},
                    {"s0", c.s0},
                    {"c_gamma1", c.c_gamma1},
                    {"c_gamma2", c.c_gamma2},
                    {"h_a", c.h_a},
                    {"h_b", c.h_b},
                    {"c0", c.c0},
                    {"delta_tau", c.delta_tau},
                    {"m_const", c.m_const},
                    {"r1", c.r1}};
  j["diverged_runs"] = batch.diverged_runs;
  j["total_checker_violations"] = batch.total_checker_violations;

  json runs = json::array();
  const bool rms = batch.config.optimizer == OptimizerKind::rmsprop;
  for (const auto& r : batch.runs) {
    json jr;
    jr["run_id"] = r.run_id;
    jr["diverged"] = r.diverged;
    jr["steps_completed"] = r.steps_completed;
    jr["sup_g"] = r.sup_g;
    jr["final_grad_norm"] = r.final_grad_norm;
    jr["tail_mean_grad_sq"] = r.tail_mean_grad_sq;
    jr["tail_sup_grad_norm"] = r.tail_sup_grad_norm;
    jr["sigma_gamma_final"] = r.sigma_gamma_final;
    jr["ghat1"] = r.ghat1;
    jr["excursion_count"] = r.excursion_count;
    jr["reached_2delta_count"] = r.reached_2delta_count;
    jr["checker_violations"] = r.checker_violations;
    if (batch.config.optimizer == OptimizerKind::adagrad_norm) {
      jr["gamma_series"] = {{"sum1", r.gamma_series.sum1},
                            {"bound1", r.gamma_series.bound1},
                            {"sum2", r.gamma_series.sum2},
                            {"bound2", r.gamma_series.bound2},
                            {"sum3", r.gamma_series.sum3},
                            {"bound3", r.gamma_series.bound3},
                            {"pass", r.gamma_series.pass}};
      jr["lemsu_sum"] = r.lemsu_sum;
    }
    if (rms) {
      jr["rms_report"] = {
          {"recursion_violations", r.rms_report.recursion_violations},
          {"recursion_max_residual", r.rms_report.recursion_max_residual},
          {"alpha_monotone_violations",
           r.rms_report.alpha_monotone_violations},
          {"nv_bound_violations", r.rms_report.nv_bound_violations},
          {"nv_over_s_min", r.rms_report.nv_over_s_min},
          {"omega_violations", r.rms_report.omega_violations},
          {"omega_margin_min", r.rms_report.omega_margin_min},
          {"bounded_v_stat", r.rms_report.bounded_v_stat},
          {"zeta_halfpow_sum", r.rms_report.zeta_halfpow_sum},
          {"pass", r.rms_report.pass}};
    }
    if (!r.checkpoints.empty()) {
      json cps = json::array();
      for (const auto& cp : r.checkpoints) {
        cps.push_back(
            {{"n", cp.n}, {"grad_sq", cp.grad_sq}, {"sup_g", cp.sup_g}});
      }
      jr["checkpoints"] = cps;
    }
    runs.push_back(jr);
  }
  j["runs"] = runs;

  json est;
  {
    const StabilityEstimate st = estimate_stability(batch.runs);
    est["stability"] = {{"mean_sup_g", st.mean_sup_g},
                        {"ci95_half_width", st.ci95_half_width},
                        {"max_sup_g", st.max_sup_g},
                        {"used_runs", st.used_runs},
                        {"excluded_diverged", st.excluded_diverged}};
  }
  {
    json curve = json::array();
    for (const auto& pt : estimate_mse_curve(batch.runs)) {
      curve.push_back({{"n", pt.n},
                       {"mean_grad_sq", pt.mean_grad_sq},
                       {"ci95_half_width", pt.ci95_half_width}});
    }
    est["mse_curve"] = curve;
  }
  est["as_probe"] = {
      {"threshold", batch.config.as_threshold},
      {"fraction", as_convergence_probe(batch.runs, batch.config.as_threshold)}};
  if (batch.config.optimizer == OptimizerKind::adagrad_norm &&
      applicable_checks(batch.config).count("lem_su")) {
    std::vector<double> sums;
    for (const auto& r : batch.runs) {
      if (!r.diverged) sums.push_back(r.lemsu_sum);
    }
    if (sums.size() >= 2) {
      const LemSuResult ls =
          check_lem_su(sums, batch.config.lemsu_delta, batch.constants);
      est["lem_su"] = {{"delta", batch.config.lemsu_delta},
                       {"estimate", ls.estimate},
                       {"se", ls.se},
                       {"bound", ls.bound},
                       {"pass", ls.pass}};
    }
  }
  j["estimators"] = est;

  json verdicts;
  std::map<std::string, std::int64_t> totals;
  for (const auto& r : batch.runs) {
    for (const auto& [name, count] : r.checker_violations) {
      totals[name] += count;
    }
  }
  for (const auto& [name, count] : totals) {
    verdicts[name] = {{"violations", count}, {"pass", count == 0}};
  }
  j["checker_verdicts"] = verdicts;
  return j.dump(2) + "\n";
}

void persist_batch(const BatchResult& batch) {
  if (batch.config.output.empty()) {
    throw std::invalid_argument("persist_batch: config has no output directory");
  }
  std::filesystem::path out_dir(batch.config.output);
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("persist_batch: cannot write " +
                             (out_dir / "summary.json").string());
  }
  f << batch_summary_json(batch);
}

std::string record_csv_row(const TrajectoryRecord& rec) {
  std::string row;
  row.reserve(256);
  row += std::to_string(rec.n);
  for (double v : {rec.g, rec.grad_norm, rec.sgrad_norm, rec.s_prev, rec.s,
                   rec.zeta, rec.gamma, rec.lambda, rec.ghat, rec.step_norm,
                   rec.sigma_gamma}) {
    row += ',';
    append_double(row, v);
  }
  if (rec.rms) {
    for (double v : {rec.v_min, rec.v_max, rec.alpha_min, rec.alpha_max,
                     rec.nv_over_s_min}) {
      row += ',';
      append_double(row, v);
    }
  }
  row += '\n';
  return row;
}

}  // namespace adastab
