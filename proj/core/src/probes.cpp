#include "adastab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace adastab {

SmoothnessProbe probe_smoothness(const Objective& obj, RandomStream& stream,
                                 int pairs, double radius) {
  if (pairs < 1) throw std::invalid_argument("probe_smoothness: pairs >= 1");
  if (radius <= 0) throw std::invalid_argument("probe_smoothness: radius > 0");
  SmoothnessProbe probe;
  probe.declared = obj.smoothness;
  for (int p = 0; p < pairs; ++p) {
    std::vector<double> xv(obj.dim), yv(obj.dim);
    for (int i = 0; i < obj.dim; ++i) {
      xv[i] = (2.0 * stream.next_double() - 1.0) * radius;
      yv[i] = (2.0 * stream.next_double() - 1.0) * radius;
    }
    Vector x(std::move(xv)), y(std::move(yv));
    const double dist = norm(sub(x, y));
    if (dist == 0.0) continue;  // degenerate pair, no quotient
    const double quot = norm(sub(grad(obj, x), grad(obj, y))) / dist;
    if (quot > probe.estimate) {
      probe.estimate = quot;
      if (quot > probe.declared * (1.0 + 1e-9)) {
        probe.witness_x.assign(x.raw().begin(), x.raw().end());
        probe.witness_y.assign(y.raw().begin(), y.raw().end());
      }
    }
  }
  probe.pass = probe.estimate <= probe.declared * (1.0 + 1e-9);
  return probe;
}

AffineVarianceProbe probe_affine_variance(const Objective& obj,
                                          const NoiseModel& noise,
                                          const Vector& theta, int samples,
                                          RandomStream& stream) {
  if (samples < 100) {
    throw std::invalid_argument("probe_affine_variance: samples >= 100");
  }
  AffineVarianceProbe probe;
  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double m = squared_norm(stoch_grad(obj, noise, theta, stream));
    sum += m;
    sum_sq += m * m;
  }
  probe.empirical = sum / samples;
  const double var = std::max(
      0.0, (sum_sq - samples * probe.empirical * probe.empirical) /
               (samples - 1.0));
  probe.se = std::sqrt(var / samples);
  const double g2 = squared_norm(grad(obj, theta));
  probe.bound = noise.sigma0 * g2 + noise.sigma1 + 3.0 * probe.se;
  probe.pass = probe.empirical <= probe.bound;
  return probe;
}

NonFlatnessProbe probe_nonflatness(const Objective& obj, RandomStream& stream,
                                   const std::vector<double>& radii,
                                   int points_per_radius) {
  if (radii.empty()) throw std::invalid_argument("probe_nonflatness: radii");
  for (std::size_t i = 1; i < radii.size(); ++i) {
    if (radii[i] <= radii[i - 1]) {
      throw std::invalid_argument("probe_nonflatness: radii must increase");
    }
  }
  if (points_per_radius < 1) {
    throw std::invalid_argument("probe_nonflatness: points_per_radius >= 1");
  }
  NonFlatnessProbe probe;
  probe.radii = radii;
  probe.pass = true;
  for (double r : radii) {
    double mn = std::numeric_limits<double>::infinity();
    for (int k = 0; k < points_per_radius; ++k) {
      Vector theta = scale(stream.next_unit_vector(obj.dim), r);
      mn = std::min(mn, norm(grad(obj, theta)));
    }
    probe.min_grad_norm.push_back(mn);
    if (r > obj.crit_radius && mn <= obj.delta_tilde) probe.pass = false;
  }
  return probe;
}

SharpnessProbe probe_sharpness(const Objective& obj, const NoiseModel& noise,
                               RandomStream& stream, int trial_points,
                               int draws_per_point) {
  SharpnessProbe probe;
  probe.draws_per_point = draws_per_point;
  if (!noise.delta0 || !noise.delta1) {
    probe.applicable = false;
    probe.pass = false;
    return probe;
  }
  probe.applicable = true;
  probe.pass = true;
  const double d0 = *noise.delta0;
  const double d1 = *noise.delta1;

  // Walk toward the near-critical region, then scatter around it.
  Vector center(static_cast<std::size_t>(obj.dim), 0.0);
  for (int it = 0; it < 400; ++it) {
    Vector g = grad(obj, center);
    if (norm(g) <= 0.5 * d0) break;
    center = axpy(center, -1.0 / obj.smoothness, g);
  }

  int tested = 0, attempts = 0;
  while (tested < trial_points && attempts < trial_points * 64) {
    attempts += 1;
    const double width = 0.02 * (1 << (attempts % 6));
    Vector theta = axpy(center, width, draw_standard_normal(stream, obj.dim));
    if (norm(grad(obj, theta)) > d0) continue;
    tested += 1;
    for (int k = 0; k < draws_per_point; ++k) {
      const double dn = norm(stoch_grad(obj, noise, theta, stream));
      probe.worst_draw_norm = std::max(probe.worst_draw_norm, dn);
      if (dn > d1) {
        probe.pass = false;
        probe.witness_theta.assign(theta.raw().begin(), theta.raw().end());
      }
    }
  }
  probe.points_tested = tested;
  return probe;
}

UnbiasednessProbe probe_unbiasedness(const Objective& obj,
                                     const NoiseModel& noise,
                                     const Vector& theta, int samples,
                                     RandomStream& stream) {
  if (samples < 100) {
    throw std::invalid_argument("probe_unbiasedness: samples >= 100");
  }
  UnbiasednessProbe probe;
  Vector mean(theta.dim(), 0.0);
  double sum_sq = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vector d = stoch_grad(obj, noise, theta, stream);
    mean = add(mean, d);
    sum_sq += squared_norm(d);
  }
  mean = scale(mean, 1.0 / samples);
  const Vector g = grad(obj, theta);
  probe.deviation = norm(sub(mean, g));
  // SE of the mean vector norm, from the scalar second moment.
  const double mean_sq = sum_sq / samples;
  const double var = std::max(0.0, mean_sq - squared_norm(mean));
  probe.allowance = 4.0 * std::sqrt(var / samples) + 1e-12;
  probe.pass = probe.deviation <= probe.allowance;
  return probe;
}

double estimate_sublevel_bound(const Objective& obj, RandomStream& stream,
                               int samples) {
  if (samples < 1) throw std::invalid_argument("estimate_sublevel_bound");
  // Scatter search: keep the largest g value seen among sampled points whose
  // gradient norm is below delta_tilde.
  double best = 0.0;
  Vector center(static_cast<std::size_t>(obj.dim), 0.0);
  for (int it = 0; it < 400; ++it) {
    Vector g = grad(obj, center);
    if (norm(g) < 0.5 * obj.delta_tilde) break;
    center = axpy(center, -1.0 / obj.smoothness, g);
  }
  for (int k = 0; k < samples; ++k) {
    const double width = 0.05 * (1 << (k % 7));
    Vector theta = axpy(center, width, draw_standard_normal(stream, obj.dim));
    if (norm(grad(obj, theta)) <= obj.delta_tilde) {
      best = std::max(best, value(obj, theta));
    }
  }
  return best;
}

}  // namespace adastab
