#ifndef ADASTAB_PROBES_HPP
#define ADASTAB_PROBES_HPP

#include <optional>
#include <string>
#include <vector>

#include "adastab/noise.hpp"
#include "adastab/objective.hpp"
#include "adastab/rng.hpp"

namespace adastab {

/// Statistical probes for the standing assumptions. These certify only the
/// sampled region; a pass is evidence, not a proof, and the reports say so.

struct SmoothnessProbe {
  double estimate = 0.0;       // max |grad(x)-grad(y)| / |x-y| over pairs
  double declared = 0.0;
  bool pass = false;
  std::vector<double> witness_x, witness_y;  // filled when the probe fails
};

/// Samples point pairs inside the centered box [-radius, radius]^d and
/// compares the difference quotient against the declared constant with a
/// 1e-9 relative allowance. Degenerate pairs (x == y) are skipped.
SmoothnessProbe probe_smoothness(const Objective& obj, RandomStream& stream,
                                 int pairs, double radius);

struct AffineVarianceProbe {
  double empirical = 0.0;  // mean |draw|^2 over the samples
  double bound = 0.0;      // sigma0 |grad|^2 + sigma1 + 3 SE
  double se = 0.0;
  bool pass = false;
};

AffineVarianceProbe probe_affine_variance(const Objective& obj,
                                          const NoiseModel& noise,
                                          const Vector& theta, int samples,
                                          RandomStream& stream);

struct NonFlatnessProbe {
  std::vector<double> radii;
  std::vector<double> min_grad_norm;  // per radius, over sampled sphere points
  bool pass = false;                  // min > delta_tilde beyond crit_radius
};

/// radii must be increasing; points_per_radius samples per sphere.
NonFlatnessProbe probe_nonflatness(const Objective& obj, RandomStream& stream,
                                   const std::vector<double>& radii,
                                   int points_per_radius);

struct SharpnessProbe {
  int points_tested = 0;
  int draws_per_point = 0;
  bool pass = false;
  bool applicable = false;  // delta0/delta1 declared by the model
  double worst_draw_norm = 0.0;
  std::vector<double> witness_theta;  // point where a draw exceeded delta1
};

/// Hunts for points with |grad| <= delta0 (near-critical region) and checks
/// that every oracle draw there has norm <= delta1.
SharpnessProbe probe_sharpness(const Objective& obj, const NoiseModel& noise,
                               RandomStream& stream, int trial_points,
                               int draws_per_point);

struct UnbiasednessProbe {
  double deviation = 0.0;  // |mean draw - grad|
  double allowance = 0.0;  // 4 SE of the mean-norm estimate
  bool pass = false;
};

UnbiasednessProbe probe_unbiasedness(const Objective& obj,
                                     const NoiseModel& noise,
                                     const Vector& theta, int samples,
                                     RandomStream& stream);

/// Sampled estimate of sup g over the gradient sublevel set
/// { |grad g| <= delta_tilde }, for objectives without an analytic bound.
/// Documented as an estimate; the config can always override delta_tau.
double estimate_sublevel_bound(const Objective& obj, RandomStream& stream,
                               int samples);

}  // namespace adastab

#endif  // ADASTAB_PROBES_HPP
