#ifndef ADASTAB_NOISE_HPP
#define ADASTAB_NOISE_HPP

#include <map>
#include <optional>
#include <string>

#include "adastab/objective.hpp"
#include "adastab/rng.hpp"
#include "adastab/vector.hpp"

namespace adastab {

enum class NoiseKind { deterministic, additive_bounded, affine_gaussian, minibatch };

/// Stochastic first-order oracle description with its declared affine
/// variance envelope E|draw|^2 <= sigma0 |grad|^2 + sigma1 and, when the
/// model supports it, near-critical sharpness constants (delta0, delta1):
/// |grad g(theta)| <= delta0 implies |draw| <= delta1 for every draw.
struct NoiseModel {
  NoiseKind kind = NoiseKind::deterministic;
  double a = 0.0;           // multiplicative level (affine_gaussian)
  double b = 0.0;           // additive level (affine_gaussian, additive_bounded)
  int batch_size = 0;       // minibatch
  int component_count = 0;  // minibatch
  double sigma0 = 1.0;
  double sigma1 = 0.0;
  double sigma1_coord = 0.0;  // per-coordinate additive variance bound
  std::optional<double> delta0;
  std::optional<double> delta1;
};

/// Builds a noise model bound to an objective and validates the pairing.
/// Known ids: deterministic, additive_bounded (param b), affine_gaussian
/// (params a, b), minibatch (param batch_size; objective must be a finite
/// sum). Declared envelopes:
///   deterministic    sigma0 = 1, sigma1 = 0
///   additive_bounded sigma0 = 1, sigma1 = b^2      (b * unit-sphere noise)
///   affine_gaussian  sigma0 = 1 + a^2, sigma1 = b^2 d
///   minibatch        sigma0 = 1, sigma1 from the component spread
NoiseModel make_noise(const std::string& id, const Objective& obj,
                      const std::map<std::string, double>& params = {});

/// One oracle draw at theta. The deterministic kind returns grad(obj, theta)
/// exactly; minibatch averages component gradients over a uniformly sampled
/// batch without replacement.
Vector stoch_grad(const Objective& obj, const NoiseModel& noise,
                  const Vector& theta, RandomStream& stream);

std::string noise_id(const NoiseModel& noise);

}  // namespace adastab

#endif  // ADASTAB_NOISE_HPP
