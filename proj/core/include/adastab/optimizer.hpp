#ifndef ADASTAB_OPTIMIZER_HPP
#define ADASTAB_OPTIMIZER_HPP

#include <cstdint>

#include "adastab/vector.hpp"

namespace adastab {

/// AdaGrad-Norm state. The accumulator S is kept as a compensated pair
/// (s_hi + s_lo) so that consecutive states satisfy S_n - S_{n-1} = |draw|^2
/// to far better than 1e-12 relative; the step itself only ever uses the
/// rounded value s(). s0 > 0, alpha0 > 0, and s() never decreases.
struct AdaGradNormState {
  Vector theta;
  double s_hi = 1.0;
  double s_lo = 0.0;
  std::int64_t n = 0;
  double alpha0 = 1.0;
  double s0 = 1.0;

  double s() const { return s_hi + s_lo; }
};

AdaGradNormState make_adagrad_state(Vector theta1, double alpha0 = 1.0,
                                    double s0 = 1.0);

/// One AdaGrad-Norm update: S' = S + |g_hat|^2 first, then
/// theta' = theta - (alpha0 / sqrt(S')) g_hat.
AdaGradNormState adagrad_step(const AdaGradNormState& state,
                              const Vector& g_hat);

/// RMSProp state under the 1/sqrt(n) schedule. v stays strictly positive
/// per coordinate; n counts completed steps (0 before the first).
struct RmsPropState {
  Vector theta;
  Vector v;
  std::int64_t n = 0;
  double beta1 = 0.9;
  double eps = 1e-8;
  double v0 = 1e-3;
};

RmsPropState make_rmsprop_state(Vector theta1, double beta1 = 0.9,
                                double eps = 1e-8, double v0 = 1e-3);

/// Mixing weight for step n (n >= 1): beta1 at n = 1, then 1 - 1/n.
double schedule_beta(std::int64_t n, double beta1);

/// Global learning rate for step n (n >= 1): 1/sqrt(n).
double schedule_alpha0(std::int64_t n);

/// One RMSProp update at step n' = state.n + 1:
/// v' = beta_{n'} v + (1 - beta_{n'}) g_hat^2 coordinate-wise, then
/// theta'_i = theta_i - alpha0(n') / (sqrt(v'_i) + eps) * g_hat_i.
RmsPropState rmsprop_step(const RmsPropState& state, const Vector& g_hat);

/// Plain SGD baseline: theta - lr * g_hat.
Vector sgd_step(const Vector& theta, const Vector& g_hat, double lr);

}  // namespace adastab

#endif  // ADASTAB_OPTIMIZER_HPP
