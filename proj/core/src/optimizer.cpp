#include "adastab/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace adastab {

namespace {

// Error-free addition of b onto the pair (hi, lo) (two-sum).
void compensated_add(double& hi, double& lo, double b) {
  const double s = hi + b;
  const double bb = s - hi;
  const double err = (hi - (s - bb)) + (b - bb);
  hi = s;
  lo += err;
  // Renormalize so hi carries the full rounded value.
  const double t = hi + lo;
  lo = lo - (t - hi);
  hi = t;
}

}  // namespace

AdaGradNormState make_adagrad_state(Vector theta1, double alpha0, double s0) {
  if (alpha0 <= 0.0) throw std::invalid_argument("adagrad: alpha0 must be > 0");
  if (s0 <= 0.0) throw std::invalid_argument("adagrad: s0 must be > 0");
  AdaGradNormState st;
  st.theta = std::move(theta1);
  st.s_hi = s0;
  st.s_lo = 0.0;
  st.n = 0;
  st.alpha0 = alpha0;
  st.s0 = s0;
  return st;
}

AdaGradNormState adagrad_step(const AdaGradNormState& state,
                              const Vector& g_hat) {
  require_same_dim(state.theta, g_hat, "adagrad_step");
  g_hat.check_finite();
  AdaGradNormState next = state;
  const double g2 = squared_norm(g_hat);
  compensated_add(next.s_hi, next.s_lo, g2);
  next.theta = axpy(state.theta, -state.alpha0 / std::sqrt(next.s_hi), g_hat);
  next.n = state.n + 1;
  return next;
}

RmsPropState make_rmsprop_state(Vector theta1, double beta1, double eps,
                                double v0) {
  if (beta1 <= 0.0 || beta1 >= 1.0) {
    throw std::invalid_argument("rmsprop: beta1 must be in (0,1)");
  }
  if (eps <= 0.0) throw std::invalid_argument("rmsprop: eps must be > 0");
  if (v0 <= 0.0) throw std::invalid_argument("rmsprop: v0 must be > 0");
  RmsPropState st;
  st.v = Vector(theta1.dim(), v0);
  st.theta = std::move(theta1);
  st.n = 0;
  st.beta1 = beta1;
  st.eps = eps;
  st.v0 = v0;
  return st;
}

double schedule_beta(std::int64_t n, double beta1) {
  if (n < 1) throw std::invalid_argument("schedule_beta: n must be >= 1");
  if (n == 1) return beta1;
  return 1.0 - 1.0 / static_cast<double>(n);
}

double schedule_alpha0(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("schedule_alpha0: n must be >= 1");
  return 1.0 / std::sqrt(static_cast<double>(n));
}

RmsPropState rmsprop_step(const RmsPropState& state, const Vector& g_hat) {
  require_same_dim(state.theta, g_hat, "rmsprop_step");
  g_hat.check_finite();
  const std::int64_t n = state.n + 1;
  const double beta = schedule_beta(n, state.beta1);
  const double one_minus_beta = 1.0 - beta;
  const double a0 = schedule_alpha0(n);

  RmsPropState next = state;
  std::vector<double> v(state.v.dim());
  std::vector<double> theta(state.theta.dim());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double gi = g_hat[i];
    v[i] = beta * state.v[i] + one_minus_beta * gi * gi;
    theta[i] = state.theta[i] - a0 / (std::sqrt(v[i]) + state.eps) * gi;
  }
  next.v = Vector(std::move(v));
  next.theta = Vector(std::move(theta));
  next.n = n;
  return next;
}

Vector sgd_step(const Vector& theta, const Vector& g_hat, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be > 0");
  require_same_dim(theta, g_hat, "sgd_step");
  theta.check_finite();
  g_hat.check_finite();
  return axpy(theta, -lr, g_hat);
}

}  // namespace adastab
