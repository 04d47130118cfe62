#ifndef ADASTAB_OBJECTIVE_HPP
#define ADASTAB_OBJECTIVE_HPP

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "adastab/vector.hpp"

namespace adastab {

/// Finite-sum structure g = (1/N) sum_i g_i, used by the minibatch oracle.
/// grad_spread_sq_bound, when set, bounds (1/N) sum_i |grad g_i - grad g|^2
/// uniformly over theta; the minibatch noise model derives its sigma1 from it.
struct FiniteSum {
  int count = 0;
  std::function<double(int, const Vector&)> component_value;
  std::function<Vector(int, const Vector&)> component_grad;
  std::optional<double> grad_spread_sq_bound;
};

/// Differentiable test objective with analytic metadata.
///
/// value_fn is non-negative everywhere; g_inf is the declared lower bound (0
/// for every built-in). smoothness is a valid Lipschitz constant of the
/// gradient on the region trajectories visit (for the double well it is a
/// box-restricted constant, see make_objective). delta_tilde is the declared
/// non-flatness margin, 0 when no claim is made. sublevel_g_bound, when set,
/// is an upper bound of g over the gradient sublevel set
/// { theta : |grad g(theta)| <= delta_tilde }.
struct Objective {
  std::string id;
  int dim = 1;
  std::function<double(const Vector&)> value_fn;
  std::function<Vector(const Vector&)> grad_fn;
  double smoothness = 1.0;
  double g_inf = 0.0;
  double delta_tilde = 0.0;
  double crit_radius = 0.0;  // largest radius containing declared critical points
  std::optional<double> sublevel_g_bound;
  bool coercive = true;
  std::optional<FiniteSum> components;
};

double value(const Objective& obj, const Vector& theta);
Vector grad(const Objective& obj, const Vector& theta);

/// Built-in catalogue. Known ids:
///   regularized_exp  exp(-|x|^2) + |x|^2
///   quadratic        0.5 |x|^2
///   double_well      sum_i (x_i^2 - 1)^2 + 0.1 |x|^2
///   logistic         ridge-regularized logistic loss over a fixed synthetic
///                    sample (params: components, lambda, data_seed)
///   exp_flat         exp(-|x|^2); asymptotically flat on purpose, ships a
///                    non-flatness claim that the probe refutes
Objective make_objective(const std::string& id, int dim,
                         const std::map<std::string, double>& params = {});

}  // namespace adastab

#endif  // ADASTAB_OBJECTIVE_HPP
