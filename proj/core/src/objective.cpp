#include "adastab/objective.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "adastab/rng.hpp"

namespace adastab {

double value(const Objective& obj, const Vector& theta) {
  if (static_cast<int>(theta.dim()) != obj.dim) {
    throw std::invalid_argument("value: dimension mismatch for objective " +
                                obj.id);
  }
  return obj.value_fn(theta);
}

Vector grad(const Objective& obj, const Vector& theta) {
  if (static_cast<int>(theta.dim()) != obj.dim) {
    throw std::invalid_argument("grad: dimension mismatch for objective " +
                                obj.id);
  }
  return obj.grad_fn(theta);
}

namespace {

double param_or(const std::map<std::string, double>& params,
                const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void require_params(const std::map<std::string, double>& params,
                    const std::string& id,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : params) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      throw std::invalid_argument("objective '" + id +
                                  "': unknown parameter '" + key + "'");
    }
  }
}

Objective make_regularized_exp(int dim) {
  Objective obj;
  obj.id = "regularized_exp";
  obj.dim = dim;
  obj.value_fn = [](const Vector& x) {
    const double r2 = squared_norm(x);
    return std::exp(-r2) + r2;
  };
  obj.grad_fn = [](const Vector& x) {
    const double f = 2.0 * (1.0 - std::exp(-squared_norm(x)));
    return scale(x, f);
  };
  // Largest Hessian eigenvalue is 2 + 4 exp(-3/2), attained at |x|^2 = 3/2.
  obj.smoothness = 2.0 + 4.0 * std::exp(-1.5);
  obj.delta_tilde = 1.0;
  obj.crit_radius = 0.0;
  // |grad| = 2r(1 - exp(-r^2)) is increasing in r, so the gradient sublevel
  // set is a ball; find its radius by bisection.
  {
    const double target = obj.delta_tilde;
    double lo = 0.0, hi = 4.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gn = 2.0 * mid * (1.0 - std::exp(-mid * mid));
      (gn < target ? lo : hi) = mid;
    }
    obj.sublevel_g_bound = std::exp(-hi * hi) + hi * hi;
  }
  obj.coercive = true;
  return obj;
}

Objective make_quadratic(int dim) {
  Objective obj;
  obj.id = "quadratic";
  obj.dim = dim;
  obj.value_fn = [](const Vector& x) { return 0.5 * squared_norm(x); };
  obj.grad_fn = [](const Vector& x) { return x; };
  obj.smoothness = 1.0;
  obj.delta_tilde = 1.0;
  obj.crit_radius = 0.0;
  obj.sublevel_g_bound = 0.5 * obj.delta_tilde * obj.delta_tilde;
  obj.coercive = true;
  return obj;
}

Objective make_double_well(int dim, double box) {
  Objective obj;
  obj.id = "double_well";
  obj.dim = dim;
  obj.value_fn = [](const Vector& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) {
      const double t = x[i];
      const double w = t * t - 1.0;
      s += w * w + 0.1 * t * t;
    }
    return s;
  };
  obj.grad_fn = [](const Vector& x) {
    std::vector<double> g(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
      const double t = x[i];
      g[i] = 4.0 * t * t * t - 3.8 * t;
    }
    return Vector(std::move(g));
  };
  // The Hessian is diag(12 x_i^2 - 3.8); its spectral norm over [-box, box]^d
  // is max(12 box^2 - 3.8, 3.8). Not globally smooth; the declared constant
  // is valid on the box, which covers every trajectory the suite runs.
  obj.smoothness = std::max(12.0 * box * box - 3.8, 3.8);
  obj.delta_tilde = 0.1;
  // Critical points have each coordinate in {0, +-sqrt(0.95)}.
  obj.crit_radius = std::sqrt(0.95 * dim);
  // Per coordinate, sup of (t^2-1)^2 + 0.1 t^2 over {|4t^3 - 3.8t| <= 0.1} is
  // attained at t = 0, so d * 1.0 bounds g over the whole sublevel set.
  obj.sublevel_g_bound = static_cast<double>(dim);
  obj.coercive = true;
  return obj;
}

Objective make_exp_flat(int dim) {
  Objective obj;
  obj.id = "exp_flat";
  obj.dim = dim;
  obj.value_fn = [](const Vector& x) { return std::exp(-squared_norm(x)); };
  obj.grad_fn = [](const Vector& x) {
    return scale(x, -2.0 * std::exp(-squared_norm(x)));
  };
  obj.smoothness = 2.0;
  // The claim below is false (the gradient vanishes at infinity); the
  // objective exists so the non-flatness probe has a failing case.
  obj.delta_tilde = 0.05;
  obj.crit_radius = 0.0;
  obj.sublevel_g_bound = 1.0;  // g <= 1 everywhere
  obj.coercive = false;
  return obj;
}

struct LogisticData {
  std::vector<Vector> x;
  std::vector<double> y;
  double lambda = 0.1;
};

double logistic_component(const LogisticData& d, int i, const Vector& theta) {
  const double z = -d.y[i] * dot(d.x[i], theta);
  // log(1 + exp(z)) without overflow
  const double loss = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return loss + d.lambda * squared_norm(theta);
}

Vector logistic_component_grad(const LogisticData& d, int i,
                               const Vector& theta) {
  const double z = -d.y[i] * dot(d.x[i], theta);
  const double s = 1.0 / (1.0 + std::exp(-z));  // sigmoid(z)
  Vector g = scale(d.x[i], -d.y[i] * s);
  return axpy(g, 2.0 * d.lambda, theta);
}

Objective make_logistic(int dim, const std::map<std::string, double>& params) {
  const int n = static_cast<int>(param_or(params, "components", 8));
  const double lambda = param_or(params, "lambda", 0.1);
  const auto data_seed =
      static_cast<std::uint64_t>(param_or(params, "data_seed", 2024));
  if (n < 1) throw std::invalid_argument("logistic: components must be >= 1");
  if (lambda <= 0.0) throw std::invalid_argument("logistic: lambda must be > 0");

  auto data = std::make_shared<LogisticData>();
  data->lambda = lambda;
  RandomStream stream(SeedSpec{data_seed, 0, 0});
  for (int i = 0; i < n; ++i) {
    data->x.push_back(draw_standard_normal(stream, dim));
    data->y.push_back(stream.next_double() < 0.5 ? -1.0 : 1.0);
  }

  Objective obj;
  obj.id = "logistic";
  obj.dim = dim;
  obj.value_fn = [data, n](const Vector& theta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += logistic_component(*data, i, theta);
    return s / n;
  };
  obj.grad_fn = [data, n, dim](const Vector& theta) {
    Vector g(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i) {
      g = add(g, logistic_component_grad(*data, i, theta));
    }
    return scale(g, 1.0 / n);
  };

  double sum_x2 = 0.0, max_x = 0.0;
  for (const auto& xi : data->x) {
    sum_x2 += squared_norm(xi);
    max_x = std::max(max_x, norm(xi));
  }
  obj.smoothness = sum_x2 / (4.0 * n) + 2.0 * lambda;
  obj.delta_tilde = 0.2;

  // Newton iteration to the unique minimizer (the ridge makes g strongly
  // convex with parameter 2 lambda); used for crit_radius and the sublevel
  // bound below.
  Vector theta_star(static_cast<std::size_t>(dim), 0.0);
  for (int it = 0; it < 200; ++it) {
    Vector gr = obj.grad_fn(theta_star);
    if (norm(gr) < 1e-13) break;
    // Gradient step with the inverse smoothness bound; linear but reliable.
    theta_star = axpy(theta_star, -1.0 / obj.smoothness, gr);
  }
  // Polish with many more steps if needed.
  for (int it = 0; it < 20000 && norm(obj.grad_fn(theta_star)) > 1e-12; ++it) {
    theta_star = axpy(theta_star, -1.0 / obj.smoothness, obj.grad_fn(theta_star));
  }
  obj.crit_radius = norm(theta_star);
  const double radius = obj.delta_tilde / (2.0 * lambda);
  obj.sublevel_g_bound =
      obj.value_fn(theta_star) + 0.5 * obj.smoothness * radius * radius;
  obj.coercive = true;

  FiniteSum fs;
  fs.count = n;
  fs.component_value = [data](int i, const Vector& theta) {
    return logistic_component(*data, i, theta);
  };
  fs.component_grad = [data](int i, const Vector& theta) {
    return logistic_component_grad(*data, i, theta);
  };
  // The ridge term cancels inside grad g_i - grad g, so the deviation is the
  // logistic part only, bounded by |x_i| + mean |x_j| coordinate-free.
  {
    double mean_x = 0.0;
    for (const auto& xi : data->x) mean_x += norm(xi);
    mean_x /= n;
    double spread = 0.0;
    for (const auto& xi : data->x) {
      const double dev = norm(xi) + mean_x;
      spread += dev * dev;
    }
    fs.grad_spread_sq_bound = spread / n;
  }
  obj.components = std::move(fs);
  return obj;
}

}  // namespace

Objective make_objective(const std::string& id, int dim,
                         const std::map<std::string, double>& params) {
  if (dim < 1) throw std::invalid_argument("make_objective: dim must be >= 1");
  if (id == "regularized_exp") {
    require_params(params, id, {});
    return make_regularized_exp(dim);
  }
  if (id == "quadratic") {
    require_params(params, id, {});
    return make_quadratic(dim);
  }
  if (id == "double_well") {
    require_params(params, id, {"box"});
    return make_double_well(dim, param_or(params, "box", 3.0));
  }
  if (id == "logistic") {
    require_params(params, id, {"components", "lambda", "data_seed"});
    return make_logistic(dim, params);
  }
  if (id == "exp_flat") {
    require_params(params, id, {});
    return make_exp_flat(dim);
  }
  throw std::invalid_argument("make_objective: unknown objective id '" + id +
                              "'");
}

}  // namespace adastab
