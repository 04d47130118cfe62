#include <doctest.h>

#include <cmath>

#include "adastab/noise.hpp"
#include "adastab/objective.hpp"
#include "adastab/probes.hpp"
#include "adastab/rng.hpp"
#include "oracles.hpp"

using namespace adastab;

TEST_CASE("regularized_exp values and gradients") {
  Objective obj = make_objective("regularized_exp", 1);
  CHECK(value(obj, Vector{0.0}) == doctest::Approx(1.0).epsilon(1e-15));
  // Scalar oracle: e^{-1} + 1 and 2(1 - e^{-1}).
  const double expected_value = std::exp(-1.0) + 1.0;
  const double expected_grad = 2.0 * (1.0 - std::exp(-1.0));
  CHECK(value(obj, Vector{1.0}) ==
        doctest::Approx(expected_value).epsilon(1e-15));
  CHECK(grad(obj, Vector{0.0})[0] == 0.0);
  CHECK(grad(obj, Vector{1.0})[0] ==
        doctest::Approx(expected_grad).epsilon(1e-15));
  CHECK_THROWS_AS(value(obj, Vector{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("quadratic objective basics") {
  Objective obj = make_objective("quadratic", 2);
  CHECK(value(obj, Vector{0.0, 0.0}) == 0.0);
  Vector g = grad(obj, Vector{3.0, 4.0});
  CHECK(g[0] == 3.0);
  CHECK(g[1] == 4.0);
  CHECK(norm(g) == doctest::Approx(5.0));
}

TEST_CASE("built-in gradients match central finite differences") {
  RandomStream stream(SeedSpec{31, 0, 0});
  for (const char* id : {"regularized_exp", "quadratic", "double_well",
                         "logistic", "exp_flat"}) {
    const int dim = std::string(id) == "logistic" ? 4 : 3;
    Objective obj = make_objective(id, dim);
    for (int rep = 0; rep < 50; ++rep) {
      Vector x = scale(draw_standard_normal(stream, dim), 1.5);
      Vector fd = oracles::fd_gradient(obj.value_fn, x);
      Vector an = grad(obj, x);
      const double scale_ref = std::max(1.0, norm(an));
      CHECK(norm(sub(an, fd)) / scale_ref < 1e-5);
    }
  }
}

TEST_CASE("declared smoothness dominates a dense 1-d curvature grid") {
  // regularized_exp: second derivative 2 - 2e^{-x^2} + 4x^2 e^{-x^2}.
  {
    Objective obj = make_objective("regularized_exp", 1);
    const double grid_l = oracles::grid_max_abs(
        [](double x) {
          const double e = std::exp(-x * x);
          return 2.0 - 2.0 * e + 4.0 * x * x * e;
        },
        -10.0, 10.0);
    CHECK(grid_l <= obj.smoothness * (1.0 + 1e-9));
    CHECK(grid_l == doctest::Approx(obj.smoothness).epsilon(1e-6));
  }
  // double_well: per-coordinate curvature 12 t^2 - 3.8 on the declared box.
  {
    Objective obj = make_objective("double_well", 1);
    const double grid_l = oracles::grid_max_abs(
        [](double t) { return 12.0 * t * t - 3.8; }, -3.0, 3.0);
    CHECK(grid_l <= obj.smoothness * (1.0 + 1e-9));
    CHECK(grid_l == doctest::Approx(obj.smoothness).epsilon(1e-6));
  }
}

TEST_CASE("smoothness probe respects declared constants") {
  RandomStream stream(SeedSpec{32, 0, 0});
  for (const char* id : {"quadratic", "regularized_exp", "double_well"}) {
    Objective obj = make_objective(id, 2);
    auto probe = probe_smoothness(obj, stream, 10000, id == std::string("double_well") ? 3.0 : 5.0);
    CHECK(probe.pass);
    CHECK(probe.estimate <= obj.smoothness * (1.0 + 1e-9));
  }
  // Quadratic difference quotients equal 1 everywhere.
  Objective obj = make_objective("quadratic", 2);
  auto probe = probe_smoothness(obj, stream, 100, 5.0);
  CHECK(probe.estimate == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradient energy inequality holds at sampled points") {
  // The double well declares a box-restricted constant, so its samples stay
  // inside the box; the other objectives are globally smooth.
  RandomStream stream(SeedSpec{33, 0, 0});
  for (const char* id : {"regularized_exp", "quadratic", "double_well",
                         "logistic"}) {
    const int dim = std::string(id) == "logistic" ? 4 : 2;
    Objective obj = make_objective(id, dim);
    const bool boxed = std::string(id) == "double_well";
    for (int rep = 0; rep < 200; ++rep) {
      Vector x(static_cast<std::size_t>(dim), 0.0);
      if (boxed) {
        for (int i = 0; i < dim; ++i) {
          x.at_mut(i) = (2.0 * stream.next_double() - 1.0) * 3.0;
        }
      } else {
        x = scale(draw_standard_normal(stream, dim), 1.4);
      }
      const double g2 = squared_norm(grad(obj, x));
      CHECK(g2 <= 2.0 * obj.smoothness * value(obj, x) * (1.0 + 1e-9) + 1e-12);
    }
  }
}

TEST_CASE("deterministic oracle returns the exact gradient") {
  Objective obj = make_objective("double_well", 2);
  NoiseModel noise = make_noise("deterministic", obj);
  RandomStream stream(SeedSpec{41, 0, 0});
  Vector theta{0.3, -1.2};
  CHECK(stoch_grad(obj, noise, theta, stream) == grad(obj, theta));
  CHECK(noise.sigma0 == 1.0);
  CHECK(noise.sigma1 == 0.0);
}

TEST_CASE("affine gaussian second moment obeys the declared envelope") {
  Objective obj = make_objective("quadratic", 3);
  NoiseModel noise = make_noise("affine_gaussian", obj, {{"a", 0.7}, {"b", 0.4}});
  CHECK(noise.sigma0 == doctest::Approx(1.49));
  CHECK(noise.sigma1 == doctest::Approx(0.16 * 3));
  RandomStream stream(SeedSpec{42, 0, 0});
  Vector theta{1.0, -2.0, 0.5};
  auto probe = probe_affine_variance(obj, noise, theta, 100000, stream);
  CHECK(probe.pass);
  // The envelope is exact for this model, so the empirical moment should sit
  // close to it, not just below.
  const double exact = noise.sigma0 * squared_norm(grad(obj, theta)) + noise.sigma1;
  CHECK(probe.empirical ==
        doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("affine variance at a critical point reduces to sigma1") {
  Objective obj = make_objective("quadratic", 2);
  NoiseModel noise = make_noise("affine_gaussian", obj, {{"a", 1.0}, {"b", 1.0}});
  RandomStream stream(SeedSpec{43, 0, 0});
  auto probe = probe_affine_variance(obj, noise, Vector{0.0, 0.0}, 50000, stream);
  CHECK(probe.pass);
  CHECK(probe.empirical == doctest::Approx(noise.sigma1).epsilon(0.05));
}

TEST_CASE("full-batch minibatch equals the exact gradient") {
  Objective obj = make_objective("logistic", 3, {{"components", 6}});
  NoiseModel noise = make_noise("minibatch", obj, {{"batch_size", 6}});
  RandomStream stream(SeedSpec{44, 0, 0});
  Vector theta{0.2, -0.1, 0.4};
  Vector draw = stoch_grad(obj, noise, theta, stream);
  CHECK(norm(sub(draw, grad(obj, theta))) < 1e-12);
}

TEST_CASE("single-sample minibatch matches exhaustive enumeration") {
  Objective obj = make_objective("logistic", 2, {{"components", 2}});
  NoiseModel noise = make_noise("minibatch", obj, {{"batch_size", 1}});
  Vector theta{0.5, -0.3};
  // Enumerate the two equally likely draws.
  const Vector g0 = obj.components->component_grad(0, theta);
  const Vector g1 = obj.components->component_grad(1, theta);
  const double exact_second_moment =
      0.5 * (squared_norm(g0) + squared_norm(g1));
  RandomStream stream(SeedSpec{45, 0, 0});
  const int n = 200000;
  double acc = 0.0;
  Vector mean(theta.dim(), 0.0);
  for (int i = 0; i < n; ++i) {
    Vector d = stoch_grad(obj, noise, theta, stream);
    acc += squared_norm(d);
    mean = add(mean, d);
  }
  CHECK(acc / n == doctest::Approx(exact_second_moment).epsilon(0.01));
  // Unbiasedness: the mixture mean is the full gradient.
  mean = scale(mean, 1.0 / n);
  CHECK(norm(sub(mean, grad(obj, theta))) < 0.01);
  // Declared envelope dominates the exact mixture moment.
  CHECK(exact_second_moment <=
        noise.sigma0 * squared_norm(grad(obj, theta)) + noise.sigma1 + 1e-12);
}

TEST_CASE("unbiasedness probe passes for every stochastic model") {
  Objective obj = make_objective("double_well", 2);
  RandomStream stream(SeedSpec{46, 0, 0});
  Vector theta{0.7, -0.4};
  for (const char* id : {"additive_bounded", "affine_gaussian"}) {
    std::map<std::string, double> params = {{"b", 0.5}};
    if (std::string(id) == "affine_gaussian") params["a"] = 0.5;
    NoiseModel noise = make_noise(id, obj, params);
    auto probe = probe_unbiasedness(obj, noise, theta, 100000, stream);
    CHECK(probe.pass);
  }
}

TEST_CASE("non-flatness probe: growth for built-ins, failure for exp_flat") {
  RandomStream stream(SeedSpec{47, 0, 0});
  {
    Objective obj = make_objective("regularized_exp", 1);
    auto probe = probe_nonflatness(obj, stream, {2.0, 5.0, 10.0}, 64);
    CHECK(probe.pass);
    // 1-d oracle: |grad| at radius 10 is 2*10*(1 - e^{-100}).
    CHECK(probe.min_grad_norm.back() ==
          doctest::Approx(20.0 * (1.0 - std::exp(-100.0))).epsilon(1e-12));
  }
  {
    Objective obj = make_objective("quadratic", 3);
    auto probe = probe_nonflatness(obj, stream, {1.5, 3.0}, 64);
    CHECK(probe.pass);
    CHECK(probe.min_grad_norm[0] == doctest::Approx(1.5).epsilon(1e-12));
  }
  {
    Objective obj = make_objective("exp_flat", 1);
    auto probe = probe_nonflatness(obj, stream, {2.0, 10.0}, 64);
    CHECK_FALSE(probe.pass);  // the declared margin is refuted by sampling
  }
  {
    Objective obj = make_objective("double_well", 2);
    auto probe = probe_nonflatness(obj, stream, {2.5, 5.0}, 256);
    CHECK(probe.pass);
  }
}

TEST_CASE("sharpness probe: deterministic and minibatch pass, gaussian fails") {
  RandomStream stream(SeedSpec{48, 0, 0});
  {
    Objective obj = make_objective("quadratic", 2);
    NoiseModel noise = make_noise("deterministic", obj);
    auto probe = probe_sharpness(obj, noise, stream, 10, 20);
    CHECK(probe.applicable);
    CHECK(probe.pass);
  }
  {
    Objective obj = make_objective("logistic", 3, {{"components", 6}});
    NoiseModel noise = make_noise("minibatch", obj, {{"batch_size", 2}});
    auto probe = probe_sharpness(obj, noise, stream, 10, 50);
    CHECK(probe.applicable);
    CHECK(probe.pass);
  }
  {
    Objective obj = make_objective("quadratic", 2);
    NoiseModel noise = make_noise(
        "affine_gaussian", obj,
        {{"a", 0.5}, {"b", 0.5}, {"delta0", 0.5}, {"delta1", 0.6}});
    auto probe = probe_sharpness(obj, noise, stream, 20, 200);
    CHECK(probe.applicable);
    // Unbounded additive noise: some draw near a critical point exceeds the
    // claimed delta1.
    CHECK_FALSE(probe.pass);
  }
}

TEST_CASE("noise construction validates the pairing") {
  Objective quad = make_objective("quadratic", 2);
  CHECK_THROWS_AS(make_noise("minibatch", quad), std::invalid_argument);
  CHECK_THROWS_AS(make_noise("nonsense", quad), std::invalid_argument);
  Objective logit = make_objective("logistic", 2, {{"components", 4}});
  CHECK_THROWS_AS(make_noise("minibatch", logit, {{"batch_size", 9}}),
                  std::invalid_argument);
}

TEST_CASE("smoothness probe skips degenerate pairs") {
  Objective obj = make_objective("quadratic", 1);
  RandomStream stream(SeedSpec{49, 0, 0});
  auto probe = probe_smoothness(obj, stream, 3, 1e-30);
  CHECK(std::isfinite(probe.estimate));
}

TEST_CASE("smoothness probe reports a witnessing pair on failure") {
  // An objective that understates its curvature on purpose.
  Objective obj = make_objective("quadratic", 2);
  obj.smoothness = 0.5;
  RandomStream stream(SeedSpec{50, 0, 0});
  auto probe = probe_smoothness(obj, stream, 200, 2.0);
  CHECK_FALSE(probe.pass);
  CHECK(probe.estimate > 0.5);
  REQUIRE(probe.witness_x.size() == 2);
  REQUIRE(probe.witness_y.size() == 2);
  // The witness reproduces the offending quotient.
  Vector x(probe.witness_x), y(probe.witness_y);
  const double quot = norm(sub(grad(obj, x), grad(obj, y))) / norm(sub(x, y));
  CHECK(quot > obj.smoothness * (1.0 + 1e-9));
}

TEST_CASE("sampled sublevel bound stays under the analytic bound") {
  Objective obj = make_objective("quadratic", 2);
  RandomStream stream(SeedSpec{51, 0, 0});
  const double est = estimate_sublevel_bound(obj, stream, 4096);
  // Points with |grad| <= 1 have g <= 0.5; sampling reaches most of it.
  CHECK(est <= 0.5 + 1e-12);
  CHECK(est > 0.3);
}

TEST_CASE("factories reject unknown parameter names") {
  CHECK_THROWS_WITH_AS(make_objective("double_well", 2, {{"bax", 3.0}}),
                       doctest::Contains("bax"), std::invalid_argument);
  Objective obj = make_objective("quadratic", 2);
  CHECK_THROWS_WITH_AS(make_noise("affine_gaussian", obj, {{"sigma", 1.0}}),
                       doctest::Contains("sigma"), std::invalid_argument);
}

TEST_CASE("minibatch means over enumerated batches recover the gradient") {
  // All 2-subsets of 4 components average to the full gradient exactly.
  Objective obj = make_objective("logistic", 3, {{"components", 4}});
  Vector theta{0.3, -0.6, 0.1};
  Vector acc(theta.dim(), 0.0);
  int batches = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      Vector gi = obj.components->component_grad(i, theta);
      Vector gj = obj.components->component_grad(j, theta);
      acc = add(acc, scale(add(gi, gj), 0.5));
      batches += 1;
    }
  }
  acc = scale(acc, 1.0 / batches);
  CHECK(norm(sub(acc, grad(obj, theta))) < 1e-14);
}
