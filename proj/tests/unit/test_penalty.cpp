#include "htefuse/penalty.hpp"
#include "htefuse/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace htefuse;

namespace {

// trapezoid integration of the MCP integrand lambda*(1 - x/(gamma*lambda))_+
double mcp_value_by_quadrature(double t, double lambda, double gamma) {
  const int steps = 20000;
  double sum = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double x = t * i / steps;
    const double f = lambda * std::max(0.0, 1.0 - x / (gamma * lambda));
    sum += (i == 0 || i == steps) ? 0.5 * f : f;
  }
  return sum * t / steps;
}

// brute-force scalar minimizer of 0.5*v*theta^2 - z*theta + rho(|theta|)
double grid_minimizer(double z, double v, double lambda, const PenaltySpec& spec, double step) {
  const double radius = 2.0 * std::abs(z) / v + 1.0;
  double best_theta = 0.0;
  double best = rho_eval(0.0, lambda, spec).value;
  for (double theta = -radius; theta <= radius; theta += step) {
    const double obj = 0.5 * v * theta * theta - z * theta +
                       rho_eval(std::abs(theta), lambda, spec).value;
    if (obj < best) {
      best = obj;
      best_theta = theta;
    }
  }
  return best_theta;
}

}  // namespace

TEST_CASE("MCP closed forms") {
  const PenaltySpec mcp = PenaltySpec::mcp(3.0);
  SUBCASE("at zero: value 0, slope lambda") {
    const auto pv = rho_eval(0.0, 0.2, mcp);
    CHECK(pv.value == 0.0);
    CHECK(pv.derivative == doctest::Approx(0.2));
  }
  SUBCASE("at the knot t = gamma*lambda the penalty saturates at gamma*lambda^2/2") {
    const auto pv = rho_eval(0.6, 0.2, mcp);
    CHECK(pv.value == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(pv.derivative == doctest::Approx(0.0));
  }
  SUBCASE("interior value matches quadrature of the integrand") {
    const double t = 0.1, lambda = 0.2, gamma = 3.0;
    const auto pv = rho_eval(t, lambda, mcp);
    CHECK(pv.value == doctest::Approx(mcp_value_by_quadrature(t, lambda, gamma)).epsilon(1e-8));
    // slope equals the integrand at t
    CHECK(pv.derivative ==
          doctest::Approx(lambda * (1.0 - t / (gamma * lambda))).epsilon(1e-12));
  }
  SUBCASE("nondecreasing with rho(0) = 0") {
    double prev = 0.0;
    for (double t = 0.0; t < 1.0; t += 0.01) {
      const double val = rho_eval(t, 0.2, mcp).value;
      CHECK(val >= prev - 1e-15);
      prev = val;
    }
  }
  SUBCASE("negative t rejected") { CHECK_THROWS_AS(rho_eval(-0.1, 0.2, mcp), std::invalid_argument); }
}

TEST_CASE("SCAD closed forms agree with quadrature of its derivative") {
  const PenaltySpec scad = PenaltySpec::scad(3.7);
  const double lambda = 0.3;
  double acc = 0.0;
  double prev_t = 0.0;
  for (double t = 0.005; t < 1.6; t += 0.005) {
    // integrate the derivative; compare against the closed-form value
    const double mid = 0.5 * (prev_t + t);
    acc += rho_eval(mid, lambda, scad).derivative * (t - prev_t);
    prev_t = t;
    CHECK(rho_eval(t, lambda, scad).value == doctest::Approx(acc).epsilon(1e-4));
  }
}

TEST_CASE("coordinate_update spot values") {
  const PenaltySpec mcp = PenaltySpec::mcp(3.0);
  SUBCASE("dead zone: |z| <= lambda collapses to zero") {
    CHECK(coordinate_update(0.15, 1.0, 0.2, mcp) == 0.0);
    CHECK(coordinate_update(-0.2, 1.0, 0.2, mcp) == 0.0);
  }
  SUBCASE("flat tail: |z| >= v*gamma*lambda returns z/v") {
    CHECK(coordinate_update(0.9, 1.0, 0.2, mcp) == doctest::Approx(0.9));
    CHECK(coordinate_update(-2.0, 2.0, 0.2, mcp) == doctest::Approx(-1.0));
  }
  SUBCASE("interior: z=0.3, v=1, lambda=0.2, gamma=3 gives 0.15") {
    CHECK(coordinate_update(0.3, 1.0, 0.2, mcp) == doctest::Approx(0.15).epsilon(1e-12));
  }
  SUBCASE("odd symmetry") {
    for (double z : {0.05, 0.31, 0.77, 2.2})
      CHECK(coordinate_update(-z, 1.3, 0.2, mcp) ==
            doctest::Approx(-coordinate_update(z, 1.3, 0.2, mcp)));
  }
  SUBCASE("lambda -> 0 recovers least squares") {
    CHECK(coordinate_update(0.4, 1.6, 0.0, mcp) == doctest::Approx(0.25));
  }
  SUBCASE("v below the MCP convexity bound is rejected") {
    CHECK_THROWS_AS(coordinate_update(0.5, 0.3, 0.2, mcp), std::invalid_argument);
  }
}

TEST_CASE("coordinate_update matches grid minimization for MCP and SCAD") {
  auto eng = make_engine(2024, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const double z = (unif(eng) * 2.0 - 1.0) * 3.0;
    const double lambda = 0.05 + unif(eng) * 0.8;
    const bool use_scad = rep % 2 == 1;
    const double gamma = use_scad ? 2.5 + unif(eng) * 3.0 : 1.5 + unif(eng) * 3.0;
    const PenaltySpec spec = use_scad ? PenaltySpec::scad(gamma) : PenaltySpec::mcp(gamma);
    const double vmin = use_scad ? 1.0 / (gamma - 1.0) : 1.0 / gamma;
    const double v = vmin + 0.15 + unif(eng) * 2.0;
    const double exact = coordinate_update(z, v, lambda, spec);
    const double approx = grid_minimizer(z, v, lambda, spec, 1e-4);
    CHECK(std::abs(exact - approx) < 2e-4);
    // and the exact solution is never beaten by the grid by more than slack
    const double obj_exact = 0.5 * v * exact * exact - z * exact +
                             rho_eval(std::abs(exact), lambda, spec).value;
    const double obj_grid = 0.5 * v * approx * approx - z * approx +
                            rho_eval(std::abs(approx), lambda, spec).value;
    CHECK(obj_exact <= obj_grid + 1e-12);
  }
}

TEST_CASE("adaptive lasso reduces to soft thresholding") {
  const PenaltySpec al = PenaltySpec::adaptive_lasso();
  CHECK(coordinate_update(0.5, 1.0, 0.2, al) == doctest::Approx(0.3));
  CHECK(coordinate_update(-0.5, 2.0, 0.2, al) == doctest::Approx(-0.15));
  CHECK(coordinate_update(0.1, 1.0, 0.2, al) == 0.0);
}

TEST_CASE("spec validation") {
  PenaltySpec bad = PenaltySpec::mcp(0.9);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = PenaltySpec::scad(1.8);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
