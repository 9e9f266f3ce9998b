#include "htefuse/rng.hpp"
#include "htefuse/stute.hpp"

#include <doctest.h>

#include <random>

using namespace htefuse;

TEST_CASE("uncensored samples get uniform weights 1/n") {
  for (int n : {1, 2, 5, 17}) {
    Eigen::VectorXd t(n);
    Eigen::VectorXi del = Eigen::VectorXi::Ones(n);
    auto eng = make_engine(3, n);
    std::uniform_real_distribution<double> unif(0.1, 5.0);
    for (int i = 0; i < n; ++i) t[i] = unif(eng);
    const WeightVector w = compute_weights(t, del);
    for (int i = 0; i < n; ++i) CHECK(w.weights[i] == doctest::Approx(1.0 / n).epsilon(1e-15));
    CHECK(w.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("n=3 with middle censoring gives (1/3, 0, 2/3)") {
  Eigen::VectorXd t(3);
  t << 1.0, 2.0, 3.0;
  Eigen::VectorXi del(3);
  del << 1, 0, 1;
  const WeightVector w = compute_weights(t, del);
  CHECK(w.weights[0] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(w.weights[1] == 0.0);
  CHECK(w.weights[2] == doctest::Approx(2.0 / 3).epsilon(1e-15));
}

TEST_CASE("single censored observation carries no mass unless redistributed") {
  Eigen::VectorXd t(1);
  t << 2.0;
  Eigen::VectorXi del(1);
  del << 0;
  CHECK(compute_weights(t, del).weights[0] == 0.0);
  CHECK(compute_weights(t, del, true).weights[0] == 1.0);
}

TEST_CASE("weights match product-limit jumps on random censored samples") {
  auto eng = make_engine(99, 0);
  std::exponential_distribution<double> ev(1.0), cv(0.7);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(eng() % 60);
    Eigen::VectorXd t(n);
    Eigen::VectorXi del(n);
    for (int i = 0; i < n; ++i) {
      const double e = ev(eng), c = cv(eng);
      t[i] = std::min(e, c) + 1e-3;
      del[i] = e <= c;
    }
    const WeightVector w = compute_weights(t, del);
    const StepFunction km = km_estimator(t, del);
    for (int i = 0; i < n; ++i) {
      if (del[w.order[i]] == 0) {
        CHECK(w.weights[i] == 0.0);
        continue;
      }
      // with continuous times each event time is unique almost surely
      const double jump = km.jump_at(t[w.order[i]]);
      CHECK(std::abs(w.weights[i] - jump) < 1e-12);
    }
  }
}

TEST_CASE("tied event times: weight sum equals the grouped KM jump") {
  Eigen::VectorXd t(4);
  t << 1.0, 1.0, 2.0, 3.0;
  Eigen::VectorXi del(4);
  del << 1, 1, 0, 1;
  const WeightVector w = compute_weights(t, del);
  const StepFunction km = km_estimator(t, del);
  CHECK(w.weights[0] + w.weights[1] == doctest::Approx(km.jump_at(1.0)).epsilon(1e-15));
}

TEST_CASE("scale invariance: weights ignore the time unit") {
  Eigen::VectorXd t(5);
  t << 0.3, 1.2, 0.9, 2.2, 1.7;
  Eigen::VectorXi del(5);
  del << 1, 0, 1, 1, 0;
  const WeightVector a = compute_weights(t, del);
  const WeightVector b = compute_weights((t * 17.0).eval(), del);
  CHECK(a.order == b.order);
  for (int i = 0; i < 5; ++i) CHECK(a.weights[i] == doctest::Approx(b.weights[i]).epsilon(1e-15));
}

TEST_CASE("flipping a delta from 1 to 0 never increases total mass") {
  auto eng = make_engine(5, 0);
  std::uniform_real_distribution<double> unif(0.1, 3.0);
  const int n = 12;
  Eigen::VectorXd t(n);
  Eigen::VectorXi del = Eigen::VectorXi::Ones(n);
  for (int i = 0; i < n; ++i) t[i] = unif(eng);
  double prev = compute_weights(t, del).total_mass();
  for (int i = 0; i < n; ++i) {
    del[i] = 0;
    const double mass = compute_weights(t, del).total_mass();
    CHECK(mass <= prev + 1e-14);
    prev = mass;
  }
}

TEST_CASE("km estimator basics") {
  SUBCASE("no censoring, four distinct times drops by 1/4 each") {
    Eigen::VectorXd t(4);
    t << 1, 2, 3, 4;
    Eigen::VectorXi del = Eigen::VectorXi::Ones(4);
    const StepFunction s = km_estimator(t, del);
    CHECK(s(0.5) == doctest::Approx(1.0));
    CHECK(s(1.0) == doctest::Approx(0.75));
    CHECK(s(2.5) == doctest::Approx(0.5));
    CHECK(s(4.0) == doctest::Approx(0.0));
  }
  SUBCASE("all censored keeps survival at 1") {
    Eigen::VectorXd t(3);
    t << 1, 2, 3;
    Eigen::VectorXi del = Eigen::VectorXi::Zero(3);
    const StepFunction s = km_estimator(t, del);
    CHECK(s(2.9) == doctest::Approx(1.0));
    CHECK(s.jump_times.empty());
  }
  SUBCASE("jumps of 1 - S at events equal the stute weights") {
    Eigen::VectorXd t(3);
    t << 1, 2, 3;
    Eigen::VectorXi del(3);
    del << 1, 0, 1;
    const StepFunction s = km_estimator(t, del);
    CHECK(s.jump_at(1.0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(s.jump_at(3.0) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  }
}

TEST_CASE("empty and nonpositive inputs are rejected") {
  Eigen::VectorXd empty(0);
  Eigen::VectorXi none(0);
  CHECK_THROWS_AS(compute_weights(empty, none), std::invalid_argument);
  CHECK_THROWS_AS(km_estimator(empty, none), std::invalid_argument);
  Eigen::VectorXd bad(2);
  bad << 1.0, -0.5;
  Eigen::VectorXi d2(2);
  d2 << 1, 1;
  CHECK_THROWS_AS(compute_weights(bad, d2), std::invalid_argument);
}
