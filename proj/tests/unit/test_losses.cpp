#include <cmath>
#include <random>

#include "doctest.h"
#include "ltmx/error.hpp"
#include "ltmx/losses.hpp"
#include "support.hpp"

using namespace ltmx;
using namespace ltmx::test;

TEST_SUITE("losses") {
  TEST_CASE("cross-entropy examples") {
    CHECK(loss_ce(Vector::Zero(4), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    Vector v = Vector::Zero(5);
    v[3] = 50.0;
    CHECK(loss_ce(v, 3) < 1e-20);
    CHECK(loss_ce(v, 3) >= 0.0);
  }

  TEST_CASE("cross-entropy matches extended-precision oracle") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
      const Vector z = random_vector(rng, 10, 3.0);
      const int y = t % 10;
      CHECK(rel_err(loss_ce(z, y), static_cast<double>(ce_oracle(z, y))) < 1e-6);
    }
  }

  TEST_CASE("balanced softmax examples") {
    const Vector uniform = Vector::Constant(10, 0.1);
    CHECK(loss_bal(Vector::Zero(10), 4, uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    Vector pi(2);
    pi << 0.9, 0.1;
    CHECK(loss_bal(Vector::Zero(2), 1, pi) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
      const Vector z = random_vector(rng, 10);
      const Vector p = random_priors(rng, 10);
      const Vector shifted = z.array() + p.array().log();
      CHECK(std::abs(loss_bal(z, t % 10, p) - loss_ce(shifted, t % 10)) < 1e-9);
    }
  }

  TEST_CASE("inverse softmax examples") {
    Vector pi(2);
    pi << 0.9, 0.1;
    const double expect = -std::log(81.0 / 82.0);
    CHECK(loss_inv(Vector::Zero(2), 0, pi, reversed(pi)) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.01227).epsilon(1e-3));
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
      const Vector z = random_vector(rng, 10);
      const Vector p = random_priors(rng, 10);
      const Vector shifted = z.array() + p.array().log() - reversed(p).array().log();
      CHECK(std::abs(loss_inv(z, t % 10, p, reversed(p)) - loss_ce(shifted, t % 10)) < 1e-9);
    }
  }

  TEST_CASE("uniform priors reduce both shifted losses to plain cross-entropy") {
    std::mt19937_64 rng(4);
    const Vector uniform = Vector::Constant(10, 0.1);
    for (int t = 0; t < 100; ++t) {
      const Vector z = random_vector(rng, 10);
      CHECK(loss_inv(z, t % 10, uniform, reversed(uniform)) == loss_ce(z, t % 10));
      CHECK(std::abs(loss_bal(z, t % 10, uniform) - loss_ce(z, t % 10)) < 1e-12);
    }
  }

  TEST_CASE("zero priors are rejected; smoothing makes them usable") {
    Vector p(3);
    p << 0.5, 0.5, 0.0;
    CHECK_THROWS_AS(loss_bal(Vector::Zero(3), 0, p), NumericError);
    CHECK_THROWS_AS(loss_inv(Vector::Zero(3), 0, p, reversed(p)), NumericError);
    const Vector s = smooth_priors(p);
    CHECK(s.minCoeff() > 0.0);
    CHECK(std::abs(s.sum() - 1.0) < 1e-12);
    CHECK(std::isfinite(loss_inv(Vector::Zero(3), 0, s, reversed(s))));
  }

  TEST_CASE("composite loss") {
    const Vector uniform = Vector::Constant(10, 0.1);
    const Vector z = Vector::Zero(10);
    CHECK(loss_experts_composite(z, z, z, 3, uniform).total() == doctest::Approx(3.0 * std::log(10.0)).epsilon(1e-12));

    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
      const Vector v1 = random_vector(rng, 10), v2 = random_vector(rng, 10), v3 = random_vector(rng, 10);
      const Vector p = random_priors(rng, 10);
      const int y = t % 10;
      ExpertLogitGrads g;
      const auto c = loss_experts_composite(v1, v2, v3, y, p, &g);
      CHECK(std::abs(c.total() - (loss_ce(v1, y) + loss_bal(v2, y, p) + loss_inv(v3, y, p, reversed(p)))) < 1e-9);
      CHECK(c.ce >= 0.0);
      CHECK(c.bal >= 0.0);
      CHECK(c.inv >= 0.0);
      for (int i = 0; i < 10; ++i) {
        auto total_v1 = [&](const Vector& x) { return loss_experts_composite(x, v2, v3, y, p).total(); };
        auto total_v2 = [&](const Vector& x) { return loss_experts_composite(v1, x, v3, y, p).total(); };
        auto total_v3 = [&](const Vector& x) { return loss_experts_composite(v1, v2, x, y, p).total(); };
        CHECK(rel_err(g.ce[i], central_diff(total_v1, v1, i)) < 1e-3);
        CHECK(rel_err(g.bal[i], central_diff(total_v2, v2, i)) < 1e-3);
        CHECK(rel_err(g.inv[i], central_diff(total_v3, v3, i)) < 1e-3);
      }
    }
  }

  TEST_CASE("per-loss gradients match central differences") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
      const Vector z = random_vector(rng, 10);
      const Vector p = random_priors(rng, 10);
      const int y = static_cast<int>(rng() % 10);
      Vector gc, gb, gi;
      loss_ce(z, y, &gc);
      loss_bal(z, y, p, &gb);
      loss_inv(z, y, p, reversed(p), &gi);
      for (int i = 0; i < 10; ++i) {
        CHECK(rel_err(gc[i], central_diff([&](const Vector& x) { return loss_ce(x, y); }, z, i)) < 1e-3);
        CHECK(rel_err(gb[i], central_diff([&](const Vector& x) { return loss_bal(x, y, p); }, z, i)) < 1e-3);
        CHECK(rel_err(gi[i], central_diff([&](const Vector& x) { return loss_inv(x, y, p, reversed(p)); }, z, i)) <
              1e-3);
      }
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double th = u(rng), tt = u(rng);
      double gh = 0.0;
      loss_confidence(th, tt, &gh);
      const double h = 1e-4;
      const double fd = (loss_confidence(th + h, tt) - loss_confidence(th - h, tt)) / (2 * h);
      CHECK(rel_err(gh, fd) < 1e-3);
    }
  }

  TEST_CASE("cross-entropy tends to zero with the margin") {
    double prev = 1e300;
    for (double m : {0.0, 2.0, 5.0, 10.0, 20.0, 40.0}) {
      Vector z = Vector::Zero(6);
      z[1] = m;
      const double l = loss_ce(z, 1);
      CHECK(l < prev);
      CHECK(l >= 0.0);
      prev = l;
    }
    CHECK(prev < 1e-15);
  }

  TEST_CASE("tcp") {
    Vector one_hot = Vector::Zero(4);
    one_hot[2] = 1.0;
    CHECK(tcp(one_hot, 2) == 1.0);
    CHECK(tcp(Vector::Constant(10, 0.1), 7) == doctest::Approx(0.1));
    Vector p(3);
    p << 0.2, 0.5, 0.3;
    CHECK(tcp(p, 1) == 0.5);
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
      const Vector z = random_vector(rng, 10, 2.0);
      const double c = random_vector(rng, 1, 10.0)[0];
      const Vector shifted = z.array() + c;
      CHECK(std::abs(tcp(softmax(shifted), t % 10) - tcp(softmax(z), t % 10)) < 1e-9);
      long double denom = 0.0L;
      for (int k = 0; k < 10; ++k) denom += std::exp(static_cast<long double>(z[k]));
      const double oracle = static_cast<double>(std::exp(static_cast<long double>(z[t % 10])) / denom);
      CHECK(rel_err(tcp(softmax(z), t % 10), oracle) < 1e-6);
    }
  }

  TEST_CASE("confidence loss") {
    CHECK(loss_confidence(0.7, 0.7) == 0.0);
    CHECK(loss_confidence(0.0, 1.0) == 1.0);
    const std::vector<double> hat{0.5, 0.5}, truth{0.0, 1.0};
    CHECK(loss_confidence(hat, truth) == doctest::Approx(0.25));
    const std::vector<double> short_truth{0.0};
    CHECK_THROWS_AS(loss_confidence(hat, short_truth), ShapeError);
  }

  TEST_CASE("unified loss") {
    const std::vector<double> cls{0.5, 0.25}, conf{0.1, 0.05};
    CHECK(loss_unified(1.0, cls, conf, {0.0}) == 1.0);
    CHECK(loss_unified(1.0, cls, conf, {1.0}) == doctest::Approx(1.9).epsilon(1e-12));
    const double aux1 = loss_unified(1.0, cls, conf, {0.7}) - 1.0;
    const double aux2 = loss_unified(1.0, cls, conf, {1.4}) - 1.0;
    CHECK(aux2 == doctest::Approx(2.0 * aux1).epsilon(1e-12));
    const std::vector<double> one{0.1};
    CHECK_THROWS_AS(loss_unified(1.0, cls, one, {1.0}), ShapeError);
    CHECK_THROWS_AS(loss_unified(1.0, cls, conf, {-1.0}), ConfigError);
  }

  TEST_CASE("batch cross-entropy is the mean of per-row losses") {
    std::mt19937_64 rng(8);
    Mat z(5, 4);
    for (int i = 0; i < 5; ++i) z.row(i) = random_vector(rng, 4).transpose();
    const std::vector<int> y{0, 3, 1, 1, 2};
    const Vector p = random_priors(rng, 4);
    Mat g;
    const double l = loss_ce_batch(z, y, balanced_shift(p), &g);
    double mean = 0.0;
    for (int i = 0; i < 5; ++i) {
      Vector gi;
      mean += loss_bal(z.row(i).transpose(), y[i], p, &gi) / 5.0;
      for (int k = 0; k < 4; ++k) CHECK(std::abs(g(i, k) - gi[k] / 5.0) < 1e-12);
    }
    CHECK(std::abs(l - mean) < 1e-12);
  }

  TEST_CASE("softmax sums to one and is stable for large logits") {
    Vector z(3);
    z << 1000.0, 1001.0, 999.0;
    const Vector p = softmax(z);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.allFinite());
    CHECK(std::isfinite(loss_ce(z, 2)));
  }
}
