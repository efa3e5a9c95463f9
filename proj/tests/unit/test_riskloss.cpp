#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssd/riskloss.hpp"

using namespace ssd;

TEST_CASE("loss range constants") {
  const LossConfig gpt2(0.5, 50257);
  CHECK(gpt2.upper() == doctest::Approx(std::log2(100514.0)).epsilon(1e-15));
  CHECK(gpt2.upper() == doctest::Approx(16.617).epsilon(1e-4));
  CHECK(gpt2.baseline() == doctest::Approx(15.617).epsilon(1e-4));
  CHECK(gpt2.width() == doctest::Approx(std::log2(1.0 + 0.5 * 50257 / 0.5)));
  CHECK(gpt2.lower() == doctest::Approx(-std::log2(0.5 + 0.5 / 50257)).epsilon(1e-12));
  CHECK_THROWS_AS(LossConfig(0.0, 10), Error);
  CHECK_THROWS_AS(LossConfig(1.0, 10), Error);
  CHECK_THROWS_AS(LossConfig(0.5, 0), Error);
}

TEST_CASE("smoothing") {
  SUBCASE("uniform is a fixed point") {
    const std::vector<double> u(8, 0.125);
    for (double alpha : {0.01, 0.5, 0.99})
      for (double x : smooth(u, alpha)) CHECK(x == doctest::Approx(0.125).epsilon(1e-15));
  }
  SUBCASE("one-hot with V = 4") {
    const std::vector<double> p = {1, 0, 0, 0};
    const auto s = smooth(p, 0.5);
    CHECK(s[0] == doctest::Approx(0.625));
    for (int i = 1; i < 4; ++i) CHECK(s[i] == doctest::Approx(0.125));
  }
  SUBCASE("floor and normalization on random distributions") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> p(50);
      double z = 0;
      for (auto& x : p) z += (x = rng.uniform());
      for (auto& x : p) x /= z;
      const auto s = smooth(p, 0.3);
      double total = 0;
      for (double x : s) {
        CHECK(x >= 0.3 / 50 - 1e-15);
        total += x;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(smooth(std::vector<double>{1.0}, 0.0), Error);
  CHECK_THROWS_AS(smooth(std::vector<double>{1.0}, 1.5), Error);
}

TEST_CASE("smoothed bits per dimension") {
  const LossConfig loss(0.5, 4);
  SUBCASE("floor probabilities reach B exactly") {
    const std::vector<double> p(5, loss.floor());
    CHECK(smoothed_bpd(p, loss) == loss.upper());
  }
  SUBCASE("correct one-hot predictions, T = 2") {
    const std::vector<double> p = {smooth_entry(1.0, loss), smooth_entry(1.0, loss)};
    CHECK(smoothed_bpd(p, loss) == doctest::Approx(-std::log2(0.625)));
    CHECK(smoothed_bpd(p, loss) == doctest::Approx(0.678).epsilon(1e-3));
    CHECK(smoothed_bpd(p, loss) == doctest::Approx(loss.lower()));
  }
  SUBCASE("probabilities below the floor are rejected") {
    CHECK_THROWS_AS(token_loss(loss.floor() / 2, loss), NumericError);
    CHECK_THROWS_AS(token_loss(1.5, loss), NumericError);
    CHECK_THROWS_AS(token_loss(std::nan(""), loss), NumericError);
    CHECK_THROWS_AS(smoothed_bpd(std::vector<double>{}, loss), Error);
  }
  SUBCASE("every sequence loss stays in range") {
    Rng rng(5);
    const LossConfig big(0.1, 1000);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> p(32);
      for (auto& x : p) x = smooth_entry(rng.uniform(), big);
      CHECK(big.in_range(smoothed_bpd(p, big)));
    }
  }
  SUBCASE("alpha near 1 drives every loss to log2 V") {
    const LossConfig almost(1.0 - 1e-12, 1024);
    const std::vector<double> p = {smooth_entry(1.0, almost), smooth_entry(0.0, almost)};
    CHECK(smoothed_bpd(p, almost) == doctest::Approx(10.0).epsilon(1e-9));
  }
}

TEST_CASE("loss gap") {
  const LossConfig loss(0.5, 50257);
  CHECK(loss_gap(7.0, 7.0, loss) == 0.0);
  CHECK(loss_gap(loss.upper(), loss.lower(), loss) == doctest::Approx(loss.width()));
  CHECK_THROWS_AS(loss_gap(loss.upper() + 1, 7.0, loss), Error);
  CHECK_THROWS_AS(loss_gap(7.0, -1.0, loss), Error);
}

TEST_CASE("empirical risk") {
  const std::vector<double> c(10, 7.37);
  const auto s = empirical_risk(c);
  CHECK(s.mean == doctest::Approx(7.37));
  CHECK(s.std == doctest::Approx(0.0));
  CHECK(s.count == 10);

  const LossConfig loss(0.5, 50257);
  const std::vector<double> two = {loss.upper(), loss.lower()};
  const auto t = empirical_risk(two);
  CHECK(t.mean == doctest::Approx(loss.upper() - loss.width() / 2));
  CHECK(t.min == loss.lower());
  CHECK(t.max == loss.upper());
  CHECK(t.std == doctest::Approx(loss.width() / 2));
  CHECK_THROWS_AS(empirical_risk(std::vector<double>{}), Error);
}
