#include <doctest.h>

#include "lrtd/rng.hpp"
#include "lrtd/schedule.hpp"

using namespace lrtd;

TEST_CASE("linear schedule endpoints and spacing") {
  Schedule s = build_schedule(50, 1e-4, 2e-2);
  CHECK(s.beta_at(1) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.beta_at(50) == doctest::Approx(2e-2).epsilon(1e-12));
  const double step = (2e-2 - 1e-4) / 49.0;
  for (int t = 2; t <= 50; ++t)
    CHECK(s.beta_at(t) - s.beta_at(t - 1) == doctest::Approx(step).epsilon(1e-9));
}

TEST_CASE("single-step schedule is deterministic at t=1") {
  const double b = 0.01;
  Schedule s = build_schedule(1, b, b);
  CHECK(s.alpha_bar_at(1) == doctest::Approx(1.0 - b));
  CHECK(s.sigma2_at(1) == 0.0);
  CHECK(s.sigma2_llr(1) == kSigma2Floor);
}

TEST_CASE("alpha_bar matches the brute-force product") {
  Schedule s = build_schedule(50, 1e-4, 2e-2);
  double prod = 1.0;
  for (int t = 1; t <= 50; ++t) {
    prod *= 1.0 - s.beta_at(t);
    CHECK(std::abs(s.alpha_bar_at(t) - prod) <= 1e-12 * std::abs(prod));
  }
  CHECK(s.alpha_bar_at(50) == doctest::Approx(0.603).epsilon(2e-3));
}

TEST_CASE("posterior variance never exceeds forward variance") {
  Schedule s = build_schedule(80, 5e-4, 3e-2);
  for (int t = 1; t <= s.steps; ++t) {
    CHECK(s.sigma2_at(t) >= 0.0);
    CHECK(s.sigma2_at(t) <= s.beta_at(t) + 1e-15);
    if (t >= 2) CHECK(s.sigma2_at(t) > 0.0);
  }
  // alpha_bar strictly decreasing, recursion abar_t = abar_{t-1} * alpha_t
  for (int t = 1; t <= s.steps; ++t) {
    CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    CHECK(s.alpha_bar_at(t) ==
          doctest::Approx(s.alpha_bar_at(t - 1) * s.alpha_at(t)).epsilon(1e-14));
  }
}

TEST_CASE("build_schedule rejects bad arguments") {
  CHECK_THROWS_AS(build_schedule(0, 1e-4, 2e-2), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 0.0, 2e-2), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 2e-2, 1e-4), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("mean_from_eps closed-form cases") {
  Schedule s = build_schedule(50, 1e-4, 2e-2);
  const int t = 17;
  Vector a_t(2);
  a_t << 0.3, -1.2;

  SUBCASE("zero noise prediction divides by sqrt(alpha)") {
    Vector mu = mean_from_eps(s, t, a_t, Vector::Zero(2));
    CHECK((mu - a_t / std::sqrt(s.alpha_at(t))).norm() == doctest::Approx(0.0));
  }
  SUBCASE("exact cancellation gives the zero vector") {
    Vector eps(2);
    eps << 1.7, -0.4;
    Vector a_cancel = (1.0 - s.alpha_at(t)) / std::sqrt(1.0 - s.alpha_bar_at(t)) * eps;
    Vector mu = mean_from_eps(s, t, a_cancel, eps);
    CHECK(mu.norm() <= 1e-15);
  }
  SUBCASE("matches elementwise scalar reference") {
    RngStream rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const int tt = 1 + static_cast<int>(rng.integer(50));
      Vector a = rng.normal_vector(3 + rng.integer(3));
      Vector e = rng.normal_vector(a.size());
      Vector mu = mean_from_eps(s, tt, a, e);
      const double alpha = s.alpha_at(tt), abar = s.alpha_bar_at(tt);
      for (Index i = 0; i < a.size(); ++i) {
        const double ref = (a[i] - (1.0 - alpha) / std::sqrt(1.0 - abar) * e[i]) /
                           std::sqrt(alpha);
        CHECK(mu[i] == doctest::Approx(ref).epsilon(1e-14));
      }
    }
  }
  SUBCASE("superposition: linear in a_t and eps") {
    RngStream rng(11);
    Vector a1 = rng.normal_vector(2), a2 = rng.normal_vector(2);
    Vector e1 = rng.normal_vector(2), e2 = rng.normal_vector(2);
    Vector lhs = mean_from_eps(s, t, a1 + 2.0 * a2, e1 + 2.0 * e2);
    Vector rhs = mean_from_eps(s, t, a1, e1) + 2.0 * mean_from_eps(s, t, a2, e2);
    CHECK((lhs - rhs).norm() <= 1e-12);
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(mean_from_eps(s, t, a_t, Vector::Zero(3)), std::invalid_argument);
  }
}
