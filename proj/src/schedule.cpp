#include "lrtd/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace lrtd {

Schedule build_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("build_schedule: need T >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("build_schedule: need 0 < beta_start <= beta_end < 1");

  Schedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  s.sigma2_reverse.resize(steps);

  const double step =
      steps > 1 ? (beta_end - beta_start) / static_cast<double>(steps - 1) : 0.0;
  double abar = 1.0;  // alpha_bar_0 := 1
  for (int t = 1; t <= steps; ++t) {
    const double b = beta_start + step * (t - 1);
    const double a = 1.0 - b;
    const double abar_prev = abar;
    abar *= a;
    s.beta[t - 1] = b;
    s.alpha[t - 1] = a;
    s.alpha_bar[t - 1] = abar;
    // Posterior variance; zero at t=1 because alpha_bar_0 = 1.
    s.sigma2_reverse[t - 1] = (1.0 - abar_prev) / (1.0 - abar) * b;
  }
  return s;
}

Vector mean_from_eps(const Schedule &sched, int t, const ConstVecRef &a_t,
                     const ConstVecRef &eps_hat) {
  if (t < 1 || t > sched.steps) throw std::invalid_argument("mean_from_eps: t out of range");
  if (a_t.size() != eps_hat.size())
    throw std::invalid_argument("mean_from_eps: dimension mismatch");
  const double alpha = sched.alpha_at(t);
  const double abar = sched.alpha_bar_at(t);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - abar);
  return (a_t - coef * eps_hat) / std::sqrt(alpha);
}

}  // namespace lrtd
