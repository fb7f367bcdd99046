#pragma once
#include "lrtd/types.hpp"

namespace lrtd {

// Variance floor used only when dividing by the reverse variance at t=1,
// where the posterior variance is exactly zero.
inline constexpr double kSigma2Floor = 1e-12;

// DDPM noise schedule. Arrays are indexed by step t in [1, T] via the
// accessors; alpha_bar(0) == 1 by convention.
struct Schedule {
  int steps = 0;  // T
  double beta_start = 0.0;
  double beta_end = 0.0;
  Vector beta;            // forward noise 1 - alpha_t
  Vector alpha;           // 1 - beta_t
  Vector alpha_bar;       // prod_{tau<=t} alpha_tau
  Vector sigma2_reverse;  // posterior variance ((1-abar_{t-1})/(1-abar_t)) * beta_t

  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
  double sigma2_at(int t) const { return sigma2_reverse[t - 1]; }
  // Reverse variance with the t=1 floor applied; used wherever sigma^2 divides.
  double sigma2_llr(int t) const {
    double s2 = sigma2_at(t);
    return s2 > kSigma2Floor ? s2 : kSigma2Floor;
  }
};

// Linear-in-beta schedule from beta_start (t=1) to beta_end (t=T).
// Throws std::invalid_argument on T < 1 or betas outside (0,1).
Schedule build_schedule(int steps, double beta_start, double beta_end);

// Reverse-kernel mean induced by a noise prediction:
//   (1/sqrt(alpha_t)) * (a_t - (1-alpha_t)/sqrt(1-alpha_bar_t) * eps_hat)
Vector mean_from_eps(const Schedule &sched, int t, const ConstVecRef &a_t,
                     const ConstVecRef &eps_hat);

}  // namespace lrtd
