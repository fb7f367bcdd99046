#pragma once
#include <cmath>
#include <functional>

#include "lrtd/model.hpp"
#include "lrtd/rng.hpp"
#include "lrtd/sampler.hpp"
#include "lrtd/schedule.hpp"

namespace lrtd::test {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Heads model with closed-form reverse means; eps predictions are derived by
// inverting the mean parameterization, so the sampler sees exactly the
// requested mu_u / mu_c.
class AnalyticMeansModel : public HeadsModel {
 public:
  using MeanFn = std::function<Vector(const ConstVecRef &s, const ConstVecRef &a_t, int t)>;

  AnalyticMeansModel(Index state_dim, Index action_dim, const Schedule &sched, MeanFn mu_u,
                     MeanFn mu_c, std::string token = "analytic")
      : state_dim_(state_dim),
        action_dim_(action_dim),
        sched_(sched),
        mu_u_(std::move(mu_u)),
        mu_c_(std::move(mu_c)),
        token_(std::move(token)) {}

  Index state_dim() const override { return state_dim_; }
  Index action_dim() const override { return action_dim_; }

  void eps_heads(const ConstVecRef &s, const ConstVecRef &a_t, int t, Vector &eps_u,
                 Vector &eps_c) const override {
    eps_u = eps_from_mean(mu_u_(s, a_t, t), a_t, t);
    eps_c = eps_from_mean(mu_c_(s, a_t, t), a_t, t);
  }

  std::string fingerprint_token() const override { return token_; }

 private:
  Vector eps_from_mean(const Vector &mu, const ConstVecRef &a_t, int t) const {
    const double alpha = sched_.alpha_at(t);
    const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched_.alpha_bar_at(t));
    return (a_t - std::sqrt(alpha) * mu) / coef;
  }

  Index state_dim_, action_dim_;
  const Schedule &sched_;
  MeanFn mu_u_, mu_c_;
  std::string token_;
};

// A model whose conditional head pulls toward a fixed target while the
// unconditional head contracts toward zero; enough structure for calibration
// and gating to be non-trivial.
inline AnalyticMeansModel make_toy_model(const Schedule &sched, Index d, double pull = 0.6,
                                         double contract = 0.9) {
  auto mu_u = [contract](const ConstVecRef &, const ConstVecRef &a_t, int) {
    return Vector(contract * a_t);
  };
  auto mu_c = [contract, pull, d](const ConstVecRef &s, const ConstVecRef &a_t, int) {
    Vector target = Vector::Constant(d, pull);
    if (s.size() > 0) target[0] += 0.2 * std::tanh(s[0]);
    return Vector(contract * a_t + 0.15 * (target - contract * a_t));
  };
  return AnalyticMeansModel(2, d, sched, mu_u, mu_c, "toy");
}

// Visits every trainable scalar of the policy (backbone layers, then heads).
inline void for_each_param(TwoHeadPolicy &policy, const std::function<void(double &)> &fn) {
  for (auto &layer : policy.backbone().layers()) {
    for (Index i = 0; i < layer.W.size(); ++i) fn(layer.W.data()[i]);
    for (Index i = 0; i < layer.b.size(); ++i) fn(layer.b.data()[i]);
  }
  for (Linear *head : {&policy.head_u(), &policy.head_c()}) {
    for (Index i = 0; i < head->W.size(); ++i) fn(head->W.data()[i]);
    for (Index i = 0; i < head->b.size(); ++i) fn(head->b.data()[i]);
  }
}

// Energy-distance two-sample statistic: 2 E|X-Y| - E|X-X'| - E|Y-Y'|.
// Returns a permutation p-value (B permutations, add-one estimator).
double energy_distance_pvalue(const Matrix &X, const Matrix &Y, int permutations,
                              std::uint64_t seed);

}  // namespace lrtd::test
