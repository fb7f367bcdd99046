#pragma once
#include <functional>

#include "lrtd/dataset.hpp"
#include "lrtd/rng.hpp"

namespace lrtd {

// One-step contextual bandit with a known good-action map g(s) = tanh(W s).
// Actions come from a background/good Gaussian mixture; reward 1 - |a - g(s)|.
struct BanditSpec {
  int state_dim = 2;
  int action_dim = 2;
  Eigen::Matrix2d mode_weight = (Eigen::Matrix2d() << 1.0, 0.5, -0.5, 1.0).finished();
  double background_std = 0.5;
  double good_std = 0.1;
  double p_good = 0.2;
  double support_sigmas = 3.0;  // radius multiplier for the support oracle
};

Vector bandit_good_mode(const BanditSpec &spec, const ConstVecRef &s);
double bandit_reward(const BanditSpec &spec, const ConstVecRef &s, const ConstVecRef &a);
// One-step task: the true action-value is the reward itself.
double true_q_bandit(const BanditSpec &spec, const ConstVecRef &s, const ConstVecRef &a);
// In-support iff a falls within support_sigmas of either generator mode.
bool bandit_in_support(const BanditSpec &spec, const ConstVecRef &s, const ConstVecRef &a);

Dataset gen_bandit_dataset(const BanditSpec &spec, Index n, std::uint64_t seed);

// 2-D point mass: s' = s + dt*a, cost |s|^2, behavior a = -s + noise, clipped.
struct PointMassSpec {
  int state_dim = 2;
  int action_dim = 2;
  double dt = 0.1;
  int horizon = 20;
  double behavior_noise = 0.3;
  double gamma = 0.99;
  double action_low = -1.0;
  double action_high = 1.0;
};

Dataset gen_pointmass_dataset(const PointMassSpec &spec, Index episodes, std::uint64_t seed);

// Maps raw env state -> raw env action (already destandardized and clipped).
using ActionSampler = std::function<Vector(const ConstVecRef &state, RngStream &rng)>;

struct RolloutResult {
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::vector<double> episode_returns;
  Matrix visited_states;   // raw, one column per sampled action
  Matrix taken_actions;    // raw
};

RolloutResult rollout_bandit(const BanditSpec &spec, const ActionSampler &sampler,
                             Index episodes, std::uint64_t seed);
RolloutResult rollout_pointmass(const PointMassSpec &spec, const ActionSampler &sampler,
                                Index episodes, std::uint64_t seed);

// Rebuilds the generation spec recorded in a dataset.
BanditSpec bandit_spec_from(const Dataset &d);
PointMassSpec pointmass_spec_from(const Dataset &d);

}  // namespace lrtd
