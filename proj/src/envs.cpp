#include "lrtd/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace lrtd {

Vector bandit_good_mode(const BanditSpec &spec, const ConstVecRef &s) {
  return (spec.mode_weight * s).array().tanh();
}

double bandit_reward(const BanditSpec &spec, const ConstVecRef &s, const ConstVecRef &a) {
  return 1.0 - (a - bandit_good_mode(spec, s)).norm();
}

double true_q_bandit(const BanditSpec &spec, const ConstVecRef &s, const ConstVecRef &a) {
  return bandit_reward(spec, s, a);
}

bool bandit_in_support(const BanditSpec &spec, const ConstVecRef &s, const ConstVecRef &a) {
  const double bg = a.norm() / spec.background_std;
  const double good = (a - bandit_good_mode(spec, s)).norm() / spec.good_std;
  return std::min(bg, good) <= spec.support_sigmas;
}

Dataset gen_bandit_dataset(const BanditSpec &spec, Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_bandit_dataset: n must be positive");
  Dataset d;
  const Index ds = spec.state_dim, da = spec.action_dim;
  d.states.resize(ds, n);
  d.actions.resize(da, n);
  d.rewards.resize(n);
  d.next_states = Matrix::Zero(ds, n);  // terminal sentinel
  d.dones.assign(n, 1);
  d.gen_modes.resize(n);

  RngStream rng(derive_seed(seed, {0x6261u /* dataset */}));
  for (Index i = 0; i < n; ++i) {
    Vector s = rng.normal_vector(ds);
    const bool good = rng.uniform() < spec.p_good;
    Vector a;
    if (good) {
      a = bandit_good_mode(spec, s) + spec.good_std * rng.normal_vector(da);
    } else {
      a = spec.background_std * rng.normal_vector(da);
    }
    d.states.col(i) = s;
    d.actions.col(i) = a;
    d.rewards[i] = bandit_reward(spec, s, a);
    d.gen_modes[i] = good ? 1 : 0;
  }

  d.env_name = "bandit";
  d.env_params = {{"background_std", spec.background_std},
                  {"good_std", spec.good_std},
                  {"p_good", spec.p_good},
                  {"support_sigmas", spec.support_sigmas},
                  {"w00", spec.mode_weight(0, 0)},
                  {"w01", spec.mode_weight(0, 1)},
                  {"w10", spec.mode_weight(1, 0)},
                  {"w11", spec.mode_weight(1, 1)}};
  d.horizon = 1;
  d.gen_seed = seed;
  d.stats.action_low = Vector::Constant(da, -std::numeric_limits<double>::infinity());
  d.stats.action_high = Vector::Constant(da, std::numeric_limits<double>::infinity());
  return d;
}

Dataset gen_pointmass_dataset(const PointMassSpec &spec, Index episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("gen_pointmass_dataset: episodes must be positive");
  const Index ds = spec.state_dim, da = spec.action_dim, H = spec.horizon;
  const Index n = episodes * H;
  Dataset d;
  d.states.resize(ds, n);
  d.actions.resize(da, n);
  d.rewards.resize(n);
  d.next_states.resize(ds, n);
  d.dones.assign(n, 0);

  RngStream rng(derive_seed(seed, {0x706du /* dataset */}));
  Index row = 0;
  for (Index ep = 0; ep < episodes; ++ep) {
    Vector s = rng.normal_vector(ds);
    for (Index k = 0; k < H; ++k, ++row) {
      Vector a = -s + spec.behavior_noise * rng.normal_vector(da);
      a = a.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
      Vector s_next = s + spec.dt * a;
      d.states.col(row) = s;
      d.actions.col(row) = a;
      d.rewards[row] = -s.squaredNorm();
      d.next_states.col(row) = s_next;
      d.dones[row] = (k == H - 1) ? 1 : 0;
      s = s_next;
    }
  }

  d.env_name = "pointmass";
  d.env_params = {{"dt", spec.dt},
                  {"behavior_noise", spec.behavior_noise},
                  {"gamma", spec.gamma},
                  {"action_low", spec.action_low},
                  {"action_high", spec.action_high}};
  d.horizon = spec.horizon;
  d.gen_seed = seed;
  d.stats.action_low = Vector::Constant(da, spec.action_low);
  d.stats.action_high = Vector::Constant(da, spec.action_high);
  return d;
}

RolloutResult rollout_bandit(const BanditSpec &spec, const ActionSampler &sampler,
                             Index episodes, std::uint64_t seed) {
  RolloutResult r;
  r.episode_returns.resize(episodes);
  r.visited_states.resize(spec.state_dim, episodes);
  r.taken_actions.resize(spec.action_dim, episodes);
  for (Index ep = 0; ep < episodes; ++ep) {
    RngStream rng(derive_seed(seed, {0x726fu, static_cast<std::uint64_t>(ep)}));
    Vector s = rng.normal_vector(spec.state_dim);
    Vector a = sampler(s, rng);
    r.visited_states.col(ep) = s;
    r.taken_actions.col(ep) = a;
    r.episode_returns[ep] = bandit_reward(spec, s, a);
  }
  double sum = 0.0, sum2 = 0.0;
  for (double x : r.episode_returns) sum += x, sum2 += x * x;
  const double n = static_cast<double>(episodes);
  r.mean = sum / n;
  const double var = std::max(0.0, sum2 / n - r.mean * r.mean);
  r.stderr_mean = episodes > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return r;
}

RolloutResult rollout_pointmass(const PointMassSpec &spec, const ActionSampler &sampler,
                                Index episodes, std::uint64_t seed) {
  RolloutResult r;
  r.episode_returns.resize(episodes);
  const Index total = episodes * spec.horizon;
  r.visited_states.resize(spec.state_dim, total);
  r.taken_actions.resize(spec.action_dim, total);
  Index col = 0;
  for (Index ep = 0; ep < episodes; ++ep) {
    RngStream rng(derive_seed(seed, {0x726fu, static_cast<std::uint64_t>(ep)}));
    Vector s = rng.normal_vector(spec.state_dim);
    double ret = 0.0;
    for (int k = 0; k < spec.horizon; ++k, ++col) {
      Vector a = sampler(s, rng);
      a = a.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
      r.visited_states.col(col) = s;
      r.taken_actions.col(col) = a;
      ret += -s.squaredNorm();
      s = s + spec.dt * a;
    }
    r.episode_returns[ep] = ret;
  }
  double sum = 0.0, sum2 = 0.0;
  for (double x : r.episode_returns) sum += x, sum2 += x * x;
  const double n = static_cast<double>(episodes);
  r.mean = sum / n;
  const double var = std::max(0.0, sum2 / n - r.mean * r.mean);
  r.stderr_mean = episodes > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return r;
}

namespace {
double param_or(const Dataset &d, const std::string &key, double fallback) {
  auto it = d.env_params.find(key);
  return it == d.env_params.end() ? fallback : it->second;
}
}  // namespace

BanditSpec bandit_spec_from(const Dataset &d) {
  if (d.env_name != "bandit") throw std::invalid_argument("dataset is not a bandit dataset");
  BanditSpec spec;
  spec.background_std = param_or(d, "background_std", spec.background_std);
  spec.good_std = param_or(d, "good_std", spec.good_std);
  spec.p_good = param_or(d, "p_good", spec.p_good);
  spec.support_sigmas = param_or(d, "support_sigmas", spec.support_sigmas);
  spec.mode_weight << param_or(d, "w00", 1.0), param_or(d, "w01", 0.5),
      param_or(d, "w10", -0.5), param_or(d, "w11", 1.0);
  return spec;
}

PointMassSpec pointmass_spec_from(const Dataset &d) {
  if (d.env_name != "pointmass") throw std::invalid_argument("dataset is not a pointmass dataset");
  PointMassSpec spec;
  spec.dt = param_or(d, "dt", spec.dt);
  spec.behavior_noise = param_or(d, "behavior_noise", spec.behavior_noise);
  spec.gamma = param_or(d, "gamma", spec.gamma);
  spec.action_low = param_or(d, "action_low", spec.action_low);
  spec.action_high = param_or(d, "action_high", spec.action_high);
  spec.horizon = d.horizon;
  return spec;
}

}  // namespace lrtd
