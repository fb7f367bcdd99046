#pragma once
#include <iosfwd>
#include <memory>

#include "lrtd/dataset.hpp"
#include "lrtd/envs.hpp"
#include "lrtd/nets.hpp"

namespace lrtd {

// Differentiable-in-action scalar field. The finite-difference fallback keeps
// arbitrary critics usable for gradient steps.
class QFunction {
 public:
  virtual ~QFunction() = default;
  virtual double value(const ConstVecRef &s, const ConstVecRef &a) const = 0;
  virtual Vector action_gradient(const ConstVecRef &s, const ConstVecRef &a) const;
};

// Central finite differences with h = 1e-4.
Vector fd_action_gradient(const QFunction &q, const ConstVecRef &s, const ConstVecRef &a,
                          double h = 1e-4);

struct CriticConfig {
  std::vector<Index> hidden{64, 64};
  double learning_rate = 3e-4;
  int steps = 2000;
  Index batch_size = 256;
  std::uint64_t seed = 0;
};

// IQL-style critic: V by expectile regression of Q targets, Q by TD regression
// r + gamma * V(s') with terminal masking. Inputs are standardized (s, a).
class ExpectileCritic : public QFunction {
 public:
  ExpectileCritic() = default;
  ExpectileCritic(Index state_dim, Index action_dim, const CriticConfig &cfg,
                  double gamma, double expectile, RngStream &rng);

  double value(const ConstVecRef &s, const ConstVecRef &a) const override;  // Q-hat
  Vector action_gradient(const ConstVecRef &s, const ConstVecRef &a) const override;
  double state_value(const ConstVecRef &s) const;  // V-hat

  double gamma() const { return gamma_; }
  double expectile() const { return expectile_; }
  Index state_dim() const { return state_dim_; }
  Index action_dim() const { return action_dim_; }

  Mlp &q_net() { return q_net_; }
  Mlp &v_net() { return v_net_; }
  const Mlp &q_net() const { return q_net_; }
  const Mlp &v_net() const { return v_net_; }
  void set_dims(Index sd, Index ad, double gamma, double expectile);

 private:
  Index state_dim_ = 0, action_dim_ = 0;
  double gamma_ = 0.99, expectile_ = 0.7;
  Mlp q_net_, v_net_;
};

// Asymmetric squared loss |tau - 1{u<0}| u^2 averaged over residuals.
double expectile_loss(const ConstVecRef &residuals, double tau);

// Alternating V/Q fit on a labeled-or-not standardized dataset.
// Throws on divergence (loss above 1e6).
ExpectileCritic fit_expectile_critic(const Dataset &data, double gamma, double expectile,
                                     const CriticConfig &cfg, std::ostream *log = nullptr);

// Elementwise advantage Q(s,a) - V(s) over dataset rows.
Vector critic_advantages(const ExpectileCritic &critic, const Dataset &data);

struct LabelResult {
  Vector advantages;
  double kappa = 0.0;  // (1-p)-quantile of the advantages
  std::vector<std::uint8_t> labels;
  double p = 0.0;
};

// kappa = ascending order statistic at 1-based index ceil((1-p)*N); label
// rows with advantage >= kappa (ties labeled good).
LabelResult label_top_p(const ConstVecRef &advantages, double p);

// Analytic bandit action-value; exact gradient away from the mode point.
class BanditOracleCritic : public QFunction {
 public:
  BanditOracleCritic(const BanditSpec &spec, const StandardStats &stats)
      : spec_(spec), stats_(stats) {}
  double value(const ConstVecRef &s, const ConstVecRef &a) const override;
  Vector action_gradient(const ConstVecRef &s, const ConstVecRef &a) const override;

 private:
  BanditSpec spec_;
  StandardStats stats_;  // critic operates on standardized inputs
};

// Adds a constant offset wherever the queried action is off-support; the
// offset is piecewise constant so the gradient delegates to the base critic.
class OffSupportCorruptedCritic : public QFunction {
 public:
  OffSupportCorruptedCritic(const QFunction &base, const BanditSpec &spec,
                            const StandardStats &stats, double offset)
      : base_(base), spec_(spec), stats_(stats), offset_(offset) {}
  double value(const ConstVecRef &s, const ConstVecRef &a) const override;
  Vector action_gradient(const ConstVecRef &s, const ConstVecRef &a) const override {
    return base_.action_gradient(s, a);
  }

 private:
  const QFunction &base_;
  BanditSpec spec_;
  StandardStats stats_;
  double offset_;
};

}  // namespace lrtd
