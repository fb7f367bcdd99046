#pragma once
#include "lrtd/calibration.hpp"
#include "lrtd/critic.hpp"
#include "lrtd/envs.hpp"
#include "lrtd/sampler.hpp"

namespace lrtd {

struct OODReport {
  double rate = 0.0;
  int k = 50;
  double q = 95.0;
  std::vector<std::uint8_t> flags;
  double radii_threshold = 0.0;  // q-th percentile of leave-one-out radii
};

// State-conditional OOD proxy: for each query, take the k state-nearest
// dataset rows, measure the smallest action distance to them, and flag when
// it exceeds the q-th percentile of the dataset's own leave-one-out radii.
// All distances are in standardized space.
OODReport knn_ood_rate(const Matrix &data_states, const Matrix &data_actions,
                       const Matrix &query_states, const Matrix &query_actions, int k = 50,
                       double q = 95.0);

// 1 - (1-alpha)^T.
double union_ood_bound(double alpha, int T);

// (delta_qhat - 2 eps_in - nu * eta_q) / (nu * T); negative means infeasible.
double alpha_max(double delta_qhat, double eps_in, double nu, double eta_q, int T);

// Sum over steps of |dmu|^2 / sigma^2 (floored variance at t=1).
double variance_proxy(const LLRTrace &trace);

// beta_max * |dmu| + lambda_max * sigma^2 * G.
double displacement_bound(double beta_max, double dmu_norm, double lambda_max, double sigma2,
                          double grad_clip);

struct TailCheckResult {
  std::vector<double> xs;
  std::vector<double> empirical;  // tail frequency of centered evidence
  std::vector<double> bound;      // exp(-x^2 / (2V)) + DKW slack
  std::vector<std::uint8_t> violated;
  int violations = 0;
};

// Compares empirical tails of centered llr samples against the sub-Gaussian
// bound with proxy V, allowing DKW slack at confidence 1 - zeta.
TailCheckResult subgaussian_tail_check(const std::vector<double> &h0_llrs, double V,
                                       const std::vector<double> &xs, double zeta = 0.05);

struct SamplerSetup {
  GateConfig gate;
  QComposeConfig qcompose;
  double tau = std::numeric_limits<double>::infinity();
  const QFunction *critic = nullptr;  // needed when qcompose.enabled
};

struct GapReport {
  double delta_qhat = 0.0;   // E[Qhat(s, a_lrt) - Qhat(s, a_q)]
  double delta_qtrue = 0.0;  // same under the true action-value
  double eta_lrt = 0.0;      // off-support rate of the gated policy
  double eta_q = 0.0;        // off-support rate of the Q-guided policy
  double eps_in = 0.0;       // max on-support |Qhat - Qtrue| over evaluated actions
  double eps_out = 0.0;      // max off-support error
  double nu = 0.0;           // max(0, eps_out - eps_in)
  double rhs = 0.0;          // delta_qhat - 2 eps_in - nu (eta_q + eta_lrt)
  double slack = 0.0;        // delta_qtrue - rhs
  bool inequality_holds = false;
  Index n_states = 0;
};

// Monte-Carlo comparison of the gated and Q-guided samplers on the bandit,
// where the true action-value and the support set are analytic. All epsilon
// and eta terms are measured on the same generated actions, with support
// classified by the analytic oracle.
GapReport return_gap_report(const BanditSpec &spec, const HeadsModel &policy,
                            const Schedule &sched, const SamplerSetup &lrt,
                            const SamplerSetup &qguided, const QFunction &critic,
                            const StandardStats &stats, const Matrix &states_std,
                            std::uint64_t seed);

struct ActivationStats {
  double any_rate = 0.0;           // fraction of chains with >= 1 gate opening
  double max_step_rate = 0.0;      // max over steps of the per-step opening rate
  std::vector<double> step_rates;  // per reverse step t = T..1
  int gated_steps = 0;
};

// Per-step and per-chain gate-opening frequencies under the null.
ActivationStats gate_activation_stats(const HeadsModel &policy, const Schedule &sched,
                                      const GateConfig &gcfg, const QComposeConfig &qcfg,
                                      double tau, const Matrix &states, int n,
                                      std::uint64_t seed, const QFunction *critic = nullptr);

}  // namespace lrtd
