#include "lrtd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lrtd/parallel.hpp"

namespace lrtd {

namespace {

// Smallest action distance to the k state-nearest dataset rows, optionally
// skipping one index (leave-one-out).
double knn_action_distance(const Matrix &data_states, const Matrix &data_actions,
                           const ConstVecRef &s, const ConstVecRef &a, int k, Index skip) {
  const Index n = data_states.cols();
  std::vector<std::pair<double, Index>> by_state;
  by_state.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (i == skip) continue;
    by_state.emplace_back((data_states.col(i) - s).squaredNorm(), i);
  }
  const auto kk = static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(by_state.size())));
  std::partial_sort(by_state.begin(), by_state.begin() + static_cast<std::ptrdiff_t>(kk),
                    by_state.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < kk; ++j) {
    const double d = (data_actions.col(by_state[j].second) - a).norm();
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

OODReport knn_ood_rate(const Matrix &data_states, const Matrix &data_actions,
                       const Matrix &query_states, const Matrix &query_actions, int k,
                       double q) {
  const Index n = data_states.cols();
  if (n == 0) throw std::invalid_argument("knn_ood_rate: empty dataset");
  if (k < 1 || static_cast<Index>(k) > n)
    throw std::invalid_argument("knn_ood_rate: need 1 <= k <= dataset size");
  if (!(q > 0.0 && q < 100.0)) throw std::invalid_argument("knn_ood_rate: q must be in (0,100)");
  if (query_states.cols() != query_actions.cols())
    throw std::invalid_argument("knn_ood_rate: query count mismatch");

  // In-dataset radii by leave-one-out, computed once.
  std::vector<double> radii(static_cast<std::size_t>(n));
  parallel_for(n, [&](std::int64_t i) {
    radii[static_cast<std::size_t>(i)] =
        knn_action_distance(data_states, data_actions, data_states.col(i), data_actions.col(i),
                            k, static_cast<Index>(i));
  });
  const double threshold = empirical_quantile(radii, q / 100.0);

  OODReport rep;
  rep.k = k;
  rep.q = q;
  rep.radii_threshold = threshold;
  const Index m = query_states.cols();
  rep.flags.assign(static_cast<std::size_t>(m), 0);
  parallel_for(m, [&](std::int64_t j) {
    const double d = knn_action_distance(data_states, data_actions, query_states.col(j),
                                         query_actions.col(j), k, /*skip=*/-1);
    rep.flags[static_cast<std::size_t>(j)] = d > threshold ? 1 : 0;
  });
  double flagged = 0.0;
  for (auto f : rep.flags) flagged += f;
  rep.rate = m > 0 ? flagged / static_cast<double>(m) : 0.0;
  return rep;
}

double union_ood_bound(double alpha, int T) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("union_ood_bound: alpha must be in [0,1]");
  if (T < 0) throw std::invalid_argument("union_ood_bound: T must be non-negative");
  return 1.0 - std::pow(1.0 - alpha, T);
}

double alpha_max(double delta_qhat, double eps_in, double nu, double eta_q, int T) {
  if (!(nu > 0.0)) throw std::invalid_argument("alpha_max: nu must be positive");
  if (T < 1) throw std::invalid_argument("alpha_max: T must be >= 1");
  return (delta_qhat - 2.0 * eps_in - nu * eta_q) / (nu * static_cast<double>(T));
}

double variance_proxy(const LLRTrace &trace) {
  double v = 0.0;
  for (const auto &s : trace.steps) {
    const double s2 = s.sigma2 > kSigma2Floor ? s.sigma2 : kSigma2Floor;
    v += s.dmu_norm * s.dmu_norm / s2;
  }
  return v;
}

double displacement_bound(double beta_max, double dmu_norm, double lambda_max, double sigma2,
                          double grad_clip) {
  return beta_max * dmu_norm + lambda_max * sigma2 * grad_clip;
}

TailCheckResult subgaussian_tail_check(const std::vector<double> &h0_llrs, double V,
                                       const std::vector<double> &xs, double zeta) {
  if (h0_llrs.empty()) throw std::invalid_argument("subgaussian_tail_check: empty sample");
  if (!(V > 0.0)) throw std::invalid_argument("subgaussian_tail_check: V must be positive");
  const double n = static_cast<double>(h0_llrs.size());
  double mean = 0.0;
  for (double x : h0_llrs) mean += x;
  mean /= n;
  const double slack = dkw_epsilon(static_cast<long>(h0_llrs.size()), zeta);

  TailCheckResult res;
  res.xs = xs;
  for (double x : xs) {
    if (!(x >= 0.0)) throw std::invalid_argument("subgaussian_tail_check: xs must be >= 0");
    double tail = 0.0;
    for (double l : h0_llrs)
      if (l - mean >= x) tail += 1.0;
    tail /= n;
    const double bound = std::exp(-x * x / (2.0 * V)) + slack;
    res.empirical.push_back(tail);
    res.bound.push_back(bound);
    const bool bad = tail > bound;
    res.violated.push_back(bad ? 1 : 0);
    if (bad) ++res.violations;
  }
  return res;
}

GapReport return_gap_report(const BanditSpec &spec, const HeadsModel &policy,
                            const Schedule &sched, const SamplerSetup &lrt,
                            const SamplerSetup &qguided, const QFunction &critic,
                            const StandardStats &stats, const Matrix &states_std,
                            std::uint64_t seed) {
  if (qguided.qcompose.enabled && qguided.critic == nullptr)
    throw std::invalid_argument("return_gap_report: Q-guided setup needs a critic");
  const Index m = states_std.cols();
  if (m == 0) throw std::invalid_argument("return_gap_report: empty state set");

  struct Row {
    double qhat_lrt, qtrue_lrt, qhat_q, qtrue_q;
    bool in_lrt, in_q;
    double err_lrt, err_q;
  };
  std::vector<Row> rows(static_cast<std::size_t>(m));

  parallel_for(m, [&](std::int64_t j) {
    Vector s_std = states_std.col(j);
    Vector s_raw = (s_std.array() * stats.state_std.array()).matrix() + stats.state_mean;

    RngStream rng_l(derive_seed(seed, {0x6c72u, static_cast<std::uint64_t>(j)}));
    RngStream rng_q(derive_seed(seed, {0x7167u, static_cast<std::uint64_t>(j)}));
    ChainResult a_l = sample_action(policy, sched, lrt.gate, lrt.qcompose, lrt.tau, s_std,
                                    rng_l, lrt.critic);
    ChainResult a_q = sample_action(policy, sched, qguided.gate, qguided.qcompose, qguided.tau,
                                    s_std, rng_q, qguided.critic);

    Vector al_raw = destandardize(a_l.a0, stats);
    Vector aq_raw = destandardize(a_q.a0, stats);
    Vector al_std = standardize_action(al_raw, stats);
    Vector aq_std = standardize_action(aq_raw, stats);

    Row &r = rows[static_cast<std::size_t>(j)];
    r.qhat_lrt = critic.value(s_std, al_std);
    r.qhat_q = critic.value(s_std, aq_std);
    r.qtrue_lrt = true_q_bandit(spec, s_raw, al_raw);
    r.qtrue_q = true_q_bandit(spec, s_raw, aq_raw);
    r.in_lrt = bandit_in_support(spec, s_raw, al_raw);
    r.in_q = bandit_in_support(spec, s_raw, aq_raw);
    r.err_lrt = std::abs(r.qhat_lrt - r.qtrue_lrt);
    r.err_q = std::abs(r.qhat_q - r.qtrue_q);
  });

  GapReport rep;
  rep.n_states = m;
  double out_lrt = 0.0, out_q = 0.0;
  for (const Row &r : rows) {
    rep.delta_qhat += r.qhat_lrt - r.qhat_q;
    rep.delta_qtrue += r.qtrue_lrt - r.qtrue_q;
    out_lrt += r.in_lrt ? 0.0 : 1.0;
    out_q += r.in_q ? 0.0 : 1.0;
    if (r.in_lrt) rep.eps_in = std::max(rep.eps_in, r.err_lrt);
    else rep.eps_out = std::max(rep.eps_out, r.err_lrt);
    if (r.in_q) rep.eps_in = std::max(rep.eps_in, r.err_q);
    else rep.eps_out = std::max(rep.eps_out, r.err_q);
  }
  const double dm = static_cast<double>(m);
  rep.delta_qhat /= dm;
  rep.delta_qtrue /= dm;
  rep.eta_lrt = out_lrt / dm;
  rep.eta_q = out_q / dm;
  rep.nu = std::max(0.0, rep.eps_out - rep.eps_in);
  rep.rhs = rep.delta_qhat - 2.0 * rep.eps_in - rep.nu * (rep.eta_q + rep.eta_lrt);
  rep.slack = rep.delta_qtrue - rep.rhs;
  rep.inequality_holds = rep.delta_qtrue >= rep.rhs - 1e-12;
  return rep;
}

ActivationStats gate_activation_stats(const HeadsModel &policy, const Schedule &sched,
                                      const GateConfig &gcfg, const QComposeConfig &qcfg,
                                      double tau, const Matrix &states, int n,
                                      std::uint64_t seed, const QFunction *critic) {
  ActivationStats st;
  st.gated_steps = gcfg.gated_steps(sched.steps);
  std::vector<double> step_hits(static_cast<std::size_t>(sched.steps), 0.0);
  std::vector<std::uint8_t> any(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<std::uint8_t>> per_chain(static_cast<std::size_t>(n));

  const auto n_states = static_cast<std::uint64_t>(states.cols());
  parallel_for(n, [&](std::int64_t chain) {
    RngStream rng(derive_seed(seed, {0xac71u, static_cast<std::uint64_t>(chain)}));
    const auto si = static_cast<Index>(rng.integer(n_states));
    LLRTrace trace;
    ChainResult res =
        sample_action(policy, sched, gcfg, qcfg, tau, states.col(si), rng, critic, &trace);
    any[static_cast<std::size_t>(chain)] = res.any_activation ? 1 : 0;
    auto &flags = per_chain[static_cast<std::size_t>(chain)];
    flags.assign(static_cast<std::size_t>(sched.steps), 0);
    for (const auto &s : trace.steps)
      if (s.activated) flags[static_cast<std::size_t>(s.t - 1)] = 1;
  });

  double any_sum = 0.0;
  for (auto a : any) any_sum += a;
  for (const auto &flags : per_chain)
    for (std::size_t t = 0; t < flags.size(); ++t) step_hits[t] += flags[t];

  st.any_rate = any_sum / static_cast<double>(n);
  st.step_rates.resize(step_hits.size());
  for (std::size_t t = 0; t < step_hits.size(); ++t) {
    st.step_rates[t] = step_hits[t] / static_cast<double>(n);
    st.max_step_rate = std::max(st.max_step_rate, st.step_rates[t]);
  }
  return st;
}

}  // namespace lrtd
