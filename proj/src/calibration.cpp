#include "lrtd/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lrtd/hash.hpp"
#include "lrtd/parallel.hpp"

namespace lrtd {

double empirical_quantile(std::vector<double> samples, double level) {
  if (samples.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  if (!(level >= 0.0 && level <= 1.0))
    throw std::invalid_argument("empirical_quantile: level must be in [0,1]");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<long>(samples.size());
  long idx = static_cast<long>(std::ceil(level * static_cast<double>(n)));
  idx = std::clamp<long>(idx, 1, n);
  return samples[static_cast<std::size_t>(idx - 1)];
}

double dkw_epsilon(long n, double zeta) {
  if (n < 1) throw std::invalid_argument("dkw_epsilon: n must be >= 1");
  if (!(zeta > 0.0 && zeta < 1.0))
    throw std::invalid_argument("dkw_epsilon: zeta must be in (0,1)");
  return std::sqrt(std::log(2.0 / zeta) / (2.0 * static_cast<double>(n)));
}

long dkw_budget(double eps, double zeta) {
  if (!(eps > 0.0)) throw std::invalid_argument("dkw_budget: eps must be positive");
  if (!(zeta > 0.0 && zeta < 1.0))
    throw std::invalid_argument("dkw_budget: zeta must be in (0,1)");
  return static_cast<long>(std::ceil(std::log(2.0 / zeta) / (2.0 * eps * eps)));
}

std::uint64_t compute_sampler_fingerprint(const HeadsModel &policy, const Schedule &sched,
                                          const GateConfig &gcfg, const QComposeConfig &qcfg) {
  std::ostringstream os;
  os.precision(17);
  os << "policy:" << policy.fingerprint_token();
  os << "|sched:" << sched.steps << "," << sched.beta_start << "," << sched.beta_end;
  os << "|gate:" << (gcfg.kind == GateKind::soft ? "soft" : "hard") << "," << gcfg.beta_max
     << "," << gcfg.delta;
  if (gcfg.dmu_clamp) os << ",clamp=" << *gcfg.dmu_clamp;
  if (gcfg.gate_window)
    os << ",window=" << gcfg.gate_window->first << ":" << gcfg.gate_window->second;
  os << "|q:" << (qcfg.enabled ? 1 : 0);
  if (qcfg.enabled) {
    os << "," << qcfg.lambda_max << "," << qcfg.grad_clip << ","
       << static_cast<int>(qcfg.center) << "," << qcfg.blend_rho << ","
       << (qcfg.adaptive_rho ? 1 : 0) << "," << (qcfg.llr_after_compose ? 1 : 0);
  }
  return fnv1a64(os.str());
}

void require_fingerprint_match(const CalibrationResult &calib, const HeadsModel &policy,
                               const Schedule &sched, const GateConfig &gcfg,
                               const QComposeConfig &qcfg) {
  const std::uint64_t live = compute_sampler_fingerprint(policy, sched, gcfg, qcfg);
  if (live != calib.sampler_fingerprint)
    throw std::runtime_error(
        "sampler fingerprint mismatch: threshold was calibrated for a different sampler "
        "(live " + hex64(live) + ", calibrated " + hex64(calib.sampler_fingerprint) + ")");
}

std::vector<ChainResult> run_h0_chains(const HeadsModel &policy, const Schedule &sched,
                                       const GateConfig &gcfg, const QComposeConfig &qcfg,
                                       double tau, const Matrix &states, int n,
                                       std::uint64_t seed, std::uint64_t iteration,
                                       const QFunction *critic) {
  if (states.cols() == 0) throw std::invalid_argument("run_h0_chains: empty state set");
  std::vector<ChainResult> results(static_cast<std::size_t>(n));
  const auto n_states = static_cast<std::uint64_t>(states.cols());
  parallel_for(n, [&](std::int64_t chain) {
    RngStream rng(derive_seed(seed, {iteration, static_cast<std::uint64_t>(chain)}));
    const auto si = static_cast<Index>(rng.integer(n_states));
    results[static_cast<std::size_t>(chain)] =
        sample_action(policy, sched, gcfg, qcfg, tau, states.col(si), rng, critic);
  });
  return results;
}

CalibrationResult calibrate_tau(const HeadsModel &policy, const Schedule &sched,
                                const GateConfig &gcfg, const QComposeConfig &qcfg,
                                const Matrix &states_cal, double alpha, int n, int K,
                                double momentum, std::uint64_t seed, const QFunction *critic,
                                std::ostream *log) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("calibrate_tau: alpha must be in (0,1)");
  if (n < 100) throw std::invalid_argument("calibrate_tau: need n >= 100 chains");
  if (K < 1) throw std::invalid_argument("calibrate_tau: need K >= 1 iterations");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("calibrate_tau: momentum must be in [0,1)");
  if (qcfg.enabled && critic == nullptr)
    throw std::invalid_argument("calibrate_tau: Q-composition enabled but no critic given");

  CalibrationResult res;
  res.alpha = alpha;
  res.n = n;
  res.iterations = K;
  res.momentum = momentum;
  res.zeta = 0.05;
  res.dkw_eps = dkw_epsilon(n, res.zeta);
  res.sampler_fingerprint = compute_sampler_fingerprint(policy, sched, gcfg, qcfg);

  double tau = std::numeric_limits<double>::infinity();
  double prev_tau = tau;
  std::vector<double> llrs;
  for (int k = 0; k < K; ++k) {
    auto chains = run_h0_chains(policy, sched, gcfg, qcfg, tau, states_cal, n, seed,
                                static_cast<std::uint64_t>(k), critic);
    llrs.resize(chains.size());
    for (std::size_t i = 0; i < chains.size(); ++i) llrs[i] = chains[i].llr_cum;
    const double q = empirical_quantile(llrs, 1.0 - alpha);
    prev_tau = tau;
    tau = std::isinf(tau) ? q : momentum * tau + (1.0 - momentum) * q;
    if (log)
      (*log) << "calibrate iter " << k + 1 << "/" << K << " tau " << tau << " quantile " << q
             << "\n";
  }

  res.tau_hat = tau;
  res.h0_llrs = std::move(llrs);
  res.final_step = std::isinf(prev_tau) ? 0.0 : std::abs(tau - prev_tau);
  const double iqr = empirical_quantile(res.h0_llrs, 0.75) -
                     empirical_quantile(res.h0_llrs, 0.25);
  res.converged = res.final_step <= 0.05 * std::max(iqr, 1e-12);
  if (!res.converged && log)
    (*log) << "calibrate: warning, fixed point moved " << res.final_step
           << " on the last iteration (0.05*IQR = " << 0.05 * iqr << ")\n";
  return res;
}

double realized_type1(const HeadsModel &policy, const Schedule &sched, const GateConfig &gcfg,
                      const QComposeConfig &qcfg, double tau_hat, const Matrix &states, int m,
                      std::uint64_t seed, const QFunction *critic) {
  auto chains = run_h0_chains(policy, sched, gcfg, qcfg, tau_hat, states, m, seed,
                              /*iteration=*/0xe7a1ULL, critic);
  long hits = 0;
  for (const auto &c : chains)
    if (c.llr_cum >= tau_hat) ++hits;
  return static_cast<double>(hits) / static_cast<double>(m);
}

}  // namespace lrtd
