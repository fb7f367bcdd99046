#pragma once
#include <iosfwd>
#include <string>
#include <vector>

#include "lrtd/sampler.hpp"

namespace lrtd {

// Smallest order statistic x with F_n(x) >= level (1-based index ceil(level*n));
// level 0 gives the minimum.
double empirical_quantile(std::vector<double> samples, double level);

// sqrt(log(2/zeta) / (2n)): uniform ECDF error at confidence 1 - zeta.
double dkw_epsilon(long n, double zeta);

// ceil(log(2/zeta) / (2 eps^2)): samples needed for accuracy eps.
long dkw_budget(double eps, double zeta);

struct CalibrationResult {
  double tau_hat = std::numeric_limits<double>::infinity();
  double alpha = 0.1;
  int n = 0;                   // chains per iteration
  int iterations = 0;          // K
  double momentum = 0.5;
  std::vector<double> h0_llrs;  // final-iteration sample
  std::uint64_t sampler_fingerprint = 0;
  double dkw_eps = 0.0;
  double zeta = 0.05;
  bool converged = true;
  double final_step = 0.0;  // |tau_K - tau_{K-1}|
  // The reverse variance convention shared by the noise, the LLR and the gate.
  std::string variance_convention = "posterior";
};

// Hash of everything the trajectory law depends on. Threshold reuse across a
// different sampler is refused at deployment.
std::uint64_t compute_sampler_fingerprint(const HeadsModel &policy, const Schedule &sched,
                                          const GateConfig &gcfg, const QComposeConfig &qcfg);

// Throws std::runtime_error when the live sampler does not match the one the
// threshold was calibrated with.
void require_fingerprint_match(const CalibrationResult &calib, const HeadsModel &policy,
                               const Schedule &sched, const GateConfig &gcfg,
                               const QComposeConfig &qcfg);

// Fixed-point Monte-Carlo calibration under the null: start with the gate
// closed (tau = +inf), run n chains of the deployed sampler per iteration on
// held-out states, and relax tau toward the (1-alpha) quantile of the
// realized evidence with the given momentum.
CalibrationResult calibrate_tau(const HeadsModel &policy, const Schedule &sched,
                                const GateConfig &gcfg, const QComposeConfig &qcfg,
                                const Matrix &states_cal, double alpha, int n, int K,
                                double momentum, std::uint64_t seed,
                                const QFunction *critic = nullptr,
                                std::ostream *log = nullptr);

// Fraction of m fresh null chains whose evidence clears tau_hat. Use a seed
// stream disjoint from calibration.
double realized_type1(const HeadsModel &policy, const Schedule &sched, const GateConfig &gcfg,
                      const QComposeConfig &qcfg, double tau_hat, const Matrix &states,
                      int m, std::uint64_t seed, const QFunction *critic = nullptr);

// Null-chain sweep returning the raw per-chain aggregates (evidence, variance
// proxy, activation counts); shared by calibration, Type-I evaluation and the
// theory checks.
std::vector<ChainResult> run_h0_chains(const HeadsModel &policy, const Schedule &sched,
                                       const GateConfig &gcfg, const QComposeConfig &qcfg,
                                       double tau, const Matrix &states, int n,
                                       std::uint64_t seed, std::uint64_t iteration = 0,
                                       const QFunction *critic = nullptr);

}  // namespace lrtd
