#pragma once
#include <optional>
#include <utility>

#include "lrtd/critic.hpp"
#include "lrtd/model.hpp"
#include "lrtd/schedule.hpp"

namespace lrtd {

enum class GateKind { soft, hard };

struct GateConfig {
  double beta_max = 1.0;
  double delta = 1.0;  // soft-gate temperature
  GateKind kind = GateKind::soft;
  std::optional<double> dmu_clamp;                 // cap on |mu_c - mu_u|
  std::optional<std::pair<int, int>> gate_window;  // inclusive step range [lo, hi]

  bool active_at(int t) const {
    return !gate_window || (t >= gate_window->first && t <= gate_window->second);
  }
  int gated_steps(int total) const {
    if (!gate_window) return total;
    const int lo = std::max(1, gate_window->first);
    const int hi = std::min(total, gate_window->second);
    return std::max(0, hi - lo + 1);
  }
};

enum class QCenter { unconditional, lrt, blend };

struct QComposeConfig {
  bool enabled = false;
  double lambda_max = 0.1;
  double grad_clip = 5.0;  // G
  QCenter center = QCenter::lrt;
  double blend_rho = 0.5;
  bool adaptive_rho = false;  // rho = beta_t / beta_max
  // Evidence update normally sees the pre-composition proposal; flipping this
  // accumulates the LLR after the critic step instead.
  bool llr_after_compose = false;

  // lambda_t = lambda_max * sigma_t / sigma_T
  double lambda_at(const Schedule &sched, int t) const {
    const double sT = std::sqrt(sched.sigma2_at(sched.steps));
    if (sT <= 0.0) return 0.0;
    return lambda_max * std::sqrt(sched.sigma2_at(t)) / sT;
  }
};

// Log-density ratio of two isotropic Gaussians with shared variance:
//   (|a - mu_u|^2 - |a - mu_c|^2) / (2 sigma^2)
double llr_step(const ConstVecRef &a_prev, const ConstVecRef &mu_u, const ConstVecRef &mu_c,
                double sigma2);

// beta_max * logistic((llr - tau)/delta); saturates instead of overflowing,
// and an infinite tau closes the gate exactly.
double gate_soft(double llr_cum, double tau, double delta, double beta_max);

// beta_max * 1{llr >= tau}.
double gate_hard(double llr_cum, double tau, double beta_max);

// a + lambda_t * sigma2 * clip_norm(grad Q(s, .)|center, G).
Vector q_compose(const ConstVecRef &a, const ConstVecRef &s, const QFunction &critic,
                 double lambda_t, double sigma2, const ConstVecRef &center, double grad_clip);

struct StepRecord {
  int t = 0;
  double beta = 0.0;
  double sigma2 = 0.0;
  double dllr = 0.0;
  double llr_cum = 0.0;  // after this step
  double dmu_norm = 0.0;
  double mean_shift_norm = 0.0;  // |m_t - mu_u|
  bool activated = false;        // llr before the step cleared tau at a gated step
};

struct LLRTrace {
  bool keep_vectors = false;
  std::vector<StepRecord> steps;
  std::vector<Vector> mu_u, mu_c, m;  // filled when keep_vectors
  Vector a0;
  double llr_cum = 0.0;
};

struct ChainResult {
  Vector a0;
  double llr_cum = 0.0;
  double var_proxy = 0.0;  // sum |dmu|^2 / sigma^2 over the chain
  int activations = 0;
  bool any_activation = false;
};

struct ReverseStepResult {
  Vector a_prev;
  double llr_cum = 0.0;
  StepRecord record;
  Vector mu_u, mu_c, m;
};

// One gated reverse transition a_t -> a_{t-1}: heads, optional dmu clamp,
// gate from the pre-step evidence, Gaussian proposal, evidence update, then
// the optional critic step. Enforces the per-step displacement bound.
ReverseStepResult reverse_step(const HeadsModel &policy, const Schedule &sched,
                               const GateConfig &gcfg, const QComposeConfig &qcfg, double tau,
                               const ConstVecRef &s, const ConstVecRef &a_t, int t,
                               double llr_cum, RngStream &rng,
                               const QFunction *critic = nullptr);

// Full reverse chain from a_T ~ N(0, I). Returns the standardized a0 plus the
// accumulated evidence; fills a full trace when requested.
ChainResult sample_action(const HeadsModel &policy, const Schedule &sched,
                          const GateConfig &gcfg, const QComposeConfig &qcfg, double tau,
                          const ConstVecRef &s, RngStream &rng,
                          const QFunction *critic = nullptr, LLRTrace *trace = nullptr);

// Standardized action -> env scale, clipped to the action bounds.
Vector destandardize(const ConstVecRef &a0, const StandardStats &stats);

}  // namespace lrtd
