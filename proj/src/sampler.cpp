#include "lrtd/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace lrtd {

double llr_step(const ConstVecRef &a_prev, const ConstVecRef &mu_u, const ConstVecRef &mu_c,
                double sigma2) {
  if (a_prev.size() != mu_u.size() || a_prev.size() != mu_c.size())
    throw std::invalid_argument("llr_step: dimension mismatch");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("llr_step: sigma2 must be positive");
  return ((a_prev - mu_u).squaredNorm() - (a_prev - mu_c).squaredNorm()) / (2.0 * sigma2);
}

double gate_soft(double llr_cum, double tau, double delta, double beta_max) {
  if (!(delta > 0.0)) throw std::invalid_argument("gate_soft: delta must be positive");
  if (std::isinf(tau)) return tau > 0.0 ? 0.0 : beta_max;
  const double x = (llr_cum - tau) / delta;
  if (x >= 0.0) return beta_max / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return beta_max * e / (1.0 + e);
}

double gate_hard(double llr_cum, double tau, double beta_max) {
  return llr_cum >= tau ? beta_max : 0.0;
}

Vector q_compose(const ConstVecRef &a, const ConstVecRef &s, const QFunction &critic,
                 double lambda_t, double sigma2, const ConstVecRef &center, double grad_clip) {
  if (lambda_t == 0.0) return a;
  Vector g = critic.action_gradient(s, center);
  const double norm = g.norm();
  if (norm > grad_clip) g *= grad_clip / norm;
  return a + lambda_t * sigma2 * g;
}

ReverseStepResult reverse_step(const HeadsModel &policy, const Schedule &sched,
                               const GateConfig &gcfg, const QComposeConfig &qcfg, double tau,
                               const ConstVecRef &s, const ConstVecRef &a_t, int t,
                               double llr_cum, RngStream &rng, const QFunction *critic) {
  if (t < 1 || t > sched.steps) throw std::invalid_argument("reverse_step: t out of range");

  Vector eps_u, eps_c;
  policy.eps_heads(s, a_t, t, eps_u, eps_c);
  Vector mu_u = mean_from_eps(sched, t, a_t, eps_u);
  Vector mu_c = mean_from_eps(sched, t, a_t, eps_c);

  Vector dmu = mu_c - mu_u;
  if (gcfg.dmu_clamp) {
    const double n = dmu.norm();
    if (n > *gcfg.dmu_clamp) {
      dmu *= *gcfg.dmu_clamp / n;
      mu_c = mu_u + dmu;  // the clamped kernel is the hypothesis being tested
    }
  }

  const bool gate_on = gcfg.active_at(t);
  double beta = 0.0;
  bool activated = false;
  if (gate_on) {
    beta = gcfg.kind == GateKind::soft ? gate_soft(llr_cum, tau, gcfg.delta, gcfg.beta_max)
                                       : gate_hard(llr_cum, tau, gcfg.beta_max);
    activated = llr_cum >= tau;
  }

  Vector mu_lrt = mu_u + beta * dmu;
  Vector m = mu_lrt;

  const double sigma2 = sched.sigma2_at(t);
  double lambda_t = 0.0;
  if (qcfg.enabled && critic) {
    lambda_t = qcfg.lambda_at(sched, t);
    Vector center;
    switch (qcfg.center) {
      case QCenter::unconditional: center = mu_u; break;
      case QCenter::lrt: center = mu_lrt; break;
      case QCenter::blend: {
        const double rho = qcfg.adaptive_rho && gcfg.beta_max > 0.0 ? beta / gcfg.beta_max
                                                                    : qcfg.blend_rho;
        center = (1.0 - rho) * mu_u + rho * mu_lrt;
        break;
      }
    }
    m = q_compose(mu_lrt, s, *critic, lambda_t, sigma2, center, qcfg.grad_clip);
  }

  // Per-step displacement bound; a violation is an implementation bug.
  {
    const double shift = (m - mu_u).norm();
    const double bound = gcfg.beta_max * dmu.norm() +
                         (qcfg.enabled ? qcfg.lambda_max * sigma2 * qcfg.grad_clip : 0.0);
    if (shift > bound * (1.0 + 1e-9) + 1e-12)
      throw std::logic_error("reverse_step: displacement bound violated");
  }

  Vector a_prev = mu_lrt;
  if (sigma2 > 0.0) a_prev += std::sqrt(sigma2) * rng.normal_vector(a_t.size());

  const double sigma2_llr = sched.sigma2_llr(t);
  double dllr;
  Vector a_out;
  if (qcfg.enabled && critic && !qcfg.llr_after_compose) {
    // Evidence measures the gate's own proposal; the critic nudge lands after.
    dllr = llr_step(a_prev, mu_u, mu_c, sigma2_llr);
    a_out = a_prev + (m - mu_lrt);
  } else {
    a_out = a_prev + (m - mu_lrt);
    dllr = llr_step(a_out, mu_u, mu_c, sigma2_llr);
  }

  ReverseStepResult out;
  out.a_prev = std::move(a_out);
  out.llr_cum = llr_cum + dllr;
  out.record = StepRecord{t,    beta,           sigma2, dllr, out.llr_cum, dmu.norm(),
                          (m - mu_u).norm(), activated};
  out.mu_u = std::move(mu_u);
  out.mu_c = std::move(mu_c);
  out.m = std::move(m);
  return out;
}

ChainResult sample_action(const HeadsModel &policy, const Schedule &sched,
                          const GateConfig &gcfg, const QComposeConfig &qcfg, double tau,
                          const ConstVecRef &s, RngStream &rng, const QFunction *critic,
                          LLRTrace *trace) {
  const Index da = policy.action_dim();
  Vector a = rng.normal_vector(da);
  ChainResult res;
  res.llr_cum = 0.0;
  if (trace) {
    trace->steps.clear();
    trace->mu_u.clear();
    trace->mu_c.clear();
    trace->m.clear();
  }
  for (int t = sched.steps; t >= 1; --t) {
    ReverseStepResult step =
        reverse_step(policy, sched, gcfg, qcfg, tau, s, a, t, res.llr_cum, rng, critic);
    a = step.a_prev;
    res.llr_cum = step.llr_cum;
    res.var_proxy += step.record.dmu_norm * step.record.dmu_norm / sched.sigma2_llr(t);
    if (step.record.activated) {
      ++res.activations;
      res.any_activation = true;
    }
    if (trace) {
      trace->steps.push_back(step.record);
      if (trace->keep_vectors) {
        trace->mu_u.push_back(step.mu_u);
        trace->mu_c.push_back(step.mu_c);
        trace->m.push_back(step.m);
      }
    }
  }
  res.a0 = a;
  if (trace) {
    trace->a0 = res.a0;
    trace->llr_cum = res.llr_cum;
  }
  return res;
}

Vector destandardize(const ConstVecRef &a0, const StandardStats &stats) {
  if (!stats.valid()) throw std::invalid_argument("destandardize: missing stats");
  Vector a = (a0.array() * stats.action_std.array()).matrix() + stats.action_mean;
  if (stats.action_low.size() == a.size())
    a = a.cwiseMax(stats.action_low).cwiseMin(stats.action_high);
  return a;
}

}  // namespace lrtd
