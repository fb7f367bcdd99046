#include "lrtd/critic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lrtd {

Vector fd_action_gradient(const QFunction &q, const ConstVecRef &s, const ConstVecRef &a,
                          double h) {
  Vector g(a.size());
  Vector probe = a;
  for (Index i = 0; i < a.size(); ++i) {
    probe[i] = a[i] + h;
    const double hi = q.value(s, probe);
    probe[i] = a[i] - h;
    const double lo = q.value(s, probe);
    probe[i] = a[i];
    g[i] = (hi - lo) / (2.0 * h);
  }
  return g;
}

Vector QFunction::action_gradient(const ConstVecRef &s, const ConstVecRef &a) const {
  return fd_action_gradient(*this, s, a);
}

ExpectileCritic::ExpectileCritic(Index state_dim, Index action_dim, const CriticConfig &cfg,
                                 double gamma, double expectile, RngStream &rng)
    : state_dim_(state_dim), action_dim_(action_dim), gamma_(gamma), expectile_(expectile) {
  std::vector<Index> qdims{state_dim + action_dim};
  std::vector<Index> vdims{state_dim};
  for (Index h : cfg.hidden) qdims.push_back(h), vdims.push_back(h);
  qdims.push_back(1);
  vdims.push_back(1);
  q_net_ = Mlp(qdims, false, rng);
  v_net_ = Mlp(vdims, false, rng);
}

void ExpectileCritic::set_dims(Index sd, Index ad, double gamma, double expectile) {
  state_dim_ = sd;
  action_dim_ = ad;
  gamma_ = gamma;
  expectile_ = expectile;
}

double ExpectileCritic::value(const ConstVecRef &s, const ConstVecRef &a) const {
  Vector x(state_dim_ + action_dim_);
  x << s, a;
  return q_net_.forward1(x)[0];
}

Vector ExpectileCritic::action_gradient(const ConstVecRef &s, const ConstVecRef &a) const {
  Vector x(state_dim_ + action_dim_);
  x << s, a;
  Matrix J = q_net_.input_jacobian(x);  // 1 x (d_s + d_a)
  return J.row(0).tail(action_dim_).transpose();
}

double ExpectileCritic::state_value(const ConstVecRef &s) const {
  return v_net_.forward1(s)[0];
}

double expectile_loss(const ConstVecRef &residuals, double tau) {
  double acc = 0.0;
  for (Index i = 0; i < residuals.size(); ++i) {
    const double u = residuals[i];
    const double w = u < 0.0 ? 1.0 - tau : tau;
    acc += w * u * u;
  }
  return acc / static_cast<double>(residuals.size());
}

ExpectileCritic fit_expectile_critic(const Dataset &data, double gamma, double expectile,
                                     const CriticConfig &cfg, std::ostream *log) {
  if (!(expectile > 0.0 && expectile < 1.0))
    throw std::invalid_argument("fit_expectile_critic: expectile must be in (0,1)");
  if (data.count() == 0) throw std::invalid_argument("fit_expectile_critic: empty dataset");

  RngStream rng(derive_seed(cfg.seed, {0x6372u /* critic */}));
  ExpectileCritic critic(data.state_dim(), data.action_dim(), cfg, gamma, expectile, rng);

  Adam q_opt(cfg.learning_rate), v_opt(cfg.learning_rate);
  {
    std::vector<Matrix *> Ws;
    std::vector<Vector *> bs;
    for (auto &l : critic.q_net().layers()) Ws.push_back(&l.W), bs.push_back(&l.b);
    q_opt.register_params(Ws, bs);
  }
  {
    std::vector<Matrix *> Ws;
    std::vector<Vector *> bs;
    for (auto &l : critic.v_net().layers()) Ws.push_back(&l.W), bs.push_back(&l.b);
    v_opt.register_params(Ws, bs);
  }

  const Index N = data.count();
  const Index B = std::min<Index>(cfg.batch_size, N);
  const Index ds = data.state_dim(), da = data.action_dim();

  for (int step = 0; step < cfg.steps; ++step) {
    Matrix S(ds, B), A(da, B), SA(ds + da, B), Snext(ds, B);
    Vector r(B), not_done(B);
    for (Index j = 0; j < B; ++j) {
      const Index i = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(N)));
      S.col(j) = data.states.col(i);
      A.col(j) = data.actions.col(i);
      Snext.col(j) = data.next_states.col(i);
      r[j] = data.rewards[i];
      not_done[j] = data.dones[i] ? 0.0 : 1.0;
    }
    SA.topRows(ds) = S;
    SA.bottomRows(da) = A;

    // V step: expectile regression toward current Q(s,a).
    Matrix q_now = critic.q_net().forward(SA);  // 1 x B
    Mlp::Cache v_cache;
    Matrix v_now = critic.v_net().forward_cached(S, v_cache);
    Vector u = (q_now - v_now).row(0).transpose();
    double v_loss = expectile_loss(u, expectile);
    {
      Matrix dV(1, B);
      for (Index j = 0; j < B; ++j) {
        const double w = u[j] < 0.0 ? 1.0 - expectile : expectile;
        dV(0, j) = -2.0 * w * u[j] / static_cast<double>(B);
      }
      Mlp::Grads g = critic.v_net().zero_grads();
      critic.v_net().backward(v_cache, dV, g);
      std::vector<const Matrix *> gW;
      std::vector<const Vector *> gb;
      for (auto &m : g.W) gW.push_back(&m);
      for (auto &v : g.b) gb.push_back(&v);
      v_opt.step(gW, gb);
    }

    // Q step: TD regression toward r + gamma * V(s') (bootstrap masked at terminals).
    Matrix v_next = critic.v_net().forward(Snext);
    Vector target = r + gamma * v_next.row(0).transpose().cwiseProduct(not_done);
    Mlp::Cache q_cache;
    Matrix q_pred = critic.q_net().forward_cached(SA, q_cache);
    Vector td = q_pred.row(0).transpose() - target;
    double q_loss = td.squaredNorm() / static_cast<double>(B);
    {
      Matrix dQ = (2.0 / static_cast<double>(B)) * td.transpose();
      Mlp::Grads g = critic.q_net().zero_grads();
      critic.q_net().backward(q_cache, dQ, g);
      std::vector<const Matrix *> gW;
      std::vector<const Vector *> gb;
      for (auto &m : g.W) gW.push_back(&m);
      for (auto &v : g.b) gb.push_back(&v);
      q_opt.step(gW, gb);
    }

    if (!(v_loss < 1e6) || !(q_loss < 1e6))
      throw std::runtime_error("fit_expectile_critic: diverged at step " + std::to_string(step));
    if (log && (step + 1) % 500 == 0)
      (*log) << "critic step " << step + 1 << " q_loss " << q_loss << " v_loss " << v_loss
             << "\n";
  }
  return critic;
}

Vector critic_advantages(const ExpectileCritic &critic, const Dataset &data) {
  Vector adv(data.count());
  for (Index i = 0; i < data.count(); ++i)
    adv[i] = critic.value(data.states.col(i), data.actions.col(i)) -
             critic.state_value(data.states.col(i));
  return adv;
}

LabelResult label_top_p(const ConstVecRef &advantages, double p) {
  if (advantages.size() == 0) throw std::invalid_argument("label_top_p: empty advantages");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("label_top_p: p must be in (0,1)");
  const Index n = advantages.size();
  std::vector<double> sorted(advantages.data(), advantages.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const Index idx = static_cast<Index>(
      std::ceil((1.0 - p) * static_cast<double>(n)));  // 1-based order statistic
  const Index clamped = std::max<Index>(1, std::min<Index>(idx, n));
  LabelResult res;
  res.advantages = advantages;
  res.kappa = sorted[clamped - 1];
  res.p = p;
  res.labels.resize(n);
  for (Index i = 0; i < n; ++i) res.labels[i] = advantages[i] >= res.kappa ? 1 : 0;
  return res;
}

double BanditOracleCritic::value(const ConstVecRef &s, const ConstVecRef &a) const {
  Vector s_raw = (s.array() * stats_.state_std.array()).matrix() + stats_.state_mean;
  Vector a_raw = (a.array() * stats_.action_std.array()).matrix() + stats_.action_mean;
  return true_q_bandit(spec_, s_raw, a_raw);
}

Vector BanditOracleCritic::action_gradient(const ConstVecRef &s, const ConstVecRef &a) const {
  Vector s_raw = (s.array() * stats_.state_std.array()).matrix() + stats_.state_mean;
  Vector a_raw = (a.array() * stats_.action_std.array()).matrix() + stats_.action_mean;
  Vector diff = a_raw - bandit_good_mode(spec_, s_raw);
  const double norm = diff.norm();
  if (norm < 1e-12) return Vector::Zero(a.size());
  // d/da_std (1 - |a_raw - g|) with a_raw = a_std .* std + mean.
  return (-(diff / norm).array() * stats_.action_std.array()).matrix();
}

double OffSupportCorruptedCritic::value(const ConstVecRef &s, const ConstVecRef &a) const {
  Vector s_raw = (s.array() * stats_.state_std.array()).matrix() + stats_.state_mean;
  Vector a_raw = (a.array() * stats_.action_std.array()).matrix() + stats_.action_mean;
  const double base = base_.value(s, a);
  return bandit_in_support(spec_, s_raw, a_raw) ? base : base + offset_;
}

}  // namespace lrtd
