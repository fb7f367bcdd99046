#include "lrtd/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lrtd/hash.hpp"

namespace lrtd {

namespace {

void round_to_f32(Matrix &M) {
  for (Index i = 0; i < M.size(); ++i)
    M.data()[i] = static_cast<double>(static_cast<float>(M.data()[i]));
}
void round_to_f32(Vector &v) {
  for (Index i = 0; i < v.size(); ++i)
    v.data()[i] = static_cast<double>(static_cast<float>(v.data()[i]));
}

}  // namespace

std::string TrainConfig::digest_string() const {
  std::ostringstream os;
  os << epochs << "|" << batch_size << "|" << learning_rate << "|" << ema_decay << "|" << tau_A
     << "|" << u_max << "|" << eps_w << "|" << seed;
  return os.str();
}

TwoHeadPolicy::TwoHeadPolicy(const PolicyDims &dims, std::uint64_t init_seed) : dims_(dims) {
  RngStream rng(derive_seed(init_seed, {0x706fu /* policy */}));
  std::vector<Index> bdims{dims.state_dim + dims.action_dim + dims.t_embed_width};
  for (Index h : dims.hidden) bdims.push_back(h);
  backbone_ = Mlp(bdims, /*activate_output=*/true, rng);
  head_u_ = Linear(dims.action_dim, dims.hidden.back());
  head_c_ = Linear(dims.action_dim, dims.hidden.back());
  init_linear(head_u_, rng, 0.1);
  init_linear(head_c_, rng, 0.1);
  // Keep parameters f32-representable from the start so freezing and the
  // float checkpoint round-trip are exact no-ops on untouched weights.
  for (auto &l : backbone_.layers()) round_to_f32(l.W), round_to_f32(l.b);
  round_to_f32(head_u_.W);
  round_to_f32(head_u_.b);
  round_to_f32(head_c_.W);
  round_to_f32(head_c_.b);
}

Matrix TwoHeadPolicy::assemble_input(const ConstMatRef &S, const ConstMatRef &A_noisy,
                                     const std::vector<int> &t) const {
  const Index B = S.cols();
  Matrix X(dims_.state_dim + dims_.action_dim + dims_.t_embed_width, B);
  X.topRows(dims_.state_dim) = S;
  X.middleRows(dims_.state_dim, dims_.action_dim) = A_noisy;
  for (Index j = 0; j < B; ++j)
    X.col(j).tail(dims_.t_embed_width) = time_embedding(t[static_cast<std::size_t>(j)],
                                                        dims_.t_embed_width);
  return X;
}

void TwoHeadPolicy::eps_heads(const ConstVecRef &s, const ConstVecRef &a_t, int t, Vector &eps_u,
                              Vector &eps_c) const {
  if (s.size() != dims_.state_dim || a_t.size() != dims_.action_dim)
    throw std::invalid_argument("eps_heads: dimension mismatch");
  if (backbone_.layers().empty()) throw std::runtime_error("eps_heads: uninitialized policy");
  Vector x(dims_.state_dim + dims_.action_dim + dims_.t_embed_width);
  x << s, a_t, time_embedding(t, dims_.t_embed_width);
  Vector f = backbone_.forward1(x);
  eps_u = head_u_.W * f + head_u_.b;
  eps_c = head_c_.W * f + head_c_.b;
}

void TwoHeadPolicy::forward_batch(const ConstMatRef &S, const ConstMatRef &A_noisy,
                                  const std::vector<int> &t, Matrix &eps_u, Matrix &eps_c,
                                  ForwardCache *cache) const {
  Matrix X = assemble_input(S, A_noisy, t);
  Matrix F;
  if (cache) {
    F = backbone_.forward_cached(X, cache->backbone);
    cache->features = F;
  } else {
    F = backbone_.forward(X);
  }
  eps_u = (head_u_.W * F).colwise() + head_u_.b;
  eps_c = (head_c_.W * F).colwise() + head_c_.b;
}

Matrix TwoHeadPolicy::action_jacobian(const ConstVecRef &s, const ConstVecRef &a_t, int t,
                                      bool conditional) const {
  Vector x(dims_.state_dim + dims_.action_dim + dims_.t_embed_width);
  x << s, a_t, time_embedding(t, dims_.t_embed_width);
  Matrix Jb = backbone_.input_jacobian(x);  // feat x in
  const Linear &head = conditional ? head_c_ : head_u_;
  Matrix J = head.W * Jb;
  return J.middleCols(dims_.state_dim, dims_.action_dim);
}

void TwoHeadPolicy::freeze() {
  for (auto &l : backbone_.layers()) round_to_f32(l.W), round_to_f32(l.b);
  round_to_f32(head_u_.W);
  round_to_f32(head_u_.b);
  round_to_f32(head_c_.W);
  round_to_f32(head_c_.b);
  frozen_ = true;
}

Index TwoHeadPolicy::parameter_count() const {
  return backbone_.parameter_count() + head_u_.W.size() + head_u_.b.size() + head_c_.W.size() +
         head_c_.b.size();
}

std::vector<float> TwoHeadPolicy::flat_params() const {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(parameter_count()));
  backbone_.flatten_to(out);
  auto push = [&out](const Matrix &M) {
    for (Index i = 0; i < M.size(); ++i) out.push_back(static_cast<float>(M.data()[i]));
  };
  auto pushv = [&out](const Vector &v) {
    for (Index i = 0; i < v.size(); ++i) out.push_back(static_cast<float>(v.data()[i]));
  };
  push(head_u_.W);
  pushv(head_u_.b);
  push(head_c_.W);
  pushv(head_c_.b);
  return out;
}

void TwoHeadPolicy::load_flat_params(const std::vector<float> &params) {
  if (static_cast<Index>(params.size()) != parameter_count())
    throw std::runtime_error("load_flat_params: parameter count mismatch");
  const Index nb = backbone_.parameter_count();
  backbone_.unflatten_from(params.data(), nb);
  Index pos = nb;
  auto pull = [&](Matrix &M) {
    for (Index i = 0; i < M.size(); ++i) M.data()[i] = params[static_cast<std::size_t>(pos++)];
  };
  auto pullv = [&](Vector &v) {
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = params[static_cast<std::size_t>(pos++)];
  };
  pull(head_u_.W);
  pullv(head_u_.b);
  pull(head_c_.W);
  pullv(head_c_.b);
}

std::string TwoHeadPolicy::fingerprint_token() const {
  return hex64(fnv1a64(flat_params()));
}

double class_balance_weight(int label, double rho_hat, double eps_w) {
  if (!(rho_hat > 0.0 && rho_hat < 1.0))
    throw std::invalid_argument("class_balance_weight: rho_hat must be in (0,1)");
  return label == 1 ? 1.0 / (2.0 * rho_hat + eps_w) : 1.0 / (2.0 * (1.0 - rho_hat) + eps_w);
}

double soft_positive_weight(int label, double advantage, double kappa, double tau_A,
                            double u_max) {
  if (!(tau_A > 0.0)) throw std::invalid_argument("soft_positive_weight: tau_A must be > 0");
  if (!(u_max >= 1.0)) throw std::invalid_argument("soft_positive_weight: u_max must be >= 1");
  if (label != 1) return 1.0;
  const double excess = std::max(0.0, (advantage - kappa) / tau_A);
  return 1.0 + std::min(excess, u_max - 1.0);
}

Vector batch_weights(const std::vector<std::uint8_t> &labels, const ConstVecRef &advantages,
                     double kappa, double rho_hat, const TrainConfig &cfg) {
  const Index B = advantages.size();
  if (B == 0 || labels.size() != static_cast<std::size_t>(B))
    throw std::invalid_argument("batch_weights: empty batch or length mismatch");
  Vector w(B);
  for (Index i = 0; i < B; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    w[i] = class_balance_weight(c, rho_hat, cfg.eps_w) *
           soft_positive_weight(c, advantages[i], kappa, cfg.tau_A, cfg.u_max);
  }
  return w / w.mean();
}

DiffusionBatch make_diffusion_batch(const Dataset &data, const Schedule &sched,
                                    const std::vector<Index> &rows, RngStream &rng) {
  const Index B = static_cast<Index>(rows.size());
  const Index ds = data.state_dim(), da = data.action_dim();
  DiffusionBatch batch;
  batch.states.resize(ds, B);
  batch.noisy_actions.resize(da, B);
  batch.eps.resize(da, B);
  batch.t.resize(static_cast<std::size_t>(B));
  batch.labels.resize(static_cast<std::size_t>(B));
  batch.advantages.resize(B);
  for (Index j = 0; j < B; ++j) {
    const Index i = rows[static_cast<std::size_t>(j)];
    const int t = 1 + static_cast<int>(rng.integer(static_cast<std::uint64_t>(sched.steps)));
    const double abar = sched.alpha_bar_at(t);
    Vector eps = rng.normal_vector(da);
    batch.states.col(j) = data.states.col(i);
    batch.noisy_actions.col(j) =
        std::sqrt(abar) * data.actions.col(i) + std::sqrt(1.0 - abar) * eps;
    batch.eps.col(j) = eps;
    batch.t[static_cast<std::size_t>(j)] = t;
    batch.labels[static_cast<std::size_t>(j)] = data.labels[static_cast<std::size_t>(i)];
    batch.advantages[j] = data.advantages[i];
  }
  return batch;
}

double two_head_loss(const TwoHeadPolicy &policy, const DiffusionBatch &batch, double rho_hat,
                     double kappa, const TrainConfig &cfg, PolicyGrads *grads) {
  const Index B = batch.size();
  if (B == 0) throw std::invalid_argument("two_head_loss: empty batch");

  TwoHeadPolicy::ForwardCache cache;
  Matrix eps_u, eps_c;
  policy.forward_batch(batch.states, batch.noisy_actions, batch.t, eps_u, eps_c, &cache);

  const Vector w_u = batch_weights(batch.labels, batch.advantages, kappa, rho_hat, cfg);

  std::vector<Index> pos;
  for (Index i = 0; i < B; ++i)
    if (batch.labels[static_cast<std::size_t>(i)] == 1) pos.push_back(i);
  Vector w_c;
  if (!pos.empty()) {
    std::vector<std::uint8_t> pos_labels(pos.size(), 1);
    Vector pos_adv(static_cast<Index>(pos.size()));
    for (std::size_t k = 0; k < pos.size(); ++k) pos_adv[static_cast<Index>(k)] =
        batch.advantages[pos[k]];
    w_c = batch_weights(pos_labels, pos_adv, kappa, rho_hat, cfg);
  }

  Matrix res_u = eps_u - batch.eps;
  double loss = 0.0;
  for (Index i = 0; i < B; ++i) loss += w_u[i] * res_u.col(i).squaredNorm();
  loss /= static_cast<double>(B);

  Matrix dEc = Matrix::Zero(eps_c.rows(), B);
  if (!pos.empty()) {
    const double Bc = static_cast<double>(pos.size());
    double loss_c = 0.0;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const Index i = pos[k];
      Vector r = eps_c.col(i) - batch.eps.col(i);
      loss_c += w_c[static_cast<Index>(k)] * r.squaredNorm();
      dEc.col(i) = (2.0 * w_c[static_cast<Index>(k)] / Bc) * r;
    }
    loss += loss_c / Bc;
  }

  if (grads) {
    Matrix dEu(eps_u.rows(), B);
    for (Index i = 0; i < B; ++i)
      dEu.col(i) = (2.0 * w_u[i] / static_cast<double>(B)) * res_u.col(i);

    grads->head_u_W = dEu * cache.features.transpose();
    grads->head_u_b = dEu.rowwise().sum();
    grads->head_c_W = dEc * cache.features.transpose();
    grads->head_c_b = dEc.rowwise().sum();

    Matrix dF = policy.head_u().W.transpose() * dEu + policy.head_c().W.transpose() * dEc;
    grads->backbone = policy.backbone().zero_grads();
    policy.backbone().backward(cache.backbone, dF, grads->backbone);
  }
  return loss;
}

TwoHeadPolicy train(const TwoHeadPolicy &policy_init, const Dataset &data,
                    const Schedule &sched, const TrainConfig &cfg, std::ostream *log) {
  if (!data.labeled()) throw std::invalid_argument("train: dataset must be labeled");
  if (!data.standardized) throw std::invalid_argument("train: dataset must be standardized");

  TwoHeadPolicy policy = policy_init;
  if (cfg.epochs <= 0) {
    policy.freeze();
    return policy;
  }

  Adam opt(cfg.learning_rate);
  {
    std::vector<Matrix *> Ws;
    std::vector<Vector *> bs;
    for (auto &l : policy.backbone().layers()) Ws.push_back(&l.W), bs.push_back(&l.b);
    Ws.push_back(&policy.head_u().W);
    bs.push_back(&policy.head_u().b);
    Ws.push_back(&policy.head_c().W);
    bs.push_back(&policy.head_c().b);
    opt.register_params(Ws, bs);
  }

  const Index N = data.count();
  const Index B = std::min<Index>(cfg.batch_size, N);
  double global_pos = 0.0;
  for (auto c : data.labels) global_pos += c;
  double rho_hat = std::clamp(global_pos / static_cast<double>(N), 1e-6, 1.0 - 1e-6);

  RngStream rng(derive_seed(cfg.seed, {0x7472u /* train */}));
  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start + B <= N; start += B, ++batches) {
      std::vector<Index> rows(order.begin() + start, order.begin() + start + B);
      double batch_pos = 0.0;
      for (Index i : rows) batch_pos += data.labels[static_cast<std::size_t>(i)];
      rho_hat = cfg.ema_decay * rho_hat +
                (1.0 - cfg.ema_decay) * batch_pos / static_cast<double>(B);
      rho_hat = std::clamp(rho_hat, 1e-6, 1.0 - 1e-6);

      DiffusionBatch batch = make_diffusion_batch(data, sched, rows, rng);
      PolicyGrads grads;
      const double loss = two_head_loss(policy, batch, rho_hat, data.kappa, cfg, &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(batches));
      epoch_loss += loss;

      std::vector<const Matrix *> gW;
      std::vector<const Vector *> gb;
      for (auto &m : grads.backbone.W) gW.push_back(&m);
      for (auto &v : grads.backbone.b) gb.push_back(&v);
      gW.push_back(&grads.head_u_W);
      gb.push_back(&grads.head_u_b);
      gW.push_back(&grads.head_c_W);
      gb.push_back(&grads.head_c_b);
      opt.step(gW, gb);
    }
    if (log)
      (*log) << "epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
             << epoch_loss / static_cast<double>(std::max<Index>(batches, 1)) << " rho "
             << rho_hat << "\n";
  }
  policy.freeze();
  return policy;
}

}  // namespace lrtd
