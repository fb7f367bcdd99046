#pragma once
#include <iosfwd>
#include <string>

#include "lrtd/dataset.hpp"
#include "lrtd/nets.hpp"
#include "lrtd/schedule.hpp"

namespace lrtd {

// Anything that produces the two noise predictions for a reverse step.
// Implementations must be pure functions of (s, a_t, t) once frozen.
class HeadsModel {
 public:
  virtual ~HeadsModel() = default;
  virtual Index state_dim() const = 0;
  virtual Index action_dim() const = 0;
  virtual void eps_heads(const ConstVecRef &s, const ConstVecRef &a_t, int t, Vector &eps_u,
                         Vector &eps_c) const = 0;
  // Stable identity used in calibration fingerprints.
  virtual std::string fingerprint_token() const = 0;
};

struct TrainConfig {
  int epochs = 60;
  Index batch_size = 256;
  double learning_rate = 1e-3;
  double ema_decay = 0.99;  // for the positive-rate estimate
  double tau_A = 1.0;       // advantage temperature of the soft weight
  double u_max = 3.0;       // soft-weight cap; 1 disables soft weights
  double eps_w = 1e-8;      // class-balance denominator guard
  std::uint64_t seed = 0;

  std::string digest_string() const;
};

struct PolicyDims {
  Index state_dim = 2;
  Index action_dim = 2;
  std::vector<Index> hidden{64, 64};
  Index t_embed_width = 16;
};

// Shared backbone with two affine epsilon heads. Both heads read the same
// feature vector for a given (s, a_t, t); that is what makes the reverse-step
// covariances equal and the LLR a linear discriminant.
class TwoHeadPolicy : public HeadsModel {
 public:
  TwoHeadPolicy() = default;
  TwoHeadPolicy(const PolicyDims &dims, std::uint64_t init_seed);

  Index state_dim() const override { return dims_.state_dim; }
  Index action_dim() const override { return dims_.action_dim; }
  void eps_heads(const ConstVecRef &s, const ConstVecRef &a_t, int t, Vector &eps_u,
                 Vector &eps_c) const override;
  std::string fingerprint_token() const override;

  struct ForwardCache {
    Mlp::Cache backbone;
    Matrix features;
  };
  // Batched training forward; one column per sample.
  void forward_batch(const ConstMatRef &S, const ConstMatRef &A_noisy,
                     const std::vector<int> &t, Matrix &eps_u, Matrix &eps_c,
                     ForwardCache *cache = nullptr) const;

  // d eps_head / d a_t for one input, by analytic backprop.
  Matrix action_jacobian(const ConstVecRef &s, const ConstVecRef &a_t, int t,
                         bool conditional) const;

  const PolicyDims &dims() const { return dims_; }
  bool frozen() const { return frozen_; }
  void freeze();

  Mlp &backbone() { return backbone_; }
  Linear &head_u() { return head_u_; }
  Linear &head_c() { return head_c_; }
  const Mlp &backbone() const { return backbone_; }
  const Linear &head_u() const { return head_u_; }
  const Linear &head_c() const { return head_c_; }

  Index parameter_count() const;
  std::vector<float> flat_params() const;  // backbone layers, then head_u, head_c
  void load_flat_params(const std::vector<float> &params);

 private:
  Matrix assemble_input(const ConstMatRef &S, const ConstMatRef &A_noisy,
                        const std::vector<int> &t) const;

  PolicyDims dims_;
  Mlp backbone_;
  Linear head_u_, head_c_;
  bool frozen_ = false;
};

// 1/(2*rho + eps) for positives, 1/(2*(1-rho) + eps) for negatives.
double class_balance_weight(int label, double rho_hat, double eps_w);

// u = 1 + 1{c=1} * min(max(0, (A - kappa)/tau_A), u_max - 1).
double soft_positive_weight(int label, double advantage, double kappa, double tau_A,
                            double u_max);

// Per-row weights w_cb * u normalized to mean exactly 1 over the given rows.
Vector batch_weights(const std::vector<std::uint8_t> &labels, const ConstVecRef &advantages,
                     double kappa, double rho_hat, const TrainConfig &cfg);

// One training batch under forward diffusion a_t = sqrt(abar)*a0 + sqrt(1-abar)*eps.
struct DiffusionBatch {
  Matrix states;
  Matrix noisy_actions;
  std::vector<int> t;
  Matrix eps;  // targets
  std::vector<std::uint8_t> labels;
  Vector advantages;
  Index size() const { return states.cols(); }
};

DiffusionBatch make_diffusion_batch(const Dataset &data, const Schedule &sched,
                                    const std::vector<Index> &rows, RngStream &rng);

struct PolicyGrads {
  Mlp::Grads backbone;
  Matrix head_u_W;
  Vector head_u_b;
  Matrix head_c_W;
  Vector head_c_b;
};

// Weighted two-head epsilon loss. The unconditional head sees every row; the
// conditional head sees only label-1 rows, with weights renormalized over
// that subset. Returns the scalar loss; fills grads when non-null.
double two_head_loss(const TwoHeadPolicy &policy, const DiffusionBatch &batch, double rho_hat,
                     double kappa, const TrainConfig &cfg, PolicyGrads *grads = nullptr);

// Full training loop; returns the frozen policy. Throws on non-finite loss.
TwoHeadPolicy train(const TwoHeadPolicy &policy_init, const Dataset &data,
                    const Schedule &sched, const TrainConfig &cfg, std::ostream *log = nullptr);

}  // namespace lrtd
