#pragma once
#include <vector>

#include "lrtd/rng.hpp"
#include "lrtd/types.hpp"

namespace lrtd {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

struct Linear {
  Matrix W;  // (out x in)
  Vector b;

  Linear() = default;
  Linear(Index out, Index in) : W(Matrix::Zero(out, in)), b(Vector::Zero(out)) {}

  Index fan_in() const { return W.cols(); }
  Index fan_out() const { return W.rows(); }
};

// He-style init scaled for SiLU nets.
void init_linear(Linear &layer, RngStream &rng, double scale = 1.0);

// Column-per-sample feed-forward net: affine layers with SiLU between them,
// and optionally after the last one (activate_output).
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<Index> &dims, bool activate_output, RngStream &rng);

  // X is (in_dim x B); returns (out_dim x B).
  Matrix forward(const ConstMatRef &X) const;
  Vector forward1(const ConstVecRef &x) const;

  struct Cache {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // post-activation per layer (== pre on linear output)
  };
  Matrix forward_cached(const ConstMatRef &X, Cache &cache) const;

  struct Grads {
    std::vector<Matrix> W;
    std::vector<Vector> b;
    void setZero();
    void axpy(double a, const Grads &other);  // this += a * other
  };
  Grads zero_grads() const;

  // Backprop dLoss/dOutput through the cache; accumulates parameter grads and
  // returns dLoss/dInput.
  Matrix backward(const Cache &cache, const ConstMatRef &dOut, Grads &grads) const;

  // dOutput(row=out_index)/dInput for a single sample, via one backward pass
  // per output row.
  Matrix input_jacobian(const ConstVecRef &x) const;

  Index in_dim() const { return layers_.front().fan_in(); }
  Index out_dim() const { return layers_.back().fan_out(); }
  bool activate_output() const { return activate_output_; }

  std::vector<Linear> &layers() { return layers_; }
  const std::vector<Linear> &layers() const { return layers_; }

  Index parameter_count() const;
  void flatten_to(std::vector<float> &out) const;   // column-major per layer, W then b
  void unflatten_from(const float *data, Index count);

 private:
  std::vector<Linear> layers_;
  bool activate_output_ = false;
};

// Adam over an arbitrary list of parameter blocks (no weight decay).
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void register_params(std::vector<Matrix *> Ws, std::vector<Vector *> bs);
  void step(const std::vector<const Matrix *> &gW, const std::vector<const Vector *> &gb);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix *> Ws_;
  std::vector<Vector *> bs_;
  std::vector<Matrix> mW_, vW_;
  std::vector<Vector> mb_, vb_;
};

// Sinusoidal step embedding of even width: [sin(t*w_k), cos(t*w_k)]_k with
// geometrically decaying frequencies.
Vector time_embedding(int t, Index width);

}  // namespace lrtd
