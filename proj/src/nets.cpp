#include "lrtd/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace lrtd {

namespace {

inline Matrix silu_mat(const Matrix &Z) {
  return Z.array() / (1.0 + (-Z.array()).exp());
}

// d silu(z)/dz = sig(z) * (1 + z * (1 - sig(z)))
inline Matrix silu_deriv(const Matrix &Z) {
  Eigen::ArrayXXd sig = 1.0 / (1.0 + (-Z.array()).exp());
  return (sig * (1.0 + Z.array() * (1.0 - sig))).matrix();
}

}  // namespace

void init_linear(Linear &layer, RngStream &rng, double scale) {
  const double sd = scale * std::sqrt(2.0 / static_cast<double>(layer.fan_in()));
  for (Index j = 0; j < layer.W.cols(); ++j)
    for (Index i = 0; i < layer.W.rows(); ++i) layer.W(i, j) = sd * rng.normal();
  layer.b.setZero();
}

Mlp::Mlp(const std::vector<Index> &dims, bool activate_output, RngStream &rng)
    : activate_output_(activate_output) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least one layer");
  layers_.reserve(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(dims[i + 1], dims[i]);
    init_linear(layers_.back(), rng);
  }
}

Matrix Mlp::forward(const ConstMatRef &X) const {
  Matrix h = X;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = (layers_[i].W * h).colwise() + layers_[i].b;
    const bool act = (i + 1 < layers_.size()) || activate_output_;
    h = act ? silu_mat(z) : std::move(z);
  }
  return h;
}

Vector Mlp::forward1(const ConstVecRef &x) const { return forward(x); }

Matrix Mlp::forward_cached(const ConstMatRef &X, Cache &cache) const {
  cache.input = X;
  cache.pre.resize(layers_.size());
  cache.post.resize(layers_.size());
  Matrix h = X;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache.pre[i] = (layers_[i].W * h).colwise() + layers_[i].b;
    const bool act = (i + 1 < layers_.size()) || activate_output_;
    cache.post[i] = act ? silu_mat(cache.pre[i]) : cache.pre[i];
    h = cache.post[i];
  }
  return h;
}

void Mlp::Grads::setZero() {
  for (auto &g : W) g.setZero();
  for (auto &g : b) g.setZero();
}

void Mlp::Grads::axpy(double a, const Grads &other) {
  for (std::size_t i = 0; i < W.size(); ++i) W[i] += a * other.W[i];
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += a * other.b[i];
}

Mlp::Grads Mlp::zero_grads() const {
  Grads g;
  g.W.reserve(layers_.size());
  g.b.reserve(layers_.size());
  for (const auto &l : layers_) {
    g.W.emplace_back(Matrix::Zero(l.W.rows(), l.W.cols()));
    g.b.emplace_back(Vector::Zero(l.b.size()));
  }
  return g;
}

Matrix Mlp::backward(const Cache &cache, const ConstMatRef &dOut, Grads &grads) const {
  Matrix delta = dOut;
  for (std::size_t ri = layers_.size(); ri-- > 0;) {
    const bool act = (ri + 1 < layers_.size()) || activate_output_;
    if (act) delta = delta.cwiseProduct(silu_deriv(cache.pre[ri]));
    const Matrix &below = ri == 0 ? cache.input : cache.post[ri - 1];
    grads.W[ri] += delta * below.transpose();
    grads.b[ri] += delta.rowwise().sum();
    if (ri > 0) delta = layers_[ri].W.transpose() * delta;
    else return layers_[0].W.transpose() * delta;
  }
  return Matrix();  // unreachable
}

Matrix Mlp::input_jacobian(const ConstVecRef &x) const {
  Cache cache;
  forward_cached(x, cache);
  Matrix J(out_dim(), in_dim());
  Grads scratch = zero_grads();
  for (Index r = 0; r < out_dim(); ++r) {
    Matrix dOut = Matrix::Zero(out_dim(), 1);
    dOut(r, 0) = 1.0;
    J.row(r) = backward(cache, dOut, scratch).col(0).transpose();
  }
  return J;
}

Index Mlp::parameter_count() const {
  Index n = 0;
  for (const auto &l : layers_) n += l.W.size() + l.b.size();
  return n;
}

void Mlp::flatten_to(std::vector<float> &out) const {
  for (const auto &l : layers_) {
    for (Index i = 0; i < l.W.size(); ++i) out.push_back(static_cast<float>(l.W.data()[i]));
    for (Index i = 0; i < l.b.size(); ++i) out.push_back(static_cast<float>(l.b.data()[i]));
  }
}

void Mlp::unflatten_from(const float *data, Index count) {
  Index pos = 0;
  for (auto &l : layers_) {
    if (pos + l.W.size() + l.b.size() > count)
      throw std::runtime_error("Mlp::unflatten_from: parameter count mismatch");
    for (Index i = 0; i < l.W.size(); ++i) l.W.data()[i] = data[pos++];
    for (Index i = 0; i < l.b.size(); ++i) l.b.data()[i] = data[pos++];
  }
  if (pos != count) throw std::runtime_error("Mlp::unflatten_from: trailing parameters");
}

void Adam::register_params(std::vector<Matrix *> Ws, std::vector<Vector *> bs) {
  Ws_ = std::move(Ws);
  bs_ = std::move(bs);
  mW_.clear();
  vW_.clear();
  mb_.clear();
  vb_.clear();
  for (auto *W : Ws_) {
    mW_.emplace_back(Matrix::Zero(W->rows(), W->cols()));
    vW_.emplace_back(Matrix::Zero(W->rows(), W->cols()));
  }
  for (auto *b : bs_) {
    mb_.emplace_back(Vector::Zero(b->size()));
    vb_.emplace_back(Vector::Zero(b->size()));
  }
}

void Adam::step(const std::vector<const Matrix *> &gW, const std::vector<const Vector *> &gb) {
  if (gW.size() != Ws_.size() || gb.size() != bs_.size())
    throw std::invalid_argument("Adam::step: gradient shape mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < Ws_.size(); ++i) {
    mW_[i] = beta1_ * mW_[i] + (1.0 - beta1_) * (*gW[i]);
    vW_[i] = beta2_ * vW_[i].array().matrix() +
             (1.0 - beta2_) * gW[i]->array().square().matrix();
    Ws_[i]->array() -=
        lr_ * (mW_[i].array() / c1) / ((vW_[i].array() / c2).sqrt() + eps_);
  }
  for (std::size_t i = 0; i < bs_.size(); ++i) {
    mb_[i] = beta1_ * mb_[i] + (1.0 - beta1_) * (*gb[i]);
    vb_[i] = beta2_ * vb_[i].array().matrix() +
             (1.0 - beta2_) * gb[i]->array().square().matrix();
    bs_[i]->array() -=
        lr_ * (mb_[i].array() / c1) / ((vb_[i].array() / c2).sqrt() + eps_);
  }
}

Vector time_embedding(int t, Index width) {
  if (width < 2 || width % 2 != 0)
    throw std::invalid_argument("time_embedding: width must be even and >= 2");
  const Index half = width / 2;
  Vector e(width);
  for (Index k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(k) /
                 static_cast<double>(half > 1 ? half - 1 : 1));
    e[2 * k] = std::sin(t * freq);
    e[2 * k + 1] = std::cos(t * freq);
  }
  return e;
}

}  // namespace lrtd
