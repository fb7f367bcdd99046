#include <doctest.h>

#include "lrtd/nets.hpp"
#include "test_support.hpp"

using namespace lrtd;

namespace {

// Scalar loss L = |Y - T|^2 / B for finite-difference checks.
double mse_loss(const Mlp &net, const Matrix &X, const Matrix &T) {
  Matrix Y = net.forward(X);
  return (Y - T).squaredNorm() / static_cast<double>(X.cols());
}

}  // namespace

TEST_CASE("mlp parameter gradients match central finite differences") {
  RngStream rng(3);
  Mlp net({4, 8, 8, 2}, false, rng);
  Matrix X(4, 5), T(2, 5);
  for (Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  for (Index i = 0; i < T.size(); ++i) T.data()[i] = rng.normal();

  Mlp::Cache cache;
  Matrix Y = net.forward_cached(X, cache);
  Matrix dY = 2.0 * (Y - T) / static_cast<double>(X.cols());
  Mlp::Grads grads = net.zero_grads();
  net.backward(cache, dY, grads);

  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    auto check_block = [&](double *data, Index size, const double *analytic) {
      for (Index i = 0; i < size; ++i) {
        const double keep = data[i];
        data[i] = keep + h;
        const double hi = mse_loss(net, X, T);
        data[i] = keep - h;
        const double lo = mse_loss(net, X, T);
        data[i] = keep;
        const double fd = (hi - lo) / (2.0 * h);
        const double rel = std::abs(fd - analytic[i]) / std::max(1e-8, std::abs(fd));
        max_rel = std::max(max_rel, rel);
      }
    };
    check_block(net.layers()[li].W.data(), net.layers()[li].W.size(), grads.W[li].data());
    check_block(net.layers()[li].b.data(), net.layers()[li].b.size(), grads.b[li].data());
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("mlp input jacobian matches finite differences") {
  RngStream rng(5);
  Mlp net({3, 16, 16, 2}, false, rng);
  Vector x = rng.normal_vector(3);
  Matrix J = net.input_jacobian(x);
  const double h = 1e-5;
  for (Index c = 0; c < 3; ++c) {
    Vector xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    Vector fd = (net.forward1(xp) - net.forward1(xm)) / (2.0 * h);
    for (Index r = 0; r < 2; ++r)
      CHECK(J(r, c) == doctest::Approx(fd[r]).epsilon(1e-4));
  }
}

TEST_CASE("adam descends a quadratic") {
  Matrix W = Matrix::Constant(1, 1, 5.0);
  Vector b = Vector::Zero(1);
  Adam opt(0.1);
  opt.register_params({&W}, {&b});
  for (int i = 0; i < 200; ++i) {
    Matrix gW = 2.0 * W;  // d/dW of W^2
    Vector gb = Vector::Zero(1);
    opt.step({&gW}, {&gb});
  }
  CHECK(std::abs(W(0, 0)) < 0.05);
}

TEST_CASE("time embedding has unit-bounded entries and fixed width") {
  Vector e = time_embedding(17, 16);
  REQUIRE(e.size() == 16);
  CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
  // first pair is raw sin/cos of t
  CHECK(e[0] == doctest::Approx(std::sin(17.0)));
  CHECK(e[1] == doctest::Approx(std::cos(17.0)));
  CHECK(time_embedding(17, 16) == e);  // deterministic
  CHECK_THROWS_AS(time_embedding(1, 7), std::invalid_argument);
}

TEST_CASE("silu basics") {
  CHECK(silu(0.0) == 0.0);
  CHECK(silu(10.0) == doctest::Approx(10.0).epsilon(1e-3));
  CHECK(silu(-30.0) == doctest::Approx(0.0).epsilon(1e-9));
}
