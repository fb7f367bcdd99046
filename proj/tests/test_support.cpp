#include "test_support.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace lrtd::test {

double energy_distance_pvalue(const Matrix &X, const Matrix &Y, int permutations,
                              std::uint64_t seed) {
  const Index n = X.cols(), m = Y.cols(), N = n + m;
  Matrix pooled(X.rows(), N);
  pooled.leftCols(n) = X;
  pooled.rightCols(m) = Y;

  std::vector<float> dist(static_cast<std::size_t>(N * N), 0.0f);
  for (Index i = 0; i < N; ++i)
    for (Index j = i + 1; j < N; ++j) {
      const float d = static_cast<float>((pooled.col(i) - pooled.col(j)).norm());
      dist[static_cast<std::size_t>(i * N + j)] = d;
      dist[static_cast<std::size_t>(j * N + i)] = d;
    }

  std::vector<std::uint8_t> group(static_cast<std::size_t>(N), 0);
  for (Index i = n; i < N; ++i) group[static_cast<std::size_t>(i)] = 1;

  auto stat = [&](const std::vector<std::uint8_t> &g) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (Index i = 0; i < N; ++i)
      for (Index j = i + 1; j < N; ++j) {
        const double d = dist[static_cast<std::size_t>(i * N + j)];
        if (g[static_cast<std::size_t>(i)] != g[static_cast<std::size_t>(j)]) xy += d;
        else if (g[static_cast<std::size_t>(i)] == 0) xx += d;
        else yy += d;
      }
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return 2.0 * xy / (nn * mm) - 2.0 * xx / (nn * nn) - 2.0 * yy / (mm * mm);
  };

  const double observed = stat(group);
  RngStream rng(seed);
  int hits = 0;
  std::vector<std::uint8_t> perm = group;
  for (int b = 0; b < permutations; ++b) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    if (stat(perm) >= observed) ++hits;
  }
  return (1.0 + hits) / (1.0 + permutations);
}

}  // namespace lrtd::test
