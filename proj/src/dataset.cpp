#include "lrtd/dataset.hpp"

#include <cstdio>
#include <stdexcept>

namespace lrtd {

namespace {

void column_stats(const Matrix &X, Vector &mean, Vector &std, const char *what) {
  const double n = static_cast<double>(X.cols());
  mean = X.rowwise().mean();
  std.resize(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    const double var = (X.row(i).array() - mean[i]).square().sum() / n;
    double sd = std::sqrt(var);
    if (sd <= 0.0) {
      std::fprintf(stderr, "standardize: %s dimension %ld has zero variance, using unit divisor\n",
                   what, static_cast<long>(i));
      sd = 1.0;
    }
    std[i] = sd;
  }
}

Matrix apply(const Matrix &X, const Vector &mean, const Vector &std) {
  return ((X.colwise() - mean).array().colwise() / std.array()).matrix();
}

}  // namespace

Dataset standardize(const Dataset &raw) {
  if (raw.count() == 0) throw std::invalid_argument("standardize: empty dataset");
  Dataset out = raw;
  if (raw.standardized) return out;

  StandardStats st = raw.stats;  // keeps action bounds set at generation
  column_stats(raw.states, st.state_mean, st.state_std, "state");
  column_stats(raw.actions, st.action_mean, st.action_std, "action");
  if (st.action_low.size() == 0) {
    st.action_low = Vector::Constant(raw.action_dim(), -std::numeric_limits<double>::infinity());
    st.action_high = Vector::Constant(raw.action_dim(), std::numeric_limits<double>::infinity());
  }

  out.states = apply(raw.states, st.state_mean, st.state_std);
  out.actions = apply(raw.actions, st.action_mean, st.action_std);
  out.next_states = apply(raw.next_states, st.state_mean, st.state_std);
  out.stats = st;
  out.standardized = true;
  return out;
}

Vector standardize_state(const ConstVecRef &s, const StandardStats &stats) {
  return ((s - stats.state_mean).array() / stats.state_std.array()).matrix();
}

Vector standardize_action(const ConstVecRef &a, const StandardStats &stats) {
  return ((a - stats.action_mean).array() / stats.action_std.array()).matrix();
}

}  // namespace lrtd
