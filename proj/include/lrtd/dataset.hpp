#pragma once
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "lrtd/types.hpp"

namespace lrtd {

// Per-dimension scale/shift for states and actions, plus env action bounds
// (infinite when the environment is unbounded).
struct StandardStats {
  Vector state_mean, state_std;
  Vector action_mean, action_std;
  Vector action_low, action_high;

  bool valid() const { return state_mean.size() > 0 && action_mean.size() > 0; }
};

// Offline dataset, one sample per column. Generated raw (env units) and
// standardized before labeling/training; `standardized` tracks which.
struct Dataset {
  Matrix states;       // (d_s x N)
  Matrix actions;      // (d_a x N)
  Vector rewards;      // (N)
  Matrix next_states;  // (d_s x N)
  std::vector<std::uint8_t> dones;

  // Labeling columns (empty until label_dataset runs).
  Vector advantages;
  std::vector<std::uint8_t> labels;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double top_p = std::numeric_limits<double>::quiet_NaN();

  // Generator mode per row, diagnostics only; never an input to training.
  std::vector<std::uint8_t> gen_modes;

  bool standardized = false;
  StandardStats stats;

  // Provenance, enough to rebuild dones and re-run generation.
  std::string env_name;
  std::map<std::string, double> env_params;
  int horizon = 1;
  std::uint64_t gen_seed = 0;

  Index count() const { return states.cols(); }
  Index state_dim() const { return states.rows(); }
  Index action_dim() const { return actions.rows(); }
  bool labeled() const { return labels.size() == static_cast<std::size_t>(count()); }
};

// Column-wise standardization of states/actions (rewards stay in env units).
// Zero-variance dimensions get a unit divisor and a warning on stderr.
Dataset standardize(const Dataset &raw);

Vector standardize_state(const ConstVecRef &s, const StandardStats &stats);
Vector standardize_action(const ConstVecRef &a, const StandardStats &stats);

}  // namespace lrtd
