#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "lrtd/calibration.hpp"
#include "lrtd/critic.hpp"
#include "lrtd/dataset.hpp"
#include "lrtd/model.hpp"

namespace lrtd {

namespace fs = std::filesystem;

// Dataset directory: meta.json plus row-major little-endian f32 arrays
// (states, actions, rewards, next_states; advantages/labels when labeled).
void save_dataset(const Dataset &data, const fs::path &dir);
Dataset load_dataset(const fs::path &dir);

// Policy checkpoint: model.json (sizes, activation, schedule, config digest,
// content hash) + weights.f32 flat in declared layer order.
void save_policy(const TwoHeadPolicy &policy, const Schedule &sched,
                 const std::string &train_config_digest, const fs::path &dir);
struct LoadedPolicy {
  TwoHeadPolicy policy;
  Schedule schedule;
  std::string content_hash;
};
LoadedPolicy load_policy(const fs::path &dir);

void save_critic(const ExpectileCritic &critic, const fs::path &dir);
ExpectileCritic load_critic(const fs::path &dir);

void save_calibration(const CalibrationResult &calib, const fs::path &dir);
CalibrationResult load_calibration(const fs::path &dir);

// Plain CSV with full-precision doubles; parses back to the written values.
void write_csv(const fs::path &path, const std::vector<std::string> &header,
               const std::vector<std::vector<double>> &rows);
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const fs::path &path);

void write_text(const fs::path &path, const std::string &text);
std::string read_text(const fs::path &path);

std::vector<float> read_f32(const fs::path &path);
void write_f32(const fs::path &path, const std::vector<float> &data);

}  // namespace lrtd
