#include "lrtd/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lrtd/hash.hpp"

namespace lrtd {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void write_bytes(const fs::path &path, const void *data, std::size_t len) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path.string());
  f.write(static_cast<const char *>(data), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<char> read_bytes(const fs::path &path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("missing file: " + path.string());
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  f.read(buf.data(), size);
  if (!f) throw std::runtime_error("read failed: " + path.string());
  return buf;
}

void write_matrix_f32(const fs::path &path, const Matrix &M) {
  std::vector<float> buf;
  buf.reserve(static_cast<std::size_t>(M.size()));
  for (Index i = 0; i < M.size(); ++i) buf.push_back(static_cast<float>(M.data()[i]));
  write_bytes(path, buf.data(), buf.size() * sizeof(float));
}

Matrix read_matrix_f32(const fs::path &path, Index rows, Index cols) {
  auto bytes = read_bytes(path);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(float))
    throw std::runtime_error("array length inconsistent with metadata: " + path.string());
  Matrix M(rows, cols);
  const auto *p = reinterpret_cast<const float *>(bytes.data());
  for (Index i = 0; i < M.size(); ++i) M.data()[i] = p[i];
  return M;
}

void write_vector_f32(const fs::path &path, const Vector &v) {
  std::vector<float> buf;
  buf.reserve(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) buf.push_back(static_cast<float>(v[i]));
  write_bytes(path, buf.data(), buf.size() * sizeof(float));
}

Vector read_vector_f32(const fs::path &path, Index n) {
  auto bytes = read_bytes(path);
  if (bytes.size() != static_cast<std::size_t>(n) * sizeof(float))
    throw std::runtime_error("array length inconsistent with metadata: " + path.string());
  Vector v(n);
  const auto *p = reinterpret_cast<const float *>(bytes.data());
  for (Index i = 0; i < n; ++i) v[i] = p[i];
  return v;
}

// Infinities are not representable in JSON; encode them as nulls.
json encode_maybe_inf(const Vector &v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isinf(v[i])) arr.push_back(nullptr);
    else arr.push_back(v[i]);
  }
  return arr;
}

Vector decode_maybe_inf(const json &arr, double sign) {
  Vector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i)
    v[static_cast<Index>(i)] = arr[i].is_null() ? sign * std::numeric_limits<double>::infinity()
                                                : arr[i].get<double>();
  return v;
}

json vec_to_json(const Vector &v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector json_to_vec(const json &arr) {
  Vector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Index>(i)] = arr[i].get<double>();
  return v;
}

json load_json(const fs::path &path) {
  auto bytes = read_bytes(path);
  return json::parse(bytes.begin(), bytes.end());
}

void dump_json(const json &j, const fs::path &path) {
  write_text(path, j.dump(2) + "\n");
}

}  // namespace

void write_text(const fs::path &path, const std::string &text) {
  write_bytes(path, text.data(), text.size());
}

std::string read_text(const fs::path &path) {
  auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<float> read_f32(const fs::path &path) {
  auto bytes = read_bytes(path);
  if (bytes.size() % sizeof(float) != 0)
    throw std::runtime_error("truncated f32 array: " + path.string());
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void write_f32(const fs::path &path, const std::vector<float> &data) {
  write_bytes(path, data.data(), data.size() * sizeof(float));
}

void save_dataset(const Dataset &data, const fs::path &dir) {
  fs::create_directories(dir);
  json meta;
  meta["format_version"] = kFormatVersion;
  meta["kind"] = "dataset";
  meta["count"] = data.count();
  meta["state_dim"] = data.state_dim();
  meta["action_dim"] = data.action_dim();
  meta["standardized"] = data.standardized;
  meta["labeled"] = data.labeled();
  meta["has_modes"] = !data.gen_modes.empty();
  if (data.standardized) {
    meta["stats"]["state_mean"] = vec_to_json(data.stats.state_mean);
    meta["stats"]["state_std"] = vec_to_json(data.stats.state_std);
    meta["stats"]["action_mean"] = vec_to_json(data.stats.action_mean);
    meta["stats"]["action_std"] = vec_to_json(data.stats.action_std);
  }
  meta["action_low"] = encode_maybe_inf(data.stats.action_low);
  meta["action_high"] = encode_maybe_inf(data.stats.action_high);
  if (data.labeled()) {
    meta["kappa"] = data.kappa;
    meta["p"] = data.top_p;
  }
  meta["env"]["name"] = data.env_name;
  meta["env"]["params"] = data.env_params;
  meta["env"]["horizon"] = data.horizon;
  meta["env"]["seed"] = data.gen_seed;
  dump_json(meta, dir / "meta.json");

  write_matrix_f32(dir / "states.f32", data.states);
  write_matrix_f32(dir / "actions.f32", data.actions);
  write_vector_f32(dir / "rewards.f32", data.rewards);
  write_matrix_f32(dir / "next_states.f32", data.next_states);
  if (data.labeled()) {
    write_vector_f32(dir / "advantages.f32", data.advantages);
    write_bytes(dir / "labels.u8", data.labels.data(), data.labels.size());
  }
  if (!data.gen_modes.empty())
    write_bytes(dir / "modes.u8", data.gen_modes.data(), data.gen_modes.size());
}

Dataset load_dataset(const fs::path &dir) {
  json meta = load_json(dir / "meta.json");
  if (meta.value("format_version", -1) != kFormatVersion)
    throw std::runtime_error("dataset format version mismatch in " + dir.string());
  Dataset d;
  const Index n = meta.at("count").get<Index>();
  const Index ds = meta.at("state_dim").get<Index>();
  const Index da = meta.at("action_dim").get<Index>();
  d.standardized = meta.at("standardized").get<bool>();
  if (d.standardized) {
    d.stats.state_mean = json_to_vec(meta["stats"]["state_mean"]);
    d.stats.state_std = json_to_vec(meta["stats"]["state_std"]);
    d.stats.action_mean = json_to_vec(meta["stats"]["action_mean"]);
    d.stats.action_std = json_to_vec(meta["stats"]["action_std"]);
  }
  d.stats.action_low = decode_maybe_inf(meta.at("action_low"), -1.0);
  d.stats.action_high = decode_maybe_inf(meta.at("action_high"), 1.0);
  d.env_name = meta["env"].at("name").get<std::string>();
  d.env_params = meta["env"].at("params").get<std::map<std::string, double>>();
  d.horizon = meta["env"].at("horizon").get<int>();
  d.gen_seed = meta["env"].at("seed").get<std::uint64_t>();

  d.states = read_matrix_f32(dir / "states.f32", ds, n);
  d.actions = read_matrix_f32(dir / "actions.f32", da, n);
  d.rewards = read_vector_f32(dir / "rewards.f32", n);
  d.next_states = read_matrix_f32(dir / "next_states.f32", ds, n);

  // Dones derive from the recorded horizon: terminal every horizon-th row.
  d.dones.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i)
    if ((i + 1) % d.horizon == 0) d.dones[static_cast<std::size_t>(i)] = 1;

  if (meta.value("labeled", false)) {
    d.advantages = read_vector_f32(dir / "advantages.f32", n);
    auto bytes = read_bytes(dir / "labels.u8");
    if (bytes.size() != static_cast<std::size_t>(n))
      throw std::runtime_error("labels.u8 length inconsistent with metadata");
    d.labels.assign(bytes.begin(), bytes.end());
    d.kappa = meta.at("kappa").get<double>();
    d.top_p = meta.at("p").get<double>();
  }
  if (meta.value("has_modes", false)) {
    auto bytes = read_bytes(dir / "modes.u8");
    if (bytes.size() != static_cast<std::size_t>(n))
      throw std::runtime_error("modes.u8 length inconsistent with metadata");
    d.gen_modes.assign(bytes.begin(), bytes.end());
  }
  return d;
}

void save_policy(const TwoHeadPolicy &policy, const Schedule &sched,
                 const std::string &train_config_digest, const fs::path &dir) {
  fs::create_directories(dir);
  const std::vector<float> params = policy.flat_params();
  json meta;
  meta["format_version"] = kFormatVersion;
  meta["kind"] = "policy";
  meta["activation"] = "silu";
  meta["dims"]["state_dim"] = policy.dims().state_dim;
  meta["dims"]["action_dim"] = policy.dims().action_dim;
  meta["dims"]["hidden"] = policy.dims().hidden;
  meta["dims"]["t_embed_width"] = policy.dims().t_embed_width;
  meta["schedule"]["steps"] = sched.steps;
  meta["schedule"]["beta_start"] = sched.beta_start;
  meta["schedule"]["beta_end"] = sched.beta_end;
  meta["train_config_digest"] = train_config_digest;
  meta["param_count"] = params.size();
  meta["content_hash"] = hex64(fnv1a64(params));
  dump_json(meta, dir / "model.json");
  write_f32(dir / "weights.f32", params);
}

LoadedPolicy load_policy(const fs::path &dir) {
  json meta = load_json(dir / "model.json");
  if (meta.value("format_version", -1) != kFormatVersion || meta.value("kind", "") != "policy")
    throw std::runtime_error("not a policy checkpoint: " + dir.string());
  PolicyDims dims;
  dims.state_dim = meta["dims"].at("state_dim").get<Index>();
  dims.action_dim = meta["dims"].at("action_dim").get<Index>();
  dims.hidden = meta["dims"].at("hidden").get<std::vector<Index>>();
  dims.t_embed_width = meta["dims"].at("t_embed_width").get<Index>();

  LoadedPolicy out{TwoHeadPolicy(dims, /*init_seed=*/0),
                   build_schedule(meta["schedule"].at("steps").get<int>(),
                                  meta["schedule"].at("beta_start").get<double>(),
                                  meta["schedule"].at("beta_end").get<double>()),
                   meta.at("content_hash").get<std::string>()};

  std::vector<float> params = read_f32(dir / "weights.f32");
  if (params.size() != meta.at("param_count").get<std::size_t>())
    throw std::runtime_error("weights.f32 parameter count mismatch");
  const std::string hash = hex64(fnv1a64(params));
  if (hash != out.content_hash)
    throw std::runtime_error("checkpoint content hash mismatch (corrupt weights.f32?)");
  out.policy.load_flat_params(params);
  out.policy.freeze();
  return out;
}

void save_critic(const ExpectileCritic &critic, const fs::path &dir) {
  fs::create_directories(dir);
  std::vector<float> params;
  critic.q_net().flatten_to(params);
  const std::size_t q_count = params.size();
  critic.v_net().flatten_to(params);

  json meta;
  meta["format_version"] = kFormatVersion;
  meta["kind"] = "critic";
  meta["activation"] = "silu";
  meta["state_dim"] = critic.state_dim();
  meta["action_dim"] = critic.action_dim();
  std::vector<Index> hidden;
  const auto &layers = critic.q_net().layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) hidden.push_back(layers[i].fan_out());
  meta["hidden"] = hidden;
  meta["gamma"] = critic.gamma();
  meta["expectile"] = critic.expectile();
  meta["q_param_count"] = q_count;
  meta["param_count"] = params.size();
  meta["content_hash"] = hex64(fnv1a64(params));
  dump_json(meta, dir / "model.json");
  write_f32(dir / "weights.f32", params);
}

ExpectileCritic load_critic(const fs::path &dir) {
  json meta = load_json(dir / "model.json");
  if (meta.value("format_version", -1) != kFormatVersion || meta.value("kind", "") != "critic")
    throw std::runtime_error("not a critic checkpoint: " + dir.string());
  CriticConfig cfg;
  cfg.hidden = meta.at("hidden").get<std::vector<Index>>();
  RngStream rng(0);
  ExpectileCritic critic(meta.at("state_dim").get<Index>(), meta.at("action_dim").get<Index>(),
                         cfg, meta.at("gamma").get<double>(), meta.at("expectile").get<double>(),
                         rng);
  std::vector<float> params = read_f32(dir / "weights.f32");
  if (params.size() != meta.at("param_count").get<std::size_t>())
    throw std::runtime_error("critic weights.f32 parameter count mismatch");
  if (hex64(fnv1a64(params)) != meta.at("content_hash").get<std::string>())
    throw std::runtime_error("critic content hash mismatch");
  const auto q_count = meta.at("q_param_count").get<std::size_t>();
  critic.q_net().unflatten_from(params.data(), static_cast<Index>(q_count));
  critic.v_net().unflatten_from(params.data() + q_count,
                                static_cast<Index>(params.size() - q_count));
  return critic;
}

void save_calibration(const CalibrationResult &calib, const fs::path &dir) {
  fs::create_directories(dir);
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "calibration";
  j["tau_hat"] = calib.tau_hat;
  j["alpha"] = calib.alpha;
  j["n"] = calib.n;
  j["iterations"] = calib.iterations;
  j["momentum"] = calib.momentum;
  j["fingerprint"] = hex64(calib.sampler_fingerprint);
  j["dkw_epsilon"] = calib.dkw_eps;
  j["zeta"] = calib.zeta;
  j["converged"] = calib.converged;
  j["final_step"] = calib.final_step;
  j["variance_convention"] = calib.variance_convention;
  j["h0_llrs_file"] = "h0_llrs.f32";
  j["h0_count"] = calib.h0_llrs.size();
  dump_json(j, dir / "calibration.json");
  std::vector<float> buf(calib.h0_llrs.begin(), calib.h0_llrs.end());
  write_f32(dir / "h0_llrs.f32", buf);
}

CalibrationResult load_calibration(const fs::path &dir) {
  json j = load_json(dir / "calibration.json");
  if (j.value("format_version", -1) != kFormatVersion || j.value("kind", "") != "calibration")
    throw std::runtime_error("not a calibration file: " + dir.string());
  CalibrationResult c;
  c.tau_hat = j.at("tau_hat").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.n = j.at("n").get<int>();
  c.iterations = j.at("iterations").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.sampler_fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
  c.dkw_eps = j.at("dkw_epsilon").get<double>();
  c.zeta = j.at("zeta").get<double>();
  c.converged = j.at("converged").get<bool>();
  c.final_step = j.at("final_step").get<double>();
  c.variance_convention = j.at("variance_convention").get<std::string>();
  auto buf = read_f32(dir / j.at("h0_llrs_file").get<std::string>());
  if (buf.size() != j.at("h0_count").get<std::size_t>())
    throw std::runtime_error("h0_llrs.f32 length inconsistent with metadata");
  c.h0_llrs.assign(buf.begin(), buf.end());
  return c;
}

void write_csv(const fs::path &path, const std::vector<std::string> &header,
               const std::vector<std::vector<double>> &rows) {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i)
    os << header[i] << (i + 1 < header.size() ? "," : "\n");
  char buf[64];
  for (const auto &row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      os << buf << (i + 1 < row.size() ? "," : "\n");
    }
  }
  write_text(path, os.str());
}

CsvTable read_csv(const fs::path &path) {
  std::istringstream is(read_text(path));
  CsvTable table;
  std::string line;
  if (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) table.header.push_back(cell);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace lrtd
