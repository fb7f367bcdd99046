#include "lrtd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <sstream>

#include "lrtd/calibration.hpp"
#include "lrtd/critic.hpp"
#include "lrtd/envs.hpp"
#include "lrtd/hash.hpp"
#include "lrtd/io.hpp"
#include "lrtd/metrics.hpp"
#include "lrtd/model.hpp"
#include "lrtd/sampler.hpp"

namespace lrtd {

namespace {

using nlohmann::json;

constexpr const char *kVersion = "lrtd 0.1.0";

// Flat JSON object -> CLI11 config items, so --config files participate in
// normal flag precedence (command line wins).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App *, bool, bool, std::string) const override { return "{}"; }
  std::vector<CLI::ConfigItem> from_config(std::istream &input) const override {
    json j = json::parse(input);
    std::vector<CLI::ConfigItem> items;
    for (auto it = j.begin(); it != j.end(); ++it) {
      CLI::ConfigItem item;
      item.name = it.key();
      if (it.value().is_string()) item.inputs = {it.value().get<std::string>()};
      else item.inputs = {it.value().dump()};
      items.push_back(std::move(item));
    }
    return items;
  }
};

struct SamplerFlags {
  std::string gate = "soft";
  double beta_max = 1.0;
  double delta = 1.0;
  double dmu_clamp = -1.0;  // <0 means none
  std::string gate_window;  // "A:B"
  std::string q_compose = "off";
  double lambda_max = 0.1;
  double grad_clip = 5.0;
};

void add_sampler_flags(CLI::App *cmd, SamplerFlags &f) {
  cmd->add_option("--gate", f.gate, "Gate kind: soft|hard")->check(CLI::IsMember({"soft", "hard"}));
  cmd->add_option("--beta-max", f.beta_max, "Max conditional pull in [0,1]");
  cmd->add_option("--delta", f.delta, "Soft-gate temperature (> 0)");
  cmd->add_option("--dmu-clamp", f.dmu_clamp, "Cap on |mu_c - mu_u| (negative disables)");
  cmd->add_option("--gate-window", f.gate_window, "Gated step range A:B (1-based, inclusive)");
  cmd->add_option("--q-compose", f.q_compose,
                  "Critic step center: off|uncond|lrt|blend:R (R in [0,1] or 'adaptive')");
  cmd->add_option("--lambda-max", f.lambda_max, "Critic step scale cap");
  cmd->add_option("--grad-clip", f.grad_clip, "Critic gradient norm clip G");
}

std::pair<GateConfig, QComposeConfig> parse_sampler_flags(const SamplerFlags &f) {
  GateConfig g;
  g.beta_max = f.beta_max;
  g.delta = f.delta;
  g.kind = f.gate == "hard" ? GateKind::hard : GateKind::soft;
  if (f.dmu_clamp >= 0.0) g.dmu_clamp = f.dmu_clamp;
  if (!f.gate_window.empty()) {
    const auto colon = f.gate_window.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("--gate-window expects A:B");
    g.gate_window = {std::stoi(f.gate_window.substr(0, colon)),
                     std::stoi(f.gate_window.substr(colon + 1))};
    if (g.gate_window->first < 1 || g.gate_window->second < g.gate_window->first)
      throw std::invalid_argument("--gate-window expects 1 <= A <= B");
  }

  QComposeConfig q;
  if (f.q_compose != "off") {
    q.enabled = true;
    q.lambda_max = f.lambda_max;
    q.grad_clip = f.grad_clip;
    if (f.q_compose == "uncond") q.center = QCenter::unconditional;
    else if (f.q_compose == "lrt") q.center = QCenter::lrt;
    else if (f.q_compose.rfind("blend:", 0) == 0) {
      q.center = QCenter::blend;
      const std::string rho = f.q_compose.substr(6);
      if (rho == "adaptive") q.adaptive_rho = true;
      else q.blend_rho = std::stod(rho);
    } else {
      throw std::invalid_argument("unknown --q-compose value: " + f.q_compose);
    }
  }
  return {g, q};
}

json sampler_flags_json(const SamplerFlags &f) {
  return json{{"gate", f.gate},           {"beta_max", f.beta_max},
              {"delta", f.delta},         {"dmu_clamp", f.dmu_clamp},
              {"gate_window", f.gate_window}, {"q_compose", f.q_compose},
              {"lambda_max", f.lambda_max},   {"grad_clip", f.grad_clip}};
}

void write_manifest(const fs::path &out, const std::string &command, const json &params) {
  fs::create_directories(out);
  json m;
  m["tool"] = kVersion;
  m["command"] = command;
  m["params"] = params;
  write_text(out / "manifest.json", m.dump(2) + "\n");
}

// Held-out slice for calibration/evaluation state draws: the trailing frac of
// dataset columns.
Matrix held_out_states(const Dataset &data, double frac = 0.2) {
  const Index n = data.count();
  const Index m = std::max<Index>(1, static_cast<Index>(frac * static_cast<double>(n)));
  return data.states.rightCols(m);
}

ActionSampler make_policy_sampler(const TwoHeadPolicy &policy, const Schedule &sched,
                                  GateConfig gcfg, QComposeConfig qcfg, double tau,
                                  StandardStats stats, const QFunction *critic) {
  return [&policy, &sched, gcfg, qcfg, tau, stats, critic](const ConstVecRef &s_raw,
                                                           RngStream &rng) {
    Vector s_std = standardize_state(s_raw, stats);
    ChainResult r = sample_action(policy, sched, gcfg, qcfg, tau, s_std, rng, critic);
    return destandardize(r.a0, stats);
  };
}

struct EvalOutcome {
  double return_mean = 0.0;
  double return_se = 0.0;
  double type1 = 0.0;
  double ood = 0.0;
  double ood_threshold = 0.0;
};

// Shared by `evaluate` and `sweep`: rollout returns over seeds x episodes,
// realized Type-I on fresh chains, and the kNN OOD rate on held-out states.
EvalOutcome evaluate_config(const Dataset &data, const TwoHeadPolicy &policy,
                            const Schedule &sched, const GateConfig &gcfg,
                            const QComposeConfig &qcfg, double tau, const QFunction *critic,
                            int seeds, int episodes, int m_type1, int ood_n,
                            std::uint64_t seed) {
  EvalOutcome out;
  const Matrix states_hold = held_out_states(data);

  std::vector<double> seed_returns;
  for (int sd = 0; sd < seeds; ++sd) {
    auto sampler = make_policy_sampler(policy, sched, gcfg, qcfg, tau, data.stats, critic);
    if (data.env_name == "bandit") {
      auto rr = rollout_bandit(bandit_spec_from(data), sampler, episodes,
                               derive_seed(seed, {0xe5a1u, static_cast<std::uint64_t>(sd)}));
      seed_returns.push_back(rr.mean);
    } else {
      auto rr = rollout_pointmass(pointmass_spec_from(data), sampler, episodes,
                                  derive_seed(seed, {0xe5a1u, static_cast<std::uint64_t>(sd)}));
      seed_returns.push_back(rr.mean);
    }
  }
  double sum = 0.0, sum2 = 0.0;
  for (double r : seed_returns) sum += r, sum2 += r * r;
  const double ns = static_cast<double>(seed_returns.size());
  out.return_mean = sum / ns;
  out.return_se = seed_returns.size() > 1
                      ? std::sqrt(std::max(0.0, sum2 / ns - out.return_mean * out.return_mean) /
                                  (ns - 1.0))
                      : 0.0;

  out.type1 = realized_type1(policy, sched, gcfg, qcfg, tau, states_hold, m_type1,
                             derive_seed(seed, {0x7431u}), critic);

  // OOD: policy actions on held-out states against the dataset support.
  const Index nq = std::min<Index>(ood_n, states_hold.cols());
  Matrix q_states(data.state_dim(), nq), q_actions(data.action_dim(), nq);
  for (Index j = 0; j < nq; ++j) {
    RngStream rng(derive_seed(seed, {0x6f6fu, static_cast<std::uint64_t>(j)}));
    const Index si = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(states_hold.cols())));
    ChainResult r = sample_action(policy, sched, gcfg, qcfg, tau, states_hold.col(si), rng, critic);
    // Measure what would actually be deployed: clip in env units, re-standardize.
    Vector a_env = destandardize(r.a0, data.stats);
    q_states.col(j) = states_hold.col(si);
    q_actions.col(j) = standardize_action(a_env, data.stats);
  }
  OODReport ood = knn_ood_rate(data.states, data.actions, q_states, q_actions);
  out.ood = ood.rate;
  out.ood_threshold = ood.radii_threshold;
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand payloads

int cmd_gen_data(const std::string &env, Index n, Index episodes, std::uint64_t seed,
                 const fs::path &out) {
  Dataset raw;
  if (env == "bandit") {
    raw = gen_bandit_dataset(BanditSpec{}, n, seed);
  } else if (env == "pointmass") {
    raw = gen_pointmass_dataset(PointMassSpec{}, episodes, seed);
  } else {
    throw std::invalid_argument("unknown env: " + env);
  }
  Dataset std_data = standardize(raw);
  save_dataset(std_data, out / "dataset");
  write_manifest(out, "gen-data",
                 json{{"env", env}, {"n", n}, {"episodes", episodes}, {"seed", seed}});
  std::cout << "wrote " << (out / "dataset").string() << " (" << std_data.count() << " rows)\n";
  return 0;
}

int cmd_label(const fs::path &data_dir, double gamma, double expectile, double p,
              int critic_steps, double critic_lr, bool oracle_critic, std::uint64_t seed,
              const fs::path &out) {
  Dataset data = load_dataset(data_dir);
  Vector adv;
  if (oracle_critic) {
    if (data.env_name != "bandit")
      throw std::invalid_argument("--oracle-critic is only available on the bandit env");
    const BanditSpec spec = bandit_spec_from(data);
    BanditOracleCritic oracle(spec, data.stats);
    adv.resize(data.count());
    // Advantage against the state's mean dataset action value is unnecessary
    // here: ranking by Q alone gives the same top-p set on a one-step task.
    for (Index i = 0; i < data.count(); ++i)
      adv[i] = oracle.value(data.states.col(i), data.actions.col(i));
  } else {
    CriticConfig cfg;
    cfg.steps = critic_steps;
    cfg.learning_rate = critic_lr;
    cfg.seed = seed;
    ExpectileCritic critic = fit_expectile_critic(data, gamma, expectile, cfg, &std::cerr);
    adv = critic_advantages(critic, data);
    save_critic(critic, out / "critic");
  }
  LabelResult res = label_top_p(adv, p);
  data.advantages = res.advantages;
  data.labels = res.labels;
  data.kappa = res.kappa;
  data.top_p = res.p;
  save_dataset(data, out / "dataset");
  double pos = 0.0;
  for (auto c : res.labels) pos += c;
  write_manifest(out, "label",
                 json{{"data", data_dir.string()},
                      {"gamma", gamma},
                      {"expectile", expectile},
                      {"p", p},
                      {"oracle_critic", oracle_critic},
                      {"critic_steps", critic_steps},
                      {"critic_lr", critic_lr},
                      {"seed", seed},
                      {"kappa", res.kappa},
                      {"positive_fraction", pos / static_cast<double>(data.count())}});
  std::cout << "labeled " << data.count() << " rows, kappa " << res.kappa << ", positives "
            << pos / static_cast<double>(data.count()) << "\n";
  return 0;
}

int cmd_train(const fs::path &data_dir, const TrainConfig &cfg, int steps_T, double beta_start,
              double beta_end, const fs::path &out) {
  Dataset data = load_dataset(data_dir);
  if (!data.labeled()) throw std::invalid_argument("train: dataset is not labeled yet");
  Schedule sched = build_schedule(steps_T, beta_start, beta_end);
  PolicyDims dims;
  dims.state_dim = data.state_dim();
  dims.action_dim = data.action_dim();
  TwoHeadPolicy init(dims, cfg.seed);
  TwoHeadPolicy policy = train(init, data, sched, cfg, &std::cerr);
  save_policy(policy, sched, cfg.digest_string(), out / "policy");
  write_manifest(out, "train",
                 json{{"data", data_dir.string()},
                      {"epochs", cfg.epochs},
                      {"batch_size", cfg.batch_size},
                      {"learning_rate", cfg.learning_rate},
                      {"ema_decay", cfg.ema_decay},
                      {"tau_A", cfg.tau_A},
                      {"u_max", cfg.u_max},
                      {"eps_w", cfg.eps_w},
                      {"seed", cfg.seed},
                      {"T", steps_T},
                      {"beta_start", beta_start},
                      {"beta_end", beta_end},
                      {"policy_hash", policy.fingerprint_token()}});
  std::cout << "trained policy " << policy.fingerprint_token() << " -> "
            << (out / "policy").string() << "\n";
  return 0;
}

int cmd_calibrate(const fs::path &policy_dir, const fs::path &data_dir,
                  const SamplerFlags &sflags, const fs::path &critic_dir, double alpha, int n,
                  int iters, double momentum, std::uint64_t seed, const fs::path &out) {
  LoadedPolicy lp = load_policy(policy_dir);
  Dataset data = load_dataset(data_dir);
  auto [gcfg, qcfg] = parse_sampler_flags(sflags);
  ExpectileCritic critic;
  const QFunction *critic_ptr = nullptr;
  if (qcfg.enabled) {
    if (critic_dir.empty())
      throw std::invalid_argument("calibrate: --critic required when --q-compose is on");
    critic = load_critic(critic_dir);
    critic_ptr = &critic;
  }
  const Matrix states_cal = held_out_states(data);
  CalibrationResult calib = calibrate_tau(lp.policy, lp.schedule, gcfg, qcfg, states_cal,
                                          alpha, n, iters, momentum, seed, critic_ptr,
                                          &std::cerr);
  save_calibration(calib, out / "calibration");
  json params = sampler_flags_json(sflags);
  params["policy"] = policy_dir.string();
  params["data"] = data_dir.string();
  params["alpha"] = alpha;
  params["n"] = n;
  params["iterations"] = iters;
  params["momentum"] = momentum;
  params["seed"] = seed;
  params["tau_hat"] = calib.tau_hat;
  params["fingerprint"] = hex64(calib.sampler_fingerprint);
  write_manifest(out, "calibrate", params);
  std::cout << "tau_hat " << calib.tau_hat << " (alpha " << alpha << ", n " << n << ", eps_n "
            << calib.dkw_eps << ", converged " << (calib.converged ? "yes" : "no") << ")\n";
  return 0;
}

int cmd_sample(const fs::path &policy_dir, const fs::path &data_dir, const fs::path &calib_dir,
               const std::string &tau_str, const SamplerFlags &sflags,
               const fs::path &critic_dir, int n_actions, std::uint64_t seed,
               const fs::path &out) {
  LoadedPolicy lp = load_policy(policy_dir);
  Dataset data = load_dataset(data_dir);
  auto [gcfg, qcfg] = parse_sampler_flags(sflags);
  ExpectileCritic critic;
  const QFunction *critic_ptr = nullptr;
  if (qcfg.enabled) {
    if (critic_dir.empty())
      throw std::invalid_argument("sample: --critic required when --q-compose is on");
    critic = load_critic(critic_dir);
    critic_ptr = &critic;
  }

  double tau;
  if (!calib_dir.empty()) {
    CalibrationResult calib = load_calibration(calib_dir);
    require_fingerprint_match(calib, lp.policy, lp.schedule, gcfg, qcfg);
    tau = calib.tau_hat;
  } else if (!tau_str.empty()) {
    tau = tau_str == "inf" ? std::numeric_limits<double>::infinity()
                           : (tau_str == "-inf" ? -std::numeric_limits<double>::infinity()
                                                : std::stod(tau_str));
  } else {
    throw std::invalid_argument("sample: give either --calib or --tau");
  }

  const Matrix states = held_out_states(data);
  fs::create_directories(out);
  std::vector<std::vector<double>> action_rows, trace_rows;
  for (int i = 0; i < n_actions; ++i) {
    RngStream rng(derive_seed(seed, {0x5a5au, static_cast<std::uint64_t>(i)}));
    const Index si = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(states.cols())));
    LLRTrace trace;
    ChainResult r = sample_action(lp.policy, lp.schedule, gcfg, qcfg, tau, states.col(si), rng,
                                  critic_ptr, &trace);
    Vector a_env = destandardize(r.a0, data.stats);
    std::vector<double> row{static_cast<double>(i), static_cast<double>(si), r.llr_cum};
    for (Index d = 0; d < r.a0.size(); ++d) row.push_back(r.a0[d]);
    for (Index d = 0; d < a_env.size(); ++d) row.push_back(a_env[d]);
    action_rows.push_back(std::move(row));
    for (const auto &srec : trace.steps)
      trace_rows.push_back({static_cast<double>(i), static_cast<double>(srec.t), srec.beta,
                            srec.dllr, srec.llr_cum, srec.dmu_norm});
  }

  std::vector<std::string> ahdr{"chain", "state_index", "llr_cum"};
  for (Index d = 0; d < data.action_dim(); ++d) ahdr.push_back("a0_" + std::to_string(d));
  for (Index d = 0; d < data.action_dim(); ++d) ahdr.push_back("a_env_" + std::to_string(d));
  write_csv(out / "actions.csv", ahdr, action_rows);
  write_csv(out / "traces.csv", {"chain", "t", "beta", "dllr", "llr_cum", "dmu_norm"},
            trace_rows);
  json params = sampler_flags_json(sflags);
  params["policy"] = policy_dir.string();
  params["data"] = data_dir.string();
  params["calib"] = calib_dir.string();
  params["tau"] = tau_str;
  params["n_actions"] = n_actions;
  params["seed"] = seed;
  write_manifest(out, "sample", params);
  std::cout << "wrote " << (out / "actions.csv").string() << " and traces.csv\n";
  return 0;
}

int cmd_evaluate(const fs::path &policy_dir, const fs::path &data_dir,
                 const fs::path &calib_dir, const SamplerFlags &sflags,
                 const fs::path &critic_dir, int seeds, int episodes, int m_type1, int ood_n,
                 std::uint64_t seed, const fs::path &out) {
  LoadedPolicy lp = load_policy(policy_dir);
  Dataset data = load_dataset(data_dir);
  auto [gcfg, qcfg] = parse_sampler_flags(sflags);
  ExpectileCritic critic;
  const QFunction *critic_ptr = nullptr;
  if (qcfg.enabled) {
    if (critic_dir.empty())
      throw std::invalid_argument("evaluate: --critic required when --q-compose is on");
    critic = load_critic(critic_dir);
    critic_ptr = &critic;
  }
  CalibrationResult calib = load_calibration(calib_dir);
  require_fingerprint_match(calib, lp.policy, lp.schedule, gcfg, qcfg);

  EvalOutcome ev = evaluate_config(data, lp.policy, lp.schedule, gcfg, qcfg, calib.tau_hat,
                                   critic_ptr, seeds, episodes, m_type1, ood_n, seed);

  fs::create_directories(out);
  json j{{"alpha", calib.alpha},       {"tau_hat", calib.tau_hat},
         {"return_mean", ev.return_mean}, {"return_se", ev.return_se},
         {"type1", ev.type1},          {"ood", ev.ood},
         {"ood_threshold", ev.ood_threshold}, {"seeds", seeds},
         {"episodes", episodes},       {"m_type1", m_type1}};
  write_text(out / "eval.json", j.dump(2) + "\n");
  write_csv(out / "eval.csv", {"alpha", "tau_hat", "return_mean", "return_se", "type1", "ood"},
            {{calib.alpha, calib.tau_hat, ev.return_mean, ev.return_se, ev.type1, ev.ood}});
  json params = sampler_flags_json(sflags);
  params["policy"] = policy_dir.string();
  params["data"] = data_dir.string();
  params["calib"] = calib_dir.string();
  params["seed"] = seed;
  write_manifest(out, "evaluate", params);
  std::cout << "return " << ev.return_mean << " +- " << ev.return_se << ", type1 " << ev.type1
            << ", ood " << ev.ood << "\n";
  return 0;
}

int cmd_sweep(const fs::path &policy_dir, const fs::path &data_dir, const SamplerFlags &sflags,
              const fs::path &critic_dir, const std::vector<double> &alphas, int n, int iters,
              double momentum, int seeds, int episodes, int m_type1, int ood_n,
              std::uint64_t seed, const fs::path &out) {
  LoadedPolicy lp = load_policy(policy_dir);
  Dataset data = load_dataset(data_dir);
  auto [gcfg, qcfg] = parse_sampler_flags(sflags);
  ExpectileCritic critic;
  const QFunction *critic_ptr = nullptr;
  if (qcfg.enabled) {
    if (critic_dir.empty())
      throw std::invalid_argument("sweep: --critic required when --q-compose is on");
    critic = load_critic(critic_dir);
    critic_ptr = &critic;
  }
  const Matrix states_cal = held_out_states(data);

  fs::create_directories(out);
  std::vector<std::vector<double>> rows;
  for (double alpha : alphas) {
    CalibrationResult calib =
        calibrate_tau(lp.policy, lp.schedule, gcfg, qcfg, states_cal, alpha, n, iters, momentum,
                      derive_seed(seed, {0xca11u, fnv1a64(&alpha, sizeof(alpha))}), critic_ptr,
                      &std::cerr);
    std::ostringstream tag;
    tag << "calib_a" << alpha;
    save_calibration(calib, out / tag.str());
    EvalOutcome ev = evaluate_config(data, lp.policy, lp.schedule, gcfg, qcfg, calib.tau_hat,
                                     critic_ptr, seeds, episodes, m_type1, ood_n,
                                     derive_seed(seed, {0xe7a2u, fnv1a64(&alpha, sizeof(alpha))}));
    rows.push_back({alpha, calib.tau_hat, ev.return_mean, ev.return_se, ev.type1, ev.ood});
    std::cout << "alpha " << alpha << ": tau " << calib.tau_hat << " return " << ev.return_mean
              << " +- " << ev.return_se << " type1 " << ev.type1 << " ood " << ev.ood << "\n";
  }
  write_csv(out / "sweep.csv", {"alpha", "tau_hat", "return_mean", "return_se", "type1", "ood"},
            rows);
  json params = sampler_flags_json(sflags);
  params["policy"] = policy_dir.string();
  params["data"] = data_dir.string();
  params["alphas"] = alphas;
  params["n"] = n;
  params["seed"] = seed;
  write_manifest(out, "sweep", params);
  return 0;
}

int cmd_check_theory(const fs::path &policy_dir, const fs::path &data_dir,
                     const fs::path &calib_dir, const SamplerFlags &sflags,
                     const fs::path &critic_dir, int chains, std::uint64_t seed,
                     const fs::path &out) {
  LoadedPolicy lp = load_policy(policy_dir);
  Dataset data = load_dataset(data_dir);
  auto [gcfg, qcfg] = parse_sampler_flags(sflags);
  ExpectileCritic critic;
  const QFunction *critic_ptr = nullptr;
  if (!critic_dir.empty()) {
    critic = load_critic(critic_dir);
    critic_ptr = &critic;
  }
  if (qcfg.enabled && critic_ptr == nullptr)
    throw std::invalid_argument("check-theory: --critic required when --q-compose is on");
  CalibrationResult calib = load_calibration(calib_dir);
  require_fingerprint_match(calib, lp.policy, lp.schedule, gcfg, qcfg);
  const Matrix states = held_out_states(data);

  // Fresh null chains with traces for the variance proxy and tail checks.
  std::vector<double> llrs(static_cast<std::size_t>(chains));
  std::vector<double> proxies(static_cast<std::size_t>(chains));
  double max_proxy = 0.0, max_shift = 0.0, max_bound_gap = 0.0;
  for (int i = 0; i < chains; ++i) {
    RngStream rng(derive_seed(seed, {0x7468u, static_cast<std::uint64_t>(i)}));
    const Index si = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(states.cols())));
    LLRTrace trace;
    sample_action(lp.policy, lp.schedule, gcfg, qcfg, calib.tau_hat, states.col(si), rng,
                  critic_ptr, &trace);
    llrs[static_cast<std::size_t>(i)] = trace.llr_cum;
    const double v = variance_proxy(trace);
    proxies[static_cast<std::size_t>(i)] = v;
    max_proxy = std::max(max_proxy, v);
    for (const auto &srec : trace.steps) {
      const double bound = displacement_bound(gcfg.beta_max, srec.dmu_norm,
                                              qcfg.enabled ? qcfg.lambda_max : 0.0, srec.sigma2,
                                              qcfg.grad_clip);
      max_shift = std::max(max_shift, srec.mean_shift_norm);
      max_bound_gap = std::max(max_bound_gap, srec.mean_shift_norm - bound);
    }
  }
  std::vector<double> xs{std::sqrt(max_proxy), 2.0 * std::sqrt(max_proxy),
                         3.0 * std::sqrt(max_proxy)};
  TailCheckResult tail = subgaussian_tail_check(llrs, max_proxy, xs);

  ActivationStats act = gate_activation_stats(lp.policy, lp.schedule, gcfg, qcfg,
                                              calib.tau_hat, states, chains,
                                              derive_seed(seed, {0xac72u}), critic_ptr);
  const double union_bound = union_ood_bound(act.max_step_rate, act.gated_steps);

  json report;
  report["alpha"] = calib.alpha;
  report["tau_hat"] = calib.tau_hat;
  report["chains"] = chains;
  report["variance_proxy_max"] = max_proxy;
  report["variance_proxy_mean"] =
      std::accumulate(proxies.begin(), proxies.end(), 0.0) / static_cast<double>(chains);
  report["max_mean_shift"] = max_shift;
  report["max_displacement_bound_gap"] = max_bound_gap;
  report["displacement_bound_ok"] = max_bound_gap <= 1e-9;
  report["activation_any_rate"] = act.any_rate;
  report["activation_max_step_rate"] = act.max_step_rate;
  report["gated_steps"] = act.gated_steps;
  report["union_ood_bound"] = union_bound;
  report["union_bound_covers_activations"] =
      act.any_rate <= union_bound + dkw_epsilon(chains, 0.05);
  for (std::size_t i = 0; i < tail.xs.size(); ++i) {
    report["subgaussian"][i] = {{"x", tail.xs[i]},
                                {"empirical", tail.empirical[i]},
                                {"bound", tail.bound[i]},
                                {"violated", tail.violated[i] != 0}};
  }
  report["subgaussian_violations"] = tail.violations;

  // Offline-error comparison and the alpha_max diagnostic need the analytic
  // bandit ground truth plus a critic.
  if (data.env_name == "bandit" && critic_ptr != nullptr) {
    SamplerSetup lrt{gcfg, QComposeConfig{}, calib.tau_hat, nullptr};
    GateConfig g_off = gcfg;
    g_off.beta_max = 0.0;
    QComposeConfig q_on = qcfg;
    if (!q_on.enabled) {
      q_on.enabled = true;
      q_on.center = QCenter::unconditional;
    }
    SamplerSetup qg{g_off, q_on, std::numeric_limits<double>::infinity(), critic_ptr};
    GapReport gap = return_gap_report(bandit_spec_from(data), lp.policy, lp.schedule, lrt, qg,
                                      *critic_ptr, data.stats, states,
                                      derive_seed(seed, {0x6761u}));
    report["gap"] = {{"delta_qhat", gap.delta_qhat}, {"delta_qtrue", gap.delta_qtrue},
                     {"eta_lrt", gap.eta_lrt},       {"eta_q", gap.eta_q},
                     {"eps_in", gap.eps_in},         {"eps_out", gap.eps_out},
                     {"nu", gap.nu},                 {"slack", gap.slack},
                     {"inequality_holds", gap.inequality_holds}};
    if (gap.nu > 0.0) {
      report["alpha_max"] = alpha_max(gap.delta_qhat, gap.eps_in, gap.nu, gap.eta_q,
                                      act.gated_steps > 0 ? act.gated_steps : lp.schedule.steps);
    } else {
      report["alpha_max"] = nullptr;  // no off-support excess error measured
    }
  }

  fs::create_directories(out);
  write_text(out / "bound_report.json", report.dump(2) + "\n");
  json params = sampler_flags_json(sflags);
  params["policy"] = policy_dir.string();
  params["data"] = data_dir.string();
  params["calib"] = calib_dir.string();
  params["chains"] = chains;
  params["seed"] = seed;
  write_manifest(out, "check-theory", params);
  std::cout << "bound report -> " << (out / "bound_report.json").string() << "\n"
            << "  displacement ok: " << (max_bound_gap <= 1e-9 ? "yes" : "NO")
            << ", subgaussian violations: " << tail.violations
            << ", union bound covers activations: "
            << (report["union_bound_covers_activations"].get<bool>() ? "yes" : "NO") << "\n";
  return 0;
}

int cmd_report(const fs::path &run_dir, const fs::path &out) {
  fs::create_directories(out);
  std::vector<std::vector<double>> long_rows;
  std::vector<std::string> series_names;  // parallel to rows: figure/series encoded as index
  std::ostringstream body;
  body << "figure,series,x,y\n";
  char buf[64];
  auto emit = [&](const std::string &figure, const std::string &series, double x, double y) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    body << figure << "," << series << "," << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", y);
    body << buf << "\n";
  };

  bool any = false;
  if (fs::exists(run_dir / "sweep.csv")) {
    CsvTable t = read_csv(run_dir / "sweep.csv");
    for (const auto &row : t.rows) {
      emit("risk_performance", "return", row[0], row[2]);
      emit("risk_performance", "type1", row[0], row[4]);
      emit("risk_performance", "ood", row[0], row[5]);
      emit("pareto", "front", row[5], row[2]);  // x = ood, y = return
    }
    any = true;
  }
  if (fs::exists(run_dir / "traces.csv")) {
    CsvTable t = read_csv(run_dir / "traces.csv");
    for (const auto &row : t.rows)
      emit("llr_traces", "chain_" + std::to_string(static_cast<long>(row[0])), row[1], row[4]);
    any = true;
  }
  if (!any)
    throw std::invalid_argument("report: no sweep.csv or traces.csv under " + run_dir.string());
  write_text(out / "report.csv", body.str());
  write_manifest(out, "report", json{{"run", run_dir.string()}});
  std::cout << "wrote " << (out / "report.csv").string() << "\n";
  (void)long_rows;
  (void)series_names;
  return 0;
}

}  // namespace

int cli_main(int argc, const char *const *argv) {
  CLI::App app{"LRT-Diffusion: risk-calibrated evidence-gated diffusion policy sampling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // Shared state filled by whichever subcommand runs.
  std::string env = "bandit";
  Index n_rows = 10000, episodes_gen = 500;
  std::uint64_t seed = 0;
  std::string out = "run";
  std::string data_dir, policy_dir, calib_dir, critic_dir, run_dir;
  double gamma = 0.99, expectile = 0.7, top_p = 0.2;
  int critic_steps = 2000;
  double critic_lr = 3e-4;
  bool oracle_critic = false;
  TrainConfig tcfg;
  int steps_T = 50;
  double beta_start = 1e-4, beta_end = 2e-2;
  SamplerFlags sflags;
  double alpha = 0.1, momentum = 0.5;
  int n_cal = 3000, iters = 6, m_type1 = 3000, ood_n = 2000, n_actions = 16, chains = 2000;
  int seeds = 5, episodes = 10;
  std::string tau_str;
  std::vector<double> alphas{0.20, 0.10, 0.05, 0.02, 0.01};

  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--out", out, "Output run directory");
    cmd->set_config("--config", "", "JSON config file (flags override)");
    cmd->config_formatter(std::make_shared<JsonConfig>());
  };

  CLI::App *gen = app.add_subcommand("gen-data", "Generate a synthetic offline dataset");
  gen->add_option("--env", env, "bandit|pointmass")->check(CLI::IsMember({"bandit", "pointmass"}));
  gen->add_option("--n", n_rows, "Rows (bandit)");
  gen->add_option("--episodes", episodes_gen, "Episodes (pointmass)");
  add_common(gen);

  CLI::App *label = app.add_subcommand("label", "Fit the expectile critic and label top-p rows");
  label->add_option("--data", data_dir, "Dataset directory")->required();
  label->add_option("--gamma", gamma, "Discount");
  label->add_option("--expectile", expectile, "Expectile in (0,1)");
  label->add_option("--p", top_p, "Good fraction");
  label->add_option("--critic-steps", critic_steps, "Critic fit steps");
  label->add_option("--critic-lr", critic_lr, "Critic learning rate");
  label->add_flag("--oracle-critic", oracle_critic, "Use the analytic bandit reward as critic");
  add_common(label);

  CLI::App *tr = app.add_subcommand("train", "Train the two-head policy");
  tr->add_option("--data", data_dir, "Labeled dataset directory")->required();
  tr->add_option("--epochs", tcfg.epochs, "Epochs");
  tr->add_option("--batch", tcfg.batch_size, "Batch size");
  tr->add_option("--lr", tcfg.learning_rate, "Learning rate");
  tr->add_option("--ema-decay", tcfg.ema_decay, "EMA decay for the positive rate");
  tr->add_option("--tau-a", tcfg.tau_A, "Soft-weight temperature");
  tr->add_option("--u-max", tcfg.u_max, "Soft-weight cap");
  tr->add_option("--eps-w", tcfg.eps_w, "Class-balance guard");
  tr->add_option("--t", steps_T, "Diffusion steps T");
  tr->add_option("--beta-start", beta_start, "Schedule start");
  tr->add_option("--beta-end", beta_end, "Schedule end");
  add_common(tr);

  CLI::App *cal = app.add_subcommand("calibrate", "Calibrate the gate threshold under the null");
  cal->add_option("--policy", policy_dir, "Policy checkpoint directory")->required();
  cal->add_option("--data", data_dir, "Dataset directory")->required();
  cal->add_option("--critic", critic_dir, "Critic checkpoint (for --q-compose)");
  cal->add_option("--alpha", alpha, "Target Type-I level");
  cal->add_option("--n", n_cal, "Chains per iteration");
  cal->add_option("--iters", iters, "Fixed-point iterations K");
  cal->add_option("--momentum", momentum, "Fixed-point momentum");
  add_sampler_flags(cal, sflags);
  add_common(cal);

  CLI::App *smp = app.add_subcommand("sample", "Sample gated actions and export traces");
  smp->add_option("--policy", policy_dir, "Policy checkpoint directory")->required();
  smp->add_option("--data", data_dir, "Dataset directory (for stats)")->required();
  smp->add_option("--calib", calib_dir, "Calibration directory");
  smp->add_option("--tau", tau_str, "Threshold override (number, inf, -inf)");
  smp->add_option("--critic", critic_dir, "Critic checkpoint (for --q-compose)");
  smp->add_option("--n-actions", n_actions, "Chains to sample");
  add_sampler_flags(smp, sflags);
  add_common(smp);

  CLI::App *ev = app.add_subcommand("evaluate", "Rollout returns, realized Type-I and OOD");
  ev->add_option("--policy", policy_dir, "Policy checkpoint directory")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--calib", calib_dir, "Calibration directory")->required();
  ev->add_option("--critic", critic_dir, "Critic checkpoint (for --q-compose)");
  ev->add_option("--seeds", seeds, "Evaluation seeds");
  ev->add_option("--episodes", episodes, "Episodes per seed");
  ev->add_option("--m", m_type1, "Fresh null chains for realized Type-I");
  ev->add_option("--ood-n", ood_n, "Policy samples for the OOD rate");
  add_sampler_flags(ev, sflags);
  add_common(ev);

  CLI::App *sw = app.add_subcommand("sweep", "Alpha sweep producing the Pareto CSV");
  sw->add_option("--policy", policy_dir, "Policy checkpoint directory")->required();
  sw->add_option("--data", data_dir, "Dataset directory")->required();
  sw->add_option("--critic", critic_dir, "Critic checkpoint (for --q-compose)");
  sw->add_option("--alphas", alphas, "Alpha grid")->delimiter(',');
  sw->add_option("--n", n_cal, "Calibration chains per iteration");
  sw->add_option("--iters", iters, "Fixed-point iterations K");
  sw->add_option("--momentum", momentum, "Fixed-point momentum");
  sw->add_option("--seeds", seeds, "Evaluation seeds");
  sw->add_option("--episodes", episodes, "Episodes per seed");
  sw->add_option("--m", m_type1, "Fresh null chains for realized Type-I");
  sw->add_option("--ood-n", ood_n, "Policy samples for the OOD rate");
  add_sampler_flags(sw, sflags);
  add_common(sw);

  CLI::App *ct = app.add_subcommand("check-theory", "Run the bound checks and emit a report");
  ct->add_option("--policy", policy_dir, "Policy checkpoint directory")->required();
  ct->add_option("--data", data_dir, "Dataset directory")->required();
  ct->add_option("--calib", calib_dir, "Calibration directory")->required();
  ct->add_option("--critic", critic_dir, "Critic checkpoint");
  ct->add_option("--chains", chains, "Null chains for the checks");
  add_sampler_flags(ct, sflags);
  add_common(ct);

  CLI::App *rp = app.add_subcommand("report", "Emit plot-ready long-format CSV from a run");
  rp->add_option("--run", run_dir, "Run directory with sweep.csv and/or traces.csv")->required();
  add_common(rp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(env, n_rows, episodes_gen, seed, out);
    if (label->parsed())
      return cmd_label(data_dir, gamma, expectile, top_p, critic_steps, critic_lr, oracle_critic,
                       seed, out);
    if (tr->parsed()) {
      tcfg.seed = seed;
      return cmd_train(data_dir, tcfg, steps_T, beta_start, beta_end, out);
    }
    if (cal->parsed())
      return cmd_calibrate(policy_dir, data_dir, sflags, critic_dir, alpha, n_cal, iters,
                           momentum, seed, out);
    if (smp->parsed())
      return cmd_sample(policy_dir, data_dir, calib_dir, tau_str, sflags, critic_dir, n_actions,
                        seed, out);
    if (ev->parsed())
      return cmd_evaluate(policy_dir, data_dir, calib_dir, sflags, critic_dir, seeds, episodes,
                          m_type1, ood_n, seed, out);
    if (sw->parsed())
      return cmd_sweep(policy_dir, data_dir, sflags, critic_dir, alphas, n_cal, iters, momentum,
                       seeds, episodes, m_type1, ood_n, seed, out);
    if (ct->parsed())
      return cmd_check_theory(policy_dir, data_dir, calib_dir, sflags, critic_dir, chains, seed,
                              out);
    if (rp->parsed()) return cmd_report(run_dir, out);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const std::logic_error &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace lrtd
