#pragma once

// Command-line entry point: safeset, govern, rl, distill, evaluate, msd.
// Exit codes: 0 success, 1 domain error, 2 usage or input-format error.

#include "ragkit/io.hpp"
#include "ragkit/scenario_msd.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ragkit::cli {

namespace fs = std::filesystem;
using geometry::FormatError;
using geometry::Matrix;
using geometry::Vector;
using nlohmann::json;

/// Bad flags, missing files or malformed inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline json load_json(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("no such file: " + path);
  return io::read_json(path);
}

/// Rethrows format problems with the file name in front.
template <class F>
auto parse_file(const std::string& path, F&& parse) {
  const json j = load_json(path);
  try {
    return parse(j);
  } catch (const FormatError& e) {
    throw FormatError(path, e.what());
  } catch (const pwa::ModelError& e) {
    throw FormatError(path, e.what());
  }
}

inline pwa::PWAModel load_model(const std::string& path) {
  return parse_file(path, [](const json& j) { return pwa::model_from_json(j); });
}

inline geometry::PolyUnion load_union(const std::string& path) {
  return parse_file(path, [](const json& j) { return geometry::union_from_json(j); });
}

inline safe_set::SafeSetIterate load_safe_set(const std::string& path, const pwa::PWAModel& model) {
  const json j = load_json(path);
  safe_set::SafeSetIterate it;
  try {
    it = safe_set::iterate_from_json(j);
  } catch (const FormatError& e) {
    throw FormatError(path, e.what());
  }
  const std::string h = j.value("model_hash", "");
  if (!h.empty() && h != pwa::model_hash(model))
    throw UsageError(path + ": safe set was computed for a different model (model_hash " + h + ")");
  if (it.set.dim() != model.state_dim()) throw UsageError(path + ": safe set dimension does not match the model");
  return it;
}

inline msd::MsdParams load_params(const std::string& path, bool variant) {
  msd::MsdParams p;
  if (!path.empty()) p = parse_file(path, [](const json& j) { return msd::params_from_json(j); });
  if (variant) p = msd::apply_variant(p, msd::MsdVariant{});
  return p;
}

template <class T>
void read_field(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(where + "/" + key, "wrong type");
  }
}

inline void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where.empty() ? "/" : where, "expected an object");
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw FormatError(where + "/" + k, "unknown key");
}

inline void read_fit(const json& j, learn::FitConfig& f, const std::string& where) {
  read_field(j, "epochs", f.epochs, where);
  read_field(j, "batch_size", f.batch_size, where);
  read_field(j, "step", f.step, where);
  read_field(j, "momentum", f.momentum, where);
}

inline const std::vector<std::string> kQKeys = {"lambda",      "gamma",  "epsilon_start", "epsilon_end",
                                                "episodes",    "N",      "T",             "buffer_capacity",
                                                "hidden",      "q_scale", "fit_samples",  "epochs",
                                                "batch_size",  "step",   "momentum",      "ref_period",
                                                "plant_mass"};

inline learn::QLearnerConfig qlearner_from_json(const json& j, learn::QLearnerConfig c, const std::string& where) {
  check_keys(j, kQKeys, where);
  read_field(j, "lambda", c.lambda, where);
  read_field(j, "gamma", c.gamma, where);
  read_field(j, "epsilon_start", c.epsilon_start, where);
  read_field(j, "epsilon_end", c.epsilon_end, where);
  read_field(j, "episodes", c.episodes, where);
  read_field(j, "N", c.N, where);
  read_field(j, "T", c.T, where);
  read_field(j, "buffer_capacity", c.buffer_capacity, where);
  read_field(j, "hidden", c.hidden, where);
  read_field(j, "q_scale", c.q_scale, where);
  read_field(j, "fit_samples", c.fit_samples, where);
  read_fit(j, c.fit, where);
  return c;
}

inline learn::DistillConfig distill_from_json(const json& j, learn::DistillConfig c, const std::string& where) {
  check_keys(j, {"dataset_size", "rollout_steps", "holdout_fraction", "hidden", "epochs", "batch_size", "step",
                 "momentum"},
             where);
  read_field(j, "dataset_size", c.dataset_size, where);
  read_field(j, "rollout_steps", c.rollout_steps, where);
  read_field(j, "holdout_fraction", c.holdout_fraction, where);
  read_field(j, "hidden", c.hidden, where);
  read_fit(j, c.fit, where);
  return c;
}

inline msd::ExperimentSetup setup_from_json(const json& j, msd::ExperimentSetup s) {
  check_keys(j, {"k", "ref_period", "mc_rollouts", "adv_rollouts", "rollout_steps", "distill_eval_rollouts",
                 "variant", "nominal_training", "rl", "distill"},
             "");
  read_field(j, "k", s.k, "");
  read_field(j, "ref_period", s.ref_period, "");
  read_field(j, "mc_rollouts", s.mc_rollouts, "");
  read_field(j, "adv_rollouts", s.adv_rollouts, "");
  read_field(j, "rollout_steps", s.rollout_steps, "");
  read_field(j, "distill_eval_rollouts", s.distill_eval_rollouts, "");
  if (j.contains("variant")) {
    check_keys(j["variant"], {"m", "d"}, "/variant");
    read_field(j["variant"], "m", s.variant.m, "/variant");
    read_field(j["variant"], "d", s.variant.d, "/variant");
  }
  if (j.contains("nominal_training"))
    s.nominal_training = qlearner_from_json(j["nominal_training"], s.nominal_training, "/nominal_training");
  if (j.contains("rl")) s.rl = qlearner_from_json(j["rl"], s.rl, "/rl");
  if (j.contains("distill")) s.distill = distill_from_json(j["distill"], s.distill, "/distill");
  return s;
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw UsageError(what + ": expected comma-separated numbers");
  return out;
}

inline Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

/// Any PWA model, with random disturbances drawn per step and no reward.
class GenericEnv : public learn::Environment {
 public:
  GenericEnv(pwa::PWAModel model, geometry::PolyUnion constraints)
      : model_(std::move(model)), X_(std::move(constraints)) {}
  const pwa::PWAModel& model() const override { return model_; }
  std::vector<Vector> action_grid() const override { return {}; }
  Vector features(const Vector& x, int) const override { return x; }
  Vector encode_action(const Vector& u) const override { return u; }
  Vector decode_action(const Vector& y) const override { return y; }
  Vector initial_state(Rng& rng) const override { return pwa::sample_uniform(rng, model_.working_box()); }
  std::optional<Vector> rollout_weights(Rng&) const override { return std::nullopt; }
  pwa::Disturbance disturbance(const Vector& x, int, const std::optional<Vector>&, Rng& rng) const override {
    return pwa::sample_disturbance(rng, model_, pwa::mode_of(model_, x));
  }
  double reward(const Vector&, const Vector&, int) const override { return 0.0; }
  bool violates(const Vector& x) const override { return !X_.contains(x); }
  bool terminal(const Vector& x) const override { return !geometry::contains(model_.working_box(), x); }

 private:
  pwa::PWAModel model_;
  geometry::PolyUnion X_;
};

/// A trained run directory: Q-network plus the environment it was trained on.
struct RunDir {
  learn::Mlp q_net;
  msd::MsdParams params;
  int ref_period = 60;
  std::optional<double> plant_mass;
  std::string shield;
};

inline RunDir load_run(const std::string& dir) {
  RunDir r;
  const std::string run = (fs::path(dir) / "run.json").string();
  const json j = load_json(run);
  try {
    if (j.value("env", "") != "msd") throw FormatError("/env", "expected \"msd\"");
    if (!j.contains("params")) throw FormatError("/params", "missing");
    r.params = msd::params_from_json(j["params"]);
    read_field(j, "ref_period", r.ref_period, "");
    if (j.contains("plant_mass") && !j["plant_mass"].is_null()) r.plant_mass = j["plant_mass"].get<double>();
    r.shield = j.value("shield", "");
  } catch (const FormatError& e) {
    throw FormatError(run, e.what());
  }
  const std::string qpath = (fs::path(dir) / "q_net.json").string();
  r.q_net = parse_file(qpath, [](const json& q) { return learn::Mlp::from_json(q); });
  return r;
}

inline void finish_file(io::Manifest& m, const fs::path& out) {
  m.output(out);
  m.write(out.string() + ".manifest.json");
}

inline void finish_dir(io::Manifest& m, const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) m.output(f);
  m.write(dir / "manifest.json");
}

}  // namespace detail

/// Parses and runs one command. Output goes to `out`, diagnostics to `err`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Robust action governor toolkit for uncertain piecewise-affine systems"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);
  std::uint64_t seed = 1;

  // safeset compute
  auto* safeset = app.add_subcommand("safeset", "Safe-set computation");
  safeset->require_subcommand(1);
  auto* ss_compute = safeset->add_subcommand("compute", "Iterate the safe-set recursion k times");
  std::string ss_model, ss_constraints, ss_out;
  int ss_k = 60;
  bool ss_early = false;
  ss_compute->add_option("--model", ss_model, "PWA model JSON (pwa-v1)")->required();
  ss_compute->add_option("--constraints", ss_constraints, "State constraint union JSON")->required();
  ss_compute->add_option("--k", ss_k, "Number of iterations")->check(CLI::NonNegativeNumber);
  ss_compute->add_option("--out", ss_out, "Output safe-set JSON")->required();
  ss_compute->add_option("--seed", seed, "Seed for the sampled monotonicity check");
  ss_compute->add_flag("--early-stop", ss_early, "Stop when two iterates coincide on samples");

  // govern simulate
  auto* govern = app.add_subcommand("govern", "Governed closed-loop simulation");
  govern->require_subcommand(1);
  auto* gv_sim = govern->add_subcommand("simulate", "Simulate a nominal policy through the governor");
  std::string gv_model, gv_safe, gv_policy = "constant:0", gv_dist = "random", gv_out, gv_x0, gv_constraints,
                                 gv_env = "generic", gv_params;
  int gv_steps = 240;
  bool gv_variant = false, gv_unshielded = false;
  gv_sim->add_option("--env", gv_env, "generic or msd")->check(CLI::IsMember({"generic", "msd"}));
  gv_sim->add_option("--model", gv_model, "PWA model JSON (generic env)");
  gv_sim->add_option("--constraints", gv_constraints, "Constraint union for the violation column (generic env)");
  gv_sim->add_option("--params", gv_params, "MSD parameter JSON (msd env)");
  gv_sim->add_flag("--variant", gv_variant, "Use the adaptation variant m=1.3, d=5.5 (msd env)");
  gv_sim->add_option("--safe", gv_safe, "Safe-set JSON")->required();
  gv_sim->add_option("--policy", gv_policy,
                     "constant:u1,u2,... | qnet:RUN_DIR | explicit:POLICY_JSON (network policies need --env msd)");
  gv_sim->add_option("--steps", gv_steps, "Number of steps")->check(CLI::NonNegativeNumber);
  gv_sim->add_option("--disturbance", gv_dist, "random or adversarial (msd env)")
      ->check(CLI::IsMember({"random", "adversarial"}));
  gv_sim->add_option("--x0", gv_x0, "Initial state, comma-separated (default: origin)");
  gv_sim->add_flag("--unshielded", gv_unshielded, "Apply the nominal input without the governor");
  gv_sim->add_option("--seed", seed, "Seed");
  gv_sim->add_option("--out", gv_out, "Trajectory CSV")->required();

  // rl train
  auto* rl = app.add_subcommand("rl", "Safe reinforcement learning");
  rl->require_subcommand(1);
  auto* rl_train = rl->add_subcommand("train", "Q-learning with an optional governor shield");
  std::string rl_env = "msd", rl_config, rl_shield, rl_start, rl_out, rl_params;
  bool rl_variant = false;
  rl_train->add_option("--env", rl_env, "Environment")->check(CLI::IsMember({"msd"}));
  rl_train->add_option("--config", rl_config, "Learner config JSON");
  rl_train->add_option("--params", rl_params, "MSD parameter JSON");
  rl_train->add_flag("--variant", rl_variant, "Use the adaptation variant m=1.3, d=5.5 (fixed plant mass 1.3)");
  rl_train->add_option("--shield", rl_shield, "Safe-set JSON; enables the governor shield");
  rl_train->add_option("--start", rl_start, "Safe-set JSON for initial states when unshielded");
  rl_train->add_option("--seed", seed, "Seed");
  rl_train->add_option("--out", rl_out, "Run directory")->required();

  // distill
  auto* distill = app.add_subcommand("distill", "Distill a governed policy into an explicit network");
  std::string ds_expert, ds_safe, ds_out, ds_config;
  distill->add_option("--expert", ds_expert, "Run directory of the nominal Q-network")->required();
  distill->add_option("--safe", ds_safe, "Safe-set JSON for the governor (default: the run's shield)");
  distill->add_option("--config", ds_config, "Distillation config JSON");
  distill->add_option("--seed", seed, "Seed");
  distill->add_option("--out", ds_out, "Policy JSON")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Monte-Carlo evaluation of a policy on the MSD plant");
  std::string ev_policy, ev_dist = "random", ev_shield, ev_out, ev_start;
  int ev_rollouts = 500, ev_steps = 240;
  evaluate->add_option("--policy", ev_policy, "Explicit policy JSON or a run directory")->required();
  evaluate->add_option("--rollouts", ev_rollouts, "Number of rollouts")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--steps", ev_steps, "Steps per rollout")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--disturbance", ev_dist, "random or adversarial")
      ->check(CLI::IsMember({"random", "adversarial"}));
  evaluate->add_option("--shield", ev_shield, "Safe-set JSON; wraps the policy in the governor");
  evaluate->add_option("--random-start", ev_start, "Safe-set JSON; start rollouts at random safe states");
  evaluate->add_option("--seed", seed, "Seed");
  evaluate->add_option("--out", ev_out, "Metrics CSV (default: print only)");

  // msd
  auto* msd_cmd = app.add_subcommand("msd", "Mass-spring-damper experiments");
  std::string ms_which, ms_out, ms_safe, ms_variant_safe, ms_params, ms_config, ms_nominal;
  msd_cmd->add_option("experiment", ms_which,
                      "governed_vs_nominal | monte_carlo_500 | safe_rl_train | distill_compare | export")
      ->required()
      ->check(CLI::IsMember({"governed_vs_nominal", "monte_carlo_500", "safe_rl_train", "distill_compare", "export"}));
  msd_cmd->add_option("--seed", seed, "Master seed");
  msd_cmd->add_option("--out", ms_out, "Output directory")->required();
  msd_cmd->add_option("--params", ms_params, "MSD parameter JSON");
  msd_cmd->add_option("--config", ms_config, "Experiment setup JSON");
  msd_cmd->add_option("--safe", ms_safe, "Precomputed safe set for the base plant");
  msd_cmd->add_option("--variant-safe", ms_variant_safe, "Precomputed safe set for the variant plant");
  msd_cmd->add_option("--nominal", ms_nominal, "Run directory whose Q-network is the nominal policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    if (app.exit(e, out, msg) == 0) return 0;
    err << msg.str() << "\n" << app.help("", CLI::AppFormatMode::All);
    return 2;
  }

  io::Manifest manifest(args);
  manifest.seed("seed", seed);
  try {
    if (ss_compute->parsed()) {
      const auto model = load_model(ss_model);
      const auto X = load_union(ss_constraints);
      manifest.input("model", ss_model);
      manifest.input("constraints", ss_constraints);
      safe_set::SafeSetConfig cfg;
      cfg.k_max = ss_k;
      cfg.early_stop = ss_early;
      cfg.seed = seed;
      const auto it = safe_set::compute(model, X, cfg);
      io::write_json(ss_out, safe_set::to_json(it, pwa::model_hash(model)));
      out << "k=" << it.k << " pieces=" << it.set.size() << (it.empty_warning ? " (empty)" : "") << "\n";
      finish_file(manifest, ss_out);
      return 0;
    }

    if (gv_sim->parsed()) {
      std::unique_ptr<learn::Environment> env;
      std::optional<msd::MsdParams> params;
      if (gv_env == "msd") {
        if (!gv_model.empty() || !gv_constraints.empty()) throw UsageError("--model/--constraints apply to --env generic");
        params = load_params(gv_params, gv_variant);
        if (gv_params.size()) manifest.input("params", gv_params);
      } else {
        if (gv_model.empty()) throw UsageError("--model is required for --env generic");
        if (gv_dist == "adversarial") throw UsageError("adversarial disturbances need --env msd");
      }
      const pwa::PWAModel model = params ? msd::build_model(*params) : load_model(gv_model);
      if (!gv_model.empty()) manifest.input("model", gv_model);
      const auto safe = load_safe_set(gv_safe, model);
      manifest.input("safe", gv_safe);
      if (params) {
        env = std::make_unique<msd::MsdEnv>(*params, safe.set, msd::parse_disturbance(gv_dist),
                                            gv_variant ? std::optional<double>(msd::MsdVariant{}.m) : std::nullopt);
      } else {
        geometry::PolyUnion X = safe.set;
        if (!gv_constraints.empty()) {
          X = load_union(gv_constraints);
          manifest.input("constraints", gv_constraints);
        }
        env = std::make_unique<GenericEnv>(model, X);
      }
      learn::Policy nominal;
      const auto colon = gv_policy.find(':');
      const std::string kind = gv_policy.substr(0, colon);
      const std::string arg = colon == std::string::npos ? "" : gv_policy.substr(colon + 1);
      if (kind == "constant") {
        const Vector u = to_vector(parse_numbers(arg, "--policy"));
        if (u.size() != model.input_dim()) throw UsageError("--policy: constant input has the wrong dimension");
        nominal = [u](const Vector&, int) { return learn::Decision{u, u}; };
      } else if (kind == "qnet" || kind == "explicit") {
        if (!params) throw UsageError("network policies need --env msd");
        if (kind == "qnet") {
          nominal = learn::greedy_policy(load_run(arg).q_net, *env);
          manifest.input("policy", fs::path(arg) / "q_net.json");
        } else {
          const json pj = load_json(arg);
          nominal = learn::explicit_policy(parse_file(arg, [](const json& j) {
                                             if (!j.contains("net")) throw FormatError("/net", "missing");
                                             return learn::Mlp::from_json(j["net"], "/net");
                                           }),
                                           *env);
          manifest.input("policy", arg);
        }
      } else {
        throw UsageError("--policy: unknown kind '" + kind + "'");
      }
      const governor::Governor gov(governor::GovernorConfig(Matrix::Identity(model.input_dim(), model.input_dim()),
                                                            safe, model));
      const learn::Policy pol = gv_unshielded ? nominal : learn::shielded_policy(nominal, gov);
      Vector x0 = Vector::Zero(model.state_dim());
      if (!gv_x0.empty()) x0 = to_vector(parse_numbers(gv_x0, "--x0"));
      if (x0.size() != model.state_dim()) throw UsageError("--x0 has the wrong dimension");
      Rng rng(seed, 0x676f76);
      const auto r = learn::rollout(pol, *env, x0, gv_steps, rng);
      Eigen::Index np = r.steps.empty() ? 0 : r.steps.front().w.wp.size();
      io::write_file(gv_out, io::trajectory_csv(r, model.state_dim(), model.input_dim(), np,
                                                model.mode(0).vertices.front().E.cols()));
      std::size_t modified = 0;
      for (const auto& s : r.steps) modified += s.decision.modified;
      out << "steps=" << r.steps.size() << " violations=" << r.violations << " modified=" << modified << "\n";
      finish_file(manifest, gv_out);
      return 0;
    }

    if (rl_train->parsed()) {
      json cfg_json = json::object();
      if (!rl_config.empty()) {
        cfg_json = load_json(rl_config);
        manifest.input("config", rl_config);
      }
      learn::QLearnerConfig cfg;
      int ref_period = 60;
      std::optional<double> plant_mass;
      if (rl_variant) plant_mass = msd::MsdVariant{}.m;
      try {
        cfg = qlearner_from_json(cfg_json, cfg, "");
        read_field(cfg_json, "ref_period", ref_period, "");
        if (cfg_json.contains("plant_mass")) plant_mass = cfg_json["plant_mass"].get<double>();
      } catch (const FormatError& e) {
        throw FormatError(rl_config, e.what());
      } catch (const json::exception& e) {
        throw FormatError(rl_config + "/plant_mass", "expected a number");
      }
      const auto params = load_params(rl_params, rl_variant);
      if (!rl_params.empty()) manifest.input("params", rl_params);
      const auto model = msd::build_model(params);
      std::unique_ptr<governor::Governor> gov;
      geometry::PolyUnion start = msd::build_constraint_polygon(params);
      if (!rl_shield.empty()) {
        const auto safe = load_safe_set(rl_shield, model);
        manifest.input("shield", rl_shield);
        start = safe.set;
        gov = std::make_unique<governor::Governor>(governor::GovernorConfig(Matrix::Identity(1, 1), safe, model));
        cfg.shield = gov.get();
      } else if (!rl_start.empty()) {
        start = load_safe_set(rl_start, model).set;
        manifest.input("start", rl_start);
      }
      const msd::MsdEnv env(params, start, msd::DisturbanceMode::Random, plant_mass, ref_period);
      const auto res = learn::train(env, cfg, seed);
      fs::create_directories(rl_out);
      const fs::path dir(rl_out);
      io::write_file(dir / "history.csv", io::history_csv(res.history));
      io::write_json(dir / "q_net.json", res.q_net.to_json());
      io::write_json(dir / "run.json", {{"env", "msd"},
                                        {"params", msd::params_to_json(params)},
                                        {"ref_period", ref_period},
                                        {"plant_mass", plant_mass ? json(*plant_mass) : json(nullptr)},
                                        {"shield", rl_shield.empty() ? "" : fs::absolute(rl_shield).string()},
                                        {"seed", seed}});
      std::size_t violations = 0;
      for (const auto& h : res.history) violations += h.violations;
      out << "episodes=" << res.history.size() << " violations=" << violations << "\n";
      finish_dir(manifest, dir);
      return 0;
    }

    if (distill->parsed()) {
      const RunDir run = load_run(ds_expert);
      manifest.input("expert", fs::path(ds_expert) / "q_net.json");
      const std::string safe_path = ds_safe.empty() ? run.shield : ds_safe;
      if (safe_path.empty()) throw UsageError("--safe is required: the expert run was not shielded");
      const auto model = msd::build_model(run.params);
      const auto safe = load_safe_set(safe_path, model);
      manifest.input("safe", safe_path);
      learn::DistillConfig cfg;
      if (!ds_config.empty()) {
        manifest.input("config", ds_config);
        cfg = parse_file(ds_config, [&](const json& j) { return distill_from_json(j, cfg, ""); });
      }
      cfg.seed = seed;
      const governor::Governor gov(governor::GovernorConfig(Matrix::Identity(1, 1), safe, model));
      const msd::MsdEnv env(run.params, safe.set, msd::DisturbanceMode::Random, run.plant_mass, run.ref_period);
      const auto expert = learn::shielded_policy(learn::greedy_policy(run.q_net, env), gov);
      const auto res = learn::distill(expert, env, cfg);
      auto pj = msd::Experiments::explicit_policy_json(res.net, run.params, run.ref_period);
      pj["heldout_mse"] = res.heldout_mse;
      pj["train_mse"] = res.train_mse;
      pj["samples"] = res.samples;
      io::write_json(ds_out, pj);
      out << "samples=" << res.samples << " train_mse=" << res.train_mse << " heldout_mse=" << res.heldout_mse
          << "\n";
      finish_file(manifest, ds_out);
      return 0;
    }

    if (evaluate->parsed()) {
      std::optional<learn::Mlp> net;
      std::optional<RunDir> run;
      msd::MsdParams params;
      int ref_period = 60;
      std::optional<double> plant_mass;
      if (fs::is_directory(ev_policy)) {
        run = load_run(ev_policy);
        params = run->params;
        ref_period = run->ref_period;
        plant_mass = run->plant_mass;
        manifest.input("policy", fs::path(ev_policy) / "q_net.json");
      } else {
        const json pj = load_json(ev_policy);
        try {
          if (pj.value("format", "") != "explicit-policy-v1") throw FormatError("/format", "expected \"explicit-policy-v1\"");
          if (!pj.contains("params") || !pj.contains("net")) throw FormatError("/", "missing params or net");
          params = msd::params_from_json(pj["params"]);
          read_field(pj, "ref_period", ref_period, "");
          net = learn::Mlp::from_json(pj["net"], "/net");
        } catch (const FormatError& e) {
          throw FormatError(ev_policy, e.what());
        }
        manifest.input("policy", ev_policy);
      }
      const auto model = msd::build_model(params);
      std::optional<safe_set::SafeSetIterate> shield, start;
      if (!ev_shield.empty()) {
        shield = load_safe_set(ev_shield, model);
        manifest.input("shield", ev_shield);
      }
      if (!ev_start.empty()) {
        start = load_safe_set(ev_start, model);
        manifest.input("start", ev_start);
      }
      const geometry::PolyUnion start_set =
          start ? start->set : (shield ? shield->set : msd::build_constraint_polygon(params));
      const msd::MsdEnv env(params, start_set, msd::parse_disturbance(ev_dist), plant_mass, ref_period);
      learn::Policy pol = run ? learn::greedy_policy(run->q_net, env) : learn::explicit_policy(*net, env);
      std::unique_ptr<governor::Governor> gov;
      if (shield) {
        gov = std::make_unique<governor::Governor>(governor::GovernorConfig(Matrix::Identity(1, 1), *shield, model));
        pol = learn::shielded_policy(pol, *gov);
      }
      const std::optional<Vector> x0 = start ? std::nullopt : std::optional<Vector>(Vector::Zero(2));
      const auto r = learn::evaluate(pol, env, ev_rollouts, ev_steps, seed, x0);
      std::string csv = "rollouts,steps,violations,violation_rate,rollouts_with_violation,mean_reward\n";
      csv += std::to_string(ev_rollouts) + "," + std::to_string(r.steps) + "," + std::to_string(r.violations) + "," +
             io::fmt(r.violation_rate) + "," + std::to_string(r.rollouts_with_violation) + "," +
             io::fmt(r.mean_reward) + "\n";
      out << csv << "per_step_time_us=" << r.us_per_step << "\n";
      if (!ev_out.empty()) {
        io::write_file(ev_out, csv);
        finish_file(manifest, ev_out);
      }
      return 0;
    }

    if (msd_cmd->parsed()) {
      msd::ExperimentSetup setup;
      if (!ms_config.empty()) {
        manifest.input("config", ms_config);
        setup = parse_file(ms_config, [&](const json& j) { return setup_from_json(j, setup); });
      }
      setup.params = load_params(ms_params, false);
      if (!ms_params.empty()) manifest.input("params", ms_params);
      const fs::path dir(ms_out);
      fs::create_directories(dir);
      if (ms_which == "export") {
        io::write_json(dir / "params.json", msd::params_to_json(setup.params));
        io::write_json(dir / "model.json", pwa::to_json(msd::build_model(setup.params)));
        io::write_json(dir / "constraints.json", geometry::to_json(msd::build_constraint_polygon(setup.params)));
        const auto vp = msd::apply_variant(setup.params, setup.variant);
        io::write_json(dir / "variant_params.json", msd::params_to_json(vp));
        io::write_json(dir / "variant_model.json", pwa::to_json(msd::build_model(vp)));
        io::write_json(dir / "variant_constraints.json", geometry::to_json(msd::build_constraint_polygon(vp)));
        finish_dir(manifest, dir);
        return 0;
      }
      msd::Experiments ex(setup, seed);
      const auto base_model = msd::build_model(setup.params);
      if (!ms_safe.empty()) {
        ex.set_safe_set(load_safe_set(ms_safe, base_model));
        manifest.input("safe", ms_safe);
      }
      if (!ms_variant_safe.empty()) {
        ex.set_variant_safe_set(load_safe_set(ms_variant_safe, msd::build_model(ex.variant_params())));
        manifest.input("variant_safe", ms_variant_safe);
      }
      if (!ms_nominal.empty()) {
        ex.set_nominal(load_run(ms_nominal).q_net);
        manifest.input("nominal", fs::path(ms_nominal) / "q_net.json");
      }
      const auto res = msd::run_experiment(ex, ms_which, dir);
      if (ms_which == "safe_rl_train")
        io::write_json(dir / "variant_safe_set.json",
                       safe_set::to_json(ex.variant_safe_set(), pwa::model_hash(msd::build_model(ex.variant_params()))));
      else
        io::write_json(dir / "safe_set.json", safe_set::to_json(ex.safe_set(), pwa::model_hash(base_model)));
      out << res.metrics.dump(2) << "\n";
      finish_dir(manifest, dir);
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const io::IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace ragkit::cli
