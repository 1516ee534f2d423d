#pragma once

// Mass-spring-damper learning environment and the four experiment scripts.

#include "ragkit/io.hpp"
#include "ragkit/learn.hpp"
#include "ragkit/msd_model.hpp"
#include "ragkit/safe_set.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ragkit::msd {

enum class DisturbanceMode { Random, Adversarial };

inline DisturbanceMode parse_disturbance(const std::string& s) {
  if (s == "random") return DisturbanceMode::Random;
  if (s == "adversarial") return DisturbanceMode::Adversarial;
  throw std::invalid_argument("unknown disturbance mode '" + s + "' (expected random or adversarial)");
}

/// Reference position: d for the first period, then 0, alternating.
inline double reference(const MsdParams& p, int ref_period, int t) { return (t / ref_period) % 2 == 0 ? p.d : 0.0; }

class MsdEnv : public learn::Environment {
 public:
  /// Initial states are drawn from `start_set` (the safe set) by rejection
  /// over the working box. A fixed plant mass pins wp for every rollout;
  /// otherwise each random rollout draws its mass uniformly.
  MsdEnv(MsdParams p, PolyUnion start_set, DisturbanceMode mode = DisturbanceMode::Random,
         std::optional<double> plant_mass = std::nullopt, int ref_period = 60)
      : p_(p),
        model_(build_model(p)),
        X_(build_constraint_polygon(p)),
        start_(std::move(start_set)),
        mode_(mode),
        mass_(plant_mass),
        period_(ref_period) {
    if (ref_period <= 0) throw std::invalid_argument("MsdEnv: reference period must be positive");
    if (start_.size() == 0) throw std::invalid_argument("MsdEnv: empty start set");
    if (mass_) mass_weights(p_, *mass_);
    for (int i = 0; i <= 20; ++i) grid_.push_back(Vector::Constant(1, p_.F_max * i / 20.0));
  }

  const MsdParams& params() const { return p_; }
  int ref_period() const { return period_; }
  double x_ref(int t) const { return reference(p_, period_, t); }
  const PolyUnion& constraints() const { return X_; }

  const pwa::PWAModel& model() const override { return model_; }
  std::vector<Vector> action_grid() const override { return grid_; }

  /// Scaled position, scaled velocity and the reference indicator.
  Vector features(const Vector& x, int t) const override {
    Vector f(3);
    f << x(0) / p_.d, x(1) / p_.v_max, x_ref(t) > 0.0 ? 1.0 : 0.0;
    return f;
  }
  Vector encode_action(const Vector& u) const override {
    return (u.array() - 0.5 * p_.F_max) / (0.5 * p_.F_max);
  }
  Vector decode_action(const Vector& y) const override {
    return (0.5 * p_.F_max * (y.array() + 1.0)).cwiseMax(0.0).cwiseMin(p_.F_max);
  }

  Vector initial_state(Rng& rng) const override {
    const auto [lo, hi] = geometry::bounding_box(model_.working_box());
    for (;;) {
      Vector x(2);
      x << rng.uniform(lo(0), hi(0)), rng.uniform(lo(1), hi(1));
      if (start_.contains(x)) return x;
    }
  }

  std::optional<Vector> rollout_weights(Rng& rng) const override {
    if (mass_) return mass_weights(p_, *mass_);
    if (mode_ == DisturbanceMode::Adversarial) return std::nullopt;
    return mass_weights(p_, rng.uniform(p_.m_min, p_.m_max));
  }

  pwa::Disturbance disturbance(const Vector& x, int, const std::optional<Vector>& wp, Rng& rng) const override {
    if (mode_ == DisturbanceMode::Adversarial) {
      auto w = adversarial_disturbance(p_, x);
      if (wp) w.wp = *wp;
      return w;
    }
    return {*wp, Vector::Constant(1, rng.uniform(-p_.wa_bound, p_.wa_bound))};
  }

  double reward(const Vector& x, const Vector&, int t) const override { return msd::reward(p_, x, x_ref(t)); }
  bool violates(const Vector& x) const override { return !X_.contains(x); }
  bool terminal(const Vector& x) const override { return !geometry::contains(model_.working_box(), x); }

 private:
  MsdParams p_;
  pwa::PWAModel model_;
  PolyUnion X_;
  PolyUnion start_;
  DisturbanceMode mode_;
  std::optional<double> mass_;
  int period_;
  std::vector<Vector> grid_;
};

struct ExperimentSetup {
  MsdParams params;
  MsdVariant variant;
  int ref_period = 60;
  int k = 60;
  /// Unshielded training that produces the nominal policy.
  learn::QLearnerConfig nominal_training = [] {
    learn::QLearnerConfig c;
    c.episodes = 100;
    return c;
  }();
  learn::QLearnerConfig rl;
  learn::DistillConfig distill;
  int mc_rollouts = 500;
  int adv_rollouts = 20;
  int rollout_steps = 240;
  int distill_eval_rollouts = 100;
  unsigned threads = thread_count();
};

struct ExperimentResult {
  nlohmann::json metrics;  // deterministic for a fixed seed
  nlohmann::json timing;   // wall-clock measurements
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"governed_vs_nominal", "monte_carlo_500", "safe_rl_train",
                                                 "distill_compare"};
  return names;
}

inline nlohmann::json eval_json(const learn::EvalResult& r, int rollouts) {
  return {{"rollouts", rollouts},
          {"steps", r.steps},
          {"violations", r.violations},
          {"violation_rate", r.violation_rate},
          {"rollouts_with_violation", r.rollouts_with_violation},
          {"mean_reward", r.mean_reward}};
}

inline double mean_reward_over(const std::vector<learn::EpisodeStats>& h, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t e = from; e < to; ++e) s += h[e].mean_reward;
  return to > from ? s / static_cast<double>(to - from) : 0.0;
}

/// Shared state of the experiments, computed on first use: safe sets,
/// governors and the nominal policy. All randomness derives from `seed`.
class Experiments {
 public:
  Experiments(ExperimentSetup setup, std::uint64_t seed) : s_(std::move(setup)), seed_(seed) {}

  const ExperimentSetup& setup() const { return s_; }
  std::uint64_t seed() const { return seed_; }
  MsdParams variant_params() const { return apply_variant(s_.params, s_.variant); }

  void set_safe_set(safe_set::SafeSetIterate it) { safe_ = std::move(it); }
  void set_variant_safe_set(safe_set::SafeSetIterate it) { variant_safe_ = std::move(it); }
  void set_nominal(learn::Mlp net) { nominal_ = std::move(net); }

  const safe_set::SafeSetIterate& safe_set() {
    if (!safe_) safe_ = compute_safe_set(s_.params);
    return *safe_;
  }
  const safe_set::SafeSetIterate& variant_safe_set() {
    if (!variant_safe_) variant_safe_ = compute_safe_set(variant_params());
    return *variant_safe_;
  }
  const governor::Governor& governor() {
    if (!gov_)
      gov_ = std::make_unique<governor::Governor>(
          governor::GovernorConfig(Matrix::Identity(1, 1), safe_set(), build_model(s_.params)));
    return *gov_;
  }
  const governor::Governor& variant_governor() {
    if (!variant_gov_)
      variant_gov_ = std::make_unique<governor::Governor>(
          governor::GovernorConfig(Matrix::Identity(1, 1), variant_safe_set(), build_model(variant_params())));
    return *variant_gov_;
  }

  /// Greedy policy of a Q-network trained without a shield on the base plant.
  const learn::Mlp& nominal() {
    if (!nominal_) {
      const MsdEnv env(s_.params, safe_set().set, DisturbanceMode::Random, std::nullopt, s_.ref_period);
      nominal_ = learn::train(env, s_.nominal_training, derive(0x6e6f6d)).q_net;
    }
    return *nominal_;
  }

  MsdEnv env(DisturbanceMode mode) {
    return MsdEnv(s_.params, safe_set().set, mode, std::nullopt, s_.ref_period);
  }

  ExperimentResult governed_vs_nominal() {
    const MsdEnv e = env(DisturbanceMode::Adversarial);
    const learn::Policy nominal_policy = learn::greedy_policy(nominal(), e);
    const learn::Policy governed_policy = learn::shielded_policy(nominal_policy, governor());
    ExperimentResult out;
    Vector x0 = Vector::Zero(2);
    const std::uint64_t base = derive(0x616476);
    learn::EvalResult totals[2];
    for (int which = 0; which < 2; ++which) {
      const auto& pol = which == 0 ? nominal_policy : governed_policy;
      std::vector<learn::RolloutResult> runs(static_cast<std::size_t>(s_.adv_rollouts));
      parallel_for(
          runs.size(),
          [&](std::size_t i) {
            // Rollout 0 starts at rest at the origin; the others at random safe states.
            Rng rng(base, i);
            const Vector start = i == 0 ? x0 : e.initial_state(rng);
            runs[i] = learn::rollout(pol, e, start, s_.rollout_steps, rng);
          },
          s_.threads);
      for (const auto& r : runs) {
        totals[which].violations += r.violations;
        totals[which].steps += r.steps.size();
        totals[which].rollouts_with_violation += r.violations > 0;
        totals[which].mean_reward += r.total_reward;
      }
      if (totals[which].steps > 0) {
        totals[which].mean_reward /= static_cast<double>(totals[which].steps);
        totals[which].violation_rate =
            static_cast<double>(totals[which].violations) / static_cast<double>(totals[which].steps);
      }
      out.files.emplace_back(which == 0 ? "traj_nominal.csv" : "traj_governed.csv",
                             io::trajectory_csv(runs.front(), 2, 1, 2, 1));
    }
    out.metrics = {{"experiment", "governed_vs_nominal"},
                   {"disturbance", "adversarial"},
                   {"nominal", eval_json(totals[0], s_.adv_rollouts)},
                   {"governed", eval_json(totals[1], s_.adv_rollouts)}};
    out.metrics["violations"] = totals[1].violations;
    out.metrics["rollouts"] = s_.adv_rollouts;
    out.metrics["mean_reward"] = totals[1].mean_reward;
    out.timing = nlohmann::json::object();
    return out;
  }

  ExperimentResult monte_carlo() {
    const MsdEnv e = env(DisturbanceMode::Random);
    const learn::Policy pol = learn::shielded_policy(learn::greedy_policy(nominal(), e), governor());
    const std::uint64_t s = derive(0x6d6331);
    const Vector x0 = Vector::Zero(2);
    const auto r = learn::evaluate(pol, e, s_.mc_rollouts, s_.rollout_steps, s, x0, s_.threads);
    ExperimentResult out;
    out.metrics = eval_json(r, s_.mc_rollouts);
    out.metrics["experiment"] = "monte_carlo_500";
    out.metrics["disturbance"] = "random";
    out.timing = {{"timing_us_per_step", r.us_per_step}};
    // Rollout 0 of the evaluation, replayed with its own stream.
    Rng rng(s, 0x6576616c0000ULL);
    out.files.emplace_back("traj_governed.csv",
                           io::trajectory_csv(learn::rollout(pol, e, x0, s_.rollout_steps, rng), 2, 1, 2, 1));
    return out;
  }

  /// Shielded and unshielded training on the variant plant (fixed mass).
  ExperimentResult safe_rl_train() {
    const MsdParams vp = variant_params();
    const MsdEnv e(vp, variant_safe_set().set, DisturbanceMode::Random, s_.variant.m, s_.ref_period);
    learn::QLearnerConfig shielded = s_.rl;
    shielded.shield = &variant_governor();
    learn::QLearnerConfig plain = s_.rl;
    plain.shield = nullptr;
    const std::uint64_t s = derive(0x726c);
    const auto rs = learn::train(e, shielded, s);
    const auto ru = learn::train(e, plain, s);
    ExperimentResult out;
    auto summary = [](const learn::TrainResult& r) {
      const auto& h = r.history;
      std::size_t v = 0, early_v = 0, early_n = 0;
      const std::size_t w = std::min<std::size_t>(20, h.size());
      for (std::size_t i = 0; i < h.size(); ++i) {
        v += h[i].violations;
        if (i < w) {
          early_v += h[i].violations;
          early_n += h[i].transitions;
        }
      }
      return nlohmann::json{{"episodes", h.size()},
                            {"violations", v},
                            {"early_violation_rate", early_n ? static_cast<double>(early_v) / early_n : 0.0},
                            {"first20_mean_reward", mean_reward_over(h, 0, w)},
                            {"last20_mean_reward", mean_reward_over(h, h.size() - w, h.size())}};
    };
    out.metrics = {{"experiment", "safe_rl_train"},
                   {"variant", {{"m", s_.variant.m}, {"d", s_.variant.d}}},
                   {"shielded", summary(rs)},
                   {"unshielded", summary(ru)}};
    out.metrics["violations"] = out.metrics["shielded"]["violations"];
    out.metrics["mean_reward"] = out.metrics["shielded"]["last20_mean_reward"];
    out.timing = nlohmann::json::object();
    out.files.emplace_back("history_shielded.csv", io::history_csv(rs.history));
    out.files.emplace_back("history_unshielded.csv", io::history_csv(ru.history));
    out.files.emplace_back("q_shielded.json", rs.q_net.to_json().dump(2) + "\n");
    out.files.emplace_back("q_unshielded.json", ru.q_net.to_json().dump(2) + "\n");
    return out;
  }

  ExperimentResult distill_compare() {
    const MsdEnv e = env(DisturbanceMode::Random);
    const learn::Policy governed = learn::shielded_policy(learn::greedy_policy(nominal(), e), governor());
    learn::DistillConfig dc = s_.distill;
    dc.seed = derive(0x6473);
    const auto d = learn::distill(governed, e, dc);
    const learn::Policy expl = learn::explicit_policy(d.net, e);
    const Vector x0 = Vector::Zero(2);
    const std::uint64_t s = derive(0x6576);
    const auto rg = learn::evaluate(governed, e, s_.distill_eval_rollouts, s_.rollout_steps, s, x0, s_.threads);
    const auto rx = learn::evaluate(expl, e, s_.distill_eval_rollouts, s_.rollout_steps, s, x0, s_.threads);
    const auto t = time_policies(governed, expl, e);
    ExperimentResult out;
    out.metrics = {{"experiment", "distill_compare"},
                   {"samples", d.samples},
                   {"train_mse", d.train_mse},
                   {"heldout_mse", d.heldout_mse},
                   {"governed", eval_json(rg, s_.distill_eval_rollouts)},
                   {"explicit", eval_json(rx, s_.distill_eval_rollouts)}};
    out.metrics["violations"] = rx.violations;
    out.metrics["rollouts"] = s_.distill_eval_rollouts;
    out.metrics["mean_reward"] = rx.mean_reward;
    out.timing = {{"governed_us_per_step", t.first},
                  {"explicit_us_per_step", t.second},
                  {"time_reduction", 1.0 - t.second / t.first}};
    out.files.emplace_back("policy.json", explicit_policy_json(d.net, s_.params, s_.ref_period).dump(2) + "\n");
    return out;
  }

  /// Single-threaded per-call time of two policies over the same states,
  /// visited by one governed rollout per start state.
  std::pair<double, double> time_policies(const learn::Policy& a, const learn::Policy& b, const MsdEnv& e,
                                          int rollouts = 10) {
    std::vector<std::pair<Vector, int>> states;
    Rng rng(derive(0x74696d), 0);
    for (int i = 0; i < rollouts; ++i) {
      const auto r = learn::rollout(a, e, e.initial_state(rng), s_.rollout_steps, rng);
      for (const auto& st : r.steps) states.emplace_back(st.x, st.t);
    }
    auto time = [&](const learn::Policy& p) {
      double sink = 0.0;
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& [x, t] : states) sink += p(x, t).u_safe(0);
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      volatile double keep = sink;
      (void)keep;
      return 1e6 * sec / static_cast<double>(states.size());
    };
    return {time(a), time(b)};
  }

  ExperimentResult run(const std::string& which) {
    if (which == "governed_vs_nominal") return governed_vs_nominal();
    if (which == "monte_carlo_500") return monte_carlo();
    if (which == "safe_rl_train") return safe_rl_train();
    if (which == "distill_compare") return distill_compare();
    throw std::invalid_argument("unknown experiment '" + which + "'");
  }

  std::uint64_t derive(std::uint64_t tag) const { return Rng(seed_, tag)(); }

  static nlohmann::json explicit_policy_json(const learn::Mlp& net, const MsdParams& p, int ref_period) {
    return {{"format", "explicit-policy-v1"},
            {"env", "msd"},
            {"params", params_to_json(p)},
            {"ref_period", ref_period},
            {"net", net.to_json()}};
  }

 private:
  safe_set::SafeSetIterate compute_safe_set(const MsdParams& p) const {
    safe_set::SafeSetConfig c;
    c.k_max = s_.k;
    c.seed = derive(0x7373);
    c.threads = s_.threads;
    return safe_set::compute(build_model(p), build_constraint_polygon(p), c);
  }

  ExperimentSetup s_;
  std::uint64_t seed_;
  std::optional<safe_set::SafeSetIterate> safe_, variant_safe_;
  std::unique_ptr<governor::Governor> gov_, variant_gov_;
  std::optional<learn::Mlp> nominal_;
};

/// Runs one experiment and writes its files, metrics.json and timing.json.
inline ExperimentResult run_experiment(Experiments& ex, const std::string& which, const std::filesystem::path& out_dir) {
  auto res = ex.run(which);
  for (const auto& [name, text] : res.files) io::write_file(out_dir / name, text);
  io::write_json(out_dir / "metrics.json", res.metrics);
  io::write_json(out_dir / "timing.json", res.timing);
  return res;
}

}  // namespace ragkit::msd
