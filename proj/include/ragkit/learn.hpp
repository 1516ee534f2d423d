#pragma once

// Neural-fitted Q-learning with an optional governor shield, closed-loop
// rollouts and evaluation, and distillation of a governed policy into an
// explicit network.

#include "ragkit/governor.hpp"
#include "ragkit/mlp.hpp"
#include "ragkit/parallel.hpp"
#include "ragkit/pwa_model.hpp"

#include <chrono>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ragkit::learn {

/// A PWA plant with reward, constraints and network encodings.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const pwa::PWAModel& model() const = 0;
  virtual std::vector<Vector> action_grid() const = 0;
  /// Network encoding of the state and the reference at time t.
  virtual Vector features(const Vector& x, int t) const = 0;
  virtual Vector encode_action(const Vector& u) const = 0;
  /// Inverse of encode_action, clipped into the input set.
  virtual Vector decode_action(const Vector& y) const = 0;
  virtual Vector initial_state(Rng& rng) const = 0;
  /// Parametric weight held for one rollout; nullopt draws wp every step.
  virtual std::optional<Vector> rollout_weights(Rng& rng) const = 0;
  virtual pwa::Disturbance disturbance(const Vector& x, int t, const std::optional<Vector>& wp, Rng& rng) const = 0;
  virtual double reward(const Vector& x, const Vector& u, int t) const = 0;
  virtual bool violates(const Vector& x) const = 0;
  /// The rollout stops once the state leaves the modelled region.
  virtual bool terminal(const Vector& x) const = 0;
};

/// lambda * q_old + (1 - lambda) * (reward + gamma * v_next).
inline double q_target(double lambda, double gamma, double q_old, double reward, double v_next) {
  if (!(lambda > 0.0 && lambda < 1.0) || !(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("q_target: lambda and gamma must lie in (0, 1)");
  return lambda * q_old + (1.0 - lambda) * (reward + gamma * v_next);
}

/// Q-network inputs for every grid action at one state, one column each.
inline Matrix q_inputs(const Environment& env, const Vector& feat, const std::vector<Vector>& grid) {
  const Vector a0 = env.encode_action(grid.front());
  Matrix X(feat.size() + a0.size(), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    X.col(static_cast<Eigen::Index>(k)).head(feat.size()) = feat;
    X.col(static_cast<Eigen::Index>(k)).tail(a0.size()) = env.encode_action(grid[k]);
  }
  return X;
}

/// Index of the largest value, lowest index on ties.
inline std::size_t argmax(const Eigen::RowVectorXd& values) {
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k)
    if (values(k) > values(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(k);
  return best;
}

/// Epsilon-greedy choice over the grid: uniform with probability epsilon,
/// otherwise the first maximizer of the network's values.
inline std::size_t select_action(const Mlp& q_net, const Environment& env, const Vector& feat,
                                 const std::vector<Vector>& grid, double epsilon, Rng& rng) {
  if (grid.empty()) throw std::invalid_argument("select_action: empty action grid");
  if (rng.uniform() < epsilon) return rng.index(grid.size());
  return argmax(q_net.forward(q_inputs(env, feat, grid)).row(0));
}

struct ReplayEntry {
  Vector features;  // state and reference
  Vector u_nominal;
  double q = 0.0;
};

/// FIFO buffer of (x, nominal u, Q target).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }
  void push(ReplayEntry e) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(e));
  }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayEntry& operator[](std::size_t i) const { return entries_[i]; }

 private:
  std::size_t capacity_;
  std::deque<ReplayEntry> entries_;
};

struct QLearnerConfig {
  double lambda = 0.5;
  double gamma = 0.95;
  double epsilon_start = 0.5;
  double epsilon_end = 0.05;
  int episodes = 200;
  int N = 10;   // trajectories per episode
  int T = 150;  // steps per trajectory
  std::size_t buffer_capacity = 50000;
  std::vector<int> hidden = {64, 64};
  /// Network outputs are Q / q_scale.
  double q_scale = 30.0;
  /// Per episode: samples drawn from the buffer and passes over them.
  std::size_t fit_samples = 50000;
  FitConfig fit{1, 256, 1e-3, 0.9, 0};
  const governor::Governor* shield = nullptr;

  void validate() const {
    if (!(lambda > 0 && lambda < 1) || !(gamma > 0 && gamma < 1))
      throw std::invalid_argument("QLearnerConfig: lambda and gamma must lie in (0, 1)");
    if (episodes < 0 || N < 0 || T < 0) throw std::invalid_argument("QLearnerConfig: negative counts");
    if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1))
      throw std::invalid_argument("QLearnerConfig: epsilon must lie in [0, 1]");
    if (!(q_scale > 0)) throw std::invalid_argument("QLearnerConfig: q_scale must be positive");
  }

  double epsilon(int episode) const {
    if (episodes <= 1) return epsilon_start;
    return epsilon_start + (epsilon_end - epsilon_start) * episode / (episodes - 1);
  }
};

struct EpisodeStats {
  int episode = 0;
  double mean_reward = 0.0;
  double violation_rate = 0.0;
  std::size_t violations = 0;
  std::size_t transitions = 0;
};

struct Transition {
  Vector x, u_nominal, u_safe, x_next;
  double reward = 0.0;
  bool violation = false;
};

struct TrainResult {
  Mlp q_net;
  std::vector<EpisodeStats> history;
  ReplayBuffer buffer{1};
};

class ShieldViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Q-learning over the environment. With a shield every nominal action is
/// passed through the governor; the agent still records its nominal action.
inline TrainResult train(const Environment& env, const QLearnerConfig& cfg, std::uint64_t seed,
                         const std::function<void(const Transition&)>& on_transition = {}) {
  cfg.validate();
  const auto grid = env.action_grid();
  if (grid.empty()) throw std::invalid_argument("train: empty action grid");
  for (const auto& u : grid)
    for (std::size_t q = 0; q < env.model().num_modes(); ++q)
      if (!geometry::contains(env.model().mode(q).U, u)) throw std::invalid_argument("train: action grid leaves U");

  Rng rng(seed, 0x7472);
  const Vector f0 = env.features(env.initial_state(rng), 0);
  const auto in_dim = static_cast<int>(f0.size() + env.encode_action(grid.front()).size());
  std::vector<int> sizes{in_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  TrainResult res{Mlp(sizes, rng()), {}, ReplayBuffer(cfg.buffer_capacity)};

  auto value_max = [&](const Vector& feat) {
    return res.q_net.forward(q_inputs(env, feat, grid)).row(0).maxCoeff() * cfg.q_scale;
  };

  for (int e = 0; e < cfg.episodes; ++e) {
    const double eps = cfg.epsilon(e);
    EpisodeStats st;
    st.episode = e;
    double reward_sum = 0.0;
    for (int n = 0; n < cfg.N; ++n) {
      Vector x = env.initial_state(rng);
      const auto wp = env.rollout_weights(rng);
      for (int t = 0; t < cfg.T; ++t) {
        const Vector feat = env.features(x, t);
        const Matrix qin = q_inputs(env, feat, grid);
        const Eigen::RowVectorXd qvals = res.q_net.forward(qin).row(0);
        const std::size_t k = rng.uniform() < eps ? rng.index(grid.size()) : argmax(qvals);
        const Vector& u_nom = grid[k];
        const Vector u_safe = cfg.shield ? cfg.shield->govern(x, u_nom).u_safe : u_nom;
        const auto w = env.disturbance(x, t, wp, rng);
        const Vector x_next = pwa::step(env.model(), x, u_safe, w);
        const double r = env.reward(x, u_safe, t);
        const bool viol = env.violates(x_next);
        if (viol && cfg.shield) throw ShieldViolation("shielded transition left the constraint set");
        const double q_old = qvals(static_cast<Eigen::Index>(k)) * cfg.q_scale;
        const double q = q_target(cfg.lambda, cfg.gamma, q_old, r, value_max(env.features(x_next, t + 1)));
        res.buffer.push({feat, u_nom, q});
        if (on_transition) on_transition({x, u_nom, u_safe, x_next, r, viol});
        reward_sum += r;
        st.violations += viol;
        ++st.transitions;
        x = x_next;
        if (env.terminal(x)) break;
      }
    }
    if (st.transitions > 0) {
      st.mean_reward = reward_sum / static_cast<double>(st.transitions);
      st.violation_rate = static_cast<double>(st.violations) / static_cast<double>(st.transitions);
    }
    res.history.push_back(st);

    if (res.buffer.size() == 0) continue;
    const std::size_t m = std::min(cfg.fit_samples, res.buffer.size());
    std::vector<std::size_t> idx(res.buffer.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    Matrix X(in_dim, static_cast<Eigen::Index>(m)), Y(1, static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const auto& entry = res.buffer[idx[i]];
      const auto c = static_cast<Eigen::Index>(i);
      X.col(c).head(entry.features.size()) = entry.features;
      X.col(c).tail(in_dim - entry.features.size()) = env.encode_action(entry.u_nominal);
      Y(0, c) = entry.q / cfg.q_scale;
    }
    FitConfig fc = cfg.fit;
    fc.seed = rng();
    fit_mlp(res.q_net, X, Y, fc);
  }
  return res;
}

/// One control decision: the nominal input and the applied input.
struct Decision {
  Vector u_phi, u_safe;
  bool modified = false;
  double objective = 0.0;
};

/// Must be safe to call concurrently.
using Policy = std::function<Decision(const Vector& x, int t)>;

inline Policy greedy_policy(Mlp q_net, const Environment& env) {
  return [net = std::move(q_net), &env, grid = env.action_grid()](const Vector& x, int t) {
    const Vector u = grid[argmax(net.forward(q_inputs(env, env.features(x, t), grid)).row(0))];
    return Decision{u, u};
  };
}

inline Policy shielded_policy(Policy nominal, const governor::Governor& gov) {
  return [nominal = std::move(nominal), &gov](const Vector& x, int t) {
    Decision d = nominal(x, t);
    const auto res = gov.govern(x, d.u_phi);
    d.u_safe = res.u_safe;
    d.modified = res.modified;
    d.objective = res.objective;
    return d;
  };
}

inline Policy explicit_policy(Mlp net, const Environment& env) {
  return [net = std::move(net), &env](const Vector& x, int t) {
    const Vector u = env.decode_action(net(env.features(x, t)));
    return Decision{u, u};
  };
}

struct StepRecord {
  int t = 0;
  Vector x;
  Decision decision;
  std::size_t mode = 0;
  pwa::Disturbance w;
  double reward = 0.0;
  bool violation = false;  // of the successor state
};

struct RolloutResult {
  std::vector<StepRecord> steps;
  std::size_t violations = 0;
  double total_reward = 0.0;
  double policy_seconds = 0.0;
};

inline RolloutResult rollout(const Policy& policy, const Environment& env, const Vector& x0, int steps, Rng& rng,
                             bool record = true) {
  RolloutResult out;
  Vector x = x0;
  const auto wp = env.rollout_weights(rng);
  for (int t = 0; t < steps; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    Decision d = policy(x, t);
    out.policy_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto w = env.disturbance(x, t, wp, rng);
    const std::size_t q = pwa::mode_of(env.model(), x);
    const Vector next = pwa::step(env.model(), x, d.u_safe, w);
    const double r = env.reward(x, d.u_safe, t);
    const bool viol = env.violates(next);
    out.violations += viol;
    out.total_reward += r;
    if (record) out.steps.push_back({t, x, std::move(d), q, w, r, viol});
    else out.steps.push_back({t, Vector(), {}, q, {}, r, viol});
    x = next;
    if (env.terminal(x)) break;
  }
  return out;
}

struct EvalResult {
  double mean_reward = 0.0;     // per step
  double violation_rate = 0.0;  // violating steps over steps
  std::size_t violations = 0;
  std::size_t steps = 0;
  std::size_t rollouts_with_violation = 0;
  double us_per_step = 0.0;  // policy time only; not deterministic
};

/// Rollout i uses the stream (seed, i) and starts at x0 when given, else at
/// a random safe state. Results are reduced in rollout order.
inline EvalResult evaluate(const Policy& policy, const Environment& env, int n_rollouts, int steps, std::uint64_t seed,
                           const std::optional<Vector>& x0 = std::nullopt, unsigned threads = thread_count()) {
  std::vector<RolloutResult> runs(static_cast<std::size_t>(std::max(0, n_rollouts)));
  parallel_for(
      runs.size(),
      [&](std::size_t i) {
        Rng rng(seed, 0x6576616c0000ULL + i);
        const Vector start = x0 ? *x0 : env.initial_state(rng);
        runs[i] = rollout(policy, env, start, steps, rng, false);
      },
      threads);
  EvalResult out;
  double reward = 0.0, seconds = 0.0;
  for (const auto& r : runs) {
    out.violations += r.violations;
    out.steps += r.steps.size();
    out.rollouts_with_violation += r.violations > 0;
    reward += r.total_reward;
    seconds += r.policy_seconds;
  }
  if (out.steps > 0) {
    out.mean_reward = reward / static_cast<double>(out.steps);
    out.violation_rate = static_cast<double>(out.violations) / static_cast<double>(out.steps);
    out.us_per_step = 1e6 * seconds / static_cast<double>(out.steps);
  }
  return out;
}

struct DistillConfig {
  std::size_t dataset_size = 20000;
  int rollout_steps = 150;
  double holdout_fraction = 0.1;
  std::vector<int> hidden = {64, 64};
  FitConfig fit{100, 256, 1e-2, 0.9, 0};
  std::uint64_t seed = 0;
};

struct DistillResult {
  Mlp net;
  double train_mse = 0.0;
  double heldout_mse = 0.0;  // in encoded action units
  std::size_t samples = 0;
  std::vector<double> epoch_loss;
};

/// Fits an explicit policy to (state, applied input) pairs collected by
/// rolling the expert out from random safe states.
inline DistillResult distill(const Policy& expert, const Environment& env, const DistillConfig& cfg) {
  if (cfg.dataset_size < 2) throw std::invalid_argument("distill: dataset too small");
  Rng rng(cfg.seed, 0x64697374);
  std::vector<Vector> feats, targets;
  while (feats.size() < cfg.dataset_size) {
    Vector x = env.initial_state(rng);
    const auto wp = env.rollout_weights(rng);
    for (int t = 0; t < cfg.rollout_steps && feats.size() < cfg.dataset_size; ++t) {
      const Decision d = expert(x, t);
      feats.push_back(env.features(x, t));
      targets.push_back(env.encode_action(d.u_safe));
      x = pwa::step(env.model(), x, d.u_safe, env.disturbance(x, t, wp, rng));
      if (env.terminal(x)) break;
    }
  }
  const std::size_t n = feats.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_hold;
  auto pack = [&](std::size_t from, std::size_t count) {
    Matrix X(feats[0].size(), static_cast<Eigen::Index>(count)), Y(targets[0].size(), static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
      X.col(static_cast<Eigen::Index>(i)) = feats[order[from + i]];
      Y.col(static_cast<Eigen::Index>(i)) = targets[order[from + i]];
    }
    return std::make_pair(X, Y);
  };
  const auto [Xtr, Ytr] = pack(0, n_train);
  const auto [Xho, Yho] = pack(n_train, n_hold);
  std::vector<int> sizes{static_cast<int>(Xtr.rows())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(static_cast<int>(Ytr.rows()));
  DistillResult out{Mlp(sizes, rng()), 0.0, 0.0, n, {}};
  FitConfig fc = cfg.fit;
  fc.seed = rng();
  out.epoch_loss = fit_mlp(out.net, Xtr, Ytr, fc).epoch_loss;
  out.train_mse = out.net.loss(Xtr, Ytr);
  out.heldout_mse = out.net.loss(Xho, Yho);
  return out;
}

}  // namespace ragkit::learn
