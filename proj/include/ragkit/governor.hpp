#pragma once

// Robust action governor: the successor of (x, u) must land, for every
// admissible disturbance, in one piece of the safe set. The mixed-integer
// piece selection is solved exactly by enumerating pieces, one QP each.

#include "ragkit/optim.hpp"
#include "ragkit/parallel.hpp"
#include "ragkit/pwa_model.hpp"
#include "ragkit/safe_set.hpp"

#include <atomic>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ragkit::governor {

using geometry::HPolyhedron;
using geometry::Matrix;
using geometry::Vector;

/// Tolerance on the piece constraint rows, equal to the simplex feasibility tolerance.
inline constexpr double kFeasibilityTol = 1e-9;

/// An objective above this counts as a modification.
inline constexpr double kModifiedTol = 1e-12;

enum class InfeasiblePolicy { HardError, BestEffortSlack };

struct GovernorConfig {
  Matrix S;
  safe_set::SafeSetIterate safe_set;
  pwa::PWAModel model;
  InfeasiblePolicy infeasible_policy = InfeasiblePolicy::HardError;

  GovernorConfig(Matrix s, safe_set::SafeSetIterate safe, pwa::PWAModel m,
                 InfeasiblePolicy policy = InfeasiblePolicy::HardError)
      : S(std::move(s)), safe_set(std::move(safe)), model(std::move(m)), infeasible_policy(policy) {
    const auto nu = model.input_dim();
    if (S.rows() != nu || S.cols() != nu) throw std::invalid_argument("GovernorConfig: S has the wrong shape");
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("GovernorConfig: S must be symmetric");
    if (Eigen::LLT<Matrix>(S).info() != Eigen::Success)
      throw std::invalid_argument("GovernorConfig: S must be positive definite");
    if (safe_set.set.empty()) throw std::invalid_argument("GovernorConfig: safe set is empty");
    if (safe_set.set.dim() != model.state_dim())
      throw std::invalid_argument("GovernorConfig: safe set dimension mismatch");
  }
};

struct GovernorResult {
  Vector u_safe;
  bool modified = false;
  std::optional<std::size_t> piece_index;
  double objective = 0.0;
  std::vector<optim::Status> per_piece_status;
  /// Set when BestEffortSlack produced the action; `slack` is its worst row violation.
  bool best_effort = false;
  double slack = 0.0;
};

class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, Vector x, std::size_t mode)
      : std::runtime_error(what), x_(std::move(x)), mode_(mode) {}
  const Vector& x() const { return x_; }
  std::size_t mode() const { return mode_; }

 private:
  Vector x_;
  std::size_t mode_;
};

/// T_{i,q,j} = chi^i ~ E_qj Wa_q - f_qj, without redundant rows. nullopt
/// when the erosion is empty.
inline std::optional<HPolyhedron> make_target(const GovernorConfig& config, std::size_t piece, std::size_t q,
                                              std::size_t j) {
  const auto& md = config.model.mode(q);
  const auto& vs = md.vertices[j];
  auto eroded = geometry::pontryagin_diff(config.safe_set.set[piece], vs.E, md.Wa);
  eroded = geometry::remove_redundant(eroded);
  if (geometry::is_empty(eroded)) return std::nullopt;
  return geometry::translate(eroded, -vs.f);
}

/// Targets for every (piece, mode, vertex system), computed once.
class TargetCache {
 public:
  explicit TargetCache(const GovernorConfig& config) : offsets_(config.model.num_modes() + 1, 0) {
    for (std::size_t q = 0; q < config.model.num_modes(); ++q)
      offsets_[q + 1] = offsets_[q] + config.model.mode(q).n_p();
    per_piece_ = offsets_.back();
    const std::size_t r = config.safe_set.set.size();
    targets_.resize(r * per_piece_);
    parallel_for(r, [&](std::size_t i) {
      for (std::size_t q = 0; q < config.model.num_modes(); ++q)
        for (std::size_t j = 0; j < config.model.mode(q).n_p(); ++j)
          targets_[i * per_piece_ + offsets_[q] + j] = make_target(config, i, q, j);
    });
  }

  const std::optional<HPolyhedron>& get(std::size_t piece, std::size_t q, std::size_t j) const {
    hits_.fetch_add(1, std::memory_order_relaxed);
    return targets_[piece * per_piece_ + offsets_[q] + j];
  }

  std::size_t size() const { return targets_.size(); }
  std::size_t hits() const { return hits_.load(); }

 private:
  std::vector<std::size_t> offsets_;
  std::size_t per_piece_ = 0;
  std::vector<std::optional<HPolyhedron>> targets_;
  mutable std::atomic<std::size_t> hits_{0};
};

inline TargetCache precompute_targets(const GovernorConfig& config) { return TargetCache(config); }

namespace detail {

/// Rows G u <= g over u stating that all vertex successors of (x, u) land in
/// the targets of `piece`; nullopt when some target is empty.
struct PieceRows {
  Matrix G;
  Vector g;
};

inline std::optional<PieceRows> piece_rows(const GovernorConfig& config, const TargetCache* cache,
                                           std::size_t piece, std::size_t q, const Vector& x) {
  const auto& md = config.model.mode(q);
  std::vector<HPolyhedron> local;
  std::vector<const HPolyhedron*> targets;
  if (!cache) local.reserve(md.n_p());
  for (std::size_t j = 0; j < md.n_p(); ++j) {
    if (cache) {
      const auto& t = cache->get(piece, q, j);
      if (!t) return std::nullopt;
      targets.push_back(&*t);
    } else {
      auto t = make_target(config, piece, q, j);
      if (!t) return std::nullopt;
      local.push_back(std::move(*t));
      targets.push_back(&local.back());
    }
  }
  Eigen::Index rows = 0;
  for (const auto* t : targets) rows += t->rows();
  PieceRows out{Matrix(rows, config.model.input_dim()), Vector(rows)};
  Eigen::Index r = 0;
  for (std::size_t j = 0; j < md.n_p(); ++j) {
    const auto& vs = md.vertices[j];
    const auto& T = *targets[j];
    out.G.middleRows(r, T.rows()) = T.H() * vs.B;
    out.g.segment(r, T.rows()) = T.h() - T.H() * (vs.A * x);
    r += T.rows();
  }
  return out;
}

/// Bounding boxes of the pieces and, per mode, of U and Wa. They give a
/// necessary condition for piece feasibility: the box of successors reachable
/// at the Wa box centre must meet the piece's box.
struct Screen {
  std::vector<std::pair<Vector, Vector>> boxes;
  std::vector<std::pair<Vector, Vector>> uboxes;
  std::vector<Vector> wa_centers;
  explicit Screen(const GovernorConfig& config) {
    boxes.reserve(config.safe_set.set.size());
    for (const auto& P : config.safe_set.set.pieces()) boxes.push_back(geometry::bounding_box(P));
    for (std::size_t q = 0; q < config.model.num_modes(); ++q) {
      uboxes.push_back(geometry::bounding_box(config.model.mode(q).U));
      const auto wb = geometry::bounding_box(config.model.mode(q).Wa);
      wa_centers.push_back(0.5 * (wb.first + wb.second));
    }
  }

  bool may_reach(const GovernorConfig& config, std::size_t q, const Vector& x, std::size_t piece) const {
    const Vector uc = 0.5 * (uboxes[q].first + uboxes[q].second);
    const Vector ur = 0.5 * (uboxes[q].second - uboxes[q].first);
    const auto& pb = boxes[piece];
    for (const auto& vs : config.model.mode(q).vertices) {
      const Vector c = vs.A * x + vs.B * uc + vs.f + vs.E * wa_centers[q];
      const Vector rad = vs.B.cwiseAbs() * ur;
      if (((c + rad).array() < pb.first.array() - 1e-9).any() ||
          ((c - rad).array() > pb.second.array() + 1e-9).any())
        return false;
    }
    return true;
  }
};

inline bool rows_hold(const PieceRows& rows, const Vector& u, double tol) {
  return rows.G.rows() == 0 || (rows.G * u - rows.g).maxCoeff() <= tol;
}

}  // namespace detail

struct ActionCheck {
  bool safe = false;
  std::optional<std::size_t> witness_piece;
};

namespace detail {

/// Optional speedups shared by the entry points: cached targets and per-piece
/// bounding boxes for screening. Either may be null.
struct Aids {
  const TargetCache* cache = nullptr;
  const Screen* screen = nullptr;
};

inline std::vector<std::optional<PieceRows>> all_piece_rows(const GovernorConfig& config, const Aids& aids,
                                                            std::size_t q, const Vector& x) {
  const std::size_t r = config.safe_set.set.size();
  std::vector<std::optional<PieceRows>> rows(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (aids.screen && !aids.screen->may_reach(config, q, x, i)) continue;
    rows[i] = piece_rows(config, aids.cache, i, q, x);
  }
  return rows;
}

inline ActionCheck is_action_safe(const GovernorConfig& config, const Aids& aids, const Vector& x,
                                  const Vector& u) {
  const std::size_t q = pwa::mode_of(config.model, x);
  if (u.size() != config.model.input_dim() || !geometry::contains(config.model.mode(q).U, u, kFeasibilityTol))
    return {};
  const auto rows = all_piece_rows(config, aids, q, x);
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i] && rows_hold(*rows[i], u, kFeasibilityTol)) return {true, i};
  return {};
}

// Smallest worst-row violation over pieces, with u held inside U.
inline GovernorResult best_effort(const GovernorConfig& config, const Aids& aids, const Vector& x,
                                  std::size_t q, const Vector& u_phi, GovernorResult res) {
  const auto& U = config.model.mode(q).U;
  const Eigen::Index nu = config.model.input_dim();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < config.safe_set.set.size(); ++i) {
    const auto rows = piece_rows(config, aids.cache, i, q, x);
    if (!rows) continue;
    const auto& G = rows->G;
    Matrix A = Matrix::Zero(G.rows() + U.rows() + 1, nu + 1);
    Vector b(A.rows());
    A.topLeftCorner(G.rows(), nu) = G;
    A.block(0, nu, G.rows(), 1).setConstant(-1.0);
    b.head(G.rows()) = rows->g;
    A.block(G.rows(), 0, U.rows(), nu) = U.H();
    b.segment(G.rows(), U.rows()) = U.h();
    A(A.rows() - 1, nu) = -1.0;
    b(A.rows() - 1) = 0.0;
    Vector c = Vector::Zero(nu + 1);
    c(nu) = 1.0;
    const auto out = optim::solve_lp(optim::LinearProgram(c, A, b));
    if (!out.optimal() || !(*out.objective < best)) continue;
    best = *out.objective;
    res.u_safe = out.solution->head(nu);
    res.piece_index = i;
  }
  if (!res.piece_index) throw InfeasibleError("govern: every eroded target is empty", x, q);
  res.best_effort = true;
  res.slack = best;
  const Vector d = res.u_safe - u_phi;
  res.objective = d.dot(config.S * d);
  res.modified = res.objective > kModifiedTol;
  return res;
}

inline GovernorResult govern(const GovernorConfig& config, const Aids& aids, const Vector& x,
                             const Vector& u_phi) {
  if (u_phi.size() != config.model.input_dim() || !u_phi.allFinite())
    throw std::invalid_argument("govern: u_phi must be a finite input vector");
  const std::size_t q = pwa::mode_of(config.model, x);
  const auto& U = config.model.mode(q).U;
  const std::size_t r = config.safe_set.set.size();
  GovernorResult res;
  res.per_piece_status.assign(r, optim::Status::Infeasible);
  const auto rows = all_piece_rows(config, aids, q, x);

  // Minimal modification: a safe nominal action passes unchanged.
  if (geometry::contains(U, u_phi, kFeasibilityTol)) {
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i] && rows_hold(*rows[i], u_phi, kFeasibilityTol)) {
        res.u_safe = u_phi;
        res.piece_index = i;
        res.per_piece_status[i] = optim::Status::Optimal;
        return res;
      }
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r; ++i) {
    if (!rows[i]) continue;
    Matrix A(rows[i]->G.rows() + U.rows(), u_phi.size());
    A << rows[i]->G, U.H();
    Vector b(A.rows());
    b << rows[i]->g, U.h();
    const optim::QuadraticProgram qp(config.S, u_phi, std::move(A), std::move(b));
    const auto out = optim::solve_qp(qp);
    res.per_piece_status[i] = out.status;
    if (!out.optimal()) continue;
    const double obj = qp.objective(*out.solution);
    if (obj < best) {
      best = obj;
      res.u_safe = *out.solution;
      res.piece_index = i;
    }
  }
  if (res.piece_index) {
    res.objective = best;
    res.modified = best > kModifiedTol;
    return res;
  }
  if (config.infeasible_policy == InfeasiblePolicy::BestEffortSlack)
    return best_effort(config, aids, x, q, u_phi, std::move(res));
  std::ostringstream msg;
  msg << "govern: no safe-set piece admits an action at x = [" << x.transpose() << "] (mode " << q << ", "
      << r << " pieces)";
  throw InfeasibleError(msg.str(), x, q);
}

}  // namespace detail

/// Solves the governor problem at x for the nominal input u_phi. With a cache
/// the targets are looked up instead of recomputed; results are identical.
inline GovernorResult govern(const GovernorConfig& config, const Vector& x, const Vector& u_phi,
                             const TargetCache* cache = nullptr) {
  return detail::govern(config, {cache, nullptr}, x, u_phi);
}

inline ActionCheck is_action_safe(const GovernorConfig& config, const Vector& x, const Vector& u,
                                  const TargetCache* cache = nullptr) {
  return detail::is_action_safe(config, {cache, nullptr}, x, u);
}

/// Config, target cache and screening boxes bundled for repeated queries.
/// Screening only skips pieces that cannot be feasible, so results match the
/// free functions. Reentrant.
class Governor {
 public:
  explicit Governor(GovernorConfig config)
      : config_(std::move(config)), cache_(config_), screen_(config_) {}

  const GovernorConfig& config() const { return config_; }
  const TargetCache& cache() const { return cache_; }

  GovernorResult govern(const Vector& x, const Vector& u_phi) const {
    return detail::govern(config_, {&cache_, &screen_}, x, u_phi);
  }
  ActionCheck is_action_safe(const Vector& x, const Vector& u) const {
    return detail::is_action_safe(config_, {&cache_, &screen_}, x, u);
  }

 private:
  GovernorConfig config_;
  TargetCache cache_;
  detail::Screen screen_;
};

}  // namespace ragkit::governor
