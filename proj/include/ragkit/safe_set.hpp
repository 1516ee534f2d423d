#pragma once

// Backward recursion for robust safe sets of uncertain PWA systems:
//
//   chi_0 = X,   chi_k = Proj_x U_{q,i} { (x,u) : x in chi_{k-1} cap P~_q, u in U_q,
//                          [A_q B_q](x;u) in prod_j (chi^i_{k-1} ~ E_qj Wa_q - f_qj) }.

#include "ragkit/geometry.hpp"
#include "ragkit/parallel.hpp"
#include "ragkit/pwa_model.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ragkit::safe_set {

using geometry::HPolyhedron;
using geometry::Matrix;
using geometry::PolyUnion;
using geometry::Vector;

class MonotonicityError : public std::runtime_error {
 public:
  MonotonicityError(int k, Vector witness)
      : std::runtime_error("safe set iterate " + std::to_string(k) +
                           " is not contained in its predecessor"),
        k_(k),
        witness_(std::move(witness)) {}
  int k() const { return k_; }
  const Vector& witness() const { return witness_; }

 private:
  int k_;
  Vector witness_;
};

struct SafeSetConfig {
  int k_max = 60;
  /// Pieces whose Chebyshev radius is at most this are dropped.
  double prune_tol = 1e-6;
  /// Drop pieces contained in another single piece.
  bool prune_contained = true;
  /// Samples for the per-step inclusion check (0 disables it).
  std::size_t convergence_samples = 10000;
  /// Stop early once two consecutive iterates include each other on samples.
  bool early_stop = false;
  std::uint64_t seed = 0;
  unsigned threads = thread_count();
};

struct SafeSetIterate {
  int k = 0;
  PolyUnion set;
  std::vector<std::size_t> piece_counts;
  bool empty_warning = false;
};

/// The lifted pre-image set over (x, u) for mode q and target piece:
/// x in P_q cap working box, u in U_q, and every vertex system maps (x, u)
/// into the target eroded by its disturbance image. Empty if any eroded
/// target is empty.
namespace detail {

/// pre_piece before redundancy removal; nullopt if an eroded target is empty.
inline std::optional<HPolyhedron> pre_lift(const pwa::PWAModel& model, std::size_t q,
                                           const HPolyhedron& piece) {
  const auto& md = model.mode(q);
  const auto n = model.state_dim();
  const auto m = model.input_dim();
  const auto np = static_cast<Eigen::Index>(md.n_p());
  std::vector<HPolyhedron> targets;
  Matrix AB(n * np, n + m);
  for (Eigen::Index j = 0; j < np; ++j) {
    const auto& vs = md.vertices[static_cast<std::size_t>(j)];
    auto eroded = geometry::pontryagin_diff(piece, vs.E, md.Wa);
    if (geometry::is_empty(eroded)) return std::nullopt;
    targets.push_back(geometry::translate(eroded, -vs.f));
    AB.block(j * n, 0, n, n) = vs.A;
    AB.block(j * n, n, n, m) = vs.B;
  }
  const HPolyhedron dynamics = geometry::affine_preimage(geometry::cartesian_product(targets), AB);
  const HPolyhedron region = geometry::intersect(md.region, model.working_box());
  const HPolyhedron domain = geometry::cartesian_product({region, md.U});
  return geometry::stack(dynamics, domain);
}

}  // namespace detail

inline HPolyhedron pre_piece(const pwa::PWAModel& model, std::size_t q, const HPolyhedron& piece) {
  const auto lifted = detail::pre_lift(model, q, piece);
  if (!lifted) return HPolyhedron::empty_set(model.state_dim() + model.input_dim());
  return geometry::remove_redundant(*lifted);
}

namespace detail {

/// Proj_x of a lift over (x, u), eliminating inputs last to first. Reduction
/// is deferred to the end when only one input is eliminated.
inline HPolyhedron project_state(const HPolyhedron& lifted, Eigen::Index n) {
  HPolyhedron Q = lifted;
  for (Eigen::Index d = lifted.dim() - 1; d >= n; --d) {
    Q = geometry::eliminate(Q, d);
    if (d > n) Q = geometry::remove_redundant(Q);
  }
  return geometry::remove_redundant(Q);
}

inline bool keep_piece(const HPolyhedron& P, double prune_tol) {
  return geometry::chebyshev_radius(P) > prune_tol;
}

using Box = std::pair<Vector, Vector>;

inline bool boxes_overlap(const Box& a, const Box& b, double tol = 1e-9) {
  return ((a.first.array() <= b.second.array() + tol) && (b.first.array() <= a.second.array() + tol)).all();
}

inline bool box_inside(const Box& a, const Box& b, double tol = 1e-9) {
  return ((a.first.array() >= b.first.array() - tol) && (a.second.array() <= b.second.array() + tol)).all();
}

/// Drops pieces contained in another single piece; on mutual containment the
/// earlier piece survives. Bounding boxes screen candidates before the LPs.
inline std::vector<HPolyhedron> prune_contained(std::vector<HPolyhedron> pieces) {
  std::vector<Box> boxes;
  boxes.reserve(pieces.size());
  for (const auto& p : pieces) boxes.push_back(geometry::bounding_box(p));
  std::vector<bool> drop(pieces.size(), false);
  for (std::size_t a = 0; a < pieces.size(); ++a) {
    for (std::size_t b = 0; b < pieces.size() && !drop[a]; ++b) {
      if (a == b || drop[b] || !box_inside(boxes[a], boxes[b])) continue;
      if (geometry::is_subset(pieces[a], pieces[b], 1e-9) &&
          (b < a || !geometry::is_subset(pieces[b], pieces[a], 1e-9)))
        drop[a] = true;
    }
  }
  std::vector<HPolyhedron> out;
  for (std::size_t a = 0; a < pieces.size(); ++a)
    if (!drop[a]) out.push_back(std::move(pieces[a]));
  return out;
}

/// Exact byte key of (q, piece).
inline std::string piece_key(std::size_t q, const HPolyhedron& P) {
  std::string key(reinterpret_cast<const char*>(&q), sizeof q);
  const auto rows = P.rows(), cols = P.dim();
  key.append(reinterpret_cast<const char*>(&rows), sizeof rows);
  key.append(reinterpret_cast<const char*>(&cols), sizeof cols);
  key.append(reinterpret_cast<const char*>(P.H().data()), sizeof(double) * static_cast<std::size_t>(P.H().size()));
  key.append(reinterpret_cast<const char*>(P.h().data()), sizeof(double) * static_cast<std::size_t>(P.h().size()));
  return key;
}

}  // namespace detail

/// Kept pieces of Pre_q(piece) cap X^l, memoized by exact piece content.
/// Near convergence most pieces repeat between iterates.
using PreCache = std::unordered_map<std::string, std::vector<HPolyhedron>>;

/// chi_0 = X cap working box; a piece already inside the box is kept as is.
inline SafeSetIterate initial_iterate(const pwa::PWAModel& model, const PolyUnion& X) {
  if (X.dim() != model.state_dim()) throw std::invalid_argument("constraint set dimension mismatch");
  if (X.empty()) throw std::invalid_argument("constraint set is empty");
  SafeSetIterate it;
  it.set = PolyUnion(X.dim());
  for (const auto& P : X.pieces()) {
    if (geometry::is_subset(P, model.working_box(), 0.0))
      it.set.add(P);
    else
      it.set.add(geometry::intersect(P, model.working_box()));
  }
  it.piece_counts = {it.set.size()};
  it.empty_warning = it.set.empty();
  return it;
}

/// One step of the recursion. `base` is the initial iterate chi_0.
///
/// The x-membership x in chi_{k-1} is imposed through the pieces of chi_0
/// rather than chi_{k-1}. Pre-images are monotone piece by piece, so every
/// piece Pre(chi^i_{k-1}) cap X^l lies inside the piece of chi_{k-1} that
/// chi^i_{k-1} descends from; the union is therefore the same set, built
/// from 2 intersections per pre-image instead of r. Pieces are emitted in
/// (q, i, l) order.
inline SafeSetIterate iterate(const pwa::PWAModel& model, const SafeSetIterate& current,
                              const PolyUnion& base, const SafeSetConfig& config = {},
                              PreCache* cache = nullptr) {
  const auto n = model.state_dim();
  SafeSetIterate next;
  next.k = current.k + 1;
  next.set = PolyUnion(n);
  next.piece_counts = current.piece_counts;
  if (current.set.empty()) {
    next.piece_counts.push_back(0);
    next.empty_warning = true;
    return next;
  }
  const std::size_t nq = model.num_modes();
  const std::size_t r = current.set.size();

  const std::size_t nb = base.size();
  std::vector<detail::Box> boxes(nb);
  for (std::size_t l = 0; l < nb; ++l) boxes[l] = geometry::bounding_box(base[l]);

  std::vector<std::vector<HPolyhedron>> slots(nq * r);
  std::vector<std::string> keys(cache ? nq * r : 0);
  std::vector<bool> hit(nq * r, false);
  if (cache) {
    for (std::size_t task = 0; task < nq * r; ++task) {
      keys[task] = detail::piece_key(task / r, current.set[task % r]);
      if (const auto found = cache->find(keys[task]); found != cache->end()) {
        slots[task] = found->second;
        hit[task] = true;
      }
    }
  }
  parallel_for(
      nq * r,
      [&](std::size_t task) {
        if (hit[task]) return;
        const std::size_t q = task / r, i = task % r;
        const auto lifted = detail::pre_lift(model, q, current.set[i]);
        if (!lifted || geometry::is_empty(*lifted)) return;
        const HPolyhedron R = detail::project_state(*lifted, n);
        if (geometry::is_empty(R)) return;
        const auto rbox = geometry::bounding_box(R);
        for (std::size_t l = 0; l < nb; ++l) {
          if (!detail::boxes_overlap(rbox, boxes[l])) continue;
          auto piece = geometry::intersect(R, base[l]);
          if (detail::keep_piece(piece, config.prune_tol)) slots[task].push_back(std::move(piece));
        }
      },
      config.threads);
  if (cache) {
    for (std::size_t task = 0; task < nq * r; ++task)
      if (!hit[task]) cache->emplace(std::move(keys[task]), slots[task]);
  }

  std::vector<HPolyhedron> pieces;
  for (auto& s : slots)
    for (auto& p : s) pieces.push_back(std::move(p));
  if (config.prune_contained) pieces = detail::prune_contained(std::move(pieces));
  for (auto& p : pieces) next.set.add_unchecked(std::move(p));
  next.piece_counts.push_back(next.set.size());
  next.empty_warning = next.set.empty();
  return next;
}

/// Runs the recursion for k_max steps from X. After every step the new
/// iterate is checked against its predecessor by sampling; a witness outside
/// the predecessor is a hard error. `on_step` observes every iterate.
inline SafeSetIterate compute(const pwa::PWAModel& model, const PolyUnion& X,
                              const SafeSetConfig& config = {},
                              const std::function<void(const SafeSetIterate&)>& on_step = {}) {
  if (config.k_max < 0) throw std::invalid_argument("k_max must be nonnegative");
  if (X.empty()) throw std::invalid_argument("constraint set is empty");
  if (config.k_max == 0) {
    SafeSetIterate it;
    it.set = X;
    it.piece_counts = {X.size()};
    if (on_step) on_step(it);
    return it;
  }
  SafeSetIterate cur = initial_iterate(model, X);
  const PolyUnion base = cur.set;
  PreCache cache;
  if (on_step) on_step(cur);
  for (int k = 1; k <= config.k_max; ++k) {
    SafeSetIterate next = iterate(model, cur, base, config, &cache);
    if (on_step) on_step(next);
    if (next.set.empty()) return next;
    if (config.convergence_samples > 0) {
      const auto ev = geometry::sampled_subset(next.set, cur.set, config.convergence_samples,
                                               config.seed + static_cast<std::uint64_t>(k));
      if (!ev.is_subset_evidence) throw MonotonicityError(k, *ev.counterexample);
      if (config.early_stop &&
          geometry::sampled_subset(cur.set, next.set, config.convergence_samples,
                                   config.seed + 7919 * static_cast<std::uint64_t>(k))
              .is_subset_evidence)
        return next;
    }
    cur = std::move(next);
  }
  return cur;
}

inline bool membership(const SafeSetIterate& it, const Vector& x) { return it.set.contains(x); }

inline nlohmann::json to_json(const SafeSetIterate& it, const std::string& model_hash) {
  auto j = geometry::to_json(it.set);
  j["k"] = it.k;
  j["piece_counts"] = it.piece_counts;
  j["model_hash"] = model_hash;
  return j;
}

inline SafeSetIterate iterate_from_json(const nlohmann::json& j) {
  SafeSetIterate it;
  it.set = geometry::union_from_json(j, "", false);
  if (j.contains("k")) {
    if (!j["k"].is_number_integer()) throw geometry::FormatError("/k", "expected an integer");
    it.k = j["k"].get<int>();
  }
  if (j.contains("piece_counts")) {
    if (!j["piece_counts"].is_array()) throw geometry::FormatError("/piece_counts", "expected an array");
    for (std::size_t i = 0; i < j["piece_counts"].size(); ++i) {
      if (!j["piece_counts"][i].is_number_unsigned())
        throw geometry::FormatError("/piece_counts/" + std::to_string(i), "expected a count");
      it.piece_counts.push_back(j["piece_counts"][i].get<std::size_t>());
    }
  }
  return it;
}

}  // namespace ragkit::safe_set
