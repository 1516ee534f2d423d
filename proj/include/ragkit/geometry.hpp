#pragma once

// H-representation polyhedra and finite unions of them.

#include "ragkit/optim.hpp"
#include "ragkit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ragkit::geometry {

using optim::Matrix;
using optim::Vector;

inline constexpr double kMembershipTol = 1e-9;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
}

/// Closed polyhedron {x : H x <= h}.
class HPolyhedron {
 public:
  HPolyhedron() = default;

  HPolyhedron(Matrix H, Vector h) : H_(std::move(H)), h_(std::move(h)) {
    if (H_.rows() != h_.size())
      throw std::invalid_argument("HPolyhedron: H and h row counts differ");
  }

  /// R^n (no constraints).
  static HPolyhedron universe(Eigen::Index n) { return {Matrix(0, n), Vector(0)}; }

  /// Canonical empty set {0 x <= -1}.
  static HPolyhedron empty_set(Eigen::Index n) {
    return {Matrix::Zero(1, n), Vector::Constant(1, -1.0)};
  }

  static HPolyhedron box(const Vector& lo, const Vector& hi) {
    require_dim(lo.size(), hi.size(), "HPolyhedron::box");
    const Eigen::Index n = lo.size();
    Matrix H = Matrix::Zero(2 * n, n);
    Vector h(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      H(2 * i, i) = 1.0;
      h(2 * i) = hi(i);
      H(2 * i + 1, i) = -1.0;
      h(2 * i + 1) = -lo(i);
    }
    return {std::move(H), std::move(h)};
  }

  [[nodiscard]] Eigen::Index dim() const { return H_.cols(); }
  [[nodiscard]] Eigen::Index rows() const { return H_.rows(); }
  [[nodiscard]] const Matrix& H() const { return H_; }
  [[nodiscard]] const Vector& h() const { return h_; }

  bool operator==(const HPolyhedron& o) const {
    return H_.rows() == o.H_.rows() && H_.cols() == o.H_.cols() && H_ == o.H_ && h_ == o.h_;
  }

 private:
  Matrix H_{Matrix(0, 0)};
  Vector h_{Vector(0)};
};

inline bool contains(const HPolyhedron& P, const Vector& x, double tol = kMembershipTol) {
  require_dim(P.dim(), x.size(), "contains");
  if (P.rows() == 0) return true;
  return ((P.H() * x - P.h()).array() <= tol).all();
}

/// max d^T x over P; nullopt if unbounded. P must be nonempty.
inline std::optional<double> support(const HPolyhedron& P, const Vector& d) {
  require_dim(P.dim(), d.size(), "support");
  const auto out = optim::solve_lp(optim::LinearProgram(-d, P.H(), P.h()));
  if (out.status == optim::Status::Unbounded) return std::nullopt;
  if (out.status == optim::Status::Infeasible)
    throw GeometryError("support: polyhedron is empty");
  return -*out.objective;
}

inline bool is_empty(const HPolyhedron& P) {
  if (P.rows() == 0) return false;
  const auto out =
      optim::solve_lp(optim::LinearProgram(Vector::Zero(P.dim()), P.H(), P.h()));
  return out.status == optim::Status::Infeasible;
}

/// Largest Euclidean ball inside P, radius capped at `cap`. The radius is
/// negative when P is empty.
struct Ball {
  Vector center;
  double radius = -1.0;
};

inline Ball chebyshev_ball(const HPolyhedron& P, double cap = 1e3) {
  const Eigen::Index n = P.dim();
  Matrix A(P.rows(), n + 1);
  A.leftCols(n) = P.H();
  for (Eigen::Index i = 0; i < P.rows(); ++i) A(i, n) = P.H().row(i).norm();
  Vector c = Vector::Zero(n + 1);
  c(n) = -1.0;
  std::vector<optim::Bound> bounds(static_cast<std::size_t>(n + 1));
  bounds.back().upper = cap;
  const auto out = optim::solve_lp(optim::LinearProgram(c, A, P.h(), bounds));
  if (!out.optimal()) return {Vector::Zero(n), -1.0};
  return {out.solution->head(n), (*out.solution)(n)};
}

inline double chebyshev_radius(const HPolyhedron& P, double cap = 1e3) {
  return chebyshev_ball(P, cap).radius;
}

/// Unit-normalizes rows, drops trivial and duplicate rows. Returns the
/// canonical empty set if a trivially infeasible row is present.
inline HPolyhedron normalize(const HPolyhedron& P) {
  const Eigen::Index n = P.dim();
  Matrix H(P.rows(), n);
  Vector h(P.rows());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const double nrm = P.H().row(i).norm();
    if (nrm <= 1e-12) {
      if (P.h()(i) < -kMembershipTol) return HPolyhedron::empty_set(n);
      continue;
    }
    const Vector row = P.H().row(i).transpose() / nrm;
    const double rhs = P.h()(i) / nrm;
    bool dup = false;
    for (Eigen::Index k = 0; k < r; ++k) {
      if ((H.row(k).transpose() - row).cwiseAbs().maxCoeff() <= 1e-12) {
        h(k) = std::min(h(k), rhs);
        dup = true;
        break;
      }
    }
    if (dup) continue;
    H.row(r) = row.transpose();
    h(r) = rhs;
    ++r;
  }
  return {H.topRows(r), h.head(r)};
}

namespace detail {

inline constexpr double kRedundancyTol = 1e-11;

inline HPolyhedron select_rows(const HPolyhedron& Q, const std::vector<bool>& keep) {
  Eigen::Index m = 0;
  for (bool k : keep) m += k;
  Matrix H(m, Q.dim());
  Vector h(m);
  Eigen::Index r = 0;
  for (Eigen::Index k = 0; k < Q.rows(); ++k) {
    if (!keep[static_cast<std::size_t>(k)]) continue;
    H.row(r) = Q.H().row(k);
    h(r++) = Q.h()(k);
  }
  return {std::move(H), std::move(h)};
}

/// max H_i x over the rows flagged in `active` with row i relaxed by one;
/// `bounds` optionally boxes the variables.
inline optim::SolveOutcome reach_lp(const HPolyhedron& Q, Eigen::Index i,
                                    const std::vector<bool>& active,
                                    const std::vector<optim::Bound>& bounds = {}) {
  Eigen::Index m = 0;
  for (Eigen::Index k = 0; k < Q.rows(); ++k) m += (active[static_cast<std::size_t>(k)] || k == i);
  Matrix A(m, Q.dim());
  Vector b(m);
  Eigen::Index r = 0;
  for (Eigen::Index k = 0; k < Q.rows(); ++k) {
    if (!active[static_cast<std::size_t>(k)] && k != i) continue;
    A.row(r) = Q.H().row(k);
    b(r++) = (k == i) ? Q.h()(k) + 1.0 : Q.h()(k);
  }
  return optim::solve_lp(optim::LinearProgram(-Q.H().row(i).transpose(), A, b, bounds));
}

/// Row-by-row test against all rows still kept; used for thin sets.
inline HPolyhedron remove_redundant_sequential(const HPolyhedron& Q) {
  std::vector<bool> kept(static_cast<std::size_t>(Q.rows()), true);
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    const auto out = reach_lp(Q, i, kept);
    if (!out.optimal()) continue;
    if (-*out.objective <= Q.h()(i) + kRedundancyTol) kept[static_cast<std::size_t>(i)] = false;
  }
  return select_rows(Q, kept);
}

/// Clarkson's method: each row is tested by an LP over the rows already
/// known to be irredundant; when the LP optimum violates the row, a ray from
/// the interior point c toward it identifies one more irredundant row.
inline HPolyhedron remove_redundant_clarkson(const HPolyhedron& Q, const Vector& c) {
  const Eigen::Index n = Q.dim();
  const auto rows = static_cast<std::size_t>(Q.rows());
  const double box = 1e4 * (1.0 + c.cwiseAbs().maxCoeff());
  std::vector<optim::Bound> bounds(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    bounds[static_cast<std::size_t>(j)] = {c(j) - box, c(j) + box};
  auto on_box = [&](const Vector& x) { return (x - c).cwiseAbs().maxCoeff() >= box * (1.0 - 1e-9); };
  const Vector slack0 = Q.h() - Q.H() * c;

  std::vector<bool> known(rows, false);
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    while (!known[static_cast<std::size_t>(i)]) {
      const auto out = reach_lp(Q, i, known, bounds);
      if (!out.optimal()) {
        known[static_cast<std::size_t>(i)] = true;  // cannot decide; keep it
        break;
      }
      const Vector& x = *out.solution;
      if (-*out.objective <= Q.h()(i) + kRedundancyTol) {
        if (on_box(x)) known[static_cast<std::size_t>(i)] = true;
        break;
      }
      // The segment c -> x leaves the polyhedron; its first exit row is facet-defining.
      const Vector d = x - c;
      const Vector rate = Q.H() * d;
      Eigen::Index hit = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < Q.rows(); ++k) {
        if (rate(k) <= 1e-15 * d.norm()) continue;
        const double t = slack0(k) / rate(k);
        if (t < best) {
          best = t;
          hit = k;
        }
      }
      if (hit < 0 || known[static_cast<std::size_t>(hit)]) hit = i;
      known[static_cast<std::size_t>(hit)] = true;
    }
  }
  // A ray can exit through a vertex and flag a row that only touches it.
  std::vector<bool> kept = known;
  for (Eigen::Index k = 0; k < Q.rows(); ++k) {
    if (!kept[static_cast<std::size_t>(k)]) continue;
    kept[static_cast<std::size_t>(k)] = false;
    const auto out = reach_lp(Q, k, kept, bounds);
    const bool redundant = out.optimal() && -*out.objective <= Q.h()(k) + kRedundancyTol &&
                           !on_box(*out.solution);
    kept[static_cast<std::size_t>(k)] = !redundant;
  }
  return select_rows(Q, kept);
}

}  // namespace detail

/// Removes rows whose deletion enlarges the set by no more than 1e-11 along
/// the row normal. Empty input yields the canonical empty set.
namespace detail {

/// Planar case by polar duality: with c strictly inside, row i is
/// irredundant iff H_i / (h_i - H_i c) is a strict vertex of the convex hull
/// of all such points and the origin.
inline HPolyhedron remove_redundant_planar(const HPolyhedron& Q, const Vector& c) {
  struct Pt {
    double x, y;
    Eigen::Index row;
  };
  std::vector<Pt> pts;
  pts.reserve(static_cast<std::size_t>(Q.rows()) + 1);
  pts.push_back({0.0, 0.0, -1});
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    const double b = Q.h()(i) - Q.H().row(i).dot(c);
    pts.push_back({Q.H()(i, 0) / b, Q.H()(i, 1) / b, i});
  }
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
    return a.x != b.x ? a.x < b.x : a.y != b.y ? a.y < b.y : a.row < b.row;
  });
  // Turns within this relative tolerance count as collinear (weakly redundant).
  auto left_turn = [](const Pt& o, const Pt& a, const Pt& b) {
    const double ax = a.x - o.x, ay = a.y - o.y, bx = b.x - o.x, by = b.y - o.y;
    return ax * by - ay * bx > kRedundancyTol * std::hypot(ax, ay) * std::hypot(bx, by);
  };
  std::vector<Pt> hull;
  hull.reserve(2 * pts.size());
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t floor = hull.size();
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Pt& p = pass == 0 ? pts[k] : pts[pts.size() - 1 - k];
      while (hull.size() >= floor + 2 && !left_turn(hull[hull.size() - 2], hull.back(), p)) hull.pop_back();
      hull.push_back(p);
    }
    hull.pop_back();
  }
  std::vector<bool> kept(static_cast<std::size_t>(Q.rows()), false);
  for (const auto& p : hull)
    if (p.row >= 0) kept[static_cast<std::size_t>(p.row)] = true;
  return select_rows(Q, kept);
}

}  // namespace detail

inline HPolyhedron remove_redundant(const HPolyhedron& P) {
  const Eigen::Index n = P.dim();
  HPolyhedron Q = normalize(P);
  if (Q.rows() == 0) return Q;
  const Ball ball = chebyshev_ball(Q);
  if (ball.radius > 1e-7 && n == 2) return detail::remove_redundant_planar(Q, ball.center);
  if (ball.radius > 1e-7) return detail::remove_redundant_clarkson(Q, ball.center);
  if (is_empty(Q)) return HPolyhedron::empty_set(n);
  return detail::remove_redundant_sequential(Q);
}

inline HPolyhedron stack(const HPolyhedron& P, const HPolyhedron& Q) {
  require_dim(P.dim(), Q.dim(), "intersect");
  Matrix H(P.rows() + Q.rows(), P.dim());
  H << P.H(), Q.H();
  Vector h(P.rows() + Q.rows());
  h << P.h(), Q.h();
  return {std::move(H), std::move(h)};
}

inline HPolyhedron intersect(const HPolyhedron& P, const HPolyhedron& Q) {
  return remove_redundant(stack(P, Q));
}

/// {x + t : x in P}.
inline HPolyhedron translate(const HPolyhedron& P, const Vector& t) {
  require_dim(P.dim(), t.size(), "translate");
  return {P.H(), P.h() + P.H() * t};
}

/// {z : M z + offset in P}.
inline HPolyhedron affine_preimage(const HPolyhedron& P, const Matrix& M,
                                   const std::optional<Vector>& offset = std::nullopt) {
  require_dim(M.rows(), P.dim(), "affine_preimage");
  Vector h = P.h();
  if (offset) {
    require_dim(offset->size(), P.dim(), "affine_preimage offset");
    h -= P.H() * *offset;
  }
  return {P.H() * M, std::move(h)};
}

inline HPolyhedron cartesian_product(std::span<const HPolyhedron> parts) {
  if (parts.empty()) throw std::invalid_argument("cartesian_product: empty list");
  Eigen::Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    rows += p.rows();
    cols += p.dim();
  }
  Matrix H = Matrix::Zero(rows, cols);
  Vector h(rows);
  Eigen::Index r = 0, c = 0;
  for (const auto& p : parts) {
    H.block(r, c, p.rows(), p.dim()) = p.H();
    h.segment(r, p.rows()) = p.h();
    r += p.rows();
    c += p.dim();
  }
  return {std::move(H), std::move(h)};
}

inline HPolyhedron cartesian_product(std::initializer_list<HPolyhedron> parts) {
  return cartesian_product(std::span<const HPolyhedron>(parts.begin(), parts.size()));
}

namespace detail {

inline void check_erosion_set(const HPolyhedron& B) {
  if (is_empty(B)) throw GeometryError("pontryagin_diff: subtrahend is empty");
}

/// Bounds of B when every row is a signed unit vector and each coordinate is
/// bounded on both sides; nullopt otherwise.
inline std::optional<std::pair<Vector, Vector>> axis_box(const HPolyhedron& B) {
  const Eigen::Index n = B.dim();
  Vector lo = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    Eigen::Index col = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (B.H()(i, j) == 0.0) continue;
      if (col >= 0) return std::nullopt;
      col = j;
    }
    if (col < 0) return std::nullopt;
    const double a = B.H()(i, col);
    if (a > 0)
      hi(col) = std::min(hi(col), B.h()(i) / a);
    else
      lo(col) = std::max(lo(col), B.h()(i) / a);
  }
  if (!lo.allFinite() || !hi.allFinite() || (lo.array() > hi.array()).any()) return std::nullopt;
  return std::make_pair(std::move(lo), std::move(hi));
}

/// Support of the box [lo, hi] in direction d.
inline double box_support(const std::pair<Vector, Vector>& box, const Vector& d) {
  const Vector c = 0.5 * (box.first + box.second);
  const Vector r = 0.5 * (box.second - box.first);
  return d.dot(c) + d.cwiseAbs().dot(r);
}

inline HPolyhedron erode(const HPolyhedron& P, const std::vector<double>& sigma) {
  Vector h = P.h();
  for (Eigen::Index i = 0; i < P.rows(); ++i) h(i) -= sigma[static_cast<std::size_t>(i)];
  return {P.H(), std::move(h)};
}

}  // namespace detail

/// P ~ B = {x : x + B subset of P}, via one support-function LP per row of P.
inline HPolyhedron pontryagin_diff(const HPolyhedron& P, const HPolyhedron& B) {
  require_dim(P.dim(), B.dim(), "pontryagin_diff");
  std::vector<double> sigma;
  sigma.reserve(static_cast<std::size_t>(P.rows()));
  if (const auto box = detail::axis_box(B)) {
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      sigma.push_back(detail::box_support(*box, P.H().row(i).transpose()));
    return detail::erode(P, sigma);
  }
  detail::check_erosion_set(B);
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const auto s = support(B, P.H().row(i).transpose());
    if (!s) throw GeometryError("unbounded erosion");
    sigma.push_back(*s);
  }
  return detail::erode(P, sigma);
}

/// P ~ (E W) where E maps W's space into P's space.
inline HPolyhedron pontryagin_diff(const HPolyhedron& P, const Matrix& E, const HPolyhedron& W) {
  require_dim(E.rows(), P.dim(), "pontryagin_diff image");
  require_dim(E.cols(), W.dim(), "pontryagin_diff image");
  const auto box = detail::axis_box(W);
  if (!box) detail::check_erosion_set(W);
  std::vector<double> sigma;
  sigma.reserve(static_cast<std::size_t>(P.rows()));
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const Vector dir = E.transpose() * P.H().row(i).transpose();
    if (box) {
      sigma.push_back(detail::box_support(*box, dir));
      continue;
    }
    if (dir.isZero(0.0)) {
      sigma.push_back(0.0);
      continue;
    }
    const auto s = support(W, dir);
    if (!s) throw GeometryError("unbounded erosion");
    sigma.push_back(*s);
  }
  return detail::erode(P, sigma);
}

/// Fourier-Motzkin elimination of one coordinate.
inline HPolyhedron eliminate(const HPolyhedron& P, Eigen::Index col) {
  const Eigen::Index n = P.dim();
  std::vector<Eigen::Index> pos, neg, zero;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const double a = P.H()(i, col);
    if (a > 1e-12)
      pos.push_back(i);
    else if (a < -1e-12)
      neg.push_back(i);
    else
      zero.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(zero.size() + pos.size() * neg.size());
  Matrix H(m, n - 1);
  Vector h(m);
  auto drop_col = [&](const Eigen::RowVectorXd& row) {
    Eigen::RowVectorXd out(n - 1);
    out << row.head(col), row.tail(n - col - 1);
    return out;
  };
  Eigen::Index r = 0;
  for (auto i : zero) {
    H.row(r) = drop_col(P.H().row(i));
    h(r++) = P.h()(i);
  }
  for (auto p : pos) {
    for (auto q : neg) {
      const double ap = P.H()(p, col);
      const double aq = -P.H()(q, col);
      Eigen::RowVectorXd row = P.H().row(p) / ap + P.H().row(q) / aq;
      H.row(r) = drop_col(row);
      h(r++) = P.h()(p) / ap + P.h()(q) / aq;
    }
  }
  return {std::move(H), std::move(h)};
}

/// Projection onto the coordinates `keep_dims` (in the given order).
inline HPolyhedron project(const HPolyhedron& P, std::span<const Eigen::Index> keep_dims) {
  const Eigen::Index n = P.dim();
  std::vector<bool> keep(static_cast<std::size_t>(n), false);
  for (auto d : keep_dims) {
    if (d < 0 || d >= n) throw std::invalid_argument("project: index out of range");
    if (keep[static_cast<std::size_t>(d)])
      throw std::invalid_argument("project: duplicate index");
    keep[static_cast<std::size_t>(d)] = true;
  }
  if (static_cast<Eigen::Index>(keep_dims.size()) >= n)
    throw std::invalid_argument("project: keep_dims must be a strict subset");
  const auto k = static_cast<Eigen::Index>(keep_dims.size());
  if (is_empty(P)) return HPolyhedron::empty_set(k);

  // Track the original index of each remaining column.
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) cols[static_cast<std::size_t>(i)] = i;
  HPolyhedron Q = remove_redundant(P);
  for (Eigen::Index d = n - 1; d >= 0; --d) {
    if (keep[static_cast<std::size_t>(d)]) continue;
    const auto it = std::find(cols.begin(), cols.end(), d);
    const auto c = static_cast<Eigen::Index>(it - cols.begin());
    Q = remove_redundant(eliminate(Q, c));
    cols.erase(it);
  }
  // Reorder to keep_dims order.
  Matrix H(Q.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto it = std::find(cols.begin(), cols.end(), keep_dims[static_cast<std::size_t>(j)]);
    H.col(j) = Q.H().col(it - cols.begin());
  }
  return {std::move(H), Q.h()};
}

inline HPolyhedron project(const HPolyhedron& P, std::initializer_list<Eigen::Index> keep_dims) {
  return project(P, std::span<const Eigen::Index>(keep_dims.begin(), keep_dims.size()));
}

/// Axis-aligned bounding box (lo, hi); throws if P is empty or unbounded.
inline std::pair<Vector, Vector> bounding_box(const HPolyhedron& P) {
  const Eigen::Index n = P.dim();
  Vector lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector e = Vector::Zero(n);
    e(i) = 1.0;
    const auto up = support(P, e);
    const auto down = support(P, -e);
    if (!up || !down) throw GeometryError("bounding_box: polyhedron is unbounded");
    hi(i) = *up;
    lo(i) = -*down;
  }
  return {lo, hi};
}

/// Corners of P when P is an axis-aligned box; throws otherwise.
inline std::vector<Vector> box_vertices(const HPolyhedron& P) {
  const auto [lo, hi] = bounding_box(P);
  const Eigen::Index n = P.dim();
  std::vector<Vector> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = (mask >> i) & 1U ? hi(i) : lo(i);
    if (!contains(P, v, 1e-9)) throw GeometryError("box_vertices: set is not an axis-aligned box");
    out.push_back(std::move(v));
  }
  return out;
}

/// True iff P is contained in Q (both nonempty-checked by the caller).
inline bool is_subset(const HPolyhedron& P, const HPolyhedron& Q, double tol = kMembershipTol) {
  require_dim(P.dim(), Q.dim(), "is_subset");
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    const auto s = support(P, Q.H().row(i).transpose());
    if (!s || *s > Q.h()(i) + tol) return false;
  }
  return true;
}

/// Finite union of polyhedra in a common ambient dimension. Empty pieces are
/// dropped on insertion; piece order is insertion order.
class PolyUnion {
 public:
  PolyUnion() = default;
  explicit PolyUnion(Eigen::Index dim) : dim_(dim) {}
  PolyUnion(Eigen::Index dim, const std::vector<HPolyhedron>& pieces) : dim_(dim) {
    for (const auto& p : pieces) add(p);
  }

  /// Appends P unless it is empty. Returns whether it was kept.
  bool add(const HPolyhedron& P) {
    require_dim(P.dim(), dim_, "PolyUnion::add");
    if (is_empty(P)) return false;
    pieces_.push_back(P);
    return true;
  }

  /// Appends without the emptiness check (caller guarantees nonempty).
  void add_unchecked(HPolyhedron P) {
    require_dim(P.dim(), dim_, "PolyUnion::add");
    pieces_.push_back(std::move(P));
  }

  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return pieces_.size(); }
  [[nodiscard]] bool empty() const { return pieces_.empty(); }
  [[nodiscard]] const std::vector<HPolyhedron>& pieces() const { return pieces_; }
  [[nodiscard]] const HPolyhedron& operator[](std::size_t i) const { return pieces_[i]; }

  [[nodiscard]] bool contains(const Vector& x, double tol = kMembershipTol) const {
    return find(x, tol).has_value();
  }

  /// Index of the first piece containing x.
  [[nodiscard]] std::optional<std::size_t> find(const Vector& x, double tol = kMembershipTol) const {
    require_dim(x.size(), dim_, "PolyUnion::contains");
    for (std::size_t i = 0; i < pieces_.size(); ++i)
      if (geometry::contains(pieces_[i], x, tol)) return i;
    return std::nullopt;
  }

  bool operator==(const PolyUnion& o) const { return dim_ == o.dim_ && pieces_ == o.pieces_; }

 private:
  Eigen::Index dim_ = 0;
  std::vector<HPolyhedron> pieces_;
};

inline std::pair<Vector, Vector> bounding_box(const PolyUnion& U) {
  if (U.empty()) throw GeometryError("bounding_box: union is empty");
  auto [lo, hi] = bounding_box(U[0]);
  for (std::size_t i = 1; i < U.size(); ++i) {
    const auto [l, h] = bounding_box(U[i]);
    lo = lo.cwiseMin(l);
    hi = hi.cwiseMax(h);
  }
  return {lo, hi};
}

struct SubsetEvidence {
  bool is_subset_evidence = true;
  std::optional<Vector> counterexample;
  std::size_t samples = 0;
};

/// Rejection-samples points of U1 in its bounding box and checks membership in U2.
inline SubsetEvidence sampled_subset(const PolyUnion& U1, const PolyUnion& U2,
                                     std::size_t n_samples, std::uint64_t seed) {
  require_dim(U1.dim(), U2.dim(), "sampled_subset");
  if (n_samples == 0) throw std::invalid_argument("sampled_subset: n_samples must be >= 1");
  if (U1.empty()) throw GeometryError("sampled_subset: bounding box does not intersect U1");
  const auto [lo, hi] = bounding_box(U1);
  Rng rng(seed, 0x5b5eULL);
  SubsetEvidence ev;
  const std::size_t max_draws = n_samples * 10000;
  Vector x(U1.dim());
  for (std::size_t draw = 0; draw < max_draws && ev.samples < n_samples; ++draw) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(lo(i), hi(i));
    if (!U1.contains(x, 0.0)) continue;
    ++ev.samples;
    if (!U2.contains(x)) {
      ev.is_subset_evidence = false;
      ev.counterexample = x;
      return ev;
    }
  }
  if (ev.samples == 0)
    throw GeometryError("sampled_subset: bounding box does not intersect U1");
  return ev;
}

// JSON: {"dim": n, "pieces": [{"H": [[...]], "h": [...]}]}

inline nlohmann::json matrix_to_json(const Matrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Format errors carry a JSON-pointer style location.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what) {}
};

inline Vector vector_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError(where + "/" + std::to_string(i), "expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& where,
                               std::optional<Eigen::Index> cols = std::nullopt) {
  if (!j.is_array()) throw FormatError(where, "expected an array of rows");
  const auto m = static_cast<Eigen::Index>(j.size());
  Eigen::Index n = cols.value_or(m > 0 && j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0);
  Matrix M(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::string w = where + "/" + std::to_string(i);
    const Vector row = vector_from_json(j[static_cast<std::size_t>(i)], w);
    if (row.size() != n) throw FormatError(w, "expected " + std::to_string(n) + " columns");
    M.row(i) = row.transpose();
  }
  return M;
}

inline nlohmann::json piece_to_json(const HPolyhedron& P) {
  return {{"H", matrix_to_json(P.H())}, {"h", vector_to_json(P.h())}};
}

inline HPolyhedron piece_from_json(const nlohmann::json& j, Eigen::Index dim,
                                   const std::string& where) {
  if (!j.is_object() || !j.contains("H") || !j.contains("h"))
    throw FormatError(where, "expected an object with fields H and h");
  Matrix H = matrix_from_json(j["H"], where + "/H", dim);
  Vector h = vector_from_json(j["h"], where + "/h");
  if (H.rows() != h.size()) throw FormatError(where, "H and h row counts differ");
  return {std::move(H), std::move(h)};
}

inline nlohmann::json to_json(const PolyUnion& U) {
  nlohmann::json pieces = nlohmann::json::array();
  for (const auto& p : U.pieces()) pieces.push_back(piece_to_json(p));
  return {{"dim", U.dim()}, {"pieces", std::move(pieces)}};
}

inline nlohmann::json to_json(const HPolyhedron& P) {
  return {{"dim", P.dim()}, {"pieces", nlohmann::json::array({piece_to_json(P)})}};
}

/// Reads the union format; pieces are kept verbatim (no emptiness pruning)
/// unless `prune_empty` is set.
inline PolyUnion union_from_json(const nlohmann::json& j, const std::string& where = "",
                                 bool prune_empty = true) {
  if (!j.is_object()) throw FormatError(where.empty() ? "/" : where, "expected an object");
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    throw FormatError(where + "/dim", "missing or non-integer");
  const auto dim = j["dim"].get<Eigen::Index>();
  if (dim <= 0) throw FormatError(where + "/dim", "must be positive");
  if (!j.contains("pieces") || !j["pieces"].is_array())
    throw FormatError(where + "/pieces", "missing or not an array");
  PolyUnion U(dim);
  for (std::size_t i = 0; i < j["pieces"].size(); ++i) {
    auto P = piece_from_json(j["pieces"][i], dim, where + "/pieces/" + std::to_string(i));
    if (prune_empty)
      U.add(P);
    else
      U.add_unchecked(std::move(P));
  }
  return U;
}

/// A single polyhedron: either {"H","h"} or a one-piece union object.
inline HPolyhedron polyhedron_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_object() && j.contains("pieces")) {
    const auto U = union_from_json(j, where, false);
    if (U.size() != 1) throw FormatError(where + "/pieces", "expected exactly one piece");
    return U[0];
  }
  const Eigen::Index dim =
      j.is_object() && j.contains("dim") ? j["dim"].get<Eigen::Index>()
      : (j.is_object() && j.contains("H") && j["H"].is_array() && !j["H"].empty() &&
         j["H"][0].is_array())
          ? static_cast<Eigen::Index>(j["H"][0].size())
          : 0;
  return piece_from_json(j, dim, where);
}

}  // namespace ragkit::geometry
