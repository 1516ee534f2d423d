#pragma once

// Dense LP (two-phase simplex, Bland's rule) and strictly convex QP
// (primal active set) solvers for small problems.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ragkit::optim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Status { Optimal, Infeasible, Unbounded };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
  }
  return "?";
}

/// Thrown when the iteration cap is exceeded.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveOutcome {
  Status status = Status::Infeasible;
  std::optional<Vector> solution;
  std::optional<double> objective;
  std::size_t iterations = 0;
  // Sum of artificial variables at the end of phase 1 (zero when feasible).
  double phase1_objective = 0.0;
  // Multipliers mu >= 0 for the inequality rows, satisfying
  // grad f(x) + A^T mu = 0 at an optimum.
  std::optional<Vector> multipliers;

  [[nodiscard]] bool optimal() const { return status == Status::Optimal; }
};

struct Bound {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

/// min c^T x  s.t.  A x <= b, optional per-variable bounds. Variables are free
/// unless bounded.
struct LinearProgram {
  Vector c;
  Matrix A;
  Vector b;
  std::vector<Bound> bounds;  // empty, or one entry per variable

  LinearProgram() = default;
  LinearProgram(Vector cost, Matrix a, Vector rhs, std::vector<Bound> bnds = {})
      : c(std::move(cost)), A(std::move(a)), b(std::move(rhs)), bounds(std::move(bnds)) {
    validate();
  }

  void validate() const {
    if (A.cols() != c.size() || A.rows() != b.size())
      throw std::invalid_argument("LinearProgram: inconsistent dimensions");
    if (!bounds.empty() && static_cast<Eigen::Index>(bounds.size()) != c.size())
      throw std::invalid_argument("LinearProgram: bounds size must match variable count");
  }
};

struct SolverSettings {
  std::size_t max_iterations = 100000;
  double pivot_tol = 1e-11;
  double cost_tol = 1e-10;
  double feasibility_tol = 1e-9;
};

namespace detail {

// Dense simplex tableau over standard form  min c'y, Ty = r, y >= 0.
// Columns: 2n split variables (x = y+ - y-), m slacks, then artificials.
class Tableau {
 public:
  Tableau(const Matrix& A, const Vector& b, const SolverSettings& s)
      : m_(A.rows()), n_(A.cols()), s_(s) {
    sign_.assign(static_cast<std::size_t>(m_), 1.0);
    Eigen::Index n_art = 0;
    for (Eigen::Index i = 0; i < m_; ++i)
      if (b(i) < 0) ++n_art;
    art_begin_ = 2 * n_ + m_;
    cols_ = art_begin_ + n_art;
    T_.setZero(m_ + 1, cols_ + 1);
    basis_.resize(static_cast<std::size_t>(m_));
    Eigen::Index next_art = art_begin_;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double sg = b(i) < 0 ? -1.0 : 1.0;
      sign_[static_cast<std::size_t>(i)] = sg;
      T_.block(i, 0, 1, n_) = sg * A.row(i);
      T_.block(i, n_, 1, n_) = -sg * A.row(i);
      T_(i, 2 * n_ + i) = sg;
      T_(i, cols_) = sg * b(i);
      if (sg < 0) {
        T_(i, next_art) = 1.0;
        basis_[static_cast<std::size_t>(i)] = next_art++;
      } else {
        basis_[static_cast<std::size_t>(i)] = 2 * n_ + i;
      }
    }
    active_rows_.assign(static_cast<std::size_t>(m_), true);
  }

  // Returns the phase-1 objective (sum of artificials).
  double phase1(std::size_t& iters) {
    if (art_begin_ == cols_) return 0.0;
    T_.row(m_).setZero();
    for (Eigen::Index i = 0; i < m_; ++i)
      if (basis_[static_cast<std::size_t>(i)] >= art_begin_) T_.row(m_) -= T_.row(i);
    for (Eigen::Index j = art_begin_; j < cols_; ++j) T_(m_, j) = 0.0;
    // Artificials never re-enter once they leave.
    run(art_begin_, iters);
    const double z = -T_(m_, cols_);
    return z < 0 ? 0.0 : z;
  }

  // Pivot remaining artificials out of the basis; rows that cannot be
  // repaired are linearly dependent and are deactivated.
  void drive_out_artificials() {
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (!active_rows_[static_cast<std::size_t>(i)]) continue;
      if (basis_[static_cast<std::size_t>(i)] < art_begin_) continue;
      Eigen::Index col = -1;
      for (Eigen::Index j = 0; j < art_begin_; ++j) {
        if (std::abs(T_(i, j)) > s_.pivot_tol * 1e3) {
          col = j;
          break;
        }
      }
      if (col >= 0)
        pivot(i, col);
      else
        active_rows_[static_cast<std::size_t>(i)] = false;
    }
  }

  // Returns false when unbounded.
  bool phase2(const Vector& c, std::size_t& iters) {
    T_.row(m_).setZero();
    for (Eigen::Index j = 0; j < n_; ++j) {
      T_(m_, j) = c(j);
      T_(m_, n_ + j) = -c(j);
    }
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (!active_rows_[static_cast<std::size_t>(i)]) continue;
      const Eigen::Index bj = basis_[static_cast<std::size_t>(i)];
      const double cb = T_(m_, bj);
      if (cb != 0.0) T_.row(m_) -= cb * T_.row(i);
    }
    return run(art_begin_, iters);
  }

  [[nodiscard]] Vector primal() const {
    Vector x = Vector::Zero(n_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (!active_rows_[static_cast<std::size_t>(i)]) continue;
      const Eigen::Index bj = basis_[static_cast<std::size_t>(i)];
      if (bj < n_)
        x(bj) += T_(i, cols_);
      else if (bj < 2 * n_)
        x(bj - n_) -= T_(i, cols_);
    }
    return x;
  }

  // Reduced costs of slack columns are the inequality multipliers.
  [[nodiscard]] Vector multipliers() const {
    Vector mu(m_);
    for (Eigen::Index i = 0; i < m_; ++i) mu(i) = std::max(0.0, T_(m_, 2 * n_ + i));
    return mu;
  }

  [[nodiscard]] const std::vector<Eigen::Index>& basis() const { return basis_; }
  [[nodiscard]] const std::vector<bool>& active_rows() const { return active_rows_; }
  [[nodiscard]] Eigen::Index split_count() const { return 2 * n_; }

 private:
  // Bland's rule: lowest-index improving column, ratio ties to lowest basic index.
  bool run(Eigen::Index col_limit, std::size_t& iters) {
    for (;;) {
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < col_limit; ++j) {
        if (T_(m_, j) < -s_.cost_tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m_; ++i) {
        if (!active_rows_[static_cast<std::size_t>(i)]) continue;
        const double a = T_(i, enter);
        if (a > s_.pivot_tol) best = std::min(best, std::max(0.0, T_(i, cols_)) / a);
      }
      if (!std::isfinite(best)) return false;
      const double tie = best + 1e-12 * (1.0 + best);
      Eigen::Index leave = -1;
      for (Eigen::Index i = 0; i < m_; ++i) {
        if (!active_rows_[static_cast<std::size_t>(i)]) continue;
        const double a = T_(i, enter);
        if (a <= s_.pivot_tol || std::max(0.0, T_(i, cols_)) / a > tie) continue;
        if (leave < 0 ||
            basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])
          leave = i;
      }
      pivot(leave, enter);
      if (++iters > s_.max_iterations) throw SolverError("stalled");
    }
  }

  void pivot(Eigen::Index r, Eigen::Index c) {
    T_.row(r) /= T_(r, c);
    for (Eigen::Index i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = T_(i, c);
      if (f != 0.0) T_.row(i) -= f * T_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = c;
  }

  Eigen::Index m_, n_, art_begin_ = 0, cols_ = 0;
  SolverSettings s_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> T_;
  std::vector<Eigen::Index> basis_;
  std::vector<double> sign_;
  std::vector<bool> active_rows_;
};

inline void append_bounds(const LinearProgram& lp, Matrix& A, Vector& b) {
  if (lp.bounds.empty()) {
    A = lp.A;
    b = lp.b;
    return;
  }
  Eigen::Index extra = 0;
  for (const auto& bd : lp.bounds) extra += std::isfinite(bd.lower) + std::isfinite(bd.upper);
  const Eigen::Index n = lp.A.cols();
  A.resize(lp.A.rows() + extra, n);
  b.resize(lp.b.size() + extra);
  A.topRows(lp.A.rows()) = lp.A;
  b.head(lp.b.size()) = lp.b;
  Eigen::Index r = lp.A.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& bd = lp.bounds[static_cast<std::size_t>(j)];
    if (std::isfinite(bd.upper)) {
      A.row(r).setZero();
      A(r, j) = 1.0;
      b(r++) = bd.upper;
    }
    if (std::isfinite(bd.lower)) {
      A.row(r).setZero();
      A(r, j) = -1.0;
      b(r++) = -bd.lower;
    }
  }
}

}  // namespace detail

/// Two-phase dense simplex with Bland's anti-cycling rule.
inline SolveOutcome solve_lp(const LinearProgram& lp, const SolverSettings& settings = {}) {
  lp.validate();
  Matrix A;
  Vector b;
  detail::append_bounds(lp, A, b);
  const Eigen::Index n = A.cols();
  const Eigen::Index m = A.rows();

  SolveOutcome out;
  if (m == 0) {
    if (lp.c.isZero(0.0)) {
      out.status = Status::Optimal;
      out.solution = Vector::Zero(n);
      out.objective = 0.0;
      out.multipliers = Vector::Zero(lp.A.rows());
    } else {
      out.status = Status::Unbounded;
    }
    return out;
  }

  detail::Tableau tab(A, b, settings);
  std::size_t iters = 0;
  out.phase1_objective = tab.phase1(iters);
  if (out.phase1_objective > settings.feasibility_tol) {
    out.status = Status::Infeasible;
    out.iterations = iters;
    return out;
  }
  tab.drive_out_artificials();
  const bool bounded = tab.phase2(lp.c, iters);
  out.iterations = iters;
  if (!bounded) {
    out.status = Status::Unbounded;
    return out;
  }

  Vector x = tab.primal();

  // Refine the basic solution from the original data: the rows whose slacks
  // are nonbasic are tight, so x solves those equations exactly.
  {
    std::vector<Eigen::Index> tight;
    std::vector<bool> slack_basic(static_cast<std::size_t>(m), false);
    for (std::size_t i = 0; i < tab.basis().size(); ++i) {
      if (!tab.active_rows()[i]) continue;
      const Eigen::Index bj = tab.basis()[i];
      if (bj >= tab.split_count() && bj < tab.split_count() + m)
        slack_basic[static_cast<std::size_t>(bj - tab.split_count())] = true;
    }
    for (Eigen::Index i = 0; i < m; ++i)
      if (!slack_basic[static_cast<std::size_t>(i)]) tight.push_back(i);
    if (!tight.empty()) {
      Matrix At(static_cast<Eigen::Index>(tight.size()), n);
      Vector bt(static_cast<Eigen::Index>(tight.size()));
      for (std::size_t k = 0; k < tight.size(); ++k) {
        At.row(static_cast<Eigen::Index>(k)) = A.row(tight[k]);
        bt(static_cast<Eigen::Index>(k)) = b(tight[k]);
      }
      // Minimum-norm correction keeps x on the same face.
      const Vector resid = bt - At * x;
      const Vector dx = At.completeOrthogonalDecomposition().solve(resid);
      const Vector cand = x + dx;
      const double viol_old = std::max(0.0, (A * x - b).maxCoeff());
      const double viol_new = std::max(0.0, (A * cand - b).maxCoeff());
      if (cand.allFinite() && viol_new <= viol_old) x = cand;
    }
  }

  Vector mu_all = tab.multipliers();
  out.status = Status::Optimal;
  out.objective = lp.c.dot(x);
  out.solution = std::move(x);
  out.multipliers = mu_all.head(lp.A.rows());
  return out;
}

/// min (u - target)^T S (u - target)  s.t.  A u <= b, with S positive definite.
class QuadraticProgram {
 public:
  QuadraticProgram(Matrix S, Vector target, Matrix A, Vector b)
      : S_(std::move(S)), target_(std::move(target)), A_(std::move(A)), b_(std::move(b)) {
    const Eigen::Index n = S_.rows();
    if (S_.cols() != n || target_.size() != n || A_.cols() != n || A_.rows() != b_.size())
      throw std::invalid_argument("QuadraticProgram: inconsistent dimensions");
    const double scale = std::max(1.0, S_.cwiseAbs().maxCoeff());
    if ((S_ - S_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("QuadraticProgram: S must be symmetric");
    if (Eigen::LLT<Matrix>(S_).info() != Eigen::Success)
      throw std::invalid_argument("QuadraticProgram: S must be positive definite");
  }

  [[nodiscard]] const Matrix& S() const { return S_; }
  [[nodiscard]] const Vector& target() const { return target_; }
  [[nodiscard]] const Matrix& A() const { return A_; }
  [[nodiscard]] const Vector& b() const { return b_; }
  [[nodiscard]] Eigen::Index dim() const { return S_.rows(); }

  [[nodiscard]] double objective(const Vector& u) const {
    const Vector d = u - target_;
    return d.dot(S_ * d);
  }

 private:
  Matrix S_;
  Vector target_;
  Matrix A_;
  Vector b_;
};

/// Primal active-set method started from a phase-1 LP vertex.
inline SolveOutcome solve_qp(const QuadraticProgram& qp, const SolverSettings& settings = {}) {
  const Eigen::Index n = qp.dim();
  const Eigen::Index m = qp.A().rows();
  const Matrix G = 2.0 * qp.S();
  const Vector g = -2.0 * qp.S() * qp.target();

  SolveOutcome out;

  // Target already feasible: it is the unique minimizer.
  if (m == 0 || (qp.A() * qp.target() - qp.b()).maxCoeff() <= 0.0) {
    out.status = Status::Optimal;
    out.solution = qp.target();
    out.objective = 0.0;
    out.multipliers = Vector::Zero(m);
    return out;
  }

  const auto phase1 = solve_lp(LinearProgram(Vector::Zero(n), qp.A(), qp.b()), settings);
  out.phase1_objective = phase1.phase1_objective;
  out.iterations = phase1.iterations;
  if (!phase1.optimal()) {
    out.status = Status::Infeasible;
    return out;
  }

  Vector x = *phase1.solution;
  std::vector<Eigen::Index> working;
  Vector mu_w;

  auto solve_kkt = [&](Vector& p, Vector& mu) {
    const auto k = static_cast<Eigen::Index>(working.size());
    Matrix K = Matrix::Zero(n + k, n + k);
    Vector rhs = Vector::Zero(n + k);
    K.topLeftCorner(n, n) = G;
    for (Eigen::Index r = 0; r < k; ++r) {
      K.block(0, n + r, n, 1) = qp.A().row(working[static_cast<std::size_t>(r)]).transpose();
      K.block(n + r, 0, 1, n) = qp.A().row(working[static_cast<std::size_t>(r)]);
    }
    rhs.head(n) = -(G * x + g);
    const Vector sol = K.fullPivLu().solve(rhs);
    p = sol.head(n);
    mu = sol.tail(k);
  };

  std::size_t iters = 0;
  for (;;) {
    if (++iters > settings.max_iterations) throw SolverError("stalled");
    Vector p, mu;
    solve_kkt(p, mu);
    const double pscale = 1.0 + x.cwiseAbs().maxCoeff();
    if (p.cwiseAbs().maxCoeff() <= 1e-12 * pscale) {
      // Polish onto the working-set face.
      x += p;
      Eigen::Index drop = -1;
      double most_negative = -1e-12;
      for (Eigen::Index r = 0; r < mu.size(); ++r) {
        if (mu(r) < most_negative) {
          most_negative = mu(r);
          drop = r;
        }
      }
      if (drop < 0) {
        mu_w = mu;
        break;
      }
      working.erase(working.begin() + drop);
      continue;
    }
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      bool in_w = false;
      for (auto w : working)
        if (w == i) in_w = true;
      if (in_w) continue;
      const double ap = qp.A().row(i).dot(p);
      if (ap <= 1e-14 * (1.0 + p.norm())) continue;
      const double step = std::max(0.0, (qp.b()(i) - qp.A().row(i).dot(x)) / ap);
      if (step < alpha) {
        alpha = step;
        blocking = i;
      }
    }
    x += alpha * p;
    if (blocking >= 0) working.push_back(blocking);
  }

  Vector mu_full = Vector::Zero(m);
  for (std::size_t r = 0; r < working.size(); ++r)
    mu_full(working[r]) = std::max(0.0, mu_w(static_cast<Eigen::Index>(r)));

  out.status = Status::Optimal;
  out.iterations += iters;
  out.objective = qp.objective(x);
  out.solution = std::move(x);
  out.multipliers = std::move(mu_full);
  return out;
}

}  // namespace ragkit::optim
