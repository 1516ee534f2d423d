#include "oracles.hpp"
#include "ragkit/optim.hpp"

#include <gtest/gtest.h>

namespace ragkit::optim {
namespace {

using testing::kkt;
using testing::lp_vertex_oracle;
using testing::qp_grid_oracle;
using testing::random_lp;
using testing::random_qp;

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) M(i, j++) = v;
    ++i;
  }
  return M;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(SolveLp, LowerBoundedScalar) {
  // min x s.t. -x <= -1
  const auto out = solve_lp(LinearProgram(vec({1.0}), mat({{-1.0}}), vec({-1.0})));
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR((*out.solution)(0), 1.0, 1e-12);
  EXPECT_NEAR(*out.objective, 1.0, 1e-12);
}

TEST(SolveLp, ContradictoryBoundsAreInfeasible) {
  const auto out = solve_lp(LinearProgram(vec({1.0}), mat({{1.0}, {-1.0}}), vec({0.0, -1.0})));
  EXPECT_EQ(out.status, Status::Infeasible);
  EXPECT_FALSE(out.solution.has_value());
  EXPECT_GT(out.phase1_objective, 1e-9);
}

TEST(SolveLp, DetectsUnbounded) {
  const auto out = solve_lp(LinearProgram(vec({-1.0}), mat({{-1.0}}), vec({0.0})));
  EXPECT_EQ(out.status, Status::Unbounded);
}

TEST(SolveLp, VariableBoundsAreHonored) {
  LinearProgram lp(vec({-1.0, -2.0}), Matrix(0, 2), Vector(0), {{0.0, 3.0}, {-1.0, 0.5}});
  const auto out = solve_lp(lp);
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR((*out.solution)(0), 3.0, 1e-12);
  EXPECT_NEAR((*out.solution)(1), 0.5, 1e-12);
}

TEST(SolveLp, DimensionMismatchThrows) {
  EXPECT_THROW(LinearProgram(vec({1.0, 2.0}), mat({{1.0}}), vec({1.0})), std::invalid_argument);
}

TEST(SolveLp, DegenerateVertexTerminates) {
  // Several constraints through the optimum (0,0).
  const auto A = mat({{-1, 0}, {0, -1}, {-1, -1}, {-2, -1}, {-1, -2}, {1, 1}});
  const auto out = solve_lp(LinearProgram(vec({1.0, 1.0}), A, vec({0, 0, 0, 0, 0, 4})));
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR(*out.objective, 0.0, 1e-12);
}

TEST(SolveLp, MatchesExhaustiveBasisOracleWithKkt) {
  Rng rng(11);
  int optimal = 0, infeasible = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(6));
    const int m = 1 + static_cast<int>(rng.index(8));
    const auto lp = random_lp(rng, n, m);
    const auto oracle = lp_vertex_oracle(lp.c, lp.A, lp.b);
    const auto out = solve_lp(LinearProgram(lp.c, lp.A, lp.b));
    if (!oracle) {
      EXPECT_EQ(out.status, Status::Infeasible) << "trial " << trial;
      EXPECT_GT(out.phase1_objective, 1e-9);
      ++infeasible;
      continue;
    }
    ASSERT_TRUE(out.optimal()) << "trial " << trial;
    ++optimal;
    EXPECT_NEAR(*out.objective, *oracle, 1e-6) << "trial " << trial;
    const auto k = kkt(lp.c, lp.A, lp.b, *out.solution, *out.multipliers);
    EXPECT_LE(k.stationarity, 1e-8) << "trial " << trial;
    EXPECT_LE(k.primal, 1e-8) << "trial " << trial;
    EXPECT_LE(k.complementarity, 1e-8) << "trial " << trial;
    EXPECT_LE(k.dual, 1e-8) << "trial " << trial;
  }
  EXPECT_GT(optimal, 100);
  EXPECT_GT(infeasible, 10);
}

TEST(SolveLp, IsDeterministic) {
  Rng rng(3);
  const auto lp = random_lp(rng, 4, 6);
  const auto a = solve_lp(LinearProgram(lp.c, lp.A, lp.b));
  const auto b = solve_lp(LinearProgram(lp.c, lp.A, lp.b));
  ASSERT_EQ(a.status, b.status);
  if (a.optimal()) {
    EXPECT_EQ(*a.solution, *b.solution);
    EXPECT_EQ(a.iterations, b.iterations);
  }
}

TEST(SolveQp, ClipsToUpperBound) {
  // min (u-2)^2 s.t. 0 <= u <= 1
  QuadraticProgram qp(mat({{1.0}}), vec({2.0}), mat({{1.0}, {-1.0}}), vec({1.0, 0.0}));
  const auto out = solve_qp(qp);
  ASSERT_TRUE(out.optimal());
  EXPECT_NEAR((*out.solution)(0), 1.0, 1e-12);
  EXPECT_NEAR(*out.objective, 1.0, 1e-12);
}

TEST(SolveQp, FeasibleTargetIsReturnedUnchanged) {
  QuadraticProgram qp(mat({{2.0, 0.5}, {0.5, 1.0}}), vec({0.3, -0.2}),
                      mat({{1, 0}, {-1, 0}, {0, 1}, {0, -1}}), vec({1, 1, 1, 1}));
  const auto out = solve_qp(qp);
  ASSERT_TRUE(out.optimal());
  EXPECT_EQ(*out.solution, qp.target());
  EXPECT_EQ(*out.objective, 0.0);
}

TEST(SolveQp, RejectsIndefiniteOrAsymmetricCost) {
  EXPECT_THROW(QuadraticProgram(mat({{1.0, 0.0}, {0.0, -1.0}}), vec({0, 0}), Matrix(0, 2), Vector(0)),
               std::invalid_argument);
  EXPECT_THROW(QuadraticProgram(mat({{1.0, 0.3}, {0.0, 1.0}}), vec({0, 0}), Matrix(0, 2), Vector(0)),
               std::invalid_argument);
}

TEST(SolveQp, InfeasibleHasPositivePhaseOneObjective) {
  QuadraticProgram qp(mat({{1.0}}), vec({0.0}), mat({{1.0}, {-1.0}}), vec({-1.0, -1.0}));
  const auto out = solve_qp(qp);
  EXPECT_EQ(out.status, Status::Infeasible);
  EXPECT_GT(out.phase1_objective, 1e-9);
}

TEST(SolveQp, MatchesGridOracleWithKkt) {
  Rng rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(3));
    const int m = 1 + static_cast<int>(rng.index(12 - 2 * n + 1));
    const auto r = random_qp(rng, n, m);
    QuadraticProgram qp(r.S, r.target, r.A, r.b);
    const auto out = solve_qp(qp);
    ASSERT_TRUE(out.optimal()) << "trial " << trial;
    const auto oracle = qp_grid_oracle(r.S, r.target, r.A, r.b, 0.05);
    ASSERT_TRUE(oracle.has_value());
    EXPECT_NEAR(*out.objective, *oracle, 1e-4) << "trial " << trial;
    EXPECT_LE(*out.objective, *oracle + 1e-9) << "solver worse than grid, trial " << trial;
    const Vector grad = 2.0 * r.S * (*out.solution - r.target);
    const auto k = kkt(grad, r.A, r.b, *out.solution, *out.multipliers);
    EXPECT_LE(k.stationarity, 1e-8) << "trial " << trial;
    EXPECT_LE(k.primal, 1e-8) << "trial " << trial;
    EXPECT_LE(k.complementarity, 1e-8) << "trial " << trial;
    EXPECT_LE(k.dual, 1e-8) << "trial " << trial;
  }
}

}  // namespace
}  // namespace ragkit::optim
