#include "oracles.hpp"
#include "ragkit/geometry.hpp"

#include <gtest/gtest.h>

#include <array>

namespace ragkit::geometry {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

HPolyhedron interval(double lo, double hi) { return HPolyhedron::box(vec({lo}), vec({hi})); }

HPolyhedron halfline_le(double ub) {
  Matrix H(1, 1);
  H << 1.0;
  return {H, vec({ub})};
}

using testing::random_polytope;
using testing::raw_member;
using testing::uniform_point;

TEST(Contains, ClosedHalfline) {
  const auto P = halfline_le(1.0);
  EXPECT_TRUE(contains(P, vec({0.0})));
  EXPECT_TRUE(contains(P, vec({1.0})));
  EXPECT_FALSE(contains(P, vec({1.1})));
}

TEST(Contains, EmptySetContainsNothing) {
  Matrix H(2, 1);
  H << 1.0, -1.0;
  const HPolyhedron P(H, vec({1.0, -2.0}));
  EXPECT_FALSE(contains(P, vec({1.5})));
}

TEST(Contains, DimensionMismatchThrows) {
  EXPECT_THROW(contains(halfline_le(1.0), vec({0.0, 0.0})), std::invalid_argument);
}

TEST(IsEmpty, Basics) {
  EXPECT_FALSE(is_empty(halfline_le(1.0)));
  Matrix H(2, 1);
  H << 1.0, -1.0;
  EXPECT_TRUE(is_empty(HPolyhedron(H, vec({0.0, -1.0}))));
  EXPECT_FALSE(is_empty(HPolyhedron::universe(3)));
  // A single point is nonempty (closed halfspaces).
  EXPECT_FALSE(is_empty(HPolyhedron(H, vec({1.0, -1.0}))));
}

TEST(IsEmpty, AgreesWithGridScan) {
  Rng rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    HPolyhedron P = random_polytope(rng, 3, 4);
    const bool force_empty = trial % 2 == 1;
    if (force_empty) {
      // Two opposing slabs half a unit apart.
      Vector a = uniform_point(rng, -Vector::Ones(3), Vector::Ones(3)).normalized();
      const double s = rng.uniform(-0.5, 0.5);
      Matrix H(P.rows() + 2, 3);
      H << P.H(), a.transpose(), -a.transpose();
      Vector h(P.rows() + 2);
      h << P.h(), s, -s - 0.5;
      P = HPolyhedron(H, h);
    }
    bool found = false;
    Vector x(3);
    for (int i = 0; i <= 400 && !found; ++i)
      for (int j = 0; j <= 400 && !found; ++j)
        for (int k = 0; k <= 400 && !found; ++k) {
          x << -10 + 0.05 * i, -10 + 0.05 * j, -10 + 0.05 * k;
          found = raw_member(P.H(), P.h(), x);
        }
    EXPECT_EQ(is_empty(P), !found) << "trial " << trial;
  }
}

TEST(Intersect, Intervals) {
  const auto R = intersect(interval(0, 2), interval(1, 3));
  const auto [lo, hi] = bounding_box(R);
  EXPECT_NEAR(lo(0), 1.0, 1e-12);
  EXPECT_NEAR(hi(0), 2.0, 1e-12);
  EXPECT_EQ(R.rows(), 2);
}

TEST(Intersect, IsIdempotent) {
  Rng rng(8);
  const auto P = random_polytope(rng, 2, 5);
  const auto PP = intersect(P, P);
  for (int s = 0; s < 1000; ++s) {
    const Vector x = uniform_point(rng, Vector::Constant(2, -3.5), Vector::Constant(2, 3.5));
    EXPECT_EQ(contains(P, x), contains(PP, x));
  }
}

TEST(Intersect, SquareAndHalfplaneGiveTriangle) {
  Matrix H(1, 2);
  H << 1.0, 1.0;
  const HPolyhedron half(H, vec({1.0}));
  const auto T = intersect(HPolyhedron::box(vec({0, 0}), vec({1, 1})), half);
  EXPECT_EQ(T.rows(), 3);  // x >= 0, y >= 0, x + y <= 1
  Rng rng(1);
  for (int s = 0; s < 10000; ++s) {
    const Vector x = uniform_point(rng, Vector::Constant(2, -0.5), Vector::Constant(2, 1.5));
    const bool oracle = x(0) >= 0 && x(1) >= 0 && x(0) <= 1 && x(1) <= 1 && x(0) + x(1) <= 1;
    EXPECT_EQ(contains(T, x, 0.0), oracle) << x.transpose();
  }
}

TEST(PontryaginDiff, ErosionByPointIsIdentity) {
  Rng rng(4);
  const auto P = random_polytope(rng, 2, 4);
  const auto R = pontryagin_diff(P, HPolyhedron::box(Vector::Zero(2), Vector::Zero(2)));
  EXPECT_EQ(R.H(), P.H());
  EXPECT_TRUE(R.h().isApprox(P.h(), 1e-15));
}

TEST(PontryaginDiff, BoxErosionIsPerAxis) {
  const auto R = pontryagin_diff(HPolyhedron::box(vec({0, 0}), vec({1, 1})),
                                 HPolyhedron::box(vec({-0.1, -0.1}), vec({0.1, 0.1})));
  const auto [lo, hi] = bounding_box(R);
  EXPECT_NEAR(lo(0), 0.1, 1e-12);
  EXPECT_NEAR(lo(1), 0.1, 1e-12);
  EXPECT_NEAR(hi(0), 0.9, 1e-12);
  EXPECT_NEAR(hi(1), 0.9, 1e-12);
}

TEST(PontryaginDiff, UnboundedSubtrahendThrows) {
  EXPECT_THROW(pontryagin_diff(interval(0, 1), halfline_le(0.0)), GeometryError);
}

TEST(PontryaginDiff, LinearImageMatchesExplicitSet) {
  // E W with E = [0; 0.2], W = [-1, 1] is the segment {0} x [-0.2, 0.2].
  Matrix E(2, 1);
  E << 0.0, 0.2;
  const auto P = HPolyhedron::box(vec({0, -1}), vec({1, 1}));
  const auto a = pontryagin_diff(P, E, interval(-1, 1));
  const auto b = pontryagin_diff(P, HPolyhedron::box(vec({0, -0.2}), vec({0, 0.2})));
  EXPECT_TRUE(a.h().isApprox(b.h(), 1e-12));
}

TEST(PontryaginDiff, DefinitionalOracle) {
  Rng rng(21);
  for (int inst = 0; inst < 50; ++inst) {
    const auto P = random_polytope(rng, 2, 5);
    const Vector half = uniform_point(rng, Vector::Constant(2, 0.01), Vector::Constant(2, 0.25));
    const Vector mid = uniform_point(rng, Vector::Constant(2, -0.1), Vector::Constant(2, 0.1));
    const auto B = HPolyhedron::box(mid - half, mid + half);
    const auto R = pontryagin_diff(P, B);
    const auto verts = box_vertices(B);
    for (int s = 0; s < 10000; ++s) {
      const Vector x = uniform_point(rng, Vector::Constant(2, -3.5), Vector::Constant(2, 3.5));
      bool all_in = true;
      for (const auto& v : verts) all_in = all_in && raw_member(P.H(), P.h(), x + v);
      if (contains(R, x)) {
        for (const auto& v : verts) EXPECT_TRUE(contains(P, x + v, 1e-7));
      } else {
        EXPECT_FALSE(all_in) << "missed point " << x.transpose();
      }
    }
  }
}

TEST(PontryaginDiff, BoxClosedFormMatchesSupportLp) {
  Rng rng(29);
  for (int inst = 0; inst < 50; ++inst) {
    const auto P = random_polytope(rng, 3, 6);
    const Vector lo = uniform_point(rng, Vector::Constant(3, -0.3), Vector::Constant(3, 0.0));
    const Vector hi = lo + uniform_point(rng, Vector::Constant(3, 0.0), Vector::Constant(3, 0.3));
    const auto B = HPolyhedron::box(lo, hi);
    // A loose diagonal row hides the box shape and forces the LP path.
    Matrix D(1, 3);
    D << 1.0, 1.0, 1.0;
    const auto B_lp = stack(B, HPolyhedron(D, vec({10.0})));
    EXPECT_LE((pontryagin_diff(P, B).h() - pontryagin_diff(P, B_lp).h()).cwiseAbs().maxCoeff(), 1e-9);
    Matrix E(3, 2);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) E(i, j) = rng.uniform(-1.0, 1.0);
    const auto W = HPolyhedron::box(lo.head(2), hi.head(2));
    Matrix D2(1, 2);
    D2 << 1.0, -1.0;
    const auto W_lp = stack(W, HPolyhedron(D2, vec({10.0})));
    EXPECT_LE((pontryagin_diff(P, E, W).h() - pontryagin_diff(P, E, W_lp).h()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PontryaginDiff, DefinitionalOracleNonBox) {
  // Erosion by a triangle, checked at its three vertices.
  Rng rng(31);
  Matrix T(3, 2);
  T << -1.0, 0.0, 0.0, -1.0, 1.0, 1.0;
  const HPolyhedron B(T, vec({0.0, 0.0, 0.3}));
  const std::array<Vector, 3> verts{vec({0, 0}), vec({0.3, 0}), vec({0, 0.3})};
  for (int inst = 0; inst < 20; ++inst) {
    const auto P = random_polytope(rng, 2, 5);
    const auto R = pontryagin_diff(P, B);
    for (int s = 0; s < 5000; ++s) {
      const Vector x = uniform_point(rng, Vector::Constant(2, -3.5), Vector::Constant(2, 3.5));
      bool all_in = true;
      for (const auto& v : verts) all_in = all_in && raw_member(P.H(), P.h(), x + v);
      if (contains(R, x)) {
        for (const auto& v : verts) EXPECT_TRUE(contains(P, x + v, 1e-7));
      } else {
        EXPECT_FALSE(all_in) << "missed point " << x.transpose();
      }
    }
  }
}

TEST(Translate, Basics) {
  const auto R = translate(interval(0, 1), vec({1.0}));
  const auto [lo, hi] = bounding_box(R);
  EXPECT_NEAR(lo(0), 1.0, 1e-15);
  EXPECT_NEAR(hi(0), 2.0, 1e-15);
  const auto same = translate(interval(0, 1), vec({0.0}));
  EXPECT_EQ(same, interval(0, 1));
}

TEST(Translate, InverseComposition) {
  Rng rng(2);
  const auto P = random_polytope(rng, 3, 4);
  const Vector t = uniform_point(rng, -Vector::Ones(3), Vector::Ones(3));
  const auto back = translate(translate(P, t), -t);
  for (int s = 0; s < 1000; ++s) {
    const Vector x = uniform_point(rng, Vector::Constant(3, -3.5), Vector::Constant(3, 3.5));
    EXPECT_EQ(contains(P, x), contains(back, x));
  }
}

TEST(AffinePreimage, IdentityAndScaling) {
  Rng rng(6);
  const auto P = random_polytope(rng, 2, 3);
  EXPECT_EQ(affine_preimage(P, Matrix::Identity(2, 2)), P);
  Matrix M(1, 1);
  M << 2.0;
  const auto R = affine_preimage(halfline_le(1.0), M);
  EXPECT_TRUE(contains(R, vec({0.5})));
  EXPECT_FALSE(contains(R, vec({0.5 + 1e-6})));
}

TEST(AffinePreimage, DefinitionalMembership) {
  Rng rng(7);
  const auto P = random_polytope(rng, 2, 4);
  Matrix M(2, 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) M(i, j) = rng.uniform(-1, 1);
  const Vector off = uniform_point(rng, -Vector::Ones(2), Vector::Ones(2));
  const auto R = affine_preimage(P, M, off);
  for (int s = 0; s < 10000; ++s) {
    const Vector z = uniform_point(rng, Vector::Constant(3, -3), Vector::Constant(3, 3));
    EXPECT_EQ(contains(R, z, 0.0), raw_member(P.H(), P.h(), M * z + off) &&
                                       contains(P, M * z + off, 0.0));
  }
  EXPECT_THROW(affine_preimage(P, Matrix::Identity(3, 3)), std::invalid_argument);
}

TEST(CartesianProduct, Basics) {
  const auto one = cartesian_product({interval(0, 1)});
  EXPECT_EQ(one, interval(0, 1));
  const auto sq = cartesian_product({interval(0, 1), interval(0, 1)});
  EXPECT_TRUE(contains(sq, vec({0.5, 0.5})));
  EXPECT_FALSE(contains(sq, vec({0.5, 1.5})));
  EXPECT_THROW(cartesian_product(std::span<const HPolyhedron>{}), std::invalid_argument);
}

TEST(CartesianProduct, ComponentwiseOracle) {
  Rng rng(12);
  std::vector<HPolyhedron> parts;
  std::vector<std::pair<double, double>> bounds;
  for (int k = 0; k < 5; ++k) {
    const double a = rng.uniform(-2, 1);
    const double b = a + rng.uniform(0.1, 2);
    parts.push_back(interval(a, b));
    bounds.emplace_back(a, b);
  }
  const auto P = cartesian_product(parts);
  ASSERT_EQ(P.dim(), 5);
  for (int s = 0; s < 1000; ++s) {
    const Vector x = uniform_point(rng, Vector::Constant(5, -2.5), Vector::Constant(5, 3.5));
    bool oracle = true;
    for (int k = 0; k < 5; ++k) oracle = oracle && x(k) >= bounds[k].first && x(k) <= bounds[k].second;
    EXPECT_EQ(contains(P, x, 0.0), oracle);
  }
}

TEST(Project, TriangleToInterval) {
  Matrix H(3, 2);
  H << 1, 1, -1, 0, 0, -1;
  const HPolyhedron P(H, vec({1, 0, 0}));
  const auto R = project(P, {0});
  const auto [lo, hi] = bounding_box(R);
  EXPECT_NEAR(lo(0), 0.0, 1e-12);
  EXPECT_NEAR(hi(0), 1.0, 1e-12);
}

TEST(Project, IndependentVariableDropsCleanly) {
  const auto P = cartesian_product({interval(-1, 2), interval(5, 6)});
  const auto R = project(P, {0});
  EXPECT_EQ(R.rows(), 2);
  const auto [lo, hi] = bounding_box(R);
  EXPECT_NEAR(lo(0), -1.0, 1e-12);
  EXPECT_NEAR(hi(0), 2.0, 1e-12);
}

TEST(Project, RejectsNonStrictSubset) {
  EXPECT_THROW(project(interval(0, 1), {0}), std::invalid_argument);
}

TEST(Project, KeepsRequestedOrder) {
  const auto P = cartesian_product({interval(0, 1), interval(2, 3), interval(4, 5)});
  const auto R = project(P, {2, 0});
  EXPECT_TRUE(contains(R, vec({4.5, 0.5})));
  EXPECT_FALSE(contains(R, vec({0.5, 4.5})));
}

using testing::lift_exists;

TEST(Project, SoundAndCompleteOnRandomPolytopes) {
  Rng rng(31);
  for (int inst = 0; inst < 50; ++inst) {
    const auto P = random_polytope(rng, 3, 6);
    const Eigen::Index drop = static_cast<Eigen::Index>(rng.index(3));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < 3; ++j)
      if (j != drop) keep.push_back(j);
    const auto R = project(P, keep);
    // Forward: (x, u) in P implies x in R.
    const auto [plo, phi] = bounding_box(P);
    int forward = 0;
    while (forward < 1000) {
      const Vector z = uniform_point(rng, plo, phi);
      if (!contains(P, z, 0.0)) continue;
      ++forward;
      const Vector x = (Vector(2) << z(keep[0]), z(keep[1])).finished();
      EXPECT_TRUE(contains(R, x)) << "instance " << inst;
    }
    // Lift: x in R implies some u with (x, u) in P.
    const auto [rlo, rhi] = bounding_box(R);
    int lifted = 0;
    while (lifted < 1000) {
      const Vector x = uniform_point(rng, rlo, rhi);
      if (!contains(R, x, 0.0)) continue;
      ++lifted;
      EXPECT_TRUE(lift_exists(P, x, drop)) << "instance " << inst << " x " << x.transpose();
    }
  }
}

TEST(RemoveRedundant, DropsLooserDuplicate) {
  Matrix H(2, 1);
  H << 1.0, 1.0;
  const auto R = remove_redundant(HPolyhedron(H, vec({1.0, 2.0})));
  ASSERT_EQ(R.rows(), 1);
  EXPECT_NEAR(R.h()(0), 1.0, 1e-15);
}

TEST(RemoveRedundant, KeepsIrredundantRows) {
  const auto sq = HPolyhedron::box(vec({0, 0}), vec({1, 1}));
  EXPECT_EQ(remove_redundant(sq).rows(), 4);
}

TEST(RemoveRedundant, EmptyBecomesCanonical) {
  Matrix H(2, 1);
  H << 1.0, -1.0;
  const auto R = remove_redundant(HPolyhedron(H, vec({0.0, -1.0})));
  EXPECT_TRUE(is_empty(R));
  EXPECT_EQ(R, HPolyhedron::empty_set(1));
}

TEST(RemoveRedundant, PreservesMembershipAndIsMinimal) {
  Rng rng(17);
  for (int inst = 0; inst < 50; ++inst) {
    const int n = 2 + static_cast<int>(rng.index(2));
    auto P = random_polytope(rng, n, 4);
    // Pile on redundant rows: scaled copies, loosened copies, combinations.
    Matrix H(P.rows() * 3, n);
    Vector h(P.rows() * 3);
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      H.row(3 * i) = P.H().row(i);
      h(3 * i) = P.h()(i);
      H.row(3 * i + 1) = 2.5 * P.H().row(i);
      h(3 * i + 1) = 2.5 * P.h()(i) + rng.uniform(0.0, 1.0);
      const Eigen::Index j = (i + 1) % P.rows();
      H.row(3 * i + 2) = P.H().row(i) + P.H().row(j);
      h(3 * i + 2) = P.h()(i) + P.h()(j) + rng.uniform(0.0, 0.5);
    }
    const HPolyhedron Big(H, h);
    const auto R = remove_redundant(Big);
    EXPECT_LE(R.rows(), P.rows());
    const Vector lo = Vector::Constant(n, -3.5), hi = Vector::Constant(n, 3.5);
    for (int s = 0; s < 10000; ++s) {
      const Vector x = uniform_point(rng, lo, hi);
      EXPECT_EQ(contains(Big, x), contains(R, x)) << "instance " << inst;
    }
    // No surviving row can be dropped.
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
      Matrix Hm(R.rows() - 1, n);
      Vector hm(R.rows() - 1);
      Eigen::Index r = 0;
      for (Eigen::Index k = 0; k < R.rows(); ++k) {
        if (k == i) continue;
        Hm.row(r) = R.H().row(k);
        hm(r++) = R.h()(k);
      }
      const auto s = support(HPolyhedron(Hm, hm), R.H().row(i).transpose());
      EXPECT_TRUE(!s || *s > R.h()(i) - 1e-7);
    }
  }
}

TEST(RemoveRedundant, PlanarHullMatchesLpTest) {
  // Bounded and unbounded planar sets; the row sets from the hull path and
  // the one-LP-per-row path must coincide.
  Rng rng(41);
  for (int inst = 0; inst < 200; ++inst) {
    const bool bounded = inst % 2 == 0;
    HPolyhedron P = bounded ? random_polytope(rng, 2, 8) : HPolyhedron::universe(2);
    if (!bounded) {
      Matrix H(6, 2);
      Vector h(6);
      for (Eigen::Index i = 0; i < 6; ++i) {
        // Normals in the upper half-plane leave the set unbounded below.
        const double th = rng.uniform(0.1, 3.0);
        H(i, 0) = std::cos(th);
        H(i, 1) = std::sin(th);
        h(i) = rng.uniform(0.2, 2.0);
      }
      P = HPolyhedron(H, h);
    }
    const auto fast = remove_redundant(P);
    const auto slow = detail::remove_redundant_sequential(normalize(P));
    ASSERT_EQ(fast.rows(), slow.rows()) << "instance " << inst;
    EXPECT_TRUE(fast.H().isApprox(slow.H(), 1e-12));
    EXPECT_TRUE(fast.h().isApprox(slow.h(), 1e-12));
  }
}

TEST(SampledSubset, Basics) {
  const PolyUnion a(1, {interval(0, 2)});
  const PolyUnion b(1, {interval(0, 1)});
  EXPECT_TRUE(sampled_subset(a, a, 1000, 1).is_subset_evidence);
  const auto ev = sampled_subset(a, b, 1000, 1);
  ASSERT_FALSE(ev.is_subset_evidence);
  ASSERT_TRUE(ev.counterexample.has_value());
  EXPECT_GT((*ev.counterexample)(0), 1.0);
  EXPECT_LE((*ev.counterexample)(0), 2.0);
  EXPECT_THROW(sampled_subset(PolyUnion(1), a, 10, 1), GeometryError);
  EXPECT_THROW(sampled_subset(a, b, 0, 1), std::invalid_argument);
}

TEST(PolyUnion, PrunesEmptyPiecesAndKeepsOrder) {
  Matrix H(2, 1);
  H << 1.0, -1.0;
  PolyUnion U(1, {interval(0, 1), HPolyhedron(H, vec({0.0, -1.0})), interval(2, 3)});
  ASSERT_EQ(U.size(), 2u);
  EXPECT_EQ(U.find(vec({2.5})), std::optional<std::size_t>(1));
  EXPECT_EQ(U.find(vec({1.0})), std::optional<std::size_t>(0));
  EXPECT_FALSE(U.contains(vec({1.5})));
}

TEST(Json, UnionRoundTripPreservesMembership) {
  Rng rng(44);
  PolyUnion U(2, {random_polytope(rng, 2, 3), random_polytope(rng, 2, 4)});
  const auto text = to_json(U).dump();
  const auto V = union_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(V.size(), U.size());
  for (int s = 0; s < 1000; ++s) {
    const Vector x = uniform_point(rng, Vector::Constant(2, -3.5), Vector::Constant(2, 3.5));
    EXPECT_EQ(U.contains(x), V.contains(x));
  }
}

TEST(Json, ReportsFieldLocation) {
  const auto bad = nlohmann::json::parse(R"({"dim": 2, "pieces": [{"H": [[1, 0], [0]], "h": [1, 1]}]})");
  try {
    union_from_json(bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("/pieces/0/H/1"), std::string::npos) << e.what();
  }
}

TEST(Determinism, OperationsAreBitIdentical) {
  Rng r1(99), r2(99);
  const auto P1 = random_polytope(r1, 3, 6);
  const auto P2 = random_polytope(r2, 3, 6);
  EXPECT_EQ(project(P1, {0, 2}), project(P2, {0, 2}));
  EXPECT_EQ(remove_redundant(P1), remove_redundant(P2));
}

}  // namespace
}  // namespace ragkit::geometry
