#include "ragkit/scenario_msd.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace ragkit::msd {
namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

MsdEnv make_env(DisturbanceMode mode = DisturbanceMode::Random, std::optional<double> mass = std::nullopt) {
  const MsdParams p;
  return MsdEnv(p, build_constraint_polygon(p), mode, mass, 60);
}

TEST(MsdEnv, ReferenceAlternatesEveryPeriod) {
  const auto env = make_env();
  EXPECT_EQ(env.x_ref(0), 5.0);
  EXPECT_EQ(env.x_ref(59), 5.0);
  EXPECT_EQ(env.x_ref(60), 0.0);
  EXPECT_EQ(env.x_ref(119), 0.0);
  EXPECT_EQ(env.x_ref(120), 5.0);
  EXPECT_EQ(env.features(v2(2.5, -2.5), 0), Eigen::Vector3d(0.5, -0.5, 1.0));
  EXPECT_EQ(env.features(v2(2.5, -2.5), 61)(2), 0.0);
  EXPECT_THROW(MsdEnv(MsdParams{}, build_constraint_polygon(MsdParams{}), DisturbanceMode::Random, {}, 0),
               std::invalid_argument);
}

TEST(MsdEnv, ActionGridAndEncoding) {
  const auto env = make_env();
  const auto grid = env.action_grid();
  ASSERT_EQ(grid.size(), 21u);
  EXPECT_EQ(grid.front()(0), 0.0);
  EXPECT_EQ(grid[1](0), 0.5);
  EXPECT_EQ(grid.back()(0), 10.0);
  for (const auto& u : grid) {
    EXPECT_NEAR(env.decode_action(env.encode_action(u))(0), u(0), 1e-12);
    EXPECT_LE(std::abs(env.encode_action(u)(0)), 1.0);
  }
  EXPECT_EQ(env.decode_action(Vector::Constant(1, 3.0))(0), 10.0);
  EXPECT_EQ(env.decode_action(Vector::Constant(1, -3.0))(0), 0.0);
}

TEST(MsdEnv, RewardAndViolationFollowTheScenario) {
  const auto env = make_env();
  const MsdParams p;
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const Vector x = v2(rng.uniform(-1, 7), rng.uniform(-8, 8));
    const int t = static_cast<int>(rng.index(240));
    EXPECT_EQ(env.reward(x, Vector::Zero(1), t), reward(p, x, env.x_ref(t)));
    EXPECT_EQ(env.violates(x), !build_constraint_polygon(p).contains(x));
  }
  EXPECT_FALSE(env.violates(v2(5, 0.5)));
  EXPECT_TRUE(env.violates(v2(-0.1, 0)));
  EXPECT_TRUE(env.terminal(v2(7.5, 0)));
  EXPECT_FALSE(env.terminal(v2(6.5, 0)));
}

TEST(MsdEnv, DisturbanceModes) {
  const MsdParams p;
  Rng rng(3);
  const auto random = make_env();
  for (int i = 0; i < 200; ++i) {
    const auto wp = random.rollout_weights(rng);
    ASSERT_TRUE(wp.has_value());
    // The weight encodes a mass in [m_min, m_max].
    const double inv_m = (*wp)(0) / p.m_min + (*wp)(1) / p.m_max;
    EXPECT_GE(1.0 / inv_m, p.m_min - 1e-12);
    EXPECT_LE(1.0 / inv_m, p.m_max + 1e-12);
    const auto w = random.disturbance(v2(1, 1), 0, wp, rng);
    EXPECT_EQ(w.wp, *wp);
    EXPECT_LE(std::abs(w.wa(0)), p.wa_bound);
  }
  const auto adv = make_env(DisturbanceMode::Adversarial);
  EXPECT_FALSE(adv.rollout_weights(rng).has_value());
  EXPECT_EQ(adv.disturbance(v2(1, 2), 0, std::nullopt, rng).wa(0), 1.0);
  EXPECT_EQ(adv.disturbance(v2(1, -2), 0, std::nullopt, rng).wa(0), -1.0);
  EXPECT_EQ(adv.disturbance(v2(1, -2), 0, std::nullopt, rng).wp, v2(1, 0));

  const auto fixed = make_env(DisturbanceMode::Random, 1.3);
  EXPECT_EQ(*fixed.rollout_weights(rng), mass_weights(p, 1.3));
  EXPECT_THROW(make_env(DisturbanceMode::Random, 2.0), std::invalid_argument);
}

TEST(MsdEnv, InitialStatesComeFromTheStartSet) {
  const MsdParams p;
  PolyUnion small(2);
  small.add(geometry::HPolyhedron::box(v2(1, -0.5), v2(1.5, 0.5)));
  const MsdEnv env(p, small);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(small.contains(env.initial_state(rng)));
}

TEST(MsdEnv, StepMatchesMassOfFixedPlant) {
  // With the mass pinned, one step equals the Euler update of that mass.
  const MsdParams p;
  const auto env = make_env(DisturbanceMode::Random, 1.3);
  Rng rng(5);
  const auto wp = env.rollout_weights(rng);
  const Vector x = v2(1.0, 0.5);
  const auto w = env.disturbance(x, 0, wp, rng);
  const Vector next = pwa::step(env.model(), x, Vector::Constant(1, 4.0), w);
  const double m = 1.3, force = 4.0 + w.wa(0) - p.k1 * x(0) - p.c * x(1);
  EXPECT_NEAR(next(0), x(0) + p.T_s * x(1), 1e-12);
  EXPECT_NEAR(next(1), x(1) + p.T_s * force / m, 1e-12);
}

TEST(Experiments, NamesAndParsing) {
  EXPECT_EQ(experiment_names().size(), 4u);
  EXPECT_EQ(parse_disturbance("random"), DisturbanceMode::Random);
  EXPECT_EQ(parse_disturbance("adversarial"), DisturbanceMode::Adversarial);
  EXPECT_THROW(parse_disturbance("gusty"), std::invalid_argument);
  Experiments ex(ExperimentSetup{}, 1);
  EXPECT_THROW(ex.run("unknown"), std::invalid_argument);
  EXPECT_EQ(ex.variant_params().d, 5.5);
  EXPECT_NE(ex.derive(1), ex.derive(2));
  EXPECT_EQ(ex.derive(1), Experiments(ExperimentSetup{}, 1).derive(1));
}

}  // namespace
}  // namespace ragkit::msd
