#include "oracles.hpp"
#include "ragkit/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace ragkit::learn {
namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.uniform(lo, hi);
  return M;
}

void check_gradient(const std::vector<int>& sizes, std::uint64_t seed) {
  EXPECT_LT(testing::mlp_gradient_error(sizes, seed), 1e-5) << "shape with " << sizes.size() << " layers";
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  check_gradient({3, 5, 1}, 1);
  check_gradient({2, 4, 3, 2}, 2);
  check_gradient({4, 1}, 3);
}

TEST(Mlp, GradientOnNetworkShapesInUse) {
  // Q-network (features plus action) and explicit policy (features only).
  check_gradient({4, 64, 64, 1}, 4);
  check_gradient({3, 64, 64, 1}, 5);
}

TEST(Mlp, ForwardIsDeterministicAndShaped) {
  const Mlp a({3, 8, 2}, 9), b({3, 8, 2}, 9), c({3, 8, 2}, 10);
  Rng rng(1);
  const Matrix X = random_matrix(rng, 3, 5);
  const Matrix Ya = a.forward(X);
  EXPECT_EQ(Ya.rows(), 2);
  EXPECT_EQ(Ya.cols(), 5);
  EXPECT_EQ(Ya, b.forward(X));
  EXPECT_NE(Ya, c.forward(X));
  EXPECT_EQ(Vector(Ya.col(2)), a(Vector(X.col(2))));
  EXPECT_THROW(a.forward(Matrix::Zero(2, 1)), std::invalid_argument);
  EXPECT_THROW(Mlp({3}, 0), std::invalid_argument);
  EXPECT_THROW(Mlp({3, 0, 1}, 0), std::invalid_argument);
}

TEST(FitMlp, ConstantTarget) {
  Rng rng(2);
  const Matrix X = random_matrix(rng, 2, 500);
  const Matrix Y = Matrix::Constant(1, 500, 0.7);
  Mlp net({2, 16, 1}, 3);
  fit_mlp(net, X, Y, {200, 50, 1e-2, 0.9, 4});
  EXPECT_LT(net.loss(X, Y), 1e-4);
  const Matrix Xt = random_matrix(rng, 2, 100);
  EXPECT_LT(net.loss(Xt, Matrix::Constant(1, 100, 0.7)), 1e-4);
}

TEST(FitMlp, IdentityOnUnitInterval) {
  Rng rng(5);
  const Matrix X = random_matrix(rng, 1, 1000, 0, 1);
  Mlp net({1, 16, 1}, 6);
  const auto report = fit_mlp(net, X, X, {300, 32, 1e-2, 0.9, 7});
  const Matrix Xt = random_matrix(rng, 1, 1000, 0, 1);
  EXPECT_LT(net.loss(Xt, Xt), 1e-3);
  // Loss over the last 10 epochs does not trend upward.
  const auto& l = report.epoch_loss;
  ASSERT_EQ(l.size(), 300u);
  EXPECT_LE(l.back(), l[l.size() - 10] * 1.05);
}

TEST(FitMlp, ReproducibleForFixedSeed) {
  Rng rng(8);
  const Matrix X = random_matrix(rng, 2, 300);
  const Matrix Y = X.colwise().sum();
  Mlp a({2, 8, 1}, 1), b({2, 8, 1}, 1);
  fit_mlp(a, X, Y, {5, 32, 1e-2, 0.9, 11});
  fit_mlp(b, X, Y, {5, 32, 1e-2, 0.9, 11});
  EXPECT_EQ(a.parameters(), b.parameters());
}

TEST(FitMlp, DivergenceReportsBatch) {
  Rng rng(9);
  Matrix X = random_matrix(rng, 1, 64);
  Matrix Y = random_matrix(rng, 1, 64);
  Y(0, 17) = std::numeric_limits<double>::quiet_NaN();
  Mlp net({1, 4, 1}, 2);
  try {
    fit_mlp(net, X, Y, {3, 8, 1e-2, 0.9, 1});
    FAIL() << "expected DivergedError";
  } catch (const DivergedError& e) {
    EXPECT_STREQ(e.what(), "diverged");
    EXPECT_EQ(e.epoch(), 0);
    EXPECT_NE(std::find(e.batch().begin(), e.batch().end(), 17), e.batch().end());
  }
}

TEST(FitMlp, RejectsEmptyData) {
  Mlp net({1, 1}, 0);
  EXPECT_THROW(fit_mlp(net, Matrix(1, 0), Matrix(1, 0), {}), std::invalid_argument);
  EXPECT_THROW(fit_mlp(net, Matrix::Zero(1, 3), Matrix::Zero(1, 2), {}), std::invalid_argument);
}

TEST(MlpJson, RoundTrip) {
  const Mlp net({3, 7, 2}, 12);
  const auto j = net.to_json();
  const Mlp back = Mlp::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.layer_sizes(), net.layer_sizes());
  EXPECT_EQ(back.parameters(), net.parameters());
}

TEST(MlpJson, ReportsFieldPaths) {
  auto j = Mlp({2, 3, 1}, 1).to_json();
  j["weights"][1] = nlohmann::json::array({nlohmann::json::array({1.0, 2.0})});
  try {
    Mlp::from_json(j, "policy");
    FAIL() << "expected FormatError";
  } catch (const geometry::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("policy/weights/1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Mlp::from_json(nlohmann::json{{"format", "other"}}), geometry::FormatError);
}

}  // namespace
}  // namespace ragkit::learn
