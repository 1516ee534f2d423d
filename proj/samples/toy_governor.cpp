// A scalar two-mode system kept inside [-1.5, 1.5] while a nominal
// controller keeps asking for full positive input.

#include "ragkit/governor.hpp"
#include "ragkit/safe_set.hpp"

#include <cstdio>

using namespace ragkit;
using geometry::HPolyhedron;
using geometry::Matrix;
using geometry::Vector;

static Vector v1(double a) { return Vector::Constant(1, a); }
static Matrix m1(double a) { return Matrix::Constant(1, 1, a); }
static HPolyhedron interval(double lo, double hi) { return HPolyhedron::box(v1(lo), v1(hi)); }

int main() {
  // x+ = a x + u + 0.1 wa, with a in [1.1, 1.3] on x >= 0 and a = 0.9 below.
  pwa::ModeDef right, left;
  right.region = interval(0, 10);
  right.vertices = {{m1(1.1), m1(1), v1(0), m1(0.1)}, {m1(1.3), m1(1), v1(0), m1(0.1)}};
  left.region = interval(-10, 0);
  left.vertices = {{m1(0.9), m1(1), v1(0), m1(0.1)}};
  for (auto* md : {&right, &left}) {
    md->U = interval(-0.5, 0.5);
    md->Wa = interval(-1, 1);
  }
  const pwa::PWAModel model({right, left}, interval(-10, 10));

  geometry::PolyUnion X(1);
  X.add(interval(-1.5, 1.5));
  safe_set::SafeSetConfig cfg;
  cfg.k_max = 20;
  cfg.early_stop = true;
  const auto safe = safe_set::compute(model, X, cfg);
  const auto [lo, hi] = geometry::bounding_box(safe.set);
  std::printf("safe set after %d iterations: [%.4f, %.4f]\n", safe.k, lo(0), hi(0));

  const governor::Governor gov(governor::GovernorConfig(Matrix::Identity(1, 1), safe, model));
  Rng rng(1);
  Vector x = v1(0.0);
  std::printf("%4s %9s %7s %7s %s\n", "t", "x", "u_phi", "u_safe", "modified");
  for (int t = 0; t < 15; ++t) {
    const Vector u_phi = v1(0.5);
    const auto res = gov.govern(x, u_phi);
    std::printf("%4d %9.5f %7.3f %7.3f %d\n", t, x(0), u_phi(0), res.u_safe(0), res.modified ? 1 : 0);
    x = pwa::step(model, x, res.u_safe, pwa::sample_disturbance(rng, model, pwa::mode_of(model, x)));
  }
  std::printf("final x = %.5f, inside X: %s\n", x(0), X.contains(x) ? "yes" : "no");
}
