#pragma once

// Mass-spring-damper soft-landing benchmark: Euler-discretized PWA model,
// the non-convex state constraint, the input bound and the RL reward.

#include "ragkit/geometry.hpp"
#include "ragkit/pwa_model.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ragkit::msd {

using geometry::HPolyhedron;
using geometry::Matrix;
using geometry::PolyUnion;
using geometry::Vector;

struct MsdParams {
  double c = 0.8;
  double x_m = 1.75;
  double k1 = 1.0;
  double k2 = 0.8;
  double T_s = 0.1;
  double d = 5.0;
  double v_max = 5.0;
  double F_max = 10.0;
  double x_c = 3.3;
  double eps_land = 0.5;
  double beta = 2.95;  // magnitude; the funnel widens away from the wall
  double m_min = 0.5;
  double m_max = 1.5;
  double wa_bound = 1.0;
  // Working box, covering every constraint with margin.
  double box_x_lo = -1.0, box_x_hi = 7.0, box_v = 8.0;
  // Reward weights.
  double w1 = 1.0, w2 = 1.0;

  void validate() const {
    for (double v : {c, x_m, k1, k2, T_s, d, v_max, F_max, x_c, eps_land, m_min, m_max, wa_bound})
      if (!(v > 0.0)) throw std::invalid_argument("MsdParams: parameters must be positive");
    if (!(x_c < d)) throw std::invalid_argument("MsdParams: need x_c < d");
    if (!(eps_land < v_max)) throw std::invalid_argument("MsdParams: need eps_land < v_max");
    if (!(m_min <= m_max)) throw std::invalid_argument("MsdParams: need m_min <= m_max");
    if (beta < 0.0) throw std::invalid_argument("MsdParams: beta is a magnitude");
  }
};

/// Adaptation scenario: heavier load, farther station.
struct MsdVariant {
  double m = 1.3;
  double d = 5.5;
};

inline MsdParams apply_variant(MsdParams p, const MsdVariant& v) {
  p.d = v.d;
  return p;
}

/// Simplex weight that reproduces a fixed mass: 1/m = wp1/m_min + wp2/m_max.
inline Vector mass_weights(const MsdParams& p, double m) {
  if (m < p.m_min || m > p.m_max) throw std::invalid_argument("mass outside [m_min, m_max]");
  const double inv_min = 1.0 / p.m_min, inv_max = 1.0 / p.m_max;
  const double w1 = inv_min == inv_max ? 1.0 : (1.0 / m - inv_max) / (inv_min - inv_max);
  Vector wp(2);
  wp << w1, 1.0 - w1;
  return wp;
}

inline pwa::PWAModel build_model(const MsdParams& p) {
  p.validate();
  const double Ts = p.T_s;
  auto vertex = [&](double k, double offset, double m) {
    pwa::VertexSystem vs;
    vs.A = Matrix(2, 2);
    vs.A << 1.0, Ts, -k * Ts / m, 1.0 - p.c * Ts / m;
    vs.B = Matrix(2, 1);
    vs.B << 0.0, Ts / m;
    vs.f = Vector(2);
    vs.f << 0.0, offset * Ts / m;
    vs.E = vs.B;
    return vs;
  };
  auto slab = [](double lo, double hi) {
    // lo/hi may be infinite: only finite sides become rows.
    Matrix H(0, 2);
    Vector h(0);
    auto add = [&](double a, double b) {
      H.conservativeResize(H.rows() + 1, 2);
      h.conservativeResize(h.size() + 1);
      H.row(H.rows() - 1) << a, 0.0;
      h(h.size() - 1) = b;
    };
    if (std::isfinite(hi)) add(1.0, hi);
    if (std::isfinite(lo)) add(-1.0, -lo);
    return HPolyhedron(H, h);
  };
  const HPolyhedron U = HPolyhedron::box(Vector::Constant(1, 0.0), Vector::Constant(1, p.F_max));
  const HPolyhedron Wa =
      HPolyhedron::box(Vector::Constant(1, -p.wa_bound), Vector::Constant(1, p.wa_bound));
  const double inf = std::numeric_limits<double>::infinity();
  const double shift = (p.k1 - p.k2) * p.x_m;
  std::vector<pwa::ModeDef> modes(3);
  modes[0].region = slab(-p.x_m, p.x_m);
  modes[1].region = slab(p.x_m, inf);
  modes[2].region = slab(-inf, -p.x_m);
  const double ks[3] = {p.k1, p.k2, p.k2};
  const double offs[3] = {0.0, -shift, shift};
  for (int q = 0; q < 3; ++q) {
    modes[q].vertices = {vertex(ks[q], offs[q], p.m_min), vertex(ks[q], offs[q], p.m_max)};
    modes[q].U = U;
    modes[q].Wa = Wa;
  }
  Vector lo(2), hi(2);
  lo << p.box_x_lo, -p.box_v;
  hi << p.box_x_hi, p.box_v;
  return pwa::PWAModel(std::move(modes), HPolyhedron::box(lo, hi));
}

/// Two pieces: the cruise box left of x_c and the landing funnel up to d.
inline PolyUnion build_constraint_polygon(const MsdParams& p) {
  p.validate();
  Vector lo(2), hi(2);
  lo << 0.0, -p.v_max;
  hi << p.x_c, p.v_max;
  const HPolyhedron cruise = HPolyhedron::box(lo, hi);
  Matrix H(4, 2);
  Vector h(4);
  const double top = p.eps_land + p.beta * p.d;
  H << p.beta, 1.0,   // v <= eps + beta (d - x)
      p.beta, -1.0,   // -v <= eps + beta (d - x)
      -1.0, 0.0,      // x >= x_c
      1.0, 0.0;       // x <= d
  h << top, top, -p.x_c, p.d;
  return PolyUnion(2, {cruise, HPolyhedron(H, h)});
}

/// Velocity bound of the soft-landing constraint at position x (the funnel
/// formula is used for every x > x_c, so it turns negative past d).
inline double velocity_bound(const MsdParams& p, double x) {
  return x <= p.x_c ? p.v_max : p.eps_land + p.beta * (p.d - x);
}

inline bool velocity_constraint_holds(const MsdParams& p, double x, double v) {
  if (x <= p.x_c && std::abs(v) <= p.v_max) return true;
  if (x >= p.x_c && std::abs(v) <= p.eps_land + p.beta * (p.d - x)) return true;
  return false;
}

/// Closest velocity bound in the direction of motion.
inline double boundary_velocity(const MsdParams& p, double x, double v) {
  const double b = velocity_bound(p, x);
  return v > 0.0 ? b : -b;
}

/// w1 R1 + w2 R2, evaluated at the state.
inline double reward(const MsdParams& p, const Vector& state, double x_ref) {
  const double x = state(0), v = state(1);
  const double r1 = -(x - x_ref) * (x - x_ref);
  double r2 = 0.0;
  if (!velocity_constraint_holds(p, x, v)) {
    const double vb = boundary_velocity(p, x, v);
    r2 = -(v - vb) * (v - vb);
  }
  return p.w1 * r1 + p.w2 * r2;
}

/// Pushes along the current motion with the lightest mass.
inline pwa::Disturbance adversarial_disturbance(const MsdParams& p, const Vector& state) {
  pwa::Disturbance w;
  w.wp = Vector(2);
  w.wp << 1.0, 0.0;
  w.wa = Vector::Constant(1, state(1) >= 0.0 ? p.wa_bound : -p.wa_bound);
  return w;
}

inline MsdParams params_from_json(const nlohmann::json& j) {
  MsdParams p;
  if (!j.is_object()) throw geometry::FormatError("/", "expected an object");
  auto get = [&](const char* k, double& dst) {
    if (!j.contains(k)) return;
    if (!j[k].is_number()) throw geometry::FormatError(std::string("/") + k, "expected a number");
    dst = j[k].get<double>();
  };
  get("c", p.c);
  get("x_m", p.x_m);
  get("k1", p.k1);
  get("k2", p.k2);
  get("T_s", p.T_s);
  get("d", p.d);
  get("v_max", p.v_max);
  get("F_max", p.F_max);
  get("x_c", p.x_c);
  get("eps_land", p.eps_land);
  get("beta", p.beta);
  get("m_min", p.m_min);
  get("m_max", p.m_max);
  get("wa_bound", p.wa_bound);
  get("w1", p.w1);
  get("w2", p.w2);
  get("box_x_lo", p.box_x_lo);
  get("box_x_hi", p.box_x_hi);
  get("box_v", p.box_v);
  p.validate();
  return p;
}

inline nlohmann::json params_to_json(const MsdParams& p) {
  return {{"c", p.c},         {"x_m", p.x_m},       {"k1", p.k1},           {"k2", p.k2},
          {"T_s", p.T_s},     {"d", p.d},           {"v_max", p.v_max},     {"F_max", p.F_max},
          {"x_c", p.x_c},     {"eps_land", p.eps_land}, {"beta", p.beta},   {"m_min", p.m_min},
          {"m_max", p.m_max}, {"wa_bound", p.wa_bound}, {"w1", p.w1},       {"w2", p.w2},
          {"box_x_lo", p.box_x_lo}, {"box_x_hi", p.box_x_hi}, {"box_v", p.box_v}};
}

}  // namespace ragkit::msd
