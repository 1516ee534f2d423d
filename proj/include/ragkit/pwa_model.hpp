#pragma once

// Uncertain piecewise-affine systems
//
//   x+ = sum_j wp_j (A_qj x + B_qj u + f_qj + E_qj wa),   q = mode_of(x),
//
// with wp on the unit simplex and wa in a mode-dependent polytope.

#include "ragkit/geometry.hpp"
#include "ragkit/hash.hpp"
#include "ragkit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ragkit::pwa {

using geometry::HPolyhedron;
using geometry::Matrix;
using geometry::Vector;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VertexSystem {
  Matrix A;
  Matrix B;
  Vector f;
  Matrix E;
};

struct ModeDef {
  HPolyhedron region;
  std::vector<VertexSystem> vertices;
  HPolyhedron U;
  HPolyhedron Wa;

  std::size_t n_p() const { return vertices.size(); }
};

struct Disturbance {
  Vector wp;
  Vector wa;
};

class PWAModel {
 public:
  /// Validates shapes, bounded Wa, and coverage of the working box by the
  /// regions (box vertices plus `coverage_samples` uniform draws).
  PWAModel(std::vector<ModeDef> modes, HPolyhedron working_box, int coverage_samples = 4000)
      : modes_(std::move(modes)), box_(std::move(working_box)) {
    if (modes_.empty()) throw ModelError("model has no modes");
    n_ = box_.dim();
    const auto& v0 = modes_.front().vertices;
    if (v0.empty()) throw ModelError("mode 1 has no vertex systems");
    m_ = v0.front().B.cols();
    for (std::size_t q = 0; q < modes_.size(); ++q) validate_mode(q);
    check_coverage(coverage_samples);
  }

  Eigen::Index state_dim() const { return n_; }
  Eigen::Index input_dim() const { return m_; }
  std::size_t num_modes() const { return modes_.size(); }
  const std::vector<ModeDef>& modes() const { return modes_; }
  const ModeDef& mode(std::size_t q) const {
    if (q >= modes_.size()) throw std::out_of_range("mode index " + std::to_string(q));
    return modes_[q];
  }
  const HPolyhedron& working_box() const { return box_; }

 private:
  void validate_mode(std::size_t q) {
    const auto& md = modes_[q];
    const std::string tag = "mode " + std::to_string(q + 1) + ": ";
    if (md.vertices.empty()) throw ModelError(tag + "no vertex systems");
    if (md.region.dim() != n_) throw ModelError(tag + "region dimension mismatch");
    if (md.U.dim() != m_) throw ModelError(tag + "input set dimension mismatch");
    const auto nw = md.Wa.dim();
    for (std::size_t j = 0; j < md.vertices.size(); ++j) {
      const auto& vs = md.vertices[j];
      const std::string vt = tag + "vertex " + std::to_string(j + 1) + ": ";
      if (vs.A.rows() != n_ || vs.A.cols() != n_) throw ModelError(vt + "A must be n x n");
      if (vs.B.rows() != n_ || vs.B.cols() != m_) throw ModelError(vt + "B must be n x m");
      if (vs.f.size() != n_) throw ModelError(vt + "f must have length n");
      if (vs.E.rows() != n_ || vs.E.cols() != nw) throw ModelError(vt + "E must be n x dim(Wa)");
    }
    if (geometry::is_empty(md.Wa)) throw ModelError(tag + "Wa is empty");
    for (Eigen::Index i = 0; i < nw; ++i) {
      Vector d = Vector::Zero(nw);
      d(i) = 1.0;
      if (!geometry::support(md.Wa, d) || !geometry::support(md.Wa, -d))
        throw ModelError(tag + "Wa is unbounded");
    }
  }

  bool covered(const Vector& x) const {
    for (const auto& md : modes_)
      if (geometry::contains(md.region, x)) return true;
    return false;
  }

  void check_coverage(int samples) const {
    const auto [lo, hi] = geometry::bounding_box(box_);
    Rng rng(0xc0e5, 0);
    auto fail = [](const Vector& x) {
      std::string s;
      for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x(i));
      throw ModelError("regions do not cover the working box at x = (" + s + ")");
    };
    for (const auto& v : geometry::box_vertices(box_))
      if (!covered(v)) fail(v);
    Vector x(n_);
    for (int s = 0; s < samples; ++s) {
      for (Eigen::Index i = 0; i < n_; ++i) x(i) = rng.uniform(lo(i), hi(i));
      if (geometry::contains(box_, x) && !covered(x)) fail(x);
    }
  }

  std::vector<ModeDef> modes_;
  HPolyhedron box_;
  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;
};

/// Lowest-index mode whose closed region contains x.
inline std::size_t mode_of(const PWAModel& model, const Vector& x) {
  geometry::require_dim(model.state_dim(), x.size(), "mode_of");
  for (std::size_t q = 0; q < model.num_modes(); ++q)
    if (geometry::contains(model.mode(q).region, x)) return q;
  throw ModelError("outside partition");
}

inline const std::vector<VertexSystem>& vertex_systems(const PWAModel& model, std::size_t q) {
  return model.mode(q).vertices;
}

inline void check_disturbance(const ModeDef& md, const Disturbance& w) {
  if (w.wp.size() != static_cast<Eigen::Index>(md.n_p()))
    throw ModelError("wp has length " + std::to_string(w.wp.size()) + ", expected " +
                     std::to_string(md.n_p()));
  if ((w.wp.array() < 0.0).any()) throw ModelError("wp has a negative entry");
  if (std::abs(w.wp.sum() - 1.0) > 1e-12) throw ModelError("wp does not sum to 1");
  if (w.wa.size() != md.Wa.dim()) throw ModelError("wa has the wrong dimension");
  if (!geometry::contains(md.Wa, w.wa)) throw ModelError("wa outside Wa");
}

/// One step of the true dynamics; u and w are checked against mode q(x).
inline Vector step(const PWAModel& model, const Vector& x, const Vector& u, const Disturbance& w) {
  const auto q = mode_of(model, x);
  const auto& md = model.mode(q);
  geometry::require_dim(model.input_dim(), u.size(), "step");
  if (!geometry::contains(md.U, u)) throw ModelError("u outside U");
  check_disturbance(md, w);
  Vector next = Vector::Zero(model.state_dim());
  for (std::size_t j = 0; j < md.n_p(); ++j) {
    const auto& vs = md.vertices[j];
    const double c = w.wp(static_cast<Eigen::Index>(j));
    if (c == 0.0) continue;
    next += c * (vs.A * x + vs.B * u + vs.f + vs.E * w.wa);
  }
  return next;
}

/// Uniform on the unit simplex (sorted uniforms).
inline Vector sample_simplex(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_simplex: n = 0");
  std::vector<double> cuts(n - 1);
  for (auto& c : cuts) c = rng.uniform();
  std::sort(cuts.begin(), cuts.end());
  Vector w(static_cast<Eigen::Index>(n));
  double prev = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    w(static_cast<Eigen::Index>(i)) = cuts[i] - prev;
    prev = cuts[i];
  }
  w(static_cast<Eigen::Index>(n - 1)) = 1.0 - prev;
  return w;
}

/// Uniform over a bounded polytope by rejection from its bounding box.
inline Vector sample_uniform(Rng& rng, const HPolyhedron& P) {
  const auto [lo, hi] = geometry::bounding_box(P);
  Vector x(P.dim());
  for (int tries = 0; tries < 100000; ++tries) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(lo(i), hi(i));
    if (geometry::contains(P, x, 0.0)) return x;
  }
  throw geometry::GeometryError("sample_uniform: rejection sampling failed");
}

inline Disturbance sample_disturbance(Rng& rng, const PWAModel& model, std::size_t q) {
  const auto& md = model.mode(q);
  return {sample_simplex(rng, md.n_p()), sample_uniform(rng, md.Wa)};
}

// JSON, tagged "format": "pwa-v1".

inline nlohmann::json to_json(const PWAModel& model) {
  using geometry::matrix_to_json;
  using geometry::piece_to_json;
  using geometry::vector_to_json;
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& md : model.modes()) {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& vs : md.vertices)
      verts.push_back({{"A", matrix_to_json(vs.A)},
                       {"B", matrix_to_json(vs.B)},
                       {"f", vector_to_json(vs.f)},
                       {"E", matrix_to_json(vs.E)}});
    modes.push_back({{"region", piece_to_json(md.region)},
                     {"U", piece_to_json(md.U)},
                     {"Wa", piece_to_json(md.Wa)},
                     {"vertices", std::move(verts)}});
  }
  return {{"format", "pwa-v1"},
          {"state_dim", model.state_dim()},
          {"input_dim", model.input_dim()},
          {"working_box", piece_to_json(model.working_box())},
          {"modes", std::move(modes)}};
}

inline PWAModel model_from_json(const nlohmann::json& j) {
  using geometry::FormatError;
  if (!j.is_object()) throw FormatError("/", "expected an object");
  if (!j.contains("format") || j["format"] != "pwa-v1")
    throw FormatError("/format", "expected \"pwa-v1\"");
  for (const char* k : {"state_dim", "input_dim"})
    if (!j.contains(k) || !j[k].is_number_integer() || j[k].get<long>() <= 0)
      throw FormatError(std::string("/") + k, "missing or not a positive integer");
  const auto n = j["state_dim"].get<Eigen::Index>();
  const auto m = j["input_dim"].get<Eigen::Index>();
  if (!j.contains("working_box")) throw FormatError("/working_box", "missing");
  auto box = geometry::piece_from_json(j["working_box"], n, "/working_box");
  if (!j.contains("modes") || !j["modes"].is_array() || j["modes"].empty())
    throw FormatError("/modes", "missing or empty");
  std::vector<ModeDef> modes;
  for (std::size_t q = 0; q < j["modes"].size(); ++q) {
    const auto& jm = j["modes"][q];
    const std::string w = "/modes/" + std::to_string(q);
    if (!jm.is_object()) throw FormatError(w, "expected an object");
    for (const char* k : {"region", "U", "Wa", "vertices"})
      if (!jm.contains(k)) throw FormatError(w + "/" + k, "missing");
    ModeDef md;
    md.region = geometry::piece_from_json(jm["region"], n, w + "/region");
    md.U = geometry::piece_from_json(jm["U"], m, w + "/U");
    md.Wa = geometry::polyhedron_from_json(jm["Wa"], w + "/Wa");
    if (!jm["vertices"].is_array() || jm["vertices"].empty())
      throw FormatError(w + "/vertices", "missing or empty");
    for (std::size_t v = 0; v < jm["vertices"].size(); ++v) {
      const auto& jv = jm["vertices"][v];
      const std::string wv = w + "/vertices/" + std::to_string(v);
      for (const char* k : {"A", "B", "f", "E"})
        if (!jv.contains(k)) throw FormatError(wv + "/" + k, "missing");
      md.vertices.push_back({geometry::matrix_from_json(jv["A"], wv + "/A", n),
                             geometry::matrix_from_json(jv["B"], wv + "/B", m),
                             geometry::vector_from_json(jv["f"], wv + "/f"),
                             geometry::matrix_from_json(jv["E"], wv + "/E", md.Wa.dim())});
    }
    modes.push_back(std::move(md));
  }
  return PWAModel(std::move(modes), std::move(box));
}

/// Fingerprint of the canonical JSON form.
inline std::string model_hash(const PWAModel& model) { return hex64(fnv1a64(to_json(model).dump())); }

}  // namespace ragkit::pwa
