#pragma once

// Fully connected network with tanh hidden layers and a linear output layer,
// trained on mean-squared error by minibatch gradient descent with momentum.

#include "ragkit/geometry.hpp"
#include "ragkit/rng.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ragkit::learn {

using geometry::Matrix;
using geometry::Vector;

class DivergedError : public std::runtime_error {
 public:
  DivergedError(int epoch, std::vector<Eigen::Index> batch)
      : std::runtime_error("diverged"), epoch_(epoch), batch_(std::move(batch)) {}
  int epoch() const { return epoch_; }
  /// Sample indices of the offending minibatch.
  const std::vector<Eigen::Index>& batch() const { return batch_; }

 private:
  int epoch_;
  std::vector<Eigen::Index> batch_;
};

class Mlp {
 public:
  Mlp() = default;

  /// Glorot-uniform weights and zero biases drawn from `seed`.
  Mlp(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (int s : sizes_)
      if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double a = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
      Matrix W(sizes_[l + 1], sizes_[l]);
      for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.uniform(-a, a);
      W_.push_back(std::move(W));
      b_.push_back(Vector::Zero(sizes_[l + 1]));
    }
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return W_.size(); }
  const Matrix& weight(std::size_t l) const { return W_[l]; }
  const Vector& bias(std::size_t l) const { return b_[l]; }

  /// Columns of X are samples.
  Matrix forward(const Matrix& X) const {
    check_input(X);
    Matrix a = X;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix z = W_[l] * a;
      z.colwise() += b_[l];
      a = l + 1 < W_.size() ? Matrix(z.array().tanh()) : z;
    }
    return a;
  }

  Vector operator()(const Vector& x) const { return forward(x); }

  /// Mean over samples and outputs of the squared error, and its gradient
  /// with respect to every weight and bias.
  double loss_and_gradient(const Matrix& X, const Matrix& Y, std::vector<Matrix>& dW,
                           std::vector<Vector>& db) const {
    check_input(X);
    if (Y.rows() != output_dim() || Y.cols() != X.cols())
      throw std::invalid_argument("Mlp: target shape mismatch");
    const std::size_t L = W_.size();
    std::vector<Matrix> acts;
    acts.reserve(L + 1);
    acts.push_back(X);
    for (std::size_t l = 0; l < L; ++l) {
      Matrix z = W_[l] * acts.back();
      z.colwise() += b_[l];
      acts.push_back(l + 1 < L ? Matrix(z.array().tanh()) : z);
    }
    const Matrix err = acts.back() - Y;
    const double scale = 1.0 / static_cast<double>(Y.size());
    const double loss = err.squaredNorm() * scale;
    dW.resize(L);
    db.resize(L);
    Matrix delta = 2.0 * scale * err;
    for (std::size_t l = L; l-- > 0;) {
      dW[l] = delta * acts[l].transpose();
      db[l] = delta.rowwise().sum();
      if (l > 0) delta = (W_[l].transpose() * delta).array() * (1.0 - acts[l].array().square());
    }
    return loss;
  }

  double loss(const Matrix& X, const Matrix& Y) const { return (forward(X) - Y).squaredNorm() / static_cast<double>(Y.size()); }

  /// All parameters flattened layer by layer, weights (column-major) then bias.
  Vector parameters() const {
    Vector p(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      p.segment(k, W_[l].size()) = Eigen::Map<const Vector>(W_[l].data(), W_[l].size());
      k += W_[l].size();
      p.segment(k, b_[l].size()) = b_[l];
      k += b_[l].size();
    }
    return p;
  }

  void set_parameters(const Vector& p) {
    if (p.size() != parameter_count()) throw std::invalid_argument("Mlp: parameter count mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Eigen::Map<Vector>(W_[l].data(), W_[l].size()) = p.segment(k, W_[l].size());
      k += W_[l].size();
      b_[l] = p.segment(k, b_[l].size());
      k += b_[l].size();
    }
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  static Vector flatten(const std::vector<Matrix>& dW, const std::vector<Vector>& db) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < dW.size(); ++l) n += dW[l].size() + db[l].size();
    Vector p(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < dW.size(); ++l) {
      p.segment(k, dW[l].size()) = Eigen::Map<const Vector>(dW[l].data(), dW[l].size());
      k += dW[l].size();
      p.segment(k, db[l].size()) = db[l];
      k += db[l].size();
    }
    return p;
  }

  void apply_update(const std::vector<Matrix>& dW, const std::vector<Vector>& db) {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      W_[l] += dW[l];
      b_[l] += db[l];
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "mlp-v1";
    j["layer_sizes"] = sizes_;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (std::size_t l = 0; l < W_.size(); ++l) {
      j["weights"].push_back(geometry::matrix_to_json(W_[l]));
      j["biases"].push_back(geometry::vector_to_json(b_[l]));
    }
    return j;
  }

  static Mlp from_json(const nlohmann::json& j, const std::string& where = "") {
    if (!j.is_object() || j.value("format", "") != "mlp-v1")
      throw geometry::FormatError(where + "/format", "expected \"mlp-v1\"");
    if (!j.contains("layer_sizes") || !j["layer_sizes"].is_array())
      throw geometry::FormatError(where + "/layer_sizes", "expected an array");
    Mlp net;
    for (std::size_t i = 0; i < j["layer_sizes"].size(); ++i) {
      const auto& s = j["layer_sizes"][i];
      if (!s.is_number_integer() || s.get<int>() <= 0)
        throw geometry::FormatError(where + "/layer_sizes/" + std::to_string(i), "expected a positive integer");
      net.sizes_.push_back(s.get<int>());
    }
    if (net.sizes_.size() < 2) throw geometry::FormatError(where + "/layer_sizes", "need at least two layers");
    const std::size_t L = net.sizes_.size() - 1;
    for (const char* key : {"weights", "biases"})
      if (!j.contains(key) || !j[key].is_array() || j[key].size() != L)
        throw geometry::FormatError(where + "/" + key, "expected " + std::to_string(L) + " entries");
    for (std::size_t l = 0; l < L; ++l) {
      const std::string wl = where + "/weights/" + std::to_string(l);
      const std::string bl = where + "/biases/" + std::to_string(l);
      Matrix W = geometry::matrix_from_json(j["weights"][l], wl);
      Vector b = geometry::vector_from_json(j["biases"][l], bl);
      if (W.rows() != net.sizes_[l + 1] || W.cols() != net.sizes_[l])
        throw geometry::FormatError(wl, "shape does not match layer_sizes");
      if (b.size() != net.sizes_[l + 1]) throw geometry::FormatError(bl, "length does not match layer_sizes");
      if (!W.allFinite() || !b.allFinite()) throw geometry::FormatError(wl, "non-finite parameter");
      net.W_.push_back(std::move(W));
      net.b_.push_back(std::move(b));
    }
    return net;
  }

 private:
  void check_input(const Matrix& X) const {
    if (W_.empty()) throw std::logic_error("Mlp: network is uninitialized");
    if (X.rows() != input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
  }

  std::vector<int> sizes_;
  std::vector<Matrix> W_;
  std::vector<Vector> b_;
};

struct FitConfig {
  int epochs = 10;
  int batch_size = 256;
  double step = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct FitReport {
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

/// Minibatch gradient descent with heavy-ball momentum on the MSE. Each epoch
/// visits a fresh permutation of the columns of X.
inline FitReport fit_mlp(Mlp& net, const Matrix& X, const Matrix& Y, const FitConfig& cfg) {
  if (X.cols() == 0) throw std::invalid_argument("fit_mlp: dataset is empty");
  if (X.cols() != Y.cols()) throw std::invalid_argument("fit_mlp: inputs and targets differ in count");
  if (cfg.epochs < 0 || cfg.batch_size <= 0) throw std::invalid_argument("fit_mlp: bad epochs or batch size");
  Rng rng(cfg.seed, 0x66697400);
  const Eigen::Index n = X.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<Matrix> vW;
  std::vector<Vector> vb;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    vW.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
    vb.push_back(Vector::Zero(net.bias(l).size()));
  }
  FitReport report;
  std::vector<Matrix> dW;
  std::vector<Vector> db;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Matrix xb(X.rows(), m), yb(Y.rows(), m);
      for (Eigen::Index k = 0; k < m; ++k) {
        xb.col(k) = X.col(order[static_cast<std::size_t>(start + k)]);
        yb.col(k) = Y.col(order[static_cast<std::size_t>(start + k)]);
      }
      const double loss = net.loss_and_gradient(xb, yb, dW, db);
      if (!std::isfinite(loss))
        throw DivergedError(e, std::vector<Eigen::Index>(order.begin() + start, order.begin() + start + m));
      for (std::size_t l = 0; l < dW.size(); ++l) {
        vW[l] = cfg.momentum * vW[l] - cfg.step * dW[l];
        vb[l] = cfg.momentum * vb[l] - cfg.step * db[l];
      }
      net.apply_update(vW, vb);
      total += loss;
      ++batches;
    }
    report.epoch_loss.push_back(total / batches);
  }
  return report;
}

}  // namespace ragkit::learn
