#pragma once

// Output files: CSV time series, JSON documents and run manifests.

#include "ragkit/hash.hpp"
#include "ragkit/learn.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ragkit::io {

namespace fs = std::filesystem;
using geometry::Vector;

inline const char* kToolkitVersion = "0.1.0";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that round-trips the double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

/// Parses JSON, turning syntax errors into a message with line and column.
inline nlohmann::json read_json(const fs::path& p) {
  const std::string text = read_file(p);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw geometry::FormatError(p.string() + ":" + std::to_string(line) + ":" + std::to_string(col), "invalid JSON");
  }
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

inline void append_vector(std::string& row, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row += "," + fmt(v(i));
}

/// Columns: t, x..., u_phi..., u_safe..., mode (1-based), wp..., wa...,
/// modified, objective, reward, violation.
inline std::string trajectory_csv(const learn::RolloutResult& r, Eigen::Index n, Eigen::Index m, Eigen::Index np,
                                  Eigen::Index na) {
  std::string out = "t";
  auto names = [&](const char* base, Eigen::Index k) {
    for (Eigen::Index i = 1; i <= k; ++i) out += std::string(",") + base + std::to_string(i);
  };
  names("x", n);
  names("u_phi", m);
  names("u_safe", m);
  out += ",mode";
  names("wp", np);
  names("wa", na);
  out += ",modified,objective,reward,violation\n";
  for (const auto& s : r.steps) {
    std::string row = std::to_string(s.t);
    append_vector(row, s.x);
    append_vector(row, s.decision.u_phi);
    append_vector(row, s.decision.u_safe);
    row += "," + std::to_string(s.mode + 1);
    append_vector(row, s.w.wp);
    append_vector(row, s.w.wa);
    row += std::string(",") + (s.decision.modified ? "1" : "0") + "," + fmt(s.decision.objective) + "," +
           fmt(s.reward) + "," + (s.violation ? "1" : "0");
    out += row + "\n";
  }
  return out;
}

inline std::string history_csv(const std::vector<learn::EpisodeStats>& h) {
  std::string out = "episode,mean_reward,violation_rate,violations,transitions\n";
  for (const auto& e : h)
    out += std::to_string(e.episode) + "," + fmt(e.mean_reward) + "," + fmt(e.violation_rate) + "," +
           std::to_string(e.violations) + "," + std::to_string(e.transitions) + "\n";
  return out;
}

/// Record of one CLI run. Output hashes cover file contents only, so reruns
/// with the same inputs reproduce them even though wall-clock differs.
class Manifest {
 public:
  explicit Manifest(std::vector<std::string> argv) : start_(std::chrono::steady_clock::now()) {
    j_["command_line"] = std::move(argv);
    j_["toolkit_version"] = kToolkitVersion;
    j_["inputs"] = nlohmann::json::object();
    j_["seeds"] = nlohmann::json::object();
    j_["outputs"] = nlohmann::json::array();
  }

  void input(const std::string& role, const fs::path& p) { j_["inputs"][role] = {{"path", p.string()}, {"hash", file_hash(p)}}; }
  void input_text(const std::string& role, const std::string& text) {
    j_["inputs"][role] = {{"hash", hex64(fnv1a64(text))}};
  }
  void seed(const std::string& name, std::uint64_t s) { j_["seeds"][name] = s; }
  void output(const fs::path& p) {
    j_["outputs"].push_back({{"path", p.filename().string()}, {"hash", file_hash(p)}});
  }

  void write(const fs::path& p) {
    j_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json(p, j_);
  }

 private:
  nlohmann::json j_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ragkit::io
