#pragma once

// Finite-state controllers with direct probability parameterization.
// Per (z, y) pair the first n_actions-1 action probabilities are free
// parameters and the last action takes the residual mass; internal
// transitions are either fully parameterized the same way (FREE) or tied to
// a single memory-retention scalar (TIED_MEMORY): with probability p the
// internal state is kept, otherwise it is refreshed to the index of the
// current observation. Reactive policies are the |Z| = 1 special case.

#include "pomdpgrad/random.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pomdpgrad {

using Eigen::VectorXd;

enum class TieMode { FREE, TIED_MEMORY };

inline constexpr double kDefaultLo = 0.001;
inline constexpr double kDefaultHi = 0.999;

struct ScoreEntry {
  int index;
  double value;
};
using ScoreEntries = std::vector<ScoreEntry>;

// Contiguous parameter block whose sum is constrained so that the residual
// probability stays inside the box.
struct ParamBlock {
  int start;
  int len;
};

class FscPolicy {
 public:
  FscPolicy(int n_obs, int n_actions, int n_internal, TieMode tie)
      : n_obs_(n_obs), n_actions_(n_actions), n_z_(n_internal), tie_(tie) {
    if (n_obs < 1 || n_actions < 1 || n_internal < 1)
      throw std::invalid_argument("policy space sizes must be positive");
    if (n_actions > 64 || n_internal > 64)
      throw std::invalid_argument("action/internal spaces larger than 64 unsupported");
    if (tie == TieMode::TIED_MEMORY && n_internal != n_obs)
      throw std::invalid_argument(
          "TIED_MEMORY requires n_internal == n_obs (refresh targets the "
          "observation index)");
    mu_count_ = n_z_ * n_obs_ * (n_actions_ - 1);
    if (n_z_ == 1)
      zeta_count_ = 0;
    else if (tie == TieMode::TIED_MEMORY)
      zeta_count_ = 1;
    else
      zeta_count_ = n_z_ * n_obs_ * n_actions_ * (n_z_ - 1);
    theta_ = VectorXd::Zero(mu_count_ + zeta_count_);
    lo_ = VectorXd::Constant(theta_.size(), kDefaultLo);
    hi_ = VectorXd::Constant(theta_.size(), kDefaultHi);
    // uniform action probabilities; memory retention starts at 0.2
    for (int z = 0; z < n_z_; ++z)
      for (int y = 0; y < n_obs_; ++y)
        for (int a = 0; a < n_actions_ - 1; ++a)
          theta_(mu_index(z, y, a)) = 1.0 / n_actions_;
    if (zeta_count_ == 1)
      theta_(mu_count_) = 0.2;
    else if (zeta_count_ > 0)
      for (int i = mu_count_; i < theta_.size(); ++i) theta_(i) = 1.0 / n_z_;
  }

  int n_obs() const { return n_obs_; }
  int n_actions() const { return n_actions_; }
  int n_internal() const { return n_z_; }
  TieMode tie_mode() const { return tie_; }
  int k() const { return static_cast<int>(theta_.size()); }
  int mu_param_count() const { return mu_count_; }
  int zeta_param_count() const { return zeta_count_; }
  bool reactive() const { return n_z_ == 1; }

  const VectorXd& theta() const { return theta_; }
  const VectorXd& lower() const { return lo_; }
  const VectorXd& upper() const { return hi_; }
  void set_theta(const VectorXd& t) {
    if (t.size() != theta_.size())
      throw std::invalid_argument("theta dimension mismatch");
    theta_ = t;
  }

  int mu_index(int z, int y, int a) const {
    return (z * n_obs_ + y) * (n_actions_ - 1) + a;
  }
  int zeta_index(int z, int y, int u, int j) const {
    return mu_count_ + ((z * n_obs_ + y) * n_actions_ + u) * (n_z_ - 1) + j;
  }

  double mu(int z, int y, int u) const {
    check_zyu(z, y, u);
    if (n_actions_ == 1) return 1.0;
    if (u < n_actions_ - 1) return theta_(mu_index(z, y, u));
    return residual_mu(z, y);
  }

  double zeta(int z, int y, int u, int z2) const {
    check_zyu(z, y, u);
    check_z(z2);
    if (n_z_ == 1) return 1.0;
    if (tie_ == TieMode::TIED_MEMORY) {
      double p = theta_(mu_count_);
      double v = 0.0;
      if (z2 == z) v += p;
      if (z2 == y) v += 1.0 - p;
      return v;
    }
    if (z2 < n_z_ - 1) return theta_(zeta_index(z, y, u, z2));
    return residual_zeta(z, y, u);
  }

  // Nonzero coordinates of grad log mu; residual actions hit every free
  // coordinate of their (z, y) block with -1/mu_residual.
  void score_mu_entries(int z, int y, int u, ScoreEntries& out) const {
    out.clear();
    check_zyu(z, y, u);
    if (n_actions_ == 1) return;
    if (u < n_actions_ - 1) {
      double p = theta_(mu_index(z, y, u));
      out.push_back({mu_index(z, y, u), p != 0.0 ? 1.0 / p : 0.0});
    } else {
      double p = residual_mu(z, y);
      double s = p != 0.0 ? -1.0 / p : 0.0;
      for (int a = 0; a < n_actions_ - 1; ++a)
        out.push_back({mu_index(z, y, a), s});
    }
  }

  void score_zeta_entries(int z, int y, int u, int z2, ScoreEntries& out) const {
    out.clear();
    check_zyu(z, y, u);
    check_z(z2);
    if (n_z_ == 1) return;
    if (tie_ == TieMode::TIED_MEMORY) {
      double v = zeta(z, y, u, z2);
      double d = (z2 == z ? 1.0 : 0.0) - (z2 == y ? 1.0 : 0.0);
      out.push_back({mu_count_, v != 0.0 ? d / v : 0.0});
      return;
    }
    if (z2 < n_z_ - 1) {
      double p = theta_(zeta_index(z, y, u, z2));
      out.push_back({zeta_index(z, y, u, z2), p != 0.0 ? 1.0 / p : 0.0});
    } else {
      double p = residual_zeta(z, y, u);
      double s = p != 0.0 ? -1.0 / p : 0.0;
      for (int j = 0; j < n_z_ - 1; ++j)
        out.push_back({zeta_index(z, y, u, j), s});
    }
  }

  VectorXd score_mu(int z, int y, int u) const {
    ScoreEntries e;
    score_mu_entries(z, y, u, e);
    VectorXd s = VectorXd::Zero(k());
    for (const auto& [i, v] : e) s(i) += v;
    return s;
  }

  VectorXd score_zeta(int z, int y, int u, int z2) const {
    ScoreEntries e;
    score_zeta_entries(z, y, u, z2, e);
    VectorXd s = VectorXd::Zero(k());
    for (const auto& [i, v] : e) s(i) += v;
    return s;
  }

  int sample_action(int z, int y, Rng& rng) const {
    double buf[64];
    for (int u = 0; u < n_actions_; ++u) buf[u] = mu(z, y, u);
    return rng.categorical({buf, static_cast<std::size_t>(n_actions_)});
  }

  int sample_internal(int z, int y, int u, Rng& rng) const {
    if (n_z_ == 1) return 0;
    double buf[64];
    for (int z2 = 0; z2 < n_z_; ++z2) buf[z2] = zeta(z, y, u, z2);
    return rng.categorical({buf, static_cast<std::size_t>(n_z_)});
  }

  // Blocks whose residual probability is itself box-constrained.
  std::vector<ParamBlock> blocks() const {
    std::vector<ParamBlock> out;
    if (n_actions_ > 1)
      for (int z = 0; z < n_z_; ++z)
        for (int y = 0; y < n_obs_; ++y)
          out.push_back({mu_index(z, y, 0), n_actions_ - 1});
    if (n_z_ > 1 && tie_ == TieMode::FREE)
      for (int z = 0; z < n_z_; ++z)
        for (int y = 0; y < n_obs_; ++y)
          for (int u = 0; u < n_actions_; ++u)
            out.push_back({zeta_index(z, y, u, 0), n_z_ - 1});
    return out;
  }

  bool feasible() const {
    for (int i = 0; i < theta_.size(); ++i)
      if (theta_(i) < lo_(i) || theta_(i) > hi_(i)) return false;
    for (const auto& b : blocks()) {
      double res = 1.0 - theta_.segment(b.start, b.len).sum();
      if (res < kDefaultLo || res > kDefaultHi) return false;
    }
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tie_mode"] = tie_ == TieMode::FREE ? "FREE" : "TIED_MEMORY";
    j["n_obs"] = n_obs_;
    j["n_actions"] = n_actions_;
    j["n_internal"] = n_z_;
    j["theta"] = std::vector<double>(theta_.begin(), theta_.end());
    j["lower"] = std::vector<double>(lo_.begin(), lo_.end());
    j["upper"] = std::vector<double>(hi_.begin(), hi_.end());
    return j;
  }

  static FscPolicy from_json(const nlohmann::json& j) {
    TieMode tie = j.at("tie_mode").get<std::string>() == "TIED_MEMORY"
                      ? TieMode::TIED_MEMORY
                      : TieMode::FREE;
    FscPolicy p(j.at("n_obs").get<int>(), j.at("n_actions").get<int>(),
                j.at("n_internal").get<int>(), tie);
    auto th = j.at("theta").get<std::vector<double>>();
    if (static_cast<int>(th.size()) != p.k())
      throw std::invalid_argument("checkpoint theta has wrong length");
    p.theta_ = Eigen::Map<const VectorXd>(th.data(), th.size());
    if (j.contains("lower")) {
      auto lo = j.at("lower").get<std::vector<double>>();
      auto hi = j.at("upper").get<std::vector<double>>();
      p.lo_ = Eigen::Map<const VectorXd>(lo.data(), lo.size());
      p.hi_ = Eigen::Map<const VectorXd>(hi.data(), hi.size());
    }
    return p;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    out << to_json().dump(2) << "\n";
  }

  static FscPolicy load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

 private:
  double residual_mu(int z, int y) const {
    double s = 0.0;
    for (int a = 0; a < n_actions_ - 1; ++a) s += theta_(mu_index(z, y, a));
    return 1.0 - s;
  }
  double residual_zeta(int z, int y, int u) const {
    double s = 0.0;
    for (int j = 0; j < n_z_ - 1; ++j) s += theta_(zeta_index(z, y, u, j));
    return 1.0 - s;
  }
  void check_zyu(int z, int y, int u) const {
    if (z < 0 || z >= n_z_ || y < 0 || y >= n_obs_ || u < 0 || u >= n_actions_)
      throw std::out_of_range("policy index out of range");
  }
  void check_z(int z2) const {
    if (z2 < 0 || z2 >= n_z_) throw std::out_of_range("internal state out of range");
  }

  int n_obs_, n_actions_, n_z_;
  TieMode tie_;
  int mu_count_ = 0, zeta_count_ = 0;
  VectorXd theta_, lo_, hi_;
};

inline FscPolicy make_direct_fsc(int n_obs, int n_actions, int n_internal,
                                 TieMode tie_mode) {
  return FscPolicy(n_obs, n_actions, n_internal, tie_mode);
}

}  // namespace pomdpgrad
