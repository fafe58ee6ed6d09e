#pragma once

// Finite POMDP model: hidden state x, observation y emitted by the
// destination state and the applied action, per-stage cost g(x, y, u).

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pomdpgrad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stochasticity tolerances: rows off by up to kRowSumInputTol are
// renormalized (repertoire files carry limited decimals); after
// normalization rows must sum to 1 within kRowSumTol.
inline constexpr double kRowSumInputTol = 1e-9;
inline constexpr double kRowSumTol = 1e-12;

struct PomdpModel {
  int n_states = 0;
  int n_obs = 0;
  int n_actions = 0;
  // transition[u](x, x') = p(x' | x, u)
  std::vector<MatrixXd> transition;
  // observation[u](x', y) = p(y | x', u); conditioned on the destination state
  std::vector<MatrixXd> observation;
  // cost[u](x, y) = g(x, y, u)
  std::vector<MatrixXd> cost;
  std::optional<VectorXd> initial_dist;

  std::vector<std::string> state_names, action_names, obs_names;

  double g(int x, int y, int u) const { return cost[u](x, y); }

  void validate() const;
  void normalize_rows();

  nlohmann::json to_json() const;
  static PomdpModel from_json(const nlohmann::json& j);
};

namespace detail {

inline void check_rows(const std::vector<MatrixXd>& tables, int rows, int cols,
                       const char* what) {
  for (std::size_t u = 0; u < tables.size(); ++u) {
    const MatrixXd& m = tables[u];
    if (m.rows() != rows || m.cols() != cols)
      throw ModelError(std::string(what) + ": bad table shape");
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols; ++j) {
        double p = m(i, j);
        if (!(p >= 0.0 && p <= 1.0 + kRowSumInputTol))
          throw ModelError(std::string(what) + " entry out of [0,1] at row " +
                           std::to_string(i));
        s += p;
      }
      if (std::abs(s - 1.0) > kRowSumTol)
        throw ModelError(std::string(what) + " row " + std::to_string(i) +
                         " for action " + std::to_string(u) +
                         " sums to " + std::to_string(s) + ", expected 1");
    }
  }
}

inline void renormalize(std::vector<MatrixXd>& tables, const char* what) {
  for (auto& m : tables) {
    for (int i = 0; i < m.rows(); ++i) {
      double s = m.row(i).sum();
      if (std::abs(s - 1.0) > kRowSumInputTol)
        throw ModelError(std::string(what) + " row " + std::to_string(i) +
                         " sums to " + std::to_string(s) + ", not stochastic");
      // rows already exact to kRowSumTol are left untouched (bit-exact
      // round trips); only limited-precision rows get rescaled
      if (std::abs(s - 1.0) > kRowSumTol && s > 0.0) m.row(i) /= s;
    }
  }
}

}  // namespace detail

inline void PomdpModel::validate() const {
  if (n_states < 1 || n_obs < 1 || n_actions < 1)
    throw ModelError("empty state/observation/action space");
  if (static_cast<int>(transition.size()) != n_actions ||
      static_cast<int>(observation.size()) != n_actions ||
      static_cast<int>(cost.size()) != n_actions)
    throw ModelError("table count does not match action count");
  detail::check_rows(transition, n_states, n_states, "transition");
  detail::check_rows(observation, n_states, n_obs, "observation");
  for (const auto& m : cost)
    if (!m.allFinite()) throw ModelError("non-finite cost entry");
  if (initial_dist) {
    if (initial_dist->size() != n_states)
      throw ModelError("initial distribution has wrong length");
    if (std::abs(initial_dist->sum() - 1.0) > kRowSumInputTol)
      throw ModelError("initial distribution not normalized");
  }
}

inline void PomdpModel::normalize_rows() {
  detail::renormalize(transition, "transition");
  detail::renormalize(observation, "observation");
}

inline nlohmann::json PomdpModel::to_json() const {
  nlohmann::json j;
  j["n_states"] = n_states;
  j["n_obs"] = n_obs;
  j["n_actions"] = n_actions;
  auto dump3 = [&](const std::vector<MatrixXd>& t) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& m : t) {
      nlohmann::json rows = nlohmann::json::array();
      for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(row);
      }
      a.push_back(rows);
    }
    return a;
  };
  j["transition"] = dump3(transition);
  j["observation"] = dump3(observation);
  j["cost"] = dump3(cost);
  if (initial_dist) {
    nlohmann::json d = nlohmann::json::array();
    for (int i = 0; i < n_states; ++i) d.push_back((*initial_dist)(i));
    j["initial_dist"] = d;
  }
  return j;
}

inline PomdpModel PomdpModel::from_json(const nlohmann::json& j) {
  PomdpModel m;
  m.n_states = j.at("n_states").get<int>();
  m.n_obs = j.at("n_obs").get<int>();
  m.n_actions = j.at("n_actions").get<int>();
  auto load3 = [&](const nlohmann::json& a, int rows, int cols) {
    std::vector<MatrixXd> t;
    for (const auto& mat : a) {
      MatrixXd x(rows, cols);
      int i = 0;
      for (const auto& row : mat) {
        int c = 0;
        for (const auto& v : row) x(i, c++) = v.get<double>();
        ++i;
      }
      t.push_back(x);
    }
    return t;
  };
  m.transition = load3(j.at("transition"), m.n_states, m.n_states);
  m.observation = load3(j.at("observation"), m.n_states, m.n_obs);
  m.cost = load3(j.at("cost"), m.n_states, m.n_obs);
  if (j.contains("initial_dist")) {
    VectorXd d(m.n_states);
    int i = 0;
    for (const auto& v : j.at("initial_dist")) d(i++) = v.get<double>();
    m.initial_dist = d;
  }
  m.normalize_rows();
  m.validate();
  return m;
}

inline PomdpModel load_model_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return PomdpModel::from_json(j);
}

}  // namespace pomdpgrad
