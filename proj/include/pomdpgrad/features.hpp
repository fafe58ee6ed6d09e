#pragma once

// Feature maps for the critics, built from the score functions: the minimum
// basis whose span must contain grad log mu (level YZU) or grad log zeta
// (level YZUZ) for unbiased gradient assembly. Features are functions of
// observable tuples only; there is deliberately no API that accepts the
// hidden state.

#include "pomdpgrad/joint_chain.hpp"
#include "pomdpgrad/policy.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace pomdpgrad {

enum class FeatureLevel { YZU, YZUZ };

struct FeatureMap {
  FeatureLevel level;
  int n_obs, n_z, n_actions;
  int k_f = 0;
  // one row per observable tuple
  MatrixXd table;
  // column -> theta coordinate (restores dropped coordinates as zero)
  std::vector<int> theta_index;

  int tuple1(int y, int z, int u) const { return (y * n_z + z) * n_actions + u; }
  int tuple2(int y, int z, int u, int z2) const {
    return tuple1(y, z, u) * n_z + z2;
  }
  int n_tuples() const { return static_cast<int>(table.rows()); }

  Eigen::Ref<const Eigen::RowVectorXd> phi1(int y, int z, int u) const {
    return table.row(tuple1(y, z, u));
  }
  Eigen::Ref<const Eigen::RowVectorXd> phi2(int y, int z, int u, int z2) const {
    return table.row(tuple2(y, z, u, z2));
  }
};

// Score-function features at the current theta. Columns that vanish on
// every tuple reachable under the policy (structural zeros) are dropped.
inline FeatureMap minimum_basis(const FscPolicy& policy, FeatureLevel level) {
  const int ny = policy.n_obs(), nz = policy.n_internal(),
            na = policy.n_actions();
  FeatureMap f;
  f.level = level;
  f.n_obs = ny;
  f.n_z = nz;
  f.n_actions = na;

  const int n_tuples = level == FeatureLevel::YZU ? ny * nz * na
                                                  : ny * nz * na * nz;
  MatrixXd full = MatrixXd::Zero(n_tuples, policy.k());
  VectorXd reach = VectorXd::Zero(n_tuples);
  ScoreEntries sc;
  for (int y = 0; y < ny; ++y)
    for (int z = 0; z < nz; ++z)
      for (int u = 0; u < na; ++u) {
        if (level == FeatureLevel::YZU) {
          const int t = f.tuple1(y, z, u);
          reach(t) = policy.mu(z, y, u);
          policy.score_mu_entries(z, y, u, sc);
          for (const auto& [idx, v] : sc) full(t, idx) += v;
        } else {
          for (int z2 = 0; z2 < nz; ++z2) {
            const int t = f.tuple2(y, z, u, z2);
            reach(t) = policy.mu(z, y, u) * policy.zeta(z, y, u, z2);
            policy.score_zeta_entries(z, y, u, z2, sc);
            for (const auto& [idx, v] : sc) full(t, idx) += v;
          }
        }
      }

  for (int c = 0; c < policy.k(); ++c) {
    bool nonzero = false;
    for (int t = 0; t < n_tuples && !nonzero; ++t)
      if (reach(t) > 0.0 && full(t, c) != 0.0) nonzero = true;
    if (nonzero) f.theta_index.push_back(c);
  }
  f.k_f = static_cast<int>(f.theta_index.size());
  if (f.k_f == 0) throw std::invalid_argument("all-zero feature matrix");
  f.table.resize(n_tuples, f.k_f);
  for (int c = 0; c < f.k_f; ++c) f.table.col(c) = full.col(f.theta_index[c]);
  return f;
}

// Lift tuple-level features to the states of the matching joint chain.
inline MatrixXd lift_features(const FeatureMap& f, const JointChain& chain) {
  const int nz = chain.n_z, na = chain.n_actions, ny = chain.n_obs;
  if ((f.level == FeatureLevel::YZU) != (chain.level == ChainLevel::XYZU))
    throw std::invalid_argument("feature level does not match chain level");
  MatrixXd out(chain.size(), f.k_f);
  for (int i = 0; i < chain.size(); ++i) {
    int j = i;
    int z2 = 0;
    if (chain.level == ChainLevel::XYZUZ) {
      z2 = j % nz;
      j /= nz;
    }
    const int u = j % na;
    j /= na;
    const int z = j % nz;
    const int y = (j / nz) % ny;
    out.row(i) = f.level == FeatureLevel::YZU ? f.phi1(y, z, u)
                                              : f.phi2(y, z, u, z2);
  }
  return out;
}

// Smallest singular value of the weight-scaled feature matrix over tuples
// with positive weight; used to verify column independence.
inline double min_singular_value(const FeatureMap& f, const VectorXd& tuple_weights) {
  std::vector<int> rows;
  for (int t = 0; t < f.n_tuples(); ++t)
    if (tuple_weights(t) > 0.0) rows.push_back(t);
  MatrixXd A(rows.size(), f.k_f);
  for (std::size_t i = 0; i < rows.size(); ++i)
    A.row(i) = std::sqrt(tuple_weights(rows[i])) * f.table.row(rows[i]);
  Eigen::JacobiSVD<MatrixXd> svd(A);
  return svd.singularValues().tail(1)(0);
}

// Relative weighted-norm of the projection of the all-ones vector onto the
// feature span; must be < 1 for the average-cost critics to be well posed.
inline double constant_in_span(const FeatureMap& f, const VectorXd& tuple_weights) {
  VectorXd w = tuple_weights / tuple_weights.sum();
  MatrixXd W = w.asDiagonal();
  VectorXd ones = VectorXd::Ones(f.n_tuples());
  MatrixXd G = f.table.transpose() * W * f.table;
  VectorXd r = G.ldlt().solve(f.table.transpose() * W * ones);
  VectorXd proj = f.table * r;
  return std::sqrt(proj.cwiseAbs2().dot(w) / ones.cwiseAbs2().dot(w));
}

}  // namespace pomdpgrad
