#pragma once

// The flattened Markov chains induced by model + controller. Three levels:
//   XYZ    states (x, y, z)             with g averaged over actions
//   XYZU   states (x, y, z, u)          with g = g(x, y, u)
//   XYZUZ  states (x, y, z, u, z_next)  with g = g(x, y, u)
// All tuples are enumerated densely, reachable or not; unreachable rows are
// still stochastic and stationary distributions put zero mass on them.

#include "pomdpgrad/model.hpp"
#include "pomdpgrad/policy.hpp"

#include <Eigen/Dense>

namespace pomdpgrad {

enum class ChainLevel { XYZ, XYZU, XYZUZ };

struct JointChain {
  ChainLevel level;
  int n_states, n_obs, n_z, n_actions;
  MatrixXd P;
  VectorXd g;

  int size() const { return static_cast<int>(P.rows()); }
  int idx_xyz(int x, int y, int z) const { return (x * n_obs + y) * n_z + z; }
  int idx_xyzu(int x, int y, int z, int u) const {
    return idx_xyz(x, y, z) * n_actions + u;
  }
  int idx_xyzuz(int x, int y, int z, int u, int z2) const {
    return idx_xyzu(x, y, z, u) * n_z + z2;
  }
};

inline JointChain build_joint_chain(const PomdpModel& model,
                                    const FscPolicy& policy, ChainLevel level) {
  if (policy.n_obs() != model.n_obs || policy.n_actions() != model.n_actions)
    throw std::invalid_argument("policy spaces do not match model spaces");
  const int nx = model.n_states, ny = model.n_obs, nz = policy.n_internal(),
            na = model.n_actions;

  JointChain c;
  c.level = level;
  c.n_states = nx;
  c.n_obs = ny;
  c.n_z = nz;
  c.n_actions = na;

  // p(x2, y2 | x, u), shared by all levels
  auto step_prob = [&](int x, int u, int x2, int y2) {
    return model.transition[u](x, x2) * model.observation[u](x2, y2);
  };

  if (level == ChainLevel::XYZ) {
    const int n = nx * ny * nz;
    c.P = MatrixXd::Zero(n, n);
    c.g = VectorXd::Zero(n);
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        for (int z = 0; z < nz; ++z) {
          const int i = c.idx_xyz(x, y, z);
          for (int u = 0; u < na; ++u) {
            const double mu = policy.mu(z, y, u);
            c.g(i) += mu * model.g(x, y, u);
            if (mu == 0.0) continue;
            for (int z2 = 0; z2 < nz; ++z2) {
              const double w = mu * policy.zeta(z, y, u, z2);
              if (w == 0.0) continue;
              for (int x2 = 0; x2 < nx; ++x2)
                for (int y2 = 0; y2 < ny; ++y2)
                  c.P(i, c.idx_xyz(x2, y2, z2)) += w * step_prob(x, u, x2, y2);
            }
          }
        }
  } else if (level == ChainLevel::XYZU) {
    const int n = nx * ny * nz * na;
    c.P = MatrixXd::Zero(n, n);
    c.g = VectorXd::Zero(n);
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        for (int z = 0; z < nz; ++z)
          for (int u = 0; u < na; ++u) {
            const int i = c.idx_xyzu(x, y, z, u);
            c.g(i) = model.g(x, y, u);
            for (int z2 = 0; z2 < nz; ++z2) {
              const double zw = policy.zeta(z, y, u, z2);
              if (zw == 0.0) continue;
              for (int x2 = 0; x2 < nx; ++x2)
                for (int y2 = 0; y2 < ny; ++y2) {
                  const double pw = zw * step_prob(x, u, x2, y2);
                  if (pw == 0.0) continue;
                  for (int u2 = 0; u2 < na; ++u2)
                    c.P(i, c.idx_xyzu(x2, y2, z2, u2)) +=
                        pw * policy.mu(z2, y2, u2);
                }
            }
          }
  } else {
    const int n = nx * ny * nz * na * nz;
    c.P = MatrixXd::Zero(n, n);
    c.g = VectorXd::Zero(n);
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        for (int z = 0; z < nz; ++z)
          for (int u = 0; u < na; ++u)
            for (int z1 = 0; z1 < nz; ++z1) {
              const int i = c.idx_xyzuz(x, y, z, u, z1);
              c.g(i) = model.g(x, y, u);
              for (int x2 = 0; x2 < nx; ++x2)
                for (int y2 = 0; y2 < ny; ++y2) {
                  const double pw = step_prob(x, u, x2, y2);
                  if (pw == 0.0) continue;
                  for (int u2 = 0; u2 < na; ++u2) {
                    const double mw = pw * policy.mu(z1, y2, u2);
                    if (mw == 0.0) continue;
                    for (int z2 = 0; z2 < nz; ++z2)
                      c.P(i, c.idx_xyzuz(x2, y2, z1, u2, z2)) +=
                          mw * policy.zeta(z1, y2, u2, z2);
                  }
                }
            }
  }
  return c;
}

}  // namespace pomdpgrad
