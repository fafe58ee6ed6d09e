#pragma once

// Model-based ground truth: stationary distributions, average cost and bias,
// Q-functions, discounted values, the conditional-mean value functions
// v / v1 / v2, exact and beta-discounted gradients, weighted projections,
// and exact TD(lambda) fixed points. Everything here is computed from the
// model; trajectory-based estimators are tested against these quantities.

#include "pomdpgrad/joint_chain.hpp"
#include "pomdpgrad/markov.hpp"
#include "pomdpgrad/model.hpp"
#include "pomdpgrad/policy.hpp"

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace pomdpgrad {

inline constexpr double kSupportTol = 1e-12;

struct GradientVector {
  VectorXd value;
};

// Cells of a conditional mean can be undefined when the conditioning tuple
// has zero stationary probability.
struct ConditionalMean {
  VectorXd value;
  std::vector<char> defined;
};

struct ExactSolution {
  JointChain xyz, xyzu;
  VectorXd pi_xyz, pi_xyzu;
  double eta = 0.0;
  VectorXd h;       // bias over xyz states
  VectorXd Q;       // over xyzu states
  double beta = 0.0;
  VectorXd J_beta;  // over xyz states
  VectorXd Q_beta;  // over xyzu states

  JointChain xyzuz;
  VectorXd pi_xyzuz;
  VectorXd h_tilde;  // bias of the xyzuz chain, same per-stage cost

  // conditional means over observable tuples
  ConditionalMean v1;       // (y,z,u) of Q
  ConditionalMean v1_beta;  // (y,z,u) of Q_beta
  ConditionalMean v2;       // (y,z,u,z2) of h_tilde

  int n_obs = 0, n_z = 0, n_actions = 0;
  int key1(int y, int z, int u) const { return (y * n_z + z) * n_actions + u; }
  int key2(int y, int z, int u, int z2) const { return key1(y, z, u) * n_z + z2; }
};

inline std::pair<double, VectorXd> solve_average_cost(const JointChain& chain) {
  VectorXd pi = stationary_distribution(chain.P);
  return poisson_solve(chain.P, chain.g, pi);
}

// Lift a value on (x,y,z) states to (x,y,z,u) states.
inline VectorXd lift_xyz_to_xyzu(const JointChain& xyzu, const VectorXd& h) {
  VectorXd out(xyzu.size());
  for (int i = 0; i < xyzu.size(); ++i) out(i) = h(i / xyzu.n_actions);
  return out;
}

// Q(x,y,z,u) = g(x,y,u) + E{h(X1,Y1,Z1)}; the action marginal of the xyzu
// chain's row gives exactly that expectation.
inline VectorXd q_function(const JointChain& xyzu, const VectorXd& h) {
  return xyzu.g + xyzu.P * lift_xyz_to_xyzu(xyzu, h);
}

inline std::pair<VectorXd, VectorXd> discounted_values(const JointChain& xyz,
                                                       const JointChain& xyzu,
                                                       double beta) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("discount must lie in [0, 1)");
  const int n = xyz.size();
  MatrixXd A = MatrixXd::Identity(n, n) - beta * xyz.P;
  VectorXd J = A.partialPivLu().solve(xyz.g);
  VectorXd Qb = xyzu.g + beta * (xyzu.P * lift_xyz_to_xyzu(xyzu, J));
  return {J, Qb};
}

// Stationary distribution of the (x,y,z,u,z2) chain, assembled from the
// xyzu stationary distribution and the internal-transition probabilities.
inline VectorXd stationary_xyzuz(const JointChain& xyzuz, const VectorXd& pi_xyzu,
                                 const FscPolicy& policy) {
  VectorXd pi = VectorXd::Zero(xyzuz.size());
  const int nz = xyzuz.n_z;
  for (int i = 0; i < static_cast<int>(pi_xyzu.size()); ++i) {
    if (pi_xyzu(i) == 0.0) continue;
    const int u = i % xyzuz.n_actions;
    const int zy = i / xyzuz.n_actions;
    const int z = zy % nz;
    const int y = (zy / nz) % xyzuz.n_obs;
    for (int z2 = 0; z2 < nz; ++z2)
      pi(i * nz + z2) = pi_xyzu(i) * policy.zeta(z, y, u, z2);
  }
  return pi;
}

// Conditional mean of `value` given the observable part of the tuple, under
// pi. `group_of` maps a chain state index to its observable key.
template <class GroupFn>
inline ConditionalMean conditional_mean(const VectorXd& pi, const VectorXd& value,
                                        int n_keys, GroupFn group_of) {
  VectorXd num = VectorXd::Zero(n_keys), den = VectorXd::Zero(n_keys);
  for (int i = 0; i < static_cast<int>(pi.size()); ++i) {
    const int key = group_of(i);
    num(key) += pi(i) * value(i);
    den(key) += pi(i);
  }
  ConditionalMean cm;
  cm.value = VectorXd::Zero(n_keys);
  cm.defined.assign(n_keys, 0);
  for (int key = 0; key < n_keys; ++key) {
    if (den(key) > kSupportTol) {
      cm.value(key) = num(key) / den(key);
      cm.defined[key] = 1;
    }
  }
  return cm;
}

inline ExactSolution solve_exact(const PomdpModel& model, const FscPolicy& policy,
                                 double beta) {
  ExactSolution s;
  s.n_obs = model.n_obs;
  s.n_z = policy.n_internal();
  s.n_actions = model.n_actions;
  s.beta = beta;

  s.xyz = build_joint_chain(model, policy, ChainLevel::XYZ);
  s.xyzu = build_joint_chain(model, policy, ChainLevel::XYZU);
  s.pi_xyz = stationary_distribution(s.xyz.P);
  std::tie(s.eta, s.h) = poisson_solve(s.xyz.P, s.xyz.g, s.pi_xyz);
  s.pi_xyzu = stationary_distribution(s.xyzu.P);
  s.Q = q_function(s.xyzu, s.h);
  std::tie(s.J_beta, s.Q_beta) = discounted_values(s.xyz, s.xyzu, beta);

  s.xyzuz = build_joint_chain(model, policy, ChainLevel::XYZUZ);
  s.pi_xyzuz = stationary_xyzuz(s.xyzuz, s.pi_xyzu, policy);
  s.h_tilde = poisson_solve(s.xyzuz.P, s.xyzuz.g, s.pi_xyzuz).second;

  const int na = s.n_actions, nz = s.n_z;
  auto group1 = [&](int i) {
    const int u = i % na;
    const int zy = i / na;
    const int z = zy % nz;
    const int y = (zy / nz) % s.n_obs;
    return s.key1(y, z, u);
  };
  const int nk1 = s.n_obs * nz * na;
  s.v1 = conditional_mean(s.pi_xyzu, s.Q, nk1, group1);
  s.v1_beta = conditional_mean(s.pi_xyzu, s.Q_beta, nk1, group1);
  auto group2 = [&](int i) {
    const int z2 = i % nz;
    return group1(i / nz) * nz + z2;
  };
  s.v2 = conditional_mean(s.pi_xyzuz, s.h_tilde, nk1 * nz, group2);
  return s;
}

inline double average_cost(const PomdpModel& model, const FscPolicy& policy) {
  JointChain c = build_joint_chain(model, policy, ChainLevel::XYZ);
  VectorXd pi = stationary_distribution(c.P);
  return pi.dot(c.g);
}

namespace detail {

// E{f(X1, Y1, z2) | x, u} with f given on xyz states, for fixed z2.
inline double next_mean_given_z(const PomdpModel& model, const JointChain& xyz,
                                const VectorXd& f, int x, int u, int z2) {
  double acc = 0.0;
  for (int x2 = 0; x2 < model.n_states; ++x2) {
    const double t = model.transition[u](x, x2);
    if (t == 0.0) continue;
    for (int y2 = 0; y2 < model.n_obs; ++y2)
      acc += t * model.observation[u](x2, y2) * f(xyz.idx_xyz(x2, y2, z2));
  }
  return acc;
}

}  // namespace detail

// Two-term exact gradient; the action term weights scores by Q-values and
// the internal-transition term by the expected next-state bias. For a
// reactive policy the second term vanishes structurally.
inline GradientVector exact_gradient(const PomdpModel& model,
                                     const FscPolicy& policy) {
  ExactSolution s = solve_exact(model, policy, 0.0);
  const int nz = policy.n_internal(), na = model.n_actions;
  VectorXd grad = VectorXd::Zero(policy.k());
  ScoreEntries sc;
  for (int x = 0; x < model.n_states; ++x)
    for (int y = 0; y < model.n_obs; ++y)
      for (int z = 0; z < nz; ++z) {
        const int i = s.xyz.idx_xyz(x, y, z);
        const double w = s.pi_xyz(i);
        if (w == 0.0) continue;
        for (int u = 0; u < na; ++u) {
          const double mu = policy.mu(z, y, u);
          if (mu == 0.0) continue;
          policy.score_mu_entries(z, y, u, sc);
          const double coeff = w * mu * s.Q(s.xyzu.idx_xyzu(x, y, z, u));
          for (const auto& [idx, v] : sc) grad(idx) += coeff * v;
          if (nz > 1) {
            for (int z2 = 0; z2 < nz; ++z2) {
              const double zw = policy.zeta(z, y, u, z2);
              if (zw == 0.0) continue;
              policy.score_zeta_entries(z, y, u, z2, sc);
              if (sc.empty()) continue;
              const double hn =
                  detail::next_mean_given_z(model, s.xyz, s.h, x, u, z2);
              const double c2 = w * mu * zw * hn;
              for (const auto& [idx, v] : sc) grad(idx) += c2 * v;
            }
          }
        }
      }
  return {grad};
}

// Same gradient assembled through the conditional means v1 / v2 (the
// state-free rewriting); agreement with exact_gradient is an identity.
inline GradientVector exact_gradient_conditional(const PomdpModel& model,
                                                 const FscPolicy& policy) {
  ExactSolution s = solve_exact(model, policy, 0.0);
  const int nz = policy.n_internal(), na = model.n_actions;
  VectorXd grad = VectorXd::Zero(policy.k());
  ScoreEntries sc;
  // marginals over observable tuples
  const int nk1 = model.n_obs * nz * na;
  VectorXd pi1 = VectorXd::Zero(nk1), pi2 = VectorXd::Zero(nk1 * nz);
  for (int i = 0; i < s.xyzu.size(); ++i) {
    const int u = i % na;
    const int zy = i / na;
    const int z = zy % nz;
    const int y = (zy / nz) % model.n_obs;
    pi1(s.key1(y, z, u)) += s.pi_xyzu(i);
    for (int z2 = 0; z2 < nz; ++z2)
      pi2(s.key2(y, z, u, z2)) += s.pi_xyzuz(i * nz + z2);
  }
  for (int y = 0; y < model.n_obs; ++y)
    for (int z = 0; z < nz; ++z)
      for (int u = 0; u < na; ++u) {
        const int k1 = s.key1(y, z, u);
        if (pi1(k1) > 0.0 && s.v1.defined[k1]) {
          policy.score_mu_entries(z, y, u, sc);
          const double c = pi1(k1) * s.v1.value(k1);
          for (const auto& [idx, v] : sc) grad(idx) += c * v;
        }
        if (nz > 1)
          for (int z2 = 0; z2 < nz; ++z2) {
            const int k2 = s.key2(y, z, u, z2);
            if (pi2(k2) == 0.0 || !s.v2.defined[k2]) continue;
            policy.score_zeta_entries(z, y, u, z2, sc);
            const double c = pi2(k2) * s.v2.value(k2);
            for (const auto& [idx, v] : sc) grad(idx) += c * v;
          }
      }
  return {grad};
}

// Exact beta-discounted approximate gradient (the quantity GPOMDP estimates).
// With use_conditional_means the Q_beta weights are replaced by their
// conditional means; the two evaluations agree to machine precision.
inline GradientVector exact_beta_gradient(const PomdpModel& model,
                                          const FscPolicy& policy, double beta,
                                          bool use_conditional_means = false) {
  ExactSolution s = solve_exact(model, policy, beta);
  const int nz = policy.n_internal(), na = model.n_actions;
  VectorXd grad = VectorXd::Zero(policy.k());
  ScoreEntries sc;

  // discounted continuation weight for the zeta term
  VectorXd w2;  // over xyzuz marginal keys when conditional, else unused
  ConditionalMean v2b;
  if (use_conditional_means && nz > 1) {
    VectorXd contrib(s.xyzuz.size());
    for (int i = 0; i < s.xyzuz.size(); ++i) {
      const int z2 = i % nz;
      const int iu = i / nz;
      const int u = iu % na;
      int rest = iu / (na * nz);  // (x * n_obs + y)
      const int x = rest / model.n_obs;
      contrib(i) =
          beta * detail::next_mean_given_z(model, s.xyz, s.J_beta, x, u, z2);
    }
    auto group2 = [&](int i) {
      const int z2 = i % nz;
      const int iu = i / nz;
      const int u = iu % na;
      const int zy = iu / na;
      const int z = zy % nz;
      const int y = (zy / nz) % model.n_obs;
      return s.key2(y, z, u, z2);
    };
    v2b = conditional_mean(s.pi_xyzuz, contrib, model.n_obs * nz * na * nz, group2);
  }

  if (use_conditional_means) {
    const int nk1 = model.n_obs * nz * na;
    VectorXd pi1 = VectorXd::Zero(nk1), pi2 = VectorXd::Zero(nk1 * nz);
    for (int i = 0; i < s.xyzu.size(); ++i) {
      const int u = i % na;
      const int zy = i / na;
      const int z = zy % nz;
      const int y = (zy / nz) % model.n_obs;
      pi1(s.key1(y, z, u)) += s.pi_xyzu(i);
      for (int z2 = 0; z2 < nz; ++z2)
        pi2(s.key2(y, z, u, z2)) += s.pi_xyzuz(i * nz + z2);
    }
    for (int y = 0; y < model.n_obs; ++y)
      for (int z = 0; z < nz; ++z)
        for (int u = 0; u < na; ++u) {
          const int k1 = s.key1(y, z, u);
          if (pi1(k1) > 0.0 && s.v1_beta.defined[k1]) {
            policy.score_mu_entries(z, y, u, sc);
            const double c = pi1(k1) * s.v1_beta.value(k1);
            for (const auto& [idx, v] : sc) grad(idx) += c * v;
          }
          if (nz > 1)
            for (int z2 = 0; z2 < nz; ++z2) {
              const int k2 = s.key2(y, z, u, z2);
              if (pi2(k2) == 0.0 || !v2b.defined[k2]) continue;
              policy.score_zeta_entries(z, y, u, z2, sc);
              const double c = pi2(k2) * v2b.value(k2);
              for (const auto& [idx, v] : sc) grad(idx) += c * v;
            }
        }
    return {grad};
  }

  for (int x = 0; x < model.n_states; ++x)
    for (int y = 0; y < model.n_obs; ++y)
      for (int z = 0; z < nz; ++z) {
        const int i = s.xyz.idx_xyz(x, y, z);
        const double w = s.pi_xyz(i);
        if (w == 0.0) continue;
        for (int u = 0; u < na; ++u) {
          const double mu = policy.mu(z, y, u);
          if (mu == 0.0) continue;
          policy.score_mu_entries(z, y, u, sc);
          const double coeff = w * mu * s.Q_beta(s.xyzu.idx_xyzu(x, y, z, u));
          for (const auto& [idx, v] : sc) grad(idx) += coeff * v;
          if (nz > 1)
            for (int z2 = 0; z2 < nz; ++z2) {
              const double zw = policy.zeta(z, y, u, z2);
              if (zw == 0.0) continue;
              policy.score_zeta_entries(z, y, u, z2, sc);
              if (sc.empty()) continue;
              const double jn = beta * detail::next_mean_given_z(model, s.xyz,
                                                                 s.J_beta, x, u, z2);
              const double c2 = w * mu * zw * jn;
              for (const auto& [idx, v] : sc) grad(idx) += c2 * v;
            }
        }
      }
  return {grad};
}

// pi-weighted least-squares fit of `target` onto the columns of Phi.
inline VectorXd weighted_projection_coeffs(const MatrixXd& Phi,
                                           const VectorXd& weights,
                                           const VectorXd& target) {
  MatrixXd W = weights.asDiagonal();
  MatrixXd A = Phi.transpose() * W * Phi;
  VectorXd b = Phi.transpose() * W * target;
  return A.ldlt().solve(b);
}

inline double weighted_norm(const VectorXd& v, const VectorXd& weights) {
  return std::sqrt(v.cwiseAbs2().dot(weights));
}

// Exact TD(lambda) fixed point for a chain with features Phi (rows indexed
// by chain states). average_cost = true solves the eta-centered variant.
inline VectorXd td_lambda_fixed_point(const MatrixXd& P, const VectorXd& g,
                                      const VectorXd& pi, const MatrixXd& Phi,
                                      double beta, double lambda,
                                      bool average_cost) {
  const int n = static_cast<int>(P.rows());
  const double b = average_cost ? 1.0 : beta;
  VectorXd cost = g;
  if (average_cost) cost.array() -= pi.dot(g);
  MatrixXd I = MatrixXd::Identity(n, n);
  Eigen::PartialPivLU<MatrixXd> lu(I - lambda * b * P);
  VectorXd c = lu.solve(cost);
  MatrixXd M = (1.0 - lambda) * b * (P * (I - lambda * b * P).inverse());
  MatrixXd D = pi.asDiagonal();
  MatrixXd A = Phi.transpose() * D * (Phi - M * Phi);
  VectorXd rhs = Phi.transpose() * D * c;
  return A.fullPivLu().solve(rhs);
}

// Empirical mixing factor of the average-cost TD(lambda) operator: the
// pi-weighted operator norm of Proj_Phi M restricted to the subspace
// pi-orthogonal to constants, on the recurrent support.
inline double measured_mixing_factor(const MatrixXd& P, const VectorXd& pi,
                                     const MatrixXd& Phi, double lambda) {
  std::vector<int> support;
  for (int i = 0; i < pi.size(); ++i)
    if (pi(i) > kSupportTol) support.push_back(i);
  const int m = static_cast<int>(support.size());
  MatrixXd Ps(m, m), Phis(m, Phi.cols());
  VectorXd pis(m);
  for (int i = 0; i < m; ++i) {
    pis(i) = pi(support[i]);
    Phis.row(i) = Phi.row(support[i]);
    for (int j = 0; j < m; ++j) Ps(i, j) = P(support[i], support[j]);
  }
  pis /= pis.sum();
  MatrixXd I = MatrixXd::Identity(m, m);
  MatrixXd M = (1.0 - lambda) * (Ps * (I - lambda * Ps).inverse());
  MatrixXd D = pis.asDiagonal();
  // projection onto col(Phi) in the pi inner product
  MatrixXd G = Phis.transpose() * D * Phis;
  MatrixXd Proj = Phis * G.ldlt().solve(Phis.transpose() * D);
  // remove the constant direction (pi-orthogonal complement of 1)
  MatrixXd Qc = I - VectorXd::Ones(m) * pis.transpose();
  MatrixXd op = Proj * M * Qc;
  VectorXd d_sqrt = pis.array().sqrt();
  MatrixXd K = d_sqrt.asDiagonal() * op * d_sqrt.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<MatrixXd> svd(K);
  return svd.singularValues()(0);
}

}  // namespace pomdpgrad
