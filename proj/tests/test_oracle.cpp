#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomdpgrad/features.hpp"
#include "pomdpgrad/oracle.hpp"

#include "test_util.hpp"

#include <cmath>

using namespace pomdpgrad;
using testutil::random_model;
using testutil::random_policy;
using testutil::randomize_policy;
using testutil::toy2;

namespace {

VectorXd fd_gradient(const PomdpModel& m, const FscPolicy& policy, double eps) {
  VectorXd g(policy.k());
  for (int i = 0; i < policy.k(); ++i) {
    FscPolicy pp = policy, pm = policy;
    VectorXd tp = policy.theta(), tm = policy.theta();
    tp(i) += eps;
    tm(i) -= eps;
    pp.set_theta(tp);
    pm.set_theta(tm);
    g(i) = (average_cost(m, pp) - average_cost(m, pm)) / (2 * eps);
  }
  return g;
}

}  // namespace

TEST_CASE("fully observed 2-cycle: eta and bias hand values") {
  // one action, deterministic flip, identity observation, cost = state index
  PomdpModel m;
  m.n_states = 2;
  m.n_obs = 2;
  m.n_actions = 1;
  MatrixXd T(2, 2), O(2, 2), G(2, 2);
  T << 0.0, 1.0, 1.0, 0.0;
  O << 1.0, 0.0, 0.0, 1.0;
  G << 0.0, 0.0, 1.0, 1.0;
  m.transition = {T};
  m.observation = {O};
  m.cost = {G};
  m.validate();
  FscPolicy p(2, 1, 1, TieMode::FREE);
  ExactSolution s = solve_exact(m, p, 0.9);
  CHECK(s.eta == doctest::Approx(0.5).epsilon(1e-14));
  // reachable states are (0, y=0) and (1, y=1) with h = -/+ 0.25
  CHECK(s.h(s.xyz.idx_xyz(0, 0, 0)) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(s.h(s.xyz.idx_xyz(1, 1, 0)) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("exact solution satisfies the Bellman identities") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    PomdpModel m = random_model(rng, 3, 2, 2);
    FscPolicy p = random_policy(rng, 2, 2, 2);
    const double beta = 0.95;
    ExactSolution s = solve_exact(m, p, beta);

    VectorXd res = s.xyz.g - VectorXd::Constant(s.xyz.size(), s.eta) +
                   s.xyz.P * s.h - s.h;
    CHECK(res.lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(std::abs(s.pi_xyz.dot(s.h)) < 1e-10);

    VectorXd jres = s.xyz.g + beta * (s.xyz.P * s.J_beta) - s.J_beta;
    CHECK(jres.lpNorm<Eigen::Infinity>() < 1e-10);

    // mu-average of Q over actions recovers g_xyz + P h on xyz states
    for (int i = 0; i < s.xyz.size(); ++i) {
      const int z = i % p.n_internal();
      const int y = (i / p.n_internal()) % m.n_obs;
      double qa = 0.0, qb = 0.0;
      for (int u = 0; u < m.n_actions; ++u) {
        qa += p.mu(z, y, u) * s.Q(i * m.n_actions + u);
        qb += p.mu(z, y, u) * s.Q_beta(i * m.n_actions + u);
      }
      CHECK(qa == doctest::Approx(s.h(i) + s.eta).epsilon(1e-9));
      CHECK(qb == doctest::Approx(s.J_beta(i)).epsilon(1e-9));
    }

    // xyzuz stationary distribution marginalizes back to xyzu
    const int nz = p.n_internal();
    for (int i = 0; i < s.xyzu.size(); ++i) {
      double ssum = 0.0;
      for (int z2 = 0; z2 < nz; ++z2) ssum += s.pi_xyzuz(i * nz + z2);
      CHECK(ssum == doctest::Approx(s.pi_xyzu(i)).epsilon(1e-10));
    }
    VectorXd pi_direct = stationary_distribution(s.xyzuz.P);
    CHECK((pi_direct - s.pi_xyzuz).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("discounted values match truncated rollouts") {
  Rng rng(37);
  PomdpModel m = random_model(rng, 3, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  const double beta = 0.9;
  ExactSolution s = solve_exact(m, p, beta);
  VectorXd J = VectorXd::Zero(s.xyz.size());
  const int N = 400;  // geometric tail < 1e-18 relative
  for (int n = 0; n < N; ++n) J = s.xyz.g + beta * (s.xyz.P * J);
  CHECK((J - s.J_beta).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("discounted values approach eta/(1-beta) plus the bias") {
  PomdpModel m = testutil::toy2();
  Rng rng(41);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  ExactSolution base = solve_exact(m, p, 0.9);
  double prev_err = 1e9;
  for (double beta : {0.9, 0.99, 0.999}) {
    ExactSolution s = solve_exact(m, p, beta);
    VectorXd shifted =
        s.J_beta - VectorXd::Constant(s.J_beta.size(), s.eta / (1 - beta));
    double err = (shifted - base.h).lpNorm<Eigen::Infinity>();
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 1e-2);
}

TEST_CASE("exact gradient matches central finite differences") {
  Rng rng(43);
  std::vector<PomdpModel> models{testutil::toy2(), random_model(rng, 4, 3, 2),
                                 random_model(rng, 3, 2, 3)};
  for (const auto& m : models) {
    for (int trial = 0; trial < 3; ++trial) {
      for (int nz : {1, 2}) {
        FscPolicy p = random_policy(rng, m.n_obs, m.n_actions, nz);
        VectorXd exact = exact_gradient(m, p).value;
        VectorXd fd = fd_gradient(m, p, 1e-5);
        CHECK((exact - fd).norm() / std::max(1e-12, fd.norm()) < 1e-6);
      }
    }
  }
}

TEST_CASE("exact gradient with tied memory matches finite differences") {
  Rng rng(47);
  PomdpModel m = random_model(rng, 3, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 2, TieMode::TIED_MEMORY);
  VectorXd exact = exact_gradient(m, p).value;
  VectorXd fd = fd_gradient(m, p, 1e-5);
  CHECK((exact - fd).norm() / fd.norm() < 1e-6);
}

TEST_CASE("direct and conditional-mean gradient assemblies agree exactly") {
  Rng rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    PomdpModel m = random_model(rng, 3, 2, 2);
    FscPolicy p = random_policy(rng, 2, 2, 2);
    VectorXd a = exact_gradient(m, p).value;
    VectorXd b = exact_gradient_conditional(m, p).value;
    CHECK((a - b).lpNorm<Eigen::Infinity>() <
          1e-12 * std::max(1.0, a.lpNorm<Eigen::Infinity>()));
    VectorXd c = exact_beta_gradient(m, p, 0.95, false).value;
    VectorXd d = exact_beta_gradient(m, p, 0.95, true).value;
    CHECK((c - d).lpNorm<Eigen::Infinity>() <
          1e-12 * std::max(1.0, c.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("adding a constant to the cost leaves the gradient unchanged") {
  Rng rng(59);
  PomdpModel m = random_model(rng, 3, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 2);
  VectorXd g0 = exact_gradient(m, p).value;
  PomdpModel shifted = m;
  for (auto& c : shifted.cost) c.array() += 7.5;
  VectorXd g1 = exact_gradient(shifted, p).value;
  CHECK((g0 - g1).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("reactive policies have no internal-transition gradient term") {
  // for |Z| = 1 the gradient must equal the pure action term
  Rng rng(61);
  PomdpModel m = random_model(rng, 3, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  CHECK(p.zeta_param_count() == 0);
  VectorXd g = exact_gradient(m, p).value;
  CHECK(g.size() == p.mu_param_count());
}

TEST_CASE("beta gradient aligns with the true gradient as beta grows") {
  PomdpModel m = testutil::toy2();
  Rng rng(67);
  FscPolicy p = random_policy(rng, 2, 2, 2);
  VectorXd ref = exact_gradient(m, p).value;
  double prev = -1.0;
  for (double beta : {0.9, 0.99, 0.999}) {
    VectorXd gb = exact_beta_gradient(m, p, beta).value;
    double a = gb.dot(ref) / (gb.norm() * ref.norm());
    CHECK(a >= prev - 1e-12);
    prev = a;
  }
  CHECK(prev > 0.999);
}

TEST_CASE("pythagorean decomposition of the projection error") {
  PomdpModel m = testutil::toy2();
  Rng rng(71);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  const double beta = 0.9;
  ExactSolution s = solve_exact(m, p, beta);
  FeatureMap f = minimum_basis(p, FeatureLevel::YZU);
  MatrixXd Phi = lift_features(f, s.xyzu);
  VectorXd v_lift(s.xyzu.size());
  for (int i = 0; i < s.xyzu.size(); ++i) {
    const int u = i % m.n_actions;
    const int zy = i / m.n_actions;
    const int z = zy % p.n_internal();
    const int y = (zy / p.n_internal()) % m.n_obs;
    v_lift(i) = s.v1_beta.value(s.key1(y, z, u));
  }
  auto E0 = [&](const VectorXd& w) { return s.pi_xyzu.dot(w.cwiseAbs2()); };
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd r(f.k_f);
    for (int i = 0; i < f.k_f; ++i) r(i) = 2.0 * rng.uniform01() - 1.0;
    VectorXd fr = Phi * r;
    double lhs = E0(s.Q_beta - fr);
    double rhs = s.pi_xyzu.dot(s.Q_beta.cwiseAbs2() - v_lift.cwiseAbs2()) +
                 E0(v_lift - fr);
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("td lambda fixed point at lambda 1 is the projection of Q_beta") {
  PomdpModel m = testutil::toy2();
  Rng rng(73);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  const double beta = 0.9;
  ExactSolution s = solve_exact(m, p, beta);
  FeatureMap f = minimum_basis(p, FeatureLevel::YZU);
  MatrixXd Phi = lift_features(f, s.xyzu);
  VectorXd r1 = td_lambda_fixed_point(s.xyzu.P, s.xyzu.g, s.pi_xyzu, Phi, beta,
                                      1.0, false);
  VectorXd proj = weighted_projection_coeffs(Phi, s.pi_xyzu, s.Q_beta);
  CHECK(weighted_norm(Phi * (r1 - proj), s.pi_xyzu) < 1e-10);
}

TEST_CASE("td lambda 0 fixed point satisfies its own stationarity equation") {
  PomdpModel m = testutil::toy2();
  Rng rng(79);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  ExactSolution s = solve_exact(m, p, 0.9);
  FeatureMap f = minimum_basis(p, FeatureLevel::YZU);
  MatrixXd Phi = lift_features(f, s.xyzu);
  VectorXd r = td_lambda_fixed_point(s.xyzu.P, s.xyzu.g, s.pi_xyzu, Phi, 0.0,
                                     0.0, true);
  // Phi' D (c + P Phi r - Phi r) = 0 with centered cost
  VectorXd c = s.xyzu.g;
  c.array() -= s.pi_xyzu.dot(s.xyzu.g);
  VectorXd res = Phi.transpose() * s.pi_xyzu.asDiagonal() *
                 (c + s.xyzu.P * Phi * r - Phi * r);
  CHECK(res.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("measured mixing factor lies in [0, 1) and shrinks toward lambda 1") {
  PomdpModel m = testutil::toy2();
  Rng rng(83);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  ExactSolution s = solve_exact(m, p, 0.9);
  FeatureMap f = minimum_basis(p, FeatureLevel::YZU);
  MatrixXd Phi = lift_features(f, s.xyzu);
  double prev = 1.0;
  for (double lambda : {0.5, 0.9, 0.99}) {
    double a = measured_mixing_factor(s.xyzu.P, s.pi_xyzu, Phi, lambda);
    CHECK(a >= 0.0);
    CHECK(a < 1.0);
    CHECK(a <= prev + 1e-12);
    prev = a;
  }
}
