#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomdpgrad/actor.hpp"
#include "pomdpgrad/oracle.hpp"
#include "pomdpgrad/trajectory.hpp"

#include "test_util.hpp"

#include <cmath>

using namespace pomdpgrad;
using testutil::random_model;
using testutil::random_policy;
using testutil::toy2;

namespace {

double cosine(const VectorXd& a, const VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

}  // namespace

TEST_CASE("alignment basics: sign, scale invariance, zero handling") {
  Rng rng(3);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  VectorXd v(p.k());
  v << 1.0, -2.0;
  CHECK(alignment(v, v, p) == doctest::Approx(1.0));
  CHECK(alignment(v, VectorXd(-v), p) == doctest::Approx(-1.0));
  CHECK(alignment(5.0 * v, 0.25 * v, p) == doctest::Approx(1.0));
  CHECK(std::isnan(alignment(VectorXd::Zero(p.k()), v, p)));
}

TEST_CASE("direction projection is the identity at interior points") {
  Rng rng(5);
  FscPolicy p = random_policy(rng, 2, 3, 2);
  REQUIRE(p.feasible());
  VectorXd d(p.k());
  for (int i = 0; i < p.k(); ++i) d(i) = 2.0 * rng.uniform01() - 1.0;
  // interior theta: any direction is feasible
  CHECK((project_direction(d, p) - d).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("direction projection zeroes escape components at active bounds") {
  FscPolicy p(2, 2, 1, TieMode::FREE);  // two scalar blocks of length 1
  VectorXd th = p.theta();
  th(0) = kDefaultLo;  // at the floor: moving down is infeasible
  th(1) = kDefaultHi;  // at the cap: moving up is infeasible
  p.set_theta(th);
  VectorXd d(2);
  d << -1.0, 1.0;
  VectorXd proj = project_direction(d, p);
  CHECK(proj(0) == 0.0);
  CHECK(proj(1) == 0.0);
  d << 1.0, -1.0;  // pointing inward: unchanged
  proj = project_direction(d, p);
  CHECK(proj(0) == 1.0);
  CHECK(proj(1) == -1.0);
}

TEST_CASE("direction projection satisfies the variational characterization") {
  // p = argmin ||d - q|| over the feasible cone iff (d - p) . p = 0 and
  // (d - p) . q <= 0 for all feasible directions q
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    FscPolicy p = random_policy(rng, 2, 3, 2);
    VectorXd th = p.theta();
    // push a few coordinates onto their bounds to activate constraints,
    // then clip so theta itself stays feasible
    for (int i = 0; i < p.k(); ++i)
      if (rng.uniform01() < 0.3) th(i) = rng.uniform01() < 0.5 ? 0.001 : 0.45;
    p.set_theta(clip_to_feasible(th, p));
    REQUIRE(p.feasible());
    VectorXd d(p.k());
    for (int i = 0; i < p.k(); ++i) d(i) = 2.0 * rng.uniform01() - 1.0;
    VectorXd proj = project_direction(d, p);

    // projection must itself be a feasible direction: a small step stays
    // inside (up to the slab constraints handled blockwise)
    const double eps = 1e-9;
    FscPolicy stepped = p;
    stepped.set_theta(clip_to_feasible(p.theta() + eps * proj, p));
    CHECK((stepped.theta() - (p.theta() + eps * proj)).lpNorm<Eigen::Infinity>() <
          1e-15 + 1e-6 * eps);

    CHECK(std::abs((d - proj).dot(proj)) < 1e-9 * std::max(1.0, d.norm()));
    for (int probe = 0; probe < 20; ++probe) {
      // random feasible direction: step from theta toward a random feasible
      // interior point
      FscPolicy q = p;
      testutil::randomize_policy(rng, q);
      VectorXd dir = q.theta() - p.theta();
      CHECK((d - proj).dot(dir) < 1e-9 * std::max(1.0, d.norm() * dir.norm()));
    }
  }
}

TEST_CASE("clip to feasible is idempotent and produces feasible points") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    FscPolicy p = random_policy(rng, 2, 3, 2);
    VectorXd target(p.k());
    for (int i = 0; i < p.k(); ++i) target(i) = 3.0 * rng.uniform01() - 1.5;
    VectorXd c = clip_to_feasible(target, p);
    FscPolicy q = p;
    q.set_theta(c);
    CHECK(q.feasible());
    CHECK((clip_to_feasible(c, p) - c).lpNorm<Eigen::Infinity>() < 1e-9);
    // projection property against random feasible competitors
    for (int probe = 0; probe < 10; ++probe) {
      FscPolicy w = p;
      testutil::randomize_policy(rng, w);
      CHECK((target - c).dot(w.theta() - c) < 1e-7);
    }
  }
}

TEST_CASE("gpomdp converges to the exact discounted gradient") {
  PomdpModel m = toy2();
  Rng rng(13);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  const double beta = 0.9;
  VectorXd ref = exact_beta_gradient(m, p, beta).value;
  Trajectory t = simulate(m, p, 400000, 31);
  VectorXd est = gpomdp_estimate(hidden_view(t), p, beta).value;
  CHECK(cosine(est, ref) > 0.99);
  CHECK((est - ref).norm() / ref.norm() < 0.15);
}

TEST_CASE("gpomdp works for finite-state controllers too") {
  PomdpModel m = toy2();
  Rng rng(17);
  FscPolicy p = random_policy(rng, 2, 2, 2);
  VectorXd ref = exact_gradient(m, p).value;
  Trajectory t = simulate(m, p, 400000, 37);
  VectorXd est = gpomdp_estimate(hidden_view(t), p, 0.99).value;
  CHECK(cosine(est, ref) > 0.95);
}

TEST_CASE("actor-critic estimators align with the exact gradient") {
  PomdpModel m = toy2();
  Rng rng(19);
  FscPolicy p = random_policy(rng, 2, 2, 2);
  VectorXd ref = exact_gradient(m, p).value;
  ActorCriticConfig cfg;
  cfg.critic.beta = 0.9;
  cfg.critic.lambda = 0.9;
  Trajectory t = simulate(m, p, 20000, 41);
  ActorCriticResult r = actor_critic_run(hidden_view(t), p, cfg);
  CHECK(r.has_zeta);
  CHECK(cosine(r.btd.value, ref) > 0.8);
  CHECK(std::isfinite(r.oltd.value.norm()));
  CHECK(r.btd.tag == EstimatorTag::BTD);
  CHECK(r.oltd.tag == EstimatorTag::OLTD);
}

TEST_CASE("zero cost gives zero actor-critic estimates") {
  Rng rng(23);
  PomdpModel m = random_model(rng, 3, 2, 2);
  for (auto& c : m.cost) c.setZero();
  FscPolicy p = random_policy(rng, 2, 2, 2);
  Trajectory t = simulate(m, p, 5000, 43);
  ActorCriticConfig cfg;
  ActorCriticResult r = actor_critic_run(hidden_view(t), p, cfg);
  CHECK(r.btd.value.lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(r.oltd.value.lpNorm<Eigen::Infinity>() < 1e-10);
  VectorXd g = gpomdp_estimate(hidden_view(t), p, 0.9).value;
  CHECK(g.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("estimators read only the hidden view, never the state") {
  Rng rng(29);
  PomdpModel m = random_model(rng, 3, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 2);
  Trajectory t = simulate(m, p, 5000, 47);
  VectorXd before = gpomdp_estimate(hidden_view(t), p, 0.9).value;
  for (auto& x : t.x) x = 0;  // scrambling x must change nothing
  VectorXd after = gpomdp_estimate(hidden_view(t), p, 0.9).value;
  CHECK((before - after).lpNorm<Eigen::Infinity>() == 0.0);
  ActorCriticConfig cfg;
  VectorXd ac = actor_critic_estimate(hidden_view(t), p, cfg,
                                      EstimatorTag::BTD).value;
  CHECK(std::isfinite(ac.norm()));
}

TEST_CASE("gpomdp rejects the actor-critic entry point") {
  Rng rng(31);
  PomdpModel m = random_model(rng, 2, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 1);
  Trajectory t = simulate(m, p, 100, 1);
  ActorCriticConfig cfg;
  CHECK_THROWS_AS(
      actor_critic_estimate(hidden_view(t), p, cfg, EstimatorTag::GPOMDP),
      std::invalid_argument);
}

TEST_CASE("training improves the oracle average cost on toy2") {
  PomdpModel m = toy2();
  FscPolicy p0(2, 2, 1, TieMode::FREE);
  TrainConfig cfg;
  cfg.estimator = EstimatorTag::GPOMDP;
  cfg.iterations = 30;
  cfg.steps_per_iter = 5000;
  cfg.step_size = 0.02;
  cfg.seed = 7;
  TrainResult res = train(m, p0, cfg);
  REQUIRE(static_cast<int>(res.log.size()) == cfg.iterations + 1);
  CHECK(res.log.back().eta_oracle < res.log.front().eta_oracle);
  CHECK(res.policy.feasible());
  // iteration indices are sequential and the final record closes the log
  for (int i = 0; i <= cfg.iterations; ++i) CHECK(res.log[i].iter == i);
}

TEST_CASE("training is reproducible given the seed") {
  PomdpModel m = toy2();
  FscPolicy p0(2, 2, 1, TieMode::FREE);
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.steps_per_iter = 2000;
  cfg.seed = 11;
  TrainResult a = train(m, p0, cfg);
  TrainResult b = train(m, p0, cfg);
  CHECK((a.policy.theta() - b.policy.theta()).lpNorm<Eigen::Infinity>() == 0.0);
}
