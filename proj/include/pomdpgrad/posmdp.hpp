#pragma once

// Partially observable semi-Markov extension: random sojourn times between
// decision epochs, ratio-form average cost eta = E{g} / E{tau}, the
// modified Poisson equation h = g - taubar eta + P h, and gradient
// estimation through the transformed per-stage cost g_n - dtau_n eta_hat.
// Controllers take observations, never sojourn times, as inputs; the policy
// API has no time-bearing entry point.

#include "pomdpgrad/actor.hpp"
#include "pomdpgrad/oracle.hpp"
#include "pomdpgrad/trajectory.hpp"

#include <vector>

namespace pomdpgrad {

enum class SojournFamily { DETERMINISTIC, EXPONENTIAL, TWO_POINT };

struct SojournSpec {
  SojournFamily family = SojournFamily::DETERMINISTIC;
  // DETERMINISTIC: value a; EXPONENTIAL: rate a; TWO_POINT: a w.p. p, else b
  double a = 1.0, b = 1.0, p = 0.5;

  double mean() const {
    switch (family) {
      case SojournFamily::DETERMINISTIC: return a;
      case SojournFamily::EXPONENTIAL: return 1.0 / a;
      default: return p * a + (1.0 - p) * b;
    }
  }

  // DETERMINISTIC consumes no draws, so tau == 1 paths share the embedded
  // chain bit-for-bit with plain POMDP simulation under the same seed.
  double sample(Rng& rng) const {
    switch (family) {
      case SojournFamily::DETERMINISTIC: return a;
      case SojournFamily::EXPONENTIAL: return rng.exponential(a);
      default: return rng.uniform01() < p ? a : b;
    }
  }
};

enum class PosmdpCostMode {
  MEAN,          // c = g(x, y, u), independent of tau
  PROPORTIONAL,  // c = g(x, y, u) * tau / taubar, conditional mean still g
};

struct PosmdpModel {
  PomdpModel base;
  // sojourn[u](x * n_obs + y)
  std::vector<std::vector<SojournSpec>> sojourn;
  PosmdpCostMode cost_mode = PosmdpCostMode::MEAN;

  const SojournSpec& spec(int x, int y, int u) const {
    return sojourn[u][x * base.n_obs + y];
  }
  double tau_bar(int x, int y, int u) const { return spec(x, y, u).mean(); }

  void validate() const {
    base.validate();
    if (static_cast<int>(sojourn.size()) != base.n_actions)
      throw ModelError("sojourn table count does not match action count");
    for (const auto& per_u : sojourn) {
      if (static_cast<int>(per_u.size()) != base.n_states * base.n_obs)
        throw ModelError("sojourn table has wrong shape");
      for (const auto& s : per_u)
        if (!(s.mean() > 0.0) || !std::isfinite(s.mean()))
          throw ModelError("sojourn mean must be positive and finite");
    }
  }
};

inline PosmdpModel make_posmdp(const PomdpModel& base, const SojournSpec& all,
                               PosmdpCostMode mode = PosmdpCostMode::MEAN) {
  PosmdpModel m;
  m.base = base;
  m.cost_mode = mode;
  m.sojourn.assign(base.n_actions,
                   std::vector<SojournSpec>(base.n_states * base.n_obs, all));
  m.validate();
  return m;
}

// Expected sojourn time on xyzu chain states.
inline VectorXd tau_bar_xyzu(const PosmdpModel& m, const JointChain& xyzu) {
  VectorXd tau(xyzu.size());
  for (int i = 0; i < xyzu.size(); ++i) {
    const int u = i % xyzu.n_actions;
    const int rest = i / (xyzu.n_actions * xyzu.n_z);
    const int x = rest / xyzu.n_obs;
    const int y = rest % xyzu.n_obs;
    tau(i) = m.tau_bar(x, y, u);
  }
  return tau;
}

inline double posmdp_average_cost(const PosmdpModel& m, const FscPolicy& policy) {
  JointChain xyzu = build_joint_chain(m.base, policy, ChainLevel::XYZU);
  VectorXd pi = stationary_distribution(xyzu.P);
  VectorXd tau = tau_bar_xyzu(m, xyzu);
  return pi.dot(xyzu.g) / pi.dot(tau);
}

// Bias of the modified Poisson equation h = g - taubar eta + P h with
// pi . h = 0, on an arbitrary chain level given the matching taubar vector.
inline VectorXd posmdp_bias(const JointChain& chain, const VectorXd& tau_bar,
                            double eta) {
  VectorXd pi = stationary_distribution(chain.P);
  VectorXd effective = chain.g - eta * tau_bar;
  // the effective cost has zero average, so the plain Poisson solve applies
  return poisson_solve(chain.P, effective, pi).second;
}

// Base model with the transformed cost g - taubar eta; its average cost is
// zero and the POMDP gradient machinery applies unchanged.
inline PomdpModel transformed_cost_model(const PosmdpModel& m, double eta) {
  PomdpModel t = m.base;
  for (int u = 0; u < t.n_actions; ++u)
    for (int x = 0; x < t.n_states; ++x)
      for (int y = 0; y < t.n_obs; ++y)
        t.cost[u](x, y) -= eta * m.tau_bar(x, y, u);
  return t;
}

inline GradientVector posmdp_gradient_exact(const PosmdpModel& m,
                                            const FscPolicy& policy) {
  const double eta = posmdp_average_cost(m, policy);
  PomdpModel t = transformed_cost_model(m, eta);
  GradientVector g = exact_gradient(t, policy);
  JointChain xyzu = build_joint_chain(m.base, policy, ChainLevel::XYZU);
  VectorXd pi = stationary_distribution(xyzu.P);
  g.value /= pi.dot(tau_bar_xyzu(m, xyzu));
  return g;
}

// ---- simulation ---------------------------------------------------------

struct PosmdpTrajectory {
  std::vector<int> x, y, z, u;
  std::vector<double> c;        // realized per-stage cost
  std::vector<double> sojourn;  // tau_{n+1} - tau_n
  std::vector<double> epoch;    // tau_n
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(u.size()); }
};

// x-free, epoch-bearing view for the semi-Markov estimators.
struct PosmdpView {
  const std::vector<int>* y;
  const std::vector<int>* z;
  const std::vector<int>* u;
  const std::vector<double>* c;
  const std::vector<double>* sojourn;

  int length() const { return static_cast<int>(u->size()); }
};

inline PosmdpView posmdp_view(const PosmdpTrajectory& t) {
  return {&t.y, &t.z, &t.u, &t.c, &t.sojourn};
}

// Draw order per epoch: u, sojourn, z_next, x_next, y_next.
inline PosmdpTrajectory simulate_posmdp(const PosmdpModel& m,
                                        const FscPolicy& policy, int N,
                                        std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("trajectory length must be >= 1");
  Rng rng(seed);
  PosmdpTrajectory traj;
  traj.seed = seed;

  const PomdpModel& base = m.base;
  int x;
  if (base.initial_dist) {
    std::vector<double> d(base.initial_dist->begin(), base.initial_dist->end());
    x = rng.categorical(d);
  } else {
    std::vector<double> d(base.n_states, 1.0 / base.n_states);
    x = rng.categorical(d);
  }
  int y;
  {
    std::vector<double> row(base.n_obs);
    for (int o = 0; o < base.n_obs; ++o) row[o] = base.observation[0](x, o);
    y = rng.categorical(row);
  }
  int z = 0;
  double t_now = 0.0;

  std::vector<double> trow(base.n_states), orow(base.n_obs);
  for (int n = 0; n < N; ++n) {
    const int u = policy.sample_action(z, y, rng);
    const double tau = m.spec(x, y, u).sample(rng);
    double cost = base.g(x, y, u);
    if (m.cost_mode == PosmdpCostMode::PROPORTIONAL)
      cost *= tau / m.tau_bar(x, y, u);
    traj.x.push_back(x);
    traj.y.push_back(y);
    traj.z.push_back(z);
    traj.u.push_back(u);
    traj.c.push_back(cost);
    traj.sojourn.push_back(tau);
    traj.epoch.push_back(t_now);
    t_now += tau;

    z = policy.sample_internal(z, y, u, rng);
    for (int j = 0; j < base.n_states; ++j) trow[j] = base.transition[u](x, j);
    x = rng.categorical(trow);
    for (int o = 0; o < base.n_obs; ++o) orow[o] = base.observation[u](x, o);
    y = rng.categorical(orow);
  }
  return traj;
}

// ---- estimation ---------------------------------------------------------

// Actor-critic gradient estimate on the embedded chain with transformed
// per-stage cost c_n - dtau_n eta_hat_n; eta_hat is the ratio of
// accumulated cost to accumulated time; the assembled estimate is divided
// by the empirical mean sojourn.
inline GradientEstimate posmdp_td_estimate(const PosmdpView& view,
                                           const FscPolicy& policy,
                                           ActorCriticConfig cfg,
                                           EstimatorTag mode) {
  if (mode == EstimatorTag::GPOMDP)
    throw std::invalid_argument("GPOMDP is not an actor-critic mode");
  cfg.critic.eta_mode = EtaMode::RATIO;
  HiddenView hv{view.y, view.z, view.u, view.c};
  ActorCriticResult r = actor_critic_run(hv, policy, cfg, view.sojourn);
  GradientEstimate est = mode == EstimatorTag::BTD ? r.btd : r.oltd;
  const int T = view.length();
  double mean_tau = 0.0;
  for (int n = 0; n < T; ++n) mean_tau += (*view.sojourn)[n];
  mean_tau /= T;
  est.value /= mean_tau;
  return est;
}

}  // namespace pomdpgrad
