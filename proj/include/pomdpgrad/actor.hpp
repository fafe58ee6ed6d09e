#pragma once

// Gradient estimators from hidden-view trajectories and the projected
// constant-step training loop.
//
// GPOMDP recursion (no pseudocode in the literature we follow; pinned here):
//   e_{t+1} = beta * e_t + s_t,   s_t = grad log mu(u_t | z_t, y_t)
//                                     + grad log zeta(z_{t+1} | z_t, y_t, u_t)
//   estimate = (1/T) sum_t (g_t - eta_hat_t) e_t
// with eta_hat_t the online average-cost estimate from steps before t.
//
// Actor-critic assembly:
//   estimate = (1/T) sum_t [ score_mu(t) vhat1(y_t, z_t, u_t)
//                          + score_zeta(t) vhat2(y_t, z_t, u_t, z_{t+1}) ]
// where vhat_i = phi' r from an LSPE critic; B-TD applies the final
// coefficients, OL-TD the strictly causal per-step snapshot.

#include "pomdpgrad/critic.hpp"
#include "pomdpgrad/oracle.hpp"
#include "pomdpgrad/trajectory.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace pomdpgrad {

enum class EstimatorTag { GPOMDP, BTD, OLTD };

inline std::string to_string(EstimatorTag t) {
  switch (t) {
    case EstimatorTag::GPOMDP: return "GPOMDP";
    case EstimatorTag::BTD: return "B-TD";
    default: return "OL-TD";
  }
}

struct GradientEstimate {
  VectorXd value;
  EstimatorTag tag = EstimatorTag::GPOMDP;
  int T = 0;
  double beta = 0.0, lambda = 0.0;
};

inline GradientEstimate gpomdp_estimate(const HiddenView& view,
                                        const FscPolicy& policy, double beta,
                                        EtaMode eta_mode = EtaMode::RATIO) {
  const int T = view.length();
  if (T < 2) throw std::invalid_argument("trajectory too short");
  VectorXd e = VectorXd::Zero(policy.k());
  VectorXd acc = VectorXd::Zero(policy.k());
  EtaTracker eta(eta_mode, StepSchedule{}, 10.0);
  ScoreEntries sc;
  const bool fsc = !policy.reactive();
  for (int t = 0; t < T; ++t) {
    e *= beta;
    policy.score_mu_entries((*view.z)[t], (*view.y)[t], (*view.u)[t], sc);
    for (const auto& [idx, v] : sc) e(idx) += v;
    if (fsc && t + 1 < T) {
      policy.score_zeta_entries((*view.z)[t], (*view.y)[t], (*view.u)[t],
                                (*view.z)[t + 1], sc);
      for (const auto& [idx, v] : sc) e(idx) += v;
    }
    const double g = (*view.g)[t];
    acc += (g - eta.value()) * e;
    eta.observe(g, 1.0, t);
  }
  return {acc / T, EstimatorTag::GPOMDP, T, beta, 0.0};
}

struct ActorCriticConfig {
  CriticConfig critic;  // shared by both critics
};

struct ActorCriticResult {
  GradientEstimate btd, oltd;
  CriticState critic1, critic2;
  bool has_zeta = false;
};

// Single pass: drives the YZU critic (and the YZUZ critic for FSC policies)
// and accumulates both actor assemblies. `cost` and `dt` default to the
// view's own costs and unit times; the semi-Markov path passes transformed
// versions.
inline ActorCriticResult actor_critic_run(
    const HiddenView& view, const FscPolicy& policy,
    const ActorCriticConfig& cfg,
    const std::vector<double>* dt_opt = nullptr) {
  const int T = view.length();
  const bool fsc = !policy.reactive();
  FeatureMap f1 = minimum_basis(policy, FeatureLevel::YZU);
  FeatureMap f2;
  if (fsc) f2 = minimum_basis(policy, FeatureLevel::YZUZ);

  LspeCritic c1(f1.k_f, cfg.critic);
  LspeCritic c2(fsc ? f2.k_f : 1, cfg.critic);

  const int k = policy.k();
  MatrixXd M1 = MatrixXd::Zero(k, f1.k_f);
  MatrixXd M2 = fsc ? MatrixXd::Zero(k, f2.k_f) : MatrixXd();
  VectorXd ol = VectorXd::Zero(k);

  const int n = fsc ? std::max(0, T - 2) : std::max(0, T - 1);
  if (n < 1) throw std::invalid_argument("trajectory too short");
  ScoreEntries sc;
  for (int t = 0; t < n; ++t) {
    const double dt = dt_opt ? (*dt_opt)[t] : 1.0;
    const auto phi1 = feature_at(f1, view, t);
    // OL-TD consumes the snapshot available before this step
    policy.score_mu_entries((*view.z)[t], (*view.y)[t], (*view.u)[t], sc);
    const double v1_ol = phi1.dot(c1.r());
    for (const auto& [idx, v] : sc) {
      ol(idx) += v * v1_ol;
      M1.row(idx) += v * phi1;
    }
    if (fsc) {
      const auto phi2 = feature_at(f2, view, t);
      policy.score_zeta_entries((*view.z)[t], (*view.y)[t], (*view.u)[t],
                                (*view.z)[t + 1], sc);
      const double v2_ol = phi2.dot(c2.r());
      for (const auto& [idx, v] : sc) {
        ol(idx) += v * v2_ol;
        M2.row(idx) += v * phi2;
      }
    }
    c1.step(phi1, (*view.g)[t], feature_at(f1, view, t + 1), dt);
    if (fsc)
      c2.step(feature_at(f2, view, t), (*view.g)[t],
              feature_at(f2, view, t + 1), dt);
  }

  ActorCriticResult res;
  res.has_zeta = fsc;
  res.critic1 = c1.state();
  if (fsc) res.critic2 = c2.state();
  VectorXd btd = M1 * c1.r();
  if (fsc) btd += M2 * c2.r();
  res.btd = {btd / n, EstimatorTag::BTD, T, cfg.critic.beta, cfg.critic.lambda};
  res.oltd = {ol / n, EstimatorTag::OLTD, T, cfg.critic.beta, cfg.critic.lambda};
  return res;
}

inline GradientEstimate actor_critic_estimate(const HiddenView& view,
                                              const FscPolicy& policy,
                                              const ActorCriticConfig& cfg,
                                              EstimatorTag mode) {
  if (mode == EstimatorTag::GPOMDP)
    throw std::invalid_argument("GPOMDP is not an actor-critic mode");
  ActorCriticResult r = actor_critic_run(view, policy, cfg);
  return mode == EstimatorTag::BTD ? r.btd : r.oltd;
}

// ---- feasible directions ------------------------------------------------

inline constexpr double kActiveTol = 1e-9;

namespace detail {

// Exact Euclidean projection of d onto the tangent cone of one parameter
// block: active coordinate bounds force the sign of single coordinates, an
// active residual bound constrains the block sum. The optimum is the
// projection onto the affine hull of some face, so enumerate faces.
inline void project_block(Eigen::Ref<VectorXd> d, const VectorXd& theta,
                          const VectorXd& lo, const VectorXd& hi, int start,
                          int len) {
  const int m = len;
  std::vector<int> sign(m, 0);  // +1: d_i >= 0 required, -1: d_i <= 0
  for (int i = 0; i < m; ++i) {
    if (theta(start + i) <= lo(start + i) + kActiveTol) sign[i] = +1;
    if (theta(start + i) >= hi(start + i) - kActiveTol) sign[i] = -1;
  }
  double bsum = theta.segment(start, len).sum();
  const double residual = 1.0 - bsum;
  int sum_sign = 0;  // +1: block sum must not decrease, -1: must not increase
  if (residual <= kDefaultLo + kActiveTol) sum_sign = -1;
  if (residual >= kDefaultHi - kActiveTol) sum_sign = +1;

  std::vector<int> cons;  // indices of coordinate constraints; m == sum
  for (int i = 0; i < m; ++i)
    if (sign[i] != 0) cons.push_back(i);
  if (sum_sign != 0) cons.push_back(m);
  const int nc = static_cast<int>(cons.size());
  if (nc == 0) return;

  VectorXd best = VectorXd::Zero(m);
  double best_dist = std::numeric_limits<double>::infinity();
  VectorXd d0(m);
  for (int i = 0; i < m; ++i) d0(i) = d(start + i);

  for (int mask = 0; mask < (1 << nc); ++mask) {
    VectorXd p = d0;
    bool sum_eq = false;
    int free_count = m;
    for (int c = 0; c < nc; ++c)
      if (mask & (1 << c)) {
        if (cons[c] == m) sum_eq = true;
        else {
          p(cons[c]) = 0.0;
          --free_count;
        }
      }
    if (sum_eq) {
      if (free_count == 0) continue;
      double s = 0.0;
      for (int i = 0; i < m; ++i) {
        bool fixed = false;
        for (int c = 0; c < nc; ++c)
          if ((mask & (1 << c)) && cons[c] == i) fixed = true;
        if (!fixed) s += p(i);
      }
      const double shift = s / free_count;
      for (int i = 0; i < m; ++i) {
        bool fixed = false;
        for (int c = 0; c < nc; ++c)
          if ((mask & (1 << c)) && cons[c] == i) fixed = true;
        if (!fixed) p(i) -= shift;
      }
    }
    // feasibility of the candidate
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      if (sign[i] > 0 && p(i) < -1e-12) ok = false;
      if (sign[i] < 0 && p(i) > 1e-12) ok = false;
    }
    const double ps = p.sum();
    if (sum_sign > 0 && ps < -1e-12) ok = false;
    if (sum_sign < 0 && ps > 1e-12) ok = false;
    if (!ok) continue;
    const double dist = (p - d0).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = p;
    }
  }
  for (int i = 0; i < m; ++i) d(start + i) = best(i);
}

}  // namespace detail

// Projection of a direction onto the feasible direction set at theta:
// coordinate box constraints plus the residual-probability constraint on
// each block sum.
inline VectorXd project_direction(const VectorXd& dir, const FscPolicy& policy) {
  VectorXd d = dir;
  const VectorXd& th = policy.theta();
  const VectorXd& lo = policy.lower();
  const VectorXd& hi = policy.upper();
  std::vector<char> in_block(policy.k(), 0);
  for (const auto& b : policy.blocks()) {
    detail::project_block(d, th, lo, hi, b.start, b.len);
    for (int i = 0; i < b.len; ++i) in_block[b.start + i] = 1;
  }
  for (int i = 0; i < policy.k(); ++i) {
    if (in_block[i]) continue;
    if (th(i) <= lo(i) + kActiveTol && d(i) < 0.0) d(i) = 0.0;
    if (th(i) >= hi(i) - kActiveTol && d(i) > 0.0) d(i) = 0.0;
  }
  return d;
}

// Euclidean projection of theta onto the feasible set: coordinate box plus
// a sum slab per block. The set is separable across blocks, and within a
// block the KKT conditions give x_i = clamp(d_i - t) with a scalar shift t
// chosen so the active sum bound is met; the clamped sum is monotone in t,
// so bisection finds the exact projection.
inline VectorXd clip_to_feasible(const VectorXd& theta, const FscPolicy& policy) {
  const VectorXd& lo = policy.lower();
  const VectorXd& hi = policy.upper();
  VectorXd x = theta.cwiseMax(lo).cwiseMin(hi);
  for (const auto& b : policy.blocks()) {
    const double smin = 1.0 - kDefaultHi, smax = 1.0 - kDefaultLo;
    const double s = x.segment(b.start, b.len).sum();
    if (s >= smin && s <= smax) continue;
    const double target = s > smax ? smax : smin;
    auto clamped_sum = [&](double t) {
      double acc = 0.0;
      for (int i = 0; i < b.len; ++i)
        acc += std::clamp(theta(b.start + i) - t, lo(b.start + i),
                          hi(b.start + i));
      return acc;
    };
    double t_lo = -2.0, t_hi = 2.0;
    for (int i = 0; i < b.len; ++i) {
      t_lo = std::min(t_lo, theta(b.start + i) - hi(b.start + i) - 1.0);
      t_hi = std::max(t_hi, theta(b.start + i) - lo(b.start + i) + 1.0);
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (t_lo + t_hi);
      (clamped_sum(mid) > target ? t_lo : t_hi) = mid;
    }
    // land on the feasible side of the (possibly one-ulp-wide) bracket
    const double t = s > smax ? t_hi : t_lo;
    for (int i = 0; i < b.len; ++i)
      x(b.start + i) =
          std::clamp(theta(b.start + i) - t, lo(b.start + i), hi(b.start + i));
  }
  return x;
}

// ---- alignment ----------------------------------------------------------

// Cosine between estimate and reference. In near-minimum mode both vectors
// are first negated and projected onto the feasible direction set.
inline double alignment(const VectorXd& est, const VectorXd& ref,
                        const FscPolicy& policy, bool near_minimum = false) {
  VectorXd a = est, b = ref;
  if (near_minimum) {
    a = project_direction(-est, policy);
    b = project_direction(-ref, policy);
  }
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return a.dot(b) / (na * nb);
}

// ---- training loop ------------------------------------------------------

struct TrainConfig {
  EstimatorTag estimator = EstimatorTag::GPOMDP;
  double beta = 0.9;
  double lambda = 0.9;
  int iterations = 200;
  int steps_per_iter = 20000;
  double step_size = 0.01;
  std::uint64_t seed = 1;
  ActorCriticConfig ac;  // beta/lambda copied in before use
};

struct TrainRecord {
  int iter;
  double eta_oracle;
  double grad_norm;
};

struct TrainResult {
  FscPolicy policy;
  std::vector<TrainRecord> log;

  explicit TrainResult(FscPolicy p) : policy(std::move(p)) {}
};

// One fresh trajectory per iteration, nothing reused across iterations.
inline TrainResult train(const PomdpModel& model, const FscPolicy& policy0,
                         TrainConfig cfg,
                         const std::function<void(const TrainRecord&)>& on_iter =
                             nullptr) {
  cfg.ac.critic.beta = cfg.beta;
  cfg.ac.critic.lambda = cfg.lambda;
  TrainResult result(policy0);
  FscPolicy& policy = result.policy;
  for (int it = 0; it < cfg.iterations; ++it) {
    Trajectory traj = simulate(model, policy, cfg.steps_per_iter,
                               mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    HiddenView view = hidden_view(traj);
    VectorXd grad;
    if (cfg.estimator == EstimatorTag::GPOMDP) {
      grad = gpomdp_estimate(view, policy, cfg.beta).value;
    } else {
      ActorCriticResult r = actor_critic_run(view, policy, cfg.ac);
      grad = (cfg.estimator == EstimatorTag::BTD ? r.btd : r.oltd).value;
    }
    TrainRecord rec{it, average_cost(model, policy), grad.norm()};
    result.log.push_back(rec);
    if (on_iter) on_iter(rec);
    VectorXd dir = project_direction(-grad, policy);
    policy.set_theta(clip_to_feasible(policy.theta() + cfg.step_size * dir, policy));
  }
  TrainRecord rec{cfg.iterations, average_cost(model, policy), 0.0};
  result.log.push_back(rec);
  if (on_iter) on_iter(rec);
  return result;
}

}  // namespace pomdpgrad
