#pragma once

// Linear-function-approximation critics over hidden-view trajectories:
// incremental TD(lambda) and LSPE(lambda), each in a beta-discounted and an
// average-cost variant. Per-step costs may carry an elapsed-time weight so
// the semi-Markov transformation g_n - (tau_{n+1} - tau_n) eta_hat reuses
// the same code path (delta_time = 1 recovers the POMDP case exactly).

#include "pomdpgrad/features.hpp"
#include "pomdpgrad/trajectory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>

namespace pomdpgrad {

struct StepSchedule {
  double a = 1.0;
  double b = 1000.0;
  double at(std::int64_t t) const { return a / (b + static_cast<double>(t)); }
};

enum class EtaMode {
  STEPWISE,  // eta += rho_t (g - eta), rho_t = min(1, mult * gamma_t)
  RATIO,     // eta = accumulated cost / accumulated time
};

struct CriticConfig {
  bool average_cost = false;
  double beta = 0.9;
  double lambda = 0.9;
  // discounted variant only: subtract the online average-cost estimate
  bool center = true;
  StepSchedule gamma;
  double eta_rate_mult = 10.0;
  EtaMode eta_mode = EtaMode::STEPWISE;
  double ridge = 1e-8;
};

class EtaTracker {
 public:
  EtaTracker(EtaMode mode, const StepSchedule& gamma, double mult)
      : mode_(mode), gamma_(gamma), mult_(mult) {}

  double value() const { return eta_; }

  void observe(double cost, double dt, std::int64_t t) {
    if (mode_ == EtaMode::RATIO) {
      cost_sum_ += cost;
      time_sum_ += dt;
      eta_ = cost_sum_ / time_sum_;
    } else {
      const double rho = std::min(1.0, mult_ * gamma_.at(t));
      eta_ += rho * (cost - eta_);
    }
  }

 private:
  EtaMode mode_;
  StepSchedule gamma_;
  double mult_;
  double eta_ = 0.0;
  double cost_sum_ = 0.0, time_sum_ = 0.0;
};

struct CriticState {
  VectorXd r;
  double eta_hat = 0.0;
  std::int64_t steps = 0;
};

// Eligibility-trace TD(lambda), one update per observed transition.
class TdCritic {
 public:
  TdCritic(int k_f, const CriticConfig& cfg)
      : cfg_(cfg),
        r_(VectorXd::Zero(k_f)),
        trace_(VectorXd::Zero(k_f)),
        eta_(cfg.eta_mode, cfg.gamma, cfg.eta_rate_mult) {}

  const VectorXd& r() const { return r_; }
  double eta_hat() const { return eta_.value(); }
  std::int64_t steps() const { return t_; }
  CriticState state() const { return {r_, eta_.value(), t_}; }

  void step(const Eigen::Ref<const Eigen::RowVectorXd>& phi, double cost,
            const Eigen::Ref<const Eigen::RowVectorXd>& phi_next,
            double dt = 1.0) {
    const double decay = cfg_.average_cost ? cfg_.lambda : cfg_.beta * cfg_.lambda;
    const double bcoef = cfg_.average_cost ? 1.0 : cfg_.beta;
    const bool centered = cfg_.average_cost || cfg_.center;
    const double q = centered ? cost - dt * eta_.value() : cost;
    trace_ = decay * trace_ + phi.transpose();
    const double d = q + bcoef * phi_next.dot(r_) - phi.dot(r_);
    r_ += cfg_.gamma.at(t_) * d * trace_;
    eta_.observe(cost, dt, t_);
    ++t_;
  }

 private:
  CriticConfig cfg_;
  VectorXd r_, trace_;
  EtaTracker eta_;
  std::int64_t t_ = 0;
};

// Least-squares policy evaluation: keeps running normal equations and takes
// a unit-stepsize solve each step. The inverse is maintained incrementally
// (Sherman-Morrison) so per-step cost is O(k_f^2).
class LspeCritic {
 public:
  LspeCritic(int k_f, const CriticConfig& cfg)
      : cfg_(cfg),
        r_(VectorXd::Zero(k_f)),
        trace_(VectorXd::Zero(k_f)),
        A_(MatrixXd::Zero(k_f, k_f)),
        b_(VectorXd::Zero(k_f)),
        Binv_(MatrixXd::Identity(k_f, k_f) / cfg.ridge),
        eta_(cfg.eta_mode, cfg.gamma, cfg.eta_rate_mult) {}

  const VectorXd& r() const { return r_; }
  double eta_hat() const { return eta_.value(); }
  std::int64_t steps() const { return t_; }
  CriticState state() const { return {r_, eta_.value(), t_}; }

  void step(const Eigen::Ref<const Eigen::RowVectorXd>& phi, double cost,
            const Eigen::Ref<const Eigen::RowVectorXd>& phi_next,
            double dt = 1.0) {
    const double decay = cfg_.average_cost ? cfg_.lambda : cfg_.beta * cfg_.lambda;
    const double bcoef = cfg_.average_cost ? 1.0 : cfg_.beta;
    const bool centered = cfg_.average_cost || cfg_.center;
    const double q = centered ? cost - dt * eta_.value() : cost;

    trace_ = decay * trace_ + phi.transpose();
    A_.noalias() += trace_ * (bcoef * phi_next - phi);
    b_.noalias() += q * trace_;
    // Binv <- (B + phi phi')^{-1}
    VectorXd Bp = Binv_ * phi.transpose();
    Binv_.noalias() -= (Bp * Bp.transpose()) / (1.0 + phi.dot(Bp));
    r_ += Binv_ * (A_ * r_ + b_);
    eta_.observe(cost, dt, t_);
    ++t_;
  }

 private:
  CriticConfig cfg_;
  VectorXd r_, trace_;
  MatrixXd A_;
  VectorXd b_;
  MatrixXd Binv_;
  EtaTracker eta_;
  std::int64_t t_ = 0;
};

// Number of transitions usable for TD updates on a view: YZUZ features need
// z_{t+2} for the successor tuple, YZU only z_{t+1} via the next step.
inline int usable_steps(const HiddenView& view, FeatureLevel level) {
  return std::max(0, view.length() - (level == FeatureLevel::YZU ? 1 : 2));
}

inline Eigen::Ref<const Eigen::RowVectorXd> feature_at(const FeatureMap& f,
                                                       const HiddenView& v,
                                                       int t) {
  return f.level == FeatureLevel::YZU
             ? f.phi1((*v.y)[t], (*v.z)[t], (*v.u)[t])
             : f.phi2((*v.y)[t], (*v.z)[t], (*v.u)[t], (*v.z)[t + 1]);
}

// Drives an LSPE critic over a whole view and returns the final state.
inline CriticState lspe_batch(const HiddenView& view, const FeatureMap& fmap,
                              const CriticConfig& cfg) {
  LspeCritic critic(fmap.k_f, cfg);
  const int n = usable_steps(view, fmap.level);
  for (int t = 0; t < n; ++t)
    critic.step(feature_at(fmap, view, t), (*view.g)[t],
                feature_at(fmap, view, t + 1));
  return critic.state();
}

}  // namespace pomdpgrad
