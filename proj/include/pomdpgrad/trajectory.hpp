#pragma once

// Seeded sample paths of (x, y, z, u, g). The hidden state x is recorded
// for diagnostics only; estimators receive a HiddenView that does not carry
// it. RNG discipline: one mt19937_64 stream per trajectory, draws in the
// fixed order u, z_next, x_next, y_next each step.

#include "pomdpgrad/model.hpp"
#include "pomdpgrad/policy.hpp"
#include "pomdpgrad/random.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pomdpgrad {

struct Trajectory {
  std::vector<int> x, y, z, u;
  std::vector<double> g;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(u.size()); }
};

// x-free view; all estimators are written against this type.
struct HiddenView {
  const std::vector<int>* y;
  const std::vector<int>* z;
  const std::vector<int>* u;
  const std::vector<double>* g;

  int length() const { return static_cast<int>(u->size()); }
};

inline HiddenView hidden_view(const Trajectory& t) {
  return {&t.y, &t.z, &t.u, &t.g};
}

inline Trajectory simulate(const PomdpModel& model, const FscPolicy& policy,
                           int T, std::uint64_t seed,
                           std::optional<int> init_state = std::nullopt) {
  if (T < 1) throw std::invalid_argument("trajectory length must be >= 1");
  if (policy.n_obs() != model.n_obs || policy.n_actions() != model.n_actions)
    throw std::invalid_argument("policy spaces do not match model spaces");
  Rng rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.x.reserve(T + 1);
  traj.y.reserve(T + 1);
  traj.z.reserve(T + 1);
  traj.u.reserve(T);
  traj.g.reserve(T);

  int x;
  if (init_state) {
    x = *init_state;
    if (x < 0 || x >= model.n_states)
      throw std::invalid_argument("initial state out of range");
  } else if (model.initial_dist) {
    std::vector<double> d(model.initial_dist->begin(), model.initial_dist->end());
    x = rng.categorical(d);
  } else {
    std::vector<double> d(model.n_states, 1.0 / model.n_states);
    x = rng.categorical(d);
  }
  // no action precedes t = 0; the first observation uses action 0's table
  int y;
  {
    std::vector<double> row(model.n_obs);
    for (int o = 0; o < model.n_obs; ++o) row[o] = model.observation[0](x, o);
    y = rng.categorical(row);
  }
  int z = 0;

  std::vector<double> trow(model.n_states), orow(model.n_obs);
  for (int t = 0; t < T; ++t) {
    const int u = policy.sample_action(z, y, rng);
    traj.x.push_back(x);
    traj.y.push_back(y);
    traj.z.push_back(z);
    traj.u.push_back(u);
    traj.g.push_back(model.g(x, y, u));

    z = policy.sample_internal(z, y, u, rng);
    for (int j = 0; j < model.n_states; ++j) trow[j] = model.transition[u](x, j);
    x = rng.categorical(trow);
    for (int o = 0; o < model.n_obs; ++o) orow[o] = model.observation[u](x, o);
    y = rng.categorical(orow);
  }
  return traj;
}

}  // namespace pomdpgrad
