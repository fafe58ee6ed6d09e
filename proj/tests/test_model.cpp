#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomdpgrad/cassandra.hpp"
#include "pomdpgrad/joint_chain.hpp"
#include "pomdpgrad/markov.hpp"
#include "pomdpgrad/model.hpp"

#include "test_util.hpp"

using namespace pomdpgrad;
using testutil::random_model;
using testutil::random_policy;

namespace {

const char* kSmallPomdp = R"(# minimal two-state file
discount: 0.95
values: reward
states: s0 s1
actions: go stay
observations: o0 o1

start: 0.5 0.5

T: go
0.8 0.2
0.3 0.7
T: stay : s0 : s0 1.0
T: stay : s1 : s1 1.0

O: go
0.7 0.3
0.2 0.8
O: stay : * uniform

R: go : s0 : * : * 1.0
R: go : s1 : * : * -0.5
R: stay : * : * : * 0.25
)";

}  // namespace

TEST_CASE("cassandra parser reads the small file") {
  PomdpModel m = parse_pomdp(kSmallPomdp);
  CHECK(m.n_states == 2);
  CHECK(m.n_obs == 2);
  CHECK(m.n_actions == 2);
  CHECK(m.transition[0](0, 0) == 0.8);
  CHECK(m.transition[1](0, 0) == 1.0);
  CHECK(m.transition[1](1, 1) == 1.0);
  CHECK(m.observation[0](1, 1) == 0.8);
  CHECK(m.observation[1](0, 0) == 0.5);
  // rewards negated into costs, independent of y
  CHECK(m.g(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(m.g(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.g(0, 0, 1) == doctest::Approx(-0.25).epsilon(1e-15));
  REQUIRE(m.initial_dist.has_value());
  CHECK((*m.initial_dist)(0) == 0.5);
  CHECK(m.state_names[1] == "s1");
}

TEST_CASE("cassandra constant reward rows survive bit-exactly") {
  PomdpModel m = parse_pomdp(kSmallPomdp);
  CHECK(m.g(0, 1, 0) == -1.0);  // exactly, despite the T/O fold
  CHECK(m.g(1, 0, 1) == -0.25);
}

TEST_CASE("cassandra serialize/parse round trip is bit exact") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    PomdpModel m = random_model(rng, 3, 2, 2);
    // the text format carries per-(x, u) rewards only
    for (auto& c : m.cost) c = c.col(0).replicate(1, m.n_obs);
    std::string text = serialize_pomdp(m);
    PomdpModel back = parse_pomdp(text);
    for (int u = 0; u < m.n_actions; ++u) {
      CHECK(m.transition[u] == back.transition[u]);
      CHECK(m.observation[u] == back.observation[u]);
      CHECK(m.cost[u] == back.cost[u]);
    }
  }
}

TEST_CASE("cassandra errors carry line numbers") {
  CHECK_THROWS_AS(parse_pomdp("states: a b\nactions: u\nT: u\n0.5 0.5\n"),
                  ParseError);
  try {
    parse_pomdp("discount: 0.9\nvalues: reward\nstates: a\nactions: u\n"
                "observations: o\nT: u : bogus : a 1.0\n");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 6") != std::string::npos);
  }
}

TEST_CASE("json round trip preserves the model") {
  Rng rng(5);
  PomdpModel m = random_model(rng, 4, 3, 2);
  PomdpModel back = PomdpModel::from_json(m.to_json());
  for (int u = 0; u < m.n_actions; ++u) {
    CHECK((m.transition[u] - back.transition[u]).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((m.observation[u] - back.observation[u]).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((m.cost[u] - back.cost[u]).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("validate rejects malformed models") {
  Rng rng(9);
  PomdpModel m = random_model(rng, 2, 2, 2);
  PomdpModel bad = m;
  bad.transition[0](0, 0) += 0.5;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = m;
  bad.cost[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = m;
  bad.transition.pop_back();
  CHECK_THROWS_AS(bad.validate(), ModelError);
}

TEST_CASE("joint chain rows are stochastic at every level") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    int nx = 2 + static_cast<int>(rng.uniform01() * 3);
    int ny = 1 + static_cast<int>(rng.uniform01() * 3);
    int na = 1 + static_cast<int>(rng.uniform01() * 3);
    int nz = 1 + static_cast<int>(rng.uniform01() * 2);
    PomdpModel m = random_model(rng, nx, ny, na);
    FscPolicy p = random_policy(rng, ny, na, nz);
    for (ChainLevel level :
         {ChainLevel::XYZ, ChainLevel::XYZU, ChainLevel::XYZUZ}) {
      JointChain c = build_joint_chain(m, p, level);
      for (int i = 0; i < c.size(); ++i)
        CHECK(std::abs(c.P.row(i).sum() - 1.0) < 1e-12);
      CHECK((c.P.array() >= 0.0).all());
    }
  }
}

TEST_CASE("action marginal of the xyzu chain recovers the xyz chain") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    PomdpModel m = random_model(rng, 3, 2, 2);
    FscPolicy p = random_policy(rng, 2, 2, 2);
    JointChain xyz = build_joint_chain(m, p, ChainLevel::XYZ);
    JointChain xyzu = build_joint_chain(m, p, ChainLevel::XYZU);
    VectorXd pi_u = stationary_distribution(xyzu.P);
    VectorXd pi = stationary_distribution(xyz.P);
    // marginalizing the action gives the xyz stationary distribution
    for (int i = 0; i < xyz.size(); ++i) {
      double s = 0.0;
      for (int u = 0; u < m.n_actions; ++u) s += pi_u(i * m.n_actions + u);
      CHECK(s == doctest::Approx(pi(i)).epsilon(1e-10));
    }
    // and stationary average costs agree
    CHECK(pi.dot(xyz.g) == doctest::Approx(pi_u.dot(xyzu.g)).epsilon(1e-10));
  }
}

TEST_CASE("stationary action frequencies factor through the policy") {
  Rng rng(41);
  PomdpModel m = random_model(rng, 3, 2, 2);
  FscPolicy p = random_policy(rng, 2, 2, 2);
  JointChain xyz = build_joint_chain(m, p, ChainLevel::XYZ);
  JointChain xyzu = build_joint_chain(m, p, ChainLevel::XYZU);
  VectorXd pi = stationary_distribution(xyz.P);
  VectorXd pi_u = stationary_distribution(xyzu.P);
  for (int x = 0; x < m.n_states; ++x)
    for (int y = 0; y < m.n_obs; ++y)
      for (int z = 0; z < p.n_internal(); ++z)
        for (int u = 0; u < m.n_actions; ++u)
          CHECK(pi_u(xyzu.idx_xyzu(x, y, z, u)) ==
                doctest::Approx(pi(xyz.idx_xyz(x, y, z)) * p.mu(z, y, u))
                    .epsilon(1e-10));
}
