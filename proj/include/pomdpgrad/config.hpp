#pragma once

// Experiment configuration: a small [section] key = value text format so
// every run is a diffable artifact, plus the parsed representation shared
// by the CLI subcommands.

#include "pomdpgrad/actor.hpp"
#include "pomdpgrad/critic.hpp"
#include "pomdpgrad/csv.hpp"
#include "pomdpgrad/posmdp.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pomdpgrad {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // [model]
  std::string model_path;
  std::string model_format = "auto";  // pomdp | json | auto (by extension)

  // [policy]
  int n_internal = 1;
  TieMode tie_mode = TieMode::FREE;
  std::string checkpoint;  // optional theta0 source

  // [estimator]
  EstimatorTag tag = EstimatorTag::GPOMDP;
  double beta = 0.9;
  double lambda = 0.9;
  int T = 20000;
  int seeds = 5;
  bool critic_average = false;
  StepSchedule schedule;
  bool center = true;
  EtaMode eta_mode = EtaMode::STEPWISE;

  // [run]
  std::string mode = "exact";
  int iterations = 200;
  double step = 0.01;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  bool near_minimum = false;

  // [posmdp]
  SojournSpec sojourn;
  PosmdpCostMode cost_mode = PosmdpCostMode::MEAN;

  std::uint64_t hash = 0;  // of the raw config text

  ActorCriticConfig ac_config() const {
    ActorCriticConfig c;
    c.critic.average_cost = critic_average;
    c.critic.beta = beta;
    c.critic.lambda = lambda;
    c.critic.center = center;
    c.critic.gamma = schedule;
    c.critic.eta_mode = eta_mode;
    return c;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace detail

inline void apply_config_entry(ExperimentConfig& c, const std::string& section,
                               const std::string& key, const std::string& value) {
  using detail::parse_bool;
  const std::string k = section + "." + key;
  try {
    if (k == "model.path") c.model_path = value;
    else if (k == "model.format") c.model_format = value;
    else if (k == "policy.n_internal") c.n_internal = std::stoi(value);
    else if (k == "policy.tie_mode") {
      if (value == "FREE") c.tie_mode = TieMode::FREE;
      else if (value == "TIED_MEMORY") c.tie_mode = TieMode::TIED_MEMORY;
      else throw ConfigError("unknown tie_mode: " + value);
    } else if (k == "policy.checkpoint") c.checkpoint = value;
    else if (k == "estimator.tag") {
      if (value == "GPOMDP") c.tag = EstimatorTag::GPOMDP;
      else if (value == "B-TD" || value == "BTD") c.tag = EstimatorTag::BTD;
      else if (value == "OL-TD" || value == "OLTD") c.tag = EstimatorTag::OLTD;
      else throw ConfigError("unknown estimator tag: " + value);
    } else if (k == "estimator.beta") c.beta = std::stod(value);
    else if (k == "estimator.lambda") c.lambda = std::stod(value);
    else if (k == "estimator.T") c.T = std::stoi(value);
    else if (k == "estimator.seeds") c.seeds = std::stoi(value);
    else if (k == "estimator.critic") {
      if (value == "discounted") c.critic_average = false;
      else if (value == "average") c.critic_average = true;
      else throw ConfigError("unknown critic kind: " + value);
    } else if (k == "estimator.step_a") c.schedule.a = std::stod(value);
    else if (k == "estimator.step_b") c.schedule.b = std::stod(value);
    else if (k == "estimator.center") c.center = parse_bool(value, k);
    else if (k == "estimator.eta_mode") {
      if (value == "stepwise") c.eta_mode = EtaMode::STEPWISE;
      else if (value == "ratio") c.eta_mode = EtaMode::RATIO;
      else throw ConfigError("unknown eta_mode: " + value);
    } else if (k == "run.mode") c.mode = value;
    else if (k == "run.iterations") c.iterations = std::stoi(value);
    else if (k == "run.step") c.step = std::stod(value);
    else if (k == "run.seed") c.seed = std::stoull(value);
    else if (k == "run.out") c.out_dir = value;
    else if (k == "run.near_minimum") c.near_minimum = parse_bool(value, k);
    else if (k == "posmdp.sojourn") {
      std::istringstream ss(value);
      std::string fam;
      ss >> fam;
      if (fam == "deterministic") {
        c.sojourn.family = SojournFamily::DETERMINISTIC;
        ss >> c.sojourn.a;
      } else if (fam == "exponential") {
        c.sojourn.family = SojournFamily::EXPONENTIAL;
        ss >> c.sojourn.a;
      } else if (fam == "twopoint") {
        c.sojourn.family = SojournFamily::TWO_POINT;
        ss >> c.sojourn.a >> c.sojourn.b >> c.sojourn.p;
      } else {
        throw ConfigError("unknown sojourn family: " + fam);
      }
      if (ss.fail()) throw ConfigError("bad sojourn spec: " + value);
    } else if (k == "posmdp.cost_mode") {
      if (value == "mean") c.cost_mode = PosmdpCostMode::MEAN;
      else if (value == "proportional") c.cost_mode = PosmdpCostMode::PROPORTIONAL;
      else throw ConfigError("unknown cost_mode: " + value);
    } else {
      throw ConfigError("unknown config key: " + k);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + k + ": " + value);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + k + ": " + value);
  }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  c.hash = content_hash(text);
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = s.substr(1, s.size() - 2);
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply_config_entry(c, section, detail::trim(s.substr(0, eq)),
                       detail::trim(s.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace pomdpgrad
