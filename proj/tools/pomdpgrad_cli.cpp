// Command-line entry point: wires models, policies, estimators, and the
// exact oracle into reproducible experiments with CSV outputs.
//
// Subcommands: exact, estimate, compare, train, posmdp.
// Exit codes: 0 ok, 2 config error, 3 model/assumption violation.

#include "pomdpgrad/cassandra.hpp"
#include "pomdpgrad/config.hpp"
#include "pomdpgrad/csv.hpp"
#include "pomdpgrad/oracle.hpp"
#include "pomdpgrad/posmdp.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>

namespace pg = pomdpgrad;
namespace fs = std::filesystem;

namespace {

pg::PomdpModel load_model(const pg::ExperimentConfig& cfg) {
  if (cfg.model_path.empty())
    throw pg::ConfigError("no model path given (use --model or [model] path)");
  std::string fmt = cfg.model_format;
  if (fmt == "auto")
    fmt = cfg.model_path.ends_with(".json") ? "json" : "pomdp";
  if (fmt == "json") return pg::load_model_json(cfg.model_path);
  if (fmt == "pomdp") return pg::load_pomdp_file(cfg.model_path);
  throw pg::ConfigError("unknown model format: " + fmt);
}

pg::FscPolicy load_policy(const pg::ExperimentConfig& cfg,
                          const pg::PomdpModel& model) {
  if (!cfg.checkpoint.empty()) {
    pg::FscPolicy p = pg::FscPolicy::load(cfg.checkpoint);
    if (p.n_obs() != model.n_obs || p.n_actions() != model.n_actions)
      throw pg::ConfigError("checkpoint policy does not match model spaces");
    return p;
  }
  return pg::make_direct_fsc(model.n_obs, model.n_actions, cfg.n_internal,
                             cfg.tie_mode);
}

std::string out_path(const pg::ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

int run_exact(const pg::ExperimentConfig& cfg) {
  pg::PomdpModel model = load_model(cfg);
  pg::FscPolicy policy = load_policy(cfg, model);
  pg::ExactSolution s = pg::solve_exact(model, policy, cfg.beta);
  pg::GradientVector grad = pg::exact_gradient(model, policy);
  pg::GradientVector grad_beta = pg::exact_beta_gradient(model, policy, cfg.beta);

  {
    pg::CsvWriter w(out_path(cfg, "solution_states.csv"),
                    {"x", "y", "z", "pi", "h", "J_beta"}, cfg.hash, cfg.seed);
    for (int x = 0; x < model.n_states; ++x)
      for (int y = 0; y < model.n_obs; ++y)
        for (int z = 0; z < policy.n_internal(); ++z) {
          const int i = s.xyz.idx_xyz(x, y, z);
          w.row({std::to_string(x), std::to_string(y), std::to_string(z),
                 pg::csv_num(s.pi_xyz(i)), pg::csv_num(s.h(i)),
                 pg::csv_num(s.J_beta(i))});
        }
  }
  {
    pg::CsvWriter w(out_path(cfg, "solution_values.csv"),
                    {"x", "y", "z", "u", "pi", "Q", "Q_beta"}, cfg.hash, cfg.seed);
    for (int x = 0; x < model.n_states; ++x)
      for (int y = 0; y < model.n_obs; ++y)
        for (int z = 0; z < policy.n_internal(); ++z)
          for (int u = 0; u < model.n_actions; ++u) {
            const int i = s.xyzu.idx_xyzu(x, y, z, u);
            w.row({std::to_string(x), std::to_string(y), std::to_string(z),
                   std::to_string(u), pg::csv_num(s.pi_xyzu(i)),
                   pg::csv_num(s.Q(i)), pg::csv_num(s.Q_beta(i))});
          }
  }
  {
    pg::CsvWriter w(out_path(cfg, "conditional_means.csv"),
                    {"y", "z", "u", "z_next", "v1", "v1_beta", "v2"},
                    cfg.hash, cfg.seed);
    for (int y = 0; y < model.n_obs; ++y)
      for (int z = 0; z < policy.n_internal(); ++z)
        for (int u = 0; u < model.n_actions; ++u)
          for (int z2 = 0; z2 < policy.n_internal(); ++z2) {
            const int k1 = s.key1(y, z, u);
            const int k2 = s.key2(y, z, u, z2);
            auto cell = [](const pg::ConditionalMean& cm, int k) {
              return cm.defined[k] ? pg::csv_num(cm.value(k)) : std::string("nan");
            };
            w.row({std::to_string(y), std::to_string(z), std::to_string(u),
                   std::to_string(z2), cell(s.v1, k1), cell(s.v1_beta, k1),
                   cell(s.v2, k2)});
          }
  }
  {
    pg::CsvWriter w(out_path(cfg, "gradient.csv"),
                    {"coordinate", "grad_eta", "grad_beta_eta"}, cfg.hash,
                    cfg.seed);
    for (int i = 0; i < policy.k(); ++i)
      w.row({std::to_string(i), pg::csv_num(grad.value(i)),
             pg::csv_num(grad_beta.value(i))});
  }
  std::cout << "eta " << pg::csv_num(s.eta) << "\n";
  std::cout << "grad_norm " << pg::csv_num(grad.value.norm()) << "\n";
  return 0;
}

pg::VectorXd one_estimate(const pg::PomdpModel& model, const pg::FscPolicy& policy,
                          const pg::ExperimentConfig& cfg, pg::EstimatorTag tag,
                          std::uint64_t seed) {
  pg::Trajectory traj = pg::simulate(model, policy, cfg.T, seed);
  pg::HiddenView view = pg::hidden_view(traj);
  if (tag == pg::EstimatorTag::GPOMDP)
    return pg::gpomdp_estimate(view, policy, cfg.beta).value;
  return pg::actor_critic_estimate(view, policy, cfg.ac_config(), tag).value;
}

int run_estimate(const pg::ExperimentConfig& cfg) {
  pg::PomdpModel model = load_model(cfg);
  pg::FscPolicy policy = load_policy(cfg, model);
  pg::GradientVector ref = pg::exact_gradient(model, policy);
  pg::CsvWriter w(out_path(cfg, "estimates.csv"),
                  {"estimator", "seed", "alignment", "norm"}, cfg.hash, cfg.seed);
  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = pg::mix_seed(cfg.seed, s);
    pg::VectorXd est = one_estimate(model, policy, cfg, cfg.tag, seed);
    w.row({pg::to_string(cfg.tag), std::to_string(s),
           pg::csv_num(pg::alignment(est, ref.value, policy, cfg.near_minimum)),
           pg::csv_num(est.norm())});
  }
  return 0;
}

int run_compare(const pg::ExperimentConfig& cfg) {
  pg::PomdpModel model = load_model(cfg);
  pg::FscPolicy policy = load_policy(cfg, model);
  pg::GradientVector ref = pg::exact_gradient(model, policy);
  const pg::EstimatorTag tags[] = {pg::EstimatorTag::BTD, pg::EstimatorTag::OLTD,
                                   pg::EstimatorTag::GPOMDP};
  pg::CsvWriter w(out_path(cfg, "compare.csv"),
                  {"estimator", "seed", "alignment"}, cfg.hash, cfg.seed);
  for (auto tag : tags) {
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = pg::mix_seed(cfg.seed, s);
      pg::VectorXd est = one_estimate(model, policy, cfg, tag, seed);
      const double a = pg::alignment(est, ref.value, policy, cfg.near_minimum);
      w.row({pg::to_string(tag), std::to_string(s), pg::csv_num(a)});
      sum += a;
      sum2 += a * a;
    }
    const double mean = sum / cfg.seeds;
    w.row({pg::to_string(tag), "mean", pg::csv_num(mean)});
    if (cfg.seeds > 1) {
      const double var = (sum2 - cfg.seeds * mean * mean) / (cfg.seeds - 1);
      w.row({pg::to_string(tag), "std", pg::csv_num(std::sqrt(std::max(0.0, var)))});
    } else {
      w.row({pg::to_string(tag), "std", ""});
    }
  }
  return 0;
}

int run_train(const pg::ExperimentConfig& cfg) {
  pg::PomdpModel model = load_model(cfg);
  pg::FscPolicy policy = load_policy(cfg, model);
  pg::TrainConfig tc;
  tc.estimator = cfg.tag;
  tc.beta = cfg.beta;
  tc.lambda = cfg.lambda;
  tc.iterations = cfg.iterations;
  tc.steps_per_iter = cfg.T;
  tc.step_size = cfg.step;
  tc.seed = cfg.seed;
  tc.ac = cfg.ac_config();

  pg::CsvWriter w(out_path(cfg, "train_log.csv"),
                  {"iter", "eta_oracle", "grad_norm", "wall_ms"}, cfg.hash,
                  cfg.seed);
  auto t0 = std::chrono::steady_clock::now();
  pg::TrainResult res = pg::train(model, policy, tc, [&](const pg::TrainRecord& r) {
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    w.row({std::to_string(r.iter), pg::csv_num(r.eta_oracle),
           pg::csv_num(r.grad_norm), pg::csv_num(ms)});
    std::cout << "iter " << r.iter << " eta " << pg::csv_num(r.eta_oracle)
              << "\n";
  });
  res.policy.save(out_path(cfg, "final_policy.json"));
  return 0;
}

int run_posmdp(const pg::ExperimentConfig& cfg) {
  pg::PomdpModel base = load_model(cfg);
  pg::FscPolicy policy = load_policy(cfg, base);
  pg::PosmdpModel pm = pg::make_posmdp(base, cfg.sojourn, cfg.cost_mode);
  const double eta = pg::posmdp_average_cost(pm, policy);
  pg::GradientVector ref = pg::posmdp_gradient_exact(pm, policy);
  pg::CsvWriter w(out_path(cfg, "posmdp.csv"),
                  {"estimator", "seed", "alignment", "eta_hat"}, cfg.hash,
                  cfg.seed);
  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = pg::mix_seed(cfg.seed, s);
    pg::PosmdpTrajectory traj = pg::simulate_posmdp(pm, policy, cfg.T, seed);
    pg::PosmdpView view = pg::posmdp_view(traj);
    pg::EstimatorTag tag =
        cfg.tag == pg::EstimatorTag::GPOMDP ? pg::EstimatorTag::BTD : cfg.tag;
    pg::GradientEstimate est =
        pg::posmdp_td_estimate(view, policy, cfg.ac_config(), tag);
    double cost_sum = 0.0, time_sum = 0.0;
    for (int t = 0; t < traj.length(); ++t) {
      cost_sum += traj.c[t];
      time_sum += traj.sojourn[t];
    }
    w.row({pg::to_string(tag), std::to_string(s),
           pg::csv_num(pg::alignment(est.value, ref.value, policy,
                                     cfg.near_minimum)),
           pg::csv_num(cost_sum / time_sum)});
  }
  std::cout << "eta " << pg::csv_num(eta) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy-gradient estimation for POMDPs with finite-state controllers"};
  app.require_subcommand(1);

  std::string config_path, model_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "experiment config file");
  app.add_option("--model", model_path, "model file (.pomdp or .json)");
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "base RNG seed");

  const char* modes[] = {"exact", "estimate", "compare", "train", "posmdp"};
  for (const char* m : modes) app.add_subcommand(m);

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;

  try {
    pg::ExperimentConfig cfg =
        config_path.empty() ? pg::ExperimentConfig{} : pg::load_config(config_path);
    cfg.mode = app.get_subcommands()[0]->get_name();
    if (!model_path.empty()) cfg.model_path = model_path;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.seed = seed;

    if (cfg.mode == "exact") return run_exact(cfg);
    if (cfg.mode == "estimate") return run_estimate(cfg);
    if (cfg.mode == "compare") return run_compare(cfg);
    if (cfg.mode == "train") return run_train(cfg);
    if (cfg.mode == "posmdp") return run_posmdp(cfg);
    throw pg::ConfigError("unknown mode " + cfg.mode);
  } catch (const pg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pg::ParseError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const pg::ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const pg::ChainError& e) {
    std::cerr << "assumption violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
