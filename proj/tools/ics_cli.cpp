// ics: command-line front end for the waveform-structure simulator.
//
//   ics run   --agent i-ics,qlearning --lambda 2,8,14 --channel normal --weights W1 --seeds 1,2 --out dir
//   ics train --agent i-ics --lambda 14 --out dir
//   ics eval  --agent i-ics --checkpoint dir/net.bin --lambda 14
//   ics check

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ics/checks.hpp"
#include "ics/harness.hpp"

namespace {

using namespace ics;

std::string default_out_dir() {
  if (const char* env = std::getenv("ICS_OUT_DIR"); env && *env) return env;
  return "results";
}

struct CommonOptions {
  std::string config_path;
  std::int64_t eval_slots = -1;
  std::int64_t train_steps = -1;
};

// Loads env/train/qlearning sections from the config file into a spec.
ExperimentSpec base_spec(const CommonOptions& opts) {
  ExperimentSpec spec;
  if (!opts.config_path.empty()) {
    auto file = KeyValueFile::load(opts.config_path);
    spec.base_env = env_config_from(file);
    spec.train = train_config_from(file);
    spec.qlearning = qlearning_config_from(file);
    if (auto v = file.get_int("eval.slots")) spec.eval_slots = *v;
    auto unused = file.unused_keys("eval.");
    if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
  }
  if (opts.eval_slots > 0) spec.eval_slots = opts.eval_slots;
  if (opts.train_steps >= 0) {
    spec.train.total_steps = opts.train_steps;
    spec.qlearning.total_steps = opts.train_steps;
  }
  return spec;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Key-value config file (env.*, train.*, qlearning.*, eval.*)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--eval-slots", opts.eval_slots, "Evaluation slots per seed (default 20000)");
  cmd->add_option("--train-steps", opts.train_steps, "Training steps for learning agents (default 200000)");
}

void print_metrics(const EvalMetrics& m) {
  std::cout << "avg_cost=" << format_double(m.avg_cost) << " avg_queue_len=" << format_double(m.avg_queue)
            << " avg_delta=" << format_double(m.avg_delta) << " avg_drops=" << format_double(m.avg_drops)
            << " frame_loss_packets=" << format_double(m.avg_frame_loss) << "\n";
}

int cmd_check() {
  bool all = true;
  for (const auto& r : run_self_checks()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integrated communication and sensing waveform-structure simulator"};
  app.require_subcommand(1);

  // run
  CommonOptions run_opts;
  std::vector<std::string> run_agents{"i-ics", "qlearning", "greedy", "deterministic"};
  std::vector<double> run_lambdas{2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  std::vector<std::string> run_channels{"normal"};
  std::vector<std::string> run_weights{"W1"};
  std::vector<std::uint64_t> run_seeds{1, 2, 3, 4, 5};
  std::string run_out = default_out_dir();
  bool plot_data = false;
  int jobs = 1;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the experiment matrix");
  add_common(run, run_opts);
  run->add_option("--agent", run_agents, "Agents: i-ics, qlearning, greedy, deterministic")->delimiter(',');
  run->add_option("--lambda", run_lambdas, "Mean arrivals per slot")->delimiter(',');
  run->add_option("--channel", run_channels, "Channel presets: poor, normal, good")->delimiter(',');
  run->add_option("--weights", run_weights, "Weight presets: W1, W2")->delimiter(',');
  run->add_option("--seeds", run_seeds, "Seeds")->delimiter(',');
  run->add_option("--out", run_out, "Output directory (default $ICS_OUT_DIR or ./results)");
  run->add_flag("--plot-data", plot_data, "Also write one CSV per metric vs lambda");
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "No per-cell progress lines");

  // train
  CommonOptions train_opts;
  std::string train_agent = "i-ics";
  double train_lambda = 14;
  std::string train_channel = "normal";
  std::string train_weights = "W1";
  std::uint64_t train_seed = 1;
  std::string train_out = default_out_dir();
  auto* train = app.add_subcommand("train", "Train one learning agent and write its policy and convergence log");
  add_common(train, train_opts);
  train->add_option("--agent", train_agent, "i-ics or qlearning");
  train->add_option("--lambda", train_lambda, "Mean arrivals per slot");
  train->add_option("--channel", train_channel, "poor, normal or good");
  train->add_option("--weights", train_weights, "W1 or W2");
  train->add_option("--seed", train_seed, "Seed");
  train->add_option("--out", train_out, "Output directory");

  // eval
  CommonOptions eval_opts;
  std::string eval_agent = "deterministic";
  std::string eval_checkpoint;
  double eval_lambda = 14;
  std::string eval_channel = "normal";
  std::string eval_weights = "W1";
  std::vector<std::uint64_t> eval_seeds{1, 2, 3, 4, 5};
  auto* eval = app.add_subcommand("eval", "Evaluate one policy");
  add_common(eval, eval_opts);
  eval->add_option("--agent", eval_agent, "i-ics, qlearning, greedy or deterministic");
  eval->add_option("--checkpoint", eval_checkpoint, "net.bin for i-ics, qtable.csv for qlearning")
      ->check(CLI::ExistingFile);
  eval->add_option("--lambda", eval_lambda, "Mean arrivals per slot");
  eval->add_option("--channel", eval_channel, "poor, normal or good");
  eval->add_option("--weights", eval_weights, "W1 or W2");
  eval->add_option("--seeds", eval_seeds, "Evaluation seeds")->delimiter(',');

  auto* check = app.add_subcommand("check", "Run formula, gradient and oracle self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return cmd_check();

    if (run->parsed()) {
      auto spec = base_spec(run_opts);
      spec.agents.clear();
      for (const auto& a : run_agents) spec.agents.push_back(agent_from_string(a));
      spec.lambdas = run_lambdas;
      spec.channels.clear();
      for (const auto& c : run_channels) spec.channels.push_back(channel_preset_from_string(c));
      spec.weights = run_weights;
      spec.seeds = run_seeds;
      spec.jobs = jobs;
      auto result = run_matrix(spec, quiet ? nullptr : &std::cerr);
      for (const auto& path : emit(result, run_out, plot_data)) std::cout << "wrote " << path << "\n";
      if (!result.all_ok()) {
        std::cerr << "one or more cells failed; see results.csv\n";
        return 1;
      }
      return 0;
    }

    if (train->parsed()) {
      auto spec = base_spec(train_opts);
      CellKey key{agent_from_string(train_agent), train_lambda, channel_preset_from_string(train_channel),
                  train_weights, train_seed};
      auto env_cfg = cell_env(spec, key);
      std::filesystem::create_directories(train_out);
      const auto dir = std::filesystem::path(train_out);
      std::vector<ConvergenceRow> log;
      if (key.agent == AgentKind::IIcs) {
        TrainConfig tc = spec.train;
        tc.seed = derive_seed(key.seed, key.str() + "/train");
        tc.env_seed = derive_seed(key.seed, key.str() + "/train-env");
        auto result = run_training(env_cfg, tc);
        nn::save_checkpoint(result.net, (dir / "net.bin").string());
        std::cout << "wrote " << (dir / "net.bin").string() << "\n";
        log = std::move(result.log);
      } else if (key.agent == AgentKind::QLearning) {
        QLearningConfig qc = spec.qlearning;
        qc.seed = derive_seed(key.seed, key.str() + "/train");
        Environment env(env_cfg, derive_seed(key.seed, key.str() + "/train-env"));
        auto result = train_q_learning(env, qc);
        std::ofstream out(dir / "qtable.csv");
        result.table.write_csv(out, env_cfg.channel_classes());
        std::cout << "wrote " << (dir / "qtable.csv").string() << "\n";
        log = std::move(result.log);
      } else {
        throw ConfigError("only i-ics and qlearning are trainable");
      }
      std::ofstream out(dir / "convergence.csv");
      write_convergence_csv(log, out);
      if (!out) throw std::runtime_error("failed writing convergence log");
      std::cout << "wrote " << (dir / "convergence.csv").string() << "\n";
      if (!log.empty()) std::cout << "final moving_avg_reward=" << format_double(log.back().moving_avg_reward) << "\n";
      return 0;
    }

    if (eval->parsed()) {
      auto spec = base_spec(eval_opts);
      CellKey key{agent_from_string(eval_agent), eval_lambda, channel_preset_from_string(eval_channel),
                  eval_weights, 0};
      auto env_cfg = cell_env(spec, key);
      std::unique_ptr<Policy> policy;
      if (key.agent == AgentKind::IIcs || key.agent == AgentKind::QLearning) {
        if (eval_checkpoint.empty()) throw ConfigError("--checkpoint is required for learning agents");
        if (key.agent == AgentKind::IIcs) {
          policy = std::make_unique<NetPolicy>(nn::load_checkpoint(eval_checkpoint), env_cfg);
        } else {
          std::ifstream in(eval_checkpoint);
          policy = std::make_unique<TablePolicy>(read_qtable_csv(in), env_cfg.channel_classes());
        }
      } else {
        policy = make_policy(spec, key);
      }
      std::vector<std::uint64_t> seeds;
      for (auto s : eval_seeds) {
        key.seed = s;
        seeds.push_back(derive_seed(s, key.scenario_str() + "/eval"));
      }
      auto result = evaluate(*policy, env_cfg, spec.eval_slots, seeds);
      for (std::size_t i = 0; i < result.per_seed.size(); ++i) {
        std::cout << "seed " << eval_seeds[i] << ": ";
        print_metrics(result.per_seed[i]);
      }
      std::cout << "mean: ";
      print_metrics(result.mean);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
