#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ics/harness.hpp"

using namespace ics;
namespace fs = std::filesystem;

namespace {

ExperimentSpec quick_spec() {
  ExperimentSpec spec;
  spec.agents = {AgentKind::Greedy, AgentKind::Deterministic};
  spec.lambdas = {2, 14};
  spec.seeds = {1, 2};
  spec.eval_slots = 2000;
  return spec;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ics_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("agent names") {
  for (auto a : all_agents()) CHECK(agent_from_string(to_string(a)) == a);
  CHECK(to_string(AgentKind::IIcs) == "i-ics");
  CHECK_THROWS_AS(agent_from_string("sarsa"), ConfigError);
  CHECK(channel_preset_from_string("poor") == ChannelPreset::Poor);
  CHECK(class_probs_for(ChannelPreset::Poor) == std::vector<double>{0.6, 0.2, 0.2});
  CHECK(class_probs_for(ChannelPreset::Normal) == std::vector<double>{0.2, 0.6, 0.2});
  CHECK(class_probs_for(ChannelPreset::Good) == std::vector<double>{0.2, 0.2, 0.6});
  CHECK_THROWS_AS(channel_preset_from_string("bad"), ConfigError);
  CHECK(weights_preset("W2").sensing == 0.8);
  CHECK_THROWS_AS(weights_preset("W3"), ConfigError);
}

TEST_CASE("spec validation and cardinality") {
  ExperimentSpec spec;
  CHECK(spec.cell_count() == 4 * 10 * 5);
  CHECK_NOTHROW(spec.validate());
  auto broken = spec;
  broken.seeds.clear();
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = spec;
  broken.lambdas.clear();
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = spec;
  broken.weights = {"W9"};
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = spec;
  broken.eval_slots = 0;
  CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("cell keys and environments") {
  CellKey key{AgentKind::QLearning, 14, ChannelPreset::Good, "W2", 3};
  CHECK(key.str() == "qlearning/14/good/W2/3");
  CHECK(key.scenario_str() == "14/good/W2/3");
  ExperimentSpec spec;
  auto cfg = cell_env(spec, key);
  CHECK(cfg.arrival_mean == 14.0);
  CHECK(cfg.class_probs == class_probs_for(ChannelPreset::Good));
  CHECK(cfg.weights.queue == 0.025);
}

TEST_CASE("single cell gives one record and one aggregate") {
  auto spec = quick_spec();
  spec.agents = {AgentKind::Deterministic};
  spec.lambdas = {2};
  spec.seeds = {1};
  spec.channels = {ChannelPreset::Good};
  auto r = run_matrix(spec);
  REQUIRE(r.records.size() == 1);
  REQUIRE(r.aggregates.size() == 1);
  CHECK(r.all_ok());
  CHECK(r.aggregates[0].seeds == 1);
  CHECK(r.aggregates[0].stddev == EvalMetrics{});
  CHECK(r.aggregates[0].mean == r.records[0].metrics);
  // Five-frame capacity is far above two arrivals per slot.
  CHECK(r.records[0].metrics.avg_drops < 1e-3);

  std::stringstream js;
  write_summary_json(r, js);
  auto doc = nlohmann::json::parse(js.str());
  CHECK(doc["records"] == 1);
  CHECK(doc["failed"] == 0);
  CHECK(doc["cells"].size() == 1);
  for (auto& [k, v] : doc["cells"][0]["std"].items()) CHECK(v.get<double>() == 0.0);
}

TEST_CASE("matrix order, aggregates and worker independence") {
  auto spec = quick_spec();
  spec.channels = {ChannelPreset::Poor, ChannelPreset::Good};
  auto serial = run_matrix(spec);
  REQUIRE(serial.records.size() == spec.cell_count());
  CHECK(serial.aggregates.size() == 2 * 2 * 2);

  std::size_t i = 0;
  for (auto agent : spec.agents)
    for (double lambda : spec.lambdas)
      for (auto channel : spec.channels)
        for (auto seed : spec.seeds) {
          const auto& key = serial.records[i++].key;
          CHECK(key.agent == agent);
          CHECK(key.lambda == lambda);
          CHECK(key.channel == channel);
          CHECK(key.seed == seed);
        }

  for (const auto& a : serial.aggregates) {
    double sum = 0.0, n = 0;
    std::vector<double> xs;
    for (const auto& r : serial.records) {
      if (r.key.agent == a.agent && r.key.lambda == a.lambda && r.key.channel == a.channel) {
        xs.push_back(r.metrics.avg_cost);
        sum += r.metrics.avg_cost;
        ++n;
      }
    }
    double mean = sum / n;
    CHECK(std::abs(a.mean.avg_cost - mean) < 1e-12);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    CHECK(a.stddev.avg_cost == doctest::Approx(std::sqrt(ss / (n - 1))).epsilon(1e-12));
  }
  CHECK(serial.find(AgentKind::Greedy, 14, ChannelPreset::Poor, "W1") != nullptr);
  CHECK(serial.find(AgentKind::IIcs, 14, ChannelPreset::Poor, "W1") == nullptr);

  spec.jobs = 3;
  auto parallel = run_matrix(spec);
  std::stringstream a, b;
  write_results_csv(serial, a);
  write_results_csv(parallel, b);
  CHECK(a.str() == b.str());
}

TEST_CASE("learning cells are reproducible") {
  ExperimentSpec spec;
  spec.agents = {AgentKind::IIcs, AgentKind::QLearning};
  spec.lambdas = {8};
  spec.seeds = {1};
  spec.eval_slots = 500;
  spec.train.total_steps = 1500;
  spec.train.hidden = 16;
  spec.qlearning.total_steps = 1500;
  auto r1 = run_matrix(spec);
  spec.jobs = 2;
  auto r2 = run_matrix(spec);
  CHECK(r1.all_ok());
  REQUIRE(r1.records.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(r1.records[i].metrics == r2.records[i].metrics);
}

TEST_CASE("failing cells are recorded and skipped") {
  auto spec = quick_spec();
  spec.agents = {AgentKind::Deterministic};
  spec.lambdas = {2, 800};  // the Poisson sampler rejects means above 700
  spec.seeds = {1};
  auto r = run_matrix(spec);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].ok);
  CHECK_FALSE(r.records[1].ok);
  CHECK_FALSE(r.all_ok());
  CHECK(r.aggregates.size() == 1);
  std::stringstream csv;
  write_results_csv(r, csv);
  CHECK(csv.str().find(",\"error: poisson mean must lie in [0, 700]\"\n") != std::string::npos);
}

TEST_CASE("emit writes every table") {
  auto spec = quick_spec();
  auto r = run_matrix(spec);
  auto dir = scratch_dir("emit");
  auto paths = emit(r, dir.string(), true);
  CHECK(paths.size() == 8);
  auto results = slurp(dir / "results.csv");
  CHECK(line_count(results) == 1 + spec.cell_count());
  CHECK(results.rfind("agent,lambda,channel,weights,seed,avg_cost,avg_queue_len,avg_delta,avg_drops,"
                      "frame_loss_packets,status\n", 0) == 0);
  for (const char* f : {"cost_vs_lambda.csv", "queue_vs_lambda.csv", "delta_vs_lambda.csv", "drops_vs_lambda.csv"}) {
    CHECK(line_count(slurp(dir / f)) == 1 + spec.agents.size() * spec.lambdas.size());
  }
  CHECK(line_count(slurp(dir / "aggregates.csv")) == 1 + r.aggregates.size());

  // A second run reproduces every deterministic output byte for byte.
  auto dir2 = scratch_dir("emit2");
  emit(run_matrix(spec), dir2.string(), true);
  for (const char* f : {"results.csv", "aggregates.csv", "summary.json", "cost_vs_lambda.csv"}) {
    CHECK(slurp(dir / f) == slurp(dir2 / f));
  }

  CHECK_THROWS_AS(emit(MatrixResult{}, dir.string(), false), std::invalid_argument);
  auto blocker = dir / "file";
  std::ofstream(blocker) << "x";
  CHECK_THROWS_AS(emit(r, (blocker / "sub").string(), false), std::runtime_error);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("format_double round-trips") {
  CHECK(format_double(14) == "14");
  CHECK(format_double(0.1) == "0.1");
  for (double x : {1.0 / 3.0, 2.5e-300, 123456.789, -0.7071067811865475}) {
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("command-line tool") {
  const char* cli = std::getenv("ICS_CLI");
  if (!cli) {
    MESSAGE("ICS_CLI not set; skipping");
    return;
  }
  auto dir = scratch_dir("cli");
  fs::create_directories(dir);
  auto sh = [&](const std::string& args) {
    std::string cmd = std::string(cli) + " " + args + " > " + (dir / "stdout.txt").string() + " 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };

  CHECK(sh("check") == 0);
  CHECK(slurp(dir / "stdout.txt").find("FAIL") == std::string::npos);

  auto out = dir / "run";
  CHECK(sh("run --agent greedy,deterministic --lambda 2,14 --seeds 1,2 --eval-slots 500 --quiet --plot-data --out " +
           out.string()) == 0);
  CHECK(line_count(slurp(out / "results.csv")) == 1 + 8);
  CHECK(fs::exists(out / "drops_vs_lambda.csv"));

  // Output directory from the environment.
  auto env_out = dir / "from_env";
  std::string with_env = "ICS_OUT_DIR=" + env_out.string() + " " + cli +
                         " run --agent deterministic --lambda 2 --seeds 1 --eval-slots 100 --quiet > /dev/null";
  CHECK(std::system(with_env.c_str()) == 0);
  CHECK(fs::exists(env_out / "results.csv"));

  CHECK(sh("run --agent deterministic --lambda 800 --seeds 1 --eval-slots 10 --quiet --out " + out.string()) == 1);
  CHECK(sh("run --agent nobody --out " + out.string()) == 2);

  auto cfg = dir / "small.cfg";
  std::ofstream(cfg) << "# tiny run\nenv.queue_capacity = 30\ntrain.hidden = 8\neval.slots = 300\n";
  CHECK(sh("run --config " + cfg.string() + " --agent i-ics,qlearning --lambda 6 --seeds 1 --train-steps 1200"
           " --quiet --out " + out.string()) == 0);
  std::ofstream(dir / "bad.cfg") << "env.no_such_key = 1\n";
  CHECK(sh("run --config " + (dir / "bad.cfg").string() + " --agent deterministic --out " + out.string()) == 2);

  auto trained = dir / "trained";
  CHECK(sh("train --agent qlearning --lambda 6 --train-steps 2000 --out " + trained.string()) == 0);
  CHECK(fs::exists(trained / "qtable.csv"));
  CHECK(line_count(slurp(trained / "convergence.csv")) == 1 + 20);
  CHECK(sh("eval --agent qlearning --lambda 6 --seeds 1,2 --eval-slots 300 --checkpoint " +
           (trained / "qtable.csv").string()) == 0);
  CHECK(slurp(dir / "stdout.txt").find("mean: avg_cost=") != std::string::npos);

  CHECK(sh("train --agent i-ics --lambda 6 --train-steps 1200 --config " + cfg.string() + " --out " +
           trained.string()) == 0);
  CHECK(sh("eval --agent i-ics --lambda 6 --seeds 1 --config " + cfg.string() + " --checkpoint " +
           (trained / "net.bin").string()) == 0);
  CHECK(sh("eval --agent i-ics --lambda 6") == 2);
  CHECK(sh("train --agent greedy --out " + trained.string()) == 2);
  fs::remove_all(dir);
}
