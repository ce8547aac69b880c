#include "ics/harness.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <json.hpp>

namespace ics {

std::string to_string(AgentKind agent) {
  switch (agent) {
    case AgentKind::IIcs: return "i-ics";
    case AgentKind::QLearning: return "qlearning";
    case AgentKind::Greedy: return "greedy";
    case AgentKind::Deterministic: return "deterministic";
  }
  return "?";
}

AgentKind agent_from_string(const std::string& name) {
  if (name == "i-ics" || name == "iics" || name == "dqn") return AgentKind::IIcs;
  if (name == "qlearning" || name == "q-learning") return AgentKind::QLearning;
  if (name == "greedy") return AgentKind::Greedy;
  if (name == "deterministic") return AgentKind::Deterministic;
  throw ConfigError("unknown agent '" + name + "' (expected i-ics, qlearning, greedy or deterministic)");
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void ExperimentSpec::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid experiment: " + what); };
  if (agents.empty()) fail("no agents");
  if (lambdas.empty()) fail("no arrival rates");
  if (channels.empty()) fail("no channel presets");
  if (weights.empty()) fail("no weight presets");
  if (seeds.empty()) fail("no seeds");
  if (eval_slots < 1) fail("eval_slots must be >= 1");
  if (jobs < 1) fail("jobs must be >= 1");
  for (double l : lambdas) {
    if (!(l >= 0.0)) fail("arrival rates must be >= 0");
  }
  for (const auto& w : weights) weights_preset(w);
  train.validate();
}

std::string CellKey::str() const { return to_string(agent) + "/" + scenario_str(); }

std::string CellKey::scenario_str() const {
  return format_double(lambda) + "/" + to_string(channel) + "/" + weights + "/" + std::to_string(seed);
}

bool MatrixResult::all_ok() const {
  for (const auto& r : records) {
    if (!r.ok) return false;
  }
  return true;
}

const AggregateRecord* MatrixResult::find(AgentKind agent, double lambda, ChannelPreset channel,
                                          const std::string& weights) const {
  for (const auto& a : aggregates) {
    if (a.agent == agent && a.lambda == lambda && a.channel == channel && a.weights == weights) return &a;
  }
  return nullptr;
}

EnvConfig cell_env(const ExperimentSpec& spec, const CellKey& key) {
  EnvConfig cfg = spec.base_env;
  cfg.arrival_mean = key.lambda;
  cfg.class_probs = class_probs_for(key.channel);
  cfg.weights = weights_preset(key.weights);
  cfg.validate();
  return cfg;
}

std::unique_ptr<Policy> make_policy(const ExperimentSpec& spec, const CellKey& key) {
  EnvConfig env_cfg = cell_env(spec, key);
  const std::string id = key.str();
  switch (key.agent) {
    case AgentKind::Greedy:
      return std::make_unique<GreedyPolicy>(env_cfg);
    case AgentKind::Deterministic:
      return std::make_unique<DeterministicPolicy>(deterministic_action(env_cfg.max_frames));
    case AgentKind::QLearning: {
      QLearningConfig qc = spec.qlearning;
      qc.seed = derive_seed(key.seed, id + "/train");
      Environment env(env_cfg, derive_seed(key.seed, id + "/train-env"));
      auto trained = train_q_learning(env, qc);
      return std::make_unique<TablePolicy>(std::move(trained.table), env_cfg.channel_classes());
    }
    case AgentKind::IIcs: {
      TrainConfig tc = spec.train;
      tc.seed = derive_seed(key.seed, id + "/train");
      tc.env_seed = derive_seed(key.seed, id + "/train-env");
      auto trained = run_training(env_cfg, tc);
      return std::make_unique<NetPolicy>(std::move(trained.net), env_cfg);
    }
  }
  throw std::logic_error("unhandled agent");
}

MetricsRecord run_cell(const ExperimentSpec& spec, const CellKey& key) {
  MetricsRecord rec;
  rec.key = key;
  auto start = std::chrono::steady_clock::now();
  try {
    auto policy = make_policy(spec, key);
    std::uint64_t eval_seed = derive_seed(key.seed, key.scenario_str() + "/eval");
    rec.metrics = evaluate_one(*policy, cell_env(spec, key), spec.eval_slots, eval_seed);
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

MatrixResult run_matrix(const ExperimentSpec& spec, std::ostream* progress) {
  spec.validate();
  std::vector<CellKey> keys;
  for (auto agent : spec.agents)
    for (double lambda : spec.lambdas)
      for (auto channel : spec.channels)
        for (const auto& w : spec.weights)
          for (auto seed : spec.seeds) keys.push_back({agent, lambda, channel, w, seed});

  MatrixResult result;
  result.records.resize(keys.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      result.records[i] = run_cell(spec, keys[i]);
      std::size_t finished = ++done;
      if (progress) {
        std::lock_guard lock(log_mutex);
        const auto& r = result.records[i];
        *progress << "[" << finished << "/" << keys.size() << "] " << r.key.str() << " "
                  << (r.ok ? "cost=" + format_double(r.metrics.avg_cost) : "FAILED: " + r.error) << " ("
                  << r.wall_time << " s)\n"
                  << std::flush;
      }
    }
  };
  const int workers = std::min<int>(spec.jobs, static_cast<int>(keys.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  result.aggregates = aggregate(result.records);
  return result;
}

std::vector<AggregateRecord> aggregate(const std::vector<MetricsRecord>& records) {
  std::vector<AggregateRecord> out;
  std::vector<std::vector<const EvalMetrics*>> members;
  std::map<std::tuple<AgentKind, double, ChannelPreset, std::string>, std::size_t> index;
  for (const auto& r : records) {
    if (!r.ok) continue;
    auto k = std::make_tuple(r.key.agent, r.key.lambda, r.key.channel, r.key.weights);
    auto it = index.find(k);
    if (it == index.end()) {
      it = index.emplace(k, out.size()).first;
      AggregateRecord a;
      a.agent = r.key.agent;
      a.lambda = r.key.lambda;
      a.channel = r.key.channel;
      a.weights = r.key.weights;
      out.push_back(a);
      members.emplace_back();
    }
    members[it->second].push_back(&r.metrics);
  }

  auto fields = [](EvalMetrics& m) {
    return std::array<double*, 5>{&m.avg_cost, &m.avg_queue, &m.avg_delta, &m.avg_drops, &m.avg_frame_loss};
  };
  auto cfields = [](const EvalMetrics& m) {
    return std::array<double, 5>{m.avg_cost, m.avg_queue, m.avg_delta, m.avg_drops, m.avg_frame_loss};
  };
  for (std::size_t g = 0; g < out.size(); ++g) {
    auto& a = out[g];
    const auto& ms = members[g];
    a.seeds = static_cast<int>(ms.size());
    const double n = static_cast<double>(ms.size());
    auto mean = fields(a.mean);
    auto sd = fields(a.stddev);
    for (std::size_t f = 0; f < 5; ++f) {
      double sum = 0.0;
      for (const auto* m : ms) sum += cfields(*m)[f];
      *mean[f] = sum / n;
      double ss = 0.0;
      for (const auto* m : ms) {
        double d = cfields(*m)[f] - *mean[f];
        ss += d * d;
      }
      *sd[f] = ms.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
  }
  return out;
}

namespace {

void write_metrics(std::ostream& out, const EvalMetrics& m) {
  out << format_double(m.avg_cost) << ',' << format_double(m.avg_queue) << ',' << format_double(m.avg_delta)
      << ',' << format_double(m.avg_drops) << ',' << format_double(m.avg_frame_loss);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::ordered_json metrics_json(const EvalMetrics& m) {
  return {{"avg_cost", m.avg_cost},
          {"avg_queue_len", m.avg_queue},
          {"avg_delta", m.avg_delta},
          {"avg_drops", m.avg_drops},
          {"frame_loss_packets", m.avg_frame_loss}};
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace

void write_results_csv(const MatrixResult& result, std::ostream& out) {
  out << "agent,lambda,channel,weights,seed,avg_cost,avg_queue_len,avg_delta,avg_drops,frame_loss_packets,status\n";
  for (const auto& r : result.records) {
    out << to_string(r.key.agent) << ',' << format_double(r.key.lambda) << ',' << to_string(r.key.channel) << ','
        << r.key.weights << ',' << r.key.seed << ',';
    if (r.ok) {
      write_metrics(out, r.metrics);
      out << ",ok\n";
    } else {
      out << ",,,,," << csv_escape("error: " + r.error) << '\n';
    }
  }
}

void write_aggregates_csv(const MatrixResult& result, std::ostream& out) {
  out << "agent,lambda,channel,weights,seeds,avg_cost,avg_queue_len,avg_delta,avg_drops,frame_loss_packets,"
         "std_cost,std_queue_len,std_delta,std_drops,std_frame_loss_packets\n";
  for (const auto& a : result.aggregates) {
    out << to_string(a.agent) << ',' << format_double(a.lambda) << ',' << to_string(a.channel) << ',' << a.weights
        << ',' << a.seeds << ',';
    write_metrics(out, a.mean);
    out << ',';
    write_metrics(out, a.stddev);
    out << '\n';
  }
}

void write_summary_json(const MatrixResult& result, std::ostream& out) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& a : result.aggregates) {
    cells.push_back({{"agent", to_string(a.agent)},
                     {"lambda", a.lambda},
                     {"channel", to_string(a.channel)},
                     {"weights", a.weights},
                     {"seeds", a.seeds},
                     {"mean", metrics_json(a.mean)},
                     {"std", metrics_json(a.stddev)}});
  }
  std::size_t failed = 0;
  for (const auto& r : result.records) failed += r.ok ? 0 : 1;
  nlohmann::ordered_json doc = {{"cells", cells}, {"records", result.records.size()}, {"failed", failed}};
  out << doc.dump(2) << '\n';
}

void write_timings_csv(const MatrixResult& result, std::ostream& out) {
  out << "agent,lambda,channel,weights,seed,wall_time\n";
  for (const auto& r : result.records) {
    out << to_string(r.key.agent) << ',' << format_double(r.key.lambda) << ',' << to_string(r.key.channel) << ','
        << r.key.weights << ',' << r.key.seed << ',' << r.wall_time << '\n';
  }
}

std::vector<std::string> write_plot_data(const MatrixResult& result, const std::string& dir) {
  struct Series {
    const char* file;
    double EvalMetrics::*field;
  };
  const Series series[] = {{"cost_vs_lambda.csv", &EvalMetrics::avg_cost},
                           {"queue_vs_lambda.csv", &EvalMetrics::avg_queue},
                           {"delta_vs_lambda.csv", &EvalMetrics::avg_delta},
                           {"drops_vs_lambda.csv", &EvalMetrics::avg_drops}};
  std::vector<std::string> paths;
  for (const auto& s : series) {
    auto path = (std::filesystem::path(dir) / s.file).string();
    auto out = open_for_write(path);
    out << "agent,channel,weights,lambda,mean,std\n";
    for (const auto& a : result.aggregates) {
      out << to_string(a.agent) << ',' << to_string(a.channel) << ',' << a.weights << ','
          << format_double(a.lambda) << ',' << format_double(a.mean.*s.field) << ','
          << format_double(a.stddev.*s.field) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
    paths.push_back(path);
  }
  return paths;
}

std::vector<std::string> emit(const MatrixResult& result, const std::string& dir, bool plot_data) {
  if (result.records.empty()) throw std::invalid_argument("no results to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());

  std::vector<std::string> paths;
  auto write = [&](const char* name, auto&& writer) {
    auto path = (std::filesystem::path(dir) / name).string();
    auto out = open_for_write(path);
    writer(result, out);
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
    paths.push_back(path);
  };
  write("results.csv", write_results_csv);
  write("aggregates.csv", write_aggregates_csv);
  write("summary.json", write_summary_json);
  write("timings.csv", write_timings_csv);
  if (plot_data) {
    auto more = write_plot_data(result, dir);
    paths.insert(paths.end(), more.begin(), more.end());
  }
  return paths;
}

}  // namespace ics
