#pragma once

// Experiment matrix runner: agents x arrival rates x channel presets x
// weight presets x seeds, with CSV/JSON emitters for the results.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ics/agents.hpp"
#include "ics/env.hpp"
#include "ics/train.hpp"

namespace ics {

enum class AgentKind { IIcs, QLearning, Greedy, Deterministic };

std::string to_string(AgentKind agent);
AgentKind agent_from_string(const std::string& name);
inline const std::vector<AgentKind>& all_agents() {
  static const std::vector<AgentKind> kAll{AgentKind::IIcs, AgentKind::QLearning, AgentKind::Greedy,
                                           AgentKind::Deterministic};
  return kAll;
}

struct ExperimentSpec {
  std::vector<AgentKind> agents = all_agents();
  std::vector<double> lambdas{2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  std::vector<ChannelPreset> channels{ChannelPreset::Normal};
  std::vector<std::string> weights{"W1"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::int64_t eval_slots = 20000;
  EnvConfig base_env{};
  TrainConfig train{};
  QLearningConfig qlearning{};
  int jobs = 1;

  void validate() const;
  std::size_t cell_count() const {
    return agents.size() * lambdas.size() * channels.size() * weights.size() * seeds.size();
  }
};

struct CellKey {
  AgentKind agent = AgentKind::IIcs;
  double lambda = 0.0;
  ChannelPreset channel = ChannelPreset::Normal;
  std::string weights = "W1";
  std::uint64_t seed = 1;

  // "agent/lambda/channel/weights/seed"
  std::string str() const;
  // Same key with the agent left out; shared by every agent in a scenario.
  std::string scenario_str() const;
};

struct MetricsRecord {
  CellKey key;
  EvalMetrics metrics;
  double wall_time = 0.0;  // seconds, train + eval
  bool ok = true;
  std::string error;
};

struct AggregateRecord {
  AgentKind agent = AgentKind::IIcs;
  double lambda = 0.0;
  ChannelPreset channel = ChannelPreset::Normal;
  std::string weights;
  int seeds = 0;
  EvalMetrics mean;
  EvalMetrics stddev;  // sample standard deviation across seeds; 0 with one seed
};

struct MatrixResult {
  std::vector<MetricsRecord> records;      // matrix order: agent, lambda, channel, weights, seed
  std::vector<AggregateRecord> aggregates;
  bool all_ok() const;
  const AggregateRecord* find(AgentKind agent, double lambda, ChannelPreset channel, const std::string& weights) const;
};

// Environment config for one cell: base env with the cell's arrival rate,
// channel preset and weight preset applied.
EnvConfig cell_env(const ExperimentSpec& spec, const CellKey& key);

// Builds the cell's policy, training it first for learning agents.
std::unique_ptr<Policy> make_policy(const ExperimentSpec& spec, const CellKey& key);

MetricsRecord run_cell(const ExperimentSpec& spec, const CellKey& key);

// Runs every cell on `spec.jobs` worker threads. Per-cell seeding depends
// only on the cell key, so results do not depend on the worker count.
MatrixResult run_matrix(const ExperimentSpec& spec, std::ostream* progress = nullptr);

std::vector<AggregateRecord> aggregate(const std::vector<MetricsRecord>& records);

// results.csv: one row per cell, key columns then metrics then status.
void write_results_csv(const MatrixResult& result, std::ostream& out);
// aggregates.csv: one row per (agent, lambda, channel, weights).
void write_aggregates_csv(const MatrixResult& result, std::ostream& out);
// summary.json: per-cell mean and sample std across seeds.
void write_summary_json(const MatrixResult& result, std::ostream& out);
// timings.csv: wall-clock seconds per cell (not reproducible, kept apart).
void write_timings_csv(const MatrixResult& result, std::ostream& out);
// One CSV per metric vs lambda, one series per agent.
std::vector<std::string> write_plot_data(const MatrixResult& result, const std::string& dir);

// Writes results.csv, aggregates.csv, summary.json and timings.csv under
// `dir` (created if missing), plus plot data when requested. Returns the
// paths written. Throws std::runtime_error when a file cannot be written.
std::vector<std::string> emit(const MatrixResult& result, const std::string& dir, bool plot_data);

// Shortest round-trip decimal form.
std::string format_double(double x);

}  // namespace ics
