#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ics/env.hpp"
#include "ics/metrics.hpp"
#include "ics/random.hpp"

namespace ics {

// Maps a state to a frame count in [1, N].
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int act(const EnvState& state) const = 0;
  virtual std::string name() const = 0;
};

// Linear decay from `start` to `end` over `decay_steps`, constant afterwards.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.01;
  std::int64_t decay_steps = 100000;

  double at(std::int64_t step) const;
};

// With probability eps a uniformly random index, otherwise the argmax
// (lowest index on ties).
int epsilon_greedy(std::span<const double> q_values, double eps, Rng& rng);

enum class LearningRateSchedule {
  Constant,       // alpha every update
  InverseVisits,  // 1/n(s,a): sum alpha = inf, sum alpha^2 < inf
};

class QTable {
 public:
  QTable(int states, int actions, double learning_rate = 0.1, double discount = 0.9,
         LearningRateSchedule schedule = LearningRateSchedule::Constant);

  int states() const { return states_; }
  int actions() const { return actions_; }
  double learning_rate() const { return learning_rate_; }
  double discount() const { return discount_; }
  LearningRateSchedule schedule() const { return schedule_; }

  double& at(int state, int action) { return values_[index(state, action)]; }
  double at(int state, int action) const { return values_[index(state, action)]; }
  std::span<const double> row(int state) const {
    return {values_.data() + static_cast<std::size_t>(state) * actions_, static_cast<std::size_t>(actions_)};
  }
  std::span<const double> values() const { return values_; }
  std::int64_t visits(int state, int action) const { return visits_[index(state, action)]; }

  // One TD update of cell (state, action); returns the step size used.
  double update(int state, int action, double reward, int next_state);

  // Header queue,channel,a1..aN; one row per state in index order.
  void write_csv(std::ostream& out, int channel_classes) const;

 private:
  std::size_t index(int state, int action) const;

  int states_;
  int actions_;
  double learning_rate_;
  double discount_;
  LearningRateSchedule schedule_;
  std::vector<double> values_;
  std::vector<std::int64_t> visits_;
};

// Inverse of QTable::write_csv.
QTable read_qtable_csv(std::istream& in, double learning_rate = 0.1, double discount = 0.9);

// q(s,a) <- q(s,a) + alpha [r + discount max_a' q(s',a') - q(s,a)].
// Actions are 0-based column indices.
void q_update(QTable& table, int state, int action, double reward, int next_state);

// Frame count maximizing the one-step reward with no arrivals and lossless
// frames: argmax_a -(w1 max(0, q - capacity(a)) + w2 delta(a)).
int greedy_action(const EnvState& state, const Environment& env);

class GreedyPolicy final : public Policy {
 public:
  explicit GreedyPolicy(const EnvConfig& cfg);
  int act(const EnvState& state) const override;
  std::string name() const override { return "greedy"; }

 private:
  EnvConfig cfg_;
  std::vector<int> capacity_;
  std::vector<double> accuracy_;
};

int deterministic_action(int max_frames);  // max_frames / 2, at least 1

class DeterministicPolicy final : public Policy {
 public:
  explicit DeterministicPolicy(int frames) : frames_(frames) {}
  int act(const EnvState&) const override { return frames_; }
  std::string name() const override { return "deterministic"; }

 private:
  int frames_;
};

class TablePolicy final : public Policy {
 public:
  TablePolicy(QTable table, int channel_classes) : table_(std::move(table)), classes_(channel_classes) {}
  int act(const EnvState& state) const override;
  std::string name() const override { return "qlearning"; }
  const QTable& table() const { return table_; }

 private:
  QTable table_;
  int classes_;
};

struct QLearningConfig {
  std::int64_t total_steps = 200000;
  double learning_rate = 0.1;
  double discount = 0.9;
  LearningRateSchedule lr_schedule = LearningRateSchedule::Constant;
  EpsilonSchedule epsilon{};
  std::uint64_t seed = 1;
};

struct QLearningResult {
  QTable table;
  std::vector<ConvergenceRow> log;
};

// Tabular Q-learning on a single continuing trajectory from (0, 0).
QLearningResult train_q_learning(Environment& env, const QLearningConfig& cfg);

}  // namespace ics
