#pragma once

// Dueling double-DQN training loop over the ICS environment, the replay
// buffer it samples from, and a greedy evaluator shared by every policy.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ics/agents.hpp"
#include "ics/config.hpp"
#include "ics/env.hpp"
#include "ics/metrics.hpp"
#include "ics/nn.hpp"
#include "ics/random.hpp"

namespace ics {

struct Transition {
  EnvState state;
  int frames = 1;  // action taken, in [1, N]
  double reward = 0.0;
  EnvState next_state;

  friend bool operator==(const Transition&, const Transition&) = default;
};

// Fixed-capacity FIFO ring buffer; sampling is uniform with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  std::vector<Transition> sample(std::size_t count, Rng& rng) const;
  void sample_into(std::size_t count, Rng& rng, std::vector<Transition>& out) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest item once full
  std::vector<Transition> items_;
};

struct TrainConfig {
  std::int64_t total_steps = 200000;
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 32;
  std::int64_t target_sync = 10000;
  double discount = 0.9;
  double learning_rate = 1e-4;
  EpsilonSchedule epsilon{};
  std::size_t learn_start = 1000;
  int hidden = 128;
  nn::Aggregation aggregation = nn::Aggregation::Mean;
  std::uint64_t seed = 1;      // network init, exploration, replay sampling
  std::uint64_t env_seed = 2;  // environment dynamics

  void validate() const;
};

// Reads `train.*` keys over `base`.
TrainConfig train_config_from(const KeyValueFile& file, TrainConfig base = {});
// Reads `qlearning.*` keys over `base`.
QLearningConfig qlearning_config_from(const KeyValueFile& file, QLearningConfig base = {});

struct StepMetrics {
  int frames = 1;
  double epsilon = 0.0;
  StepOutcome outcome;
  bool updated = false;
  bool synced = false;
  double loss = std::numeric_limits<double>::quiet_NaN();  // pre-update batch loss when updated
};

// Mutable state of one training run.
struct TrainerState {
  nn::DuelingNet online;
  nn::DuelingNet target;
  nn::AdamState adam;
  ReplayBuffer buffer;
  EnvState state{};
  std::int64_t steps_done = 0;
  Rng rng;

  TrainerState(const TrainConfig& cfg, int actions);
};

// One iteration of the loop: act epsilon-greedily on the online net, step
// the environment, store the transition, do one Adam update on a sampled
// batch once the buffer holds learn_start transitions, and copy online into
// target whenever the step count reaches a multiple of target_sync.
StepMetrics train_step(Environment& env, TrainerState& trainer, const TrainConfig& cfg);

struct TrainingResult {
  nn::DuelingNet net;
  std::vector<ConvergenceRow> log;
};

// Runs total_steps train_steps. Throws nn::TrainingError on a non-finite loss.
TrainingResult run_training(const EnvConfig& env_cfg, const TrainConfig& cfg);

class NetPolicy final : public Policy {
 public:
  NetPolicy(nn::DuelingNet net, EnvConfig cfg) : net_(std::move(net)), cfg_(std::move(cfg)) {}
  int act(const EnvState& state) const override;
  std::string name() const override { return "i-ics"; }
  const nn::DuelingNet& net() const { return net_; }

 private:
  nn::DuelingNet net_;
  EnvConfig cfg_;
};

struct EvalMetrics {
  double avg_cost = 0.0;
  double avg_queue = 0.0;
  double avg_delta = 0.0;
  double avg_drops = 0.0;
  double avg_frame_loss = 0.0;  // packets lost with dropped frames, per slot

  friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

struct EvalResult {
  std::vector<EvalMetrics> per_seed;
  EvalMetrics mean;
};

// Runs `policy` for n_slots from state (0, 0) under each environment seed.
EvalMetrics evaluate_one(const Policy& policy, const EnvConfig& env_cfg, std::int64_t n_slots, std::uint64_t seed);
EvalResult evaluate(const Policy& policy, const EnvConfig& env_cfg, std::int64_t n_slots,
                    std::span<const std::uint64_t> seeds);

}  // namespace ics
