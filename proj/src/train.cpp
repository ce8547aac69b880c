#include "ics/train.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ics {

void write_convergence_csv(const std::vector<ConvergenceRow>& log, std::ostream& out) {
  out << "step,epsilon,moving_avg_reward,loss\n";
  out.precision(17);
  for (const auto& row : log) {
    out << row.step << ',' << row.epsilon << ',' << row.moving_avg_reward << ',' << row.loss << '\n';
  }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 20));
}

void ReplayBuffer::push(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
    return;
  }
  items_[head_] = t;
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay buffer index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  std::vector<Transition> out;
  sample_into(count, rng, out);
  return out;
}

void ReplayBuffer::sample_into(std::size_t count, Rng& rng, std::vector<Transition>& out) const {
  if (items_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  out.clear();
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(items_[pick(rng)]);
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid train config: " + what); };
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (buffer_capacity < 1) fail("buffer_capacity must be >= 1");
  if (batch_size < 1 || batch_size > buffer_capacity) fail("batch_size must lie in [1, buffer_capacity]");
  if (target_sync < 1) fail("target_sync must be >= 1");
  if (!(discount >= 0.0 && discount < 1.0)) fail("discount must lie in [0, 1)");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (hidden < 1) fail("hidden must be >= 1");
  if (learn_start < 1) fail("learn_start must be >= 1");
}

TrainConfig train_config_from(const KeyValueFile& file, TrainConfig cfg) {
  if (auto v = file.get_int("train.total_steps")) cfg.total_steps = *v;
  if (auto v = file.get_int("train.buffer_capacity")) cfg.buffer_capacity = static_cast<std::size_t>(*v);
  if (auto v = file.get_int("train.batch_size")) cfg.batch_size = static_cast<std::size_t>(*v);
  if (auto v = file.get_int("train.target_sync")) cfg.target_sync = *v;
  if (auto v = file.get_double("train.discount")) cfg.discount = *v;
  if (auto v = file.get_double("train.learning_rate")) cfg.learning_rate = *v;
  if (auto v = file.get_double("train.epsilon_start")) cfg.epsilon.start = *v;
  if (auto v = file.get_double("train.epsilon_end")) cfg.epsilon.end = *v;
  if (auto v = file.get_int("train.epsilon_decay_steps")) cfg.epsilon.decay_steps = *v;
  if (auto v = file.get_int("train.learn_start")) cfg.learn_start = static_cast<std::size_t>(*v);
  if (auto v = file.get_int("train.hidden")) cfg.hidden = static_cast<int>(*v);
  if (auto v = file.get_string("train.aggregation")) {
    if (*v == "mean") {
      cfg.aggregation = nn::Aggregation::Mean;
    } else if (*v == "max") {
      cfg.aggregation = nn::Aggregation::Max;
    } else {
      throw ConfigError("train.aggregation must be 'mean' or 'max'");
    }
  }
  if (auto v = file.get_int("train.seed")) cfg.seed = static_cast<std::uint64_t>(*v);
  if (auto v = file.get_int("train.env_seed")) cfg.env_seed = static_cast<std::uint64_t>(*v);
  auto unused = file.unused_keys("train.");
  if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
  cfg.validate();
  return cfg;
}

QLearningConfig qlearning_config_from(const KeyValueFile& file, QLearningConfig cfg) {
  if (auto v = file.get_int("qlearning.total_steps")) cfg.total_steps = *v;
  if (auto v = file.get_double("qlearning.learning_rate")) cfg.learning_rate = *v;
  if (auto v = file.get_double("qlearning.discount")) cfg.discount = *v;
  if (auto v = file.get_string("qlearning.lr_schedule")) {
    if (*v == "constant") {
      cfg.lr_schedule = LearningRateSchedule::Constant;
    } else if (*v == "inverse_visits") {
      cfg.lr_schedule = LearningRateSchedule::InverseVisits;
    } else {
      throw ConfigError("qlearning.lr_schedule must be 'constant' or 'inverse_visits'");
    }
  }
  if (auto v = file.get_double("qlearning.epsilon_start")) cfg.epsilon.start = *v;
  if (auto v = file.get_double("qlearning.epsilon_end")) cfg.epsilon.end = *v;
  if (auto v = file.get_int("qlearning.epsilon_decay_steps")) cfg.epsilon.decay_steps = *v;
  if (auto v = file.get_int("qlearning.seed")) cfg.seed = static_cast<std::uint64_t>(*v);
  auto unused = file.unused_keys("qlearning.");
  if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
  return cfg;
}

TrainerState::TrainerState(const TrainConfig& cfg, int actions)
    : online(nn::DuelingNet::init(derive_seed(cfg.seed, "net-init"), nn::Shape{2, cfg.hidden, actions},
                                  cfg.aggregation)),
      target(online),
      adam(nn::AdamState::for_net(online, cfg.learning_rate)),
      buffer(cfg.buffer_capacity),
      rng(derive_seed(cfg.seed, "trainer")) {}

StepMetrics train_step(Environment& env, TrainerState& tr, const TrainConfig& cfg) {
  const EnvConfig& env_cfg = env.config();
  StepMetrics m;
  m.epsilon = cfg.epsilon.at(tr.steps_done);

  auto x = encode_state(tr.state, env_cfg);
  auto q = nn::forward(tr.online, x).q;
  m.frames = epsilon_greedy(q, m.epsilon, tr.rng) + 1;
  m.outcome = env.step(tr.state, m.frames);
  tr.buffer.push({tr.state, m.frames, m.outcome.reward, m.outcome.next_state});
  tr.state = m.outcome.next_state;
  ++tr.steps_done;

  if (tr.buffer.size() >= cfg.learn_start) {
    thread_local std::vector<Transition> batch;
    thread_local std::vector<std::array<double, 2>> encoded;
    thread_local std::vector<nn::TdSample> samples;
    tr.buffer.sample_into(cfg.batch_size, tr.rng, batch);
    encoded.resize(2 * batch.size());
    samples.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      encoded[2 * i] = encode_state(batch[i].state, env_cfg);
      encoded[2 * i + 1] = encode_state(batch[i].next_state, env_cfg);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      samples[i] = {encoded[2 * i], batch[i].frames - 1, batch[i].reward, encoded[2 * i + 1]};
    }
    auto result = nn::loss_and_grads(tr.online, tr.target, samples, cfg.discount);
    if (!std::isfinite(result.loss)) {
      throw nn::TrainingError("non-finite loss at step " + std::to_string(tr.steps_done));
    }
    nn::adam_step(tr.online, result.grads, tr.adam);
    m.updated = true;
    m.loss = result.loss;
  }

  if (tr.steps_done % cfg.target_sync == 0) {
    nn::copy_params(tr.online, tr.target);
    m.synced = true;
  }
  return m;
}

TrainingResult run_training(const EnvConfig& env_cfg, const TrainConfig& cfg) {
  cfg.validate();
  Environment env(env_cfg, cfg.env_seed);
  TrainerState tr(cfg, env.action_count());
  TrainingResult result{tr.online, {}};
  MovingAverage avg(kRewardWindow);
  double loss_sum = 0.0;
  int loss_count = 0;
  for (std::int64_t t = 0; t < cfg.total_steps; ++t) {
    auto m = train_step(env, tr, cfg);
    avg.push(m.outcome.reward);
    if (m.updated) {
      loss_sum += m.loss;
      ++loss_count;
    }
    if (tr.steps_done % kLogEvery == 0) {
      result.log.push_back({tr.steps_done, m.epsilon, avg.value(), loss_count ? loss_sum / loss_count : 0.0});
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  result.net = tr.online;
  return result;
}

int NetPolicy::act(const EnvState& state) const {
  auto x = encode_state(state, cfg_);
  return nn::argmax(nn::forward(net_, x).q) + 1;
}

EvalMetrics evaluate_one(const Policy& policy, const EnvConfig& env_cfg, std::int64_t n_slots, std::uint64_t seed) {
  if (n_slots < 1) throw std::invalid_argument("evaluation needs at least one slot");
  Environment env(env_cfg, seed);
  EvalMetrics sum;
  EnvState state{};
  for (std::int64_t t = 0; t < n_slots; ++t) {
    auto out = env.step(state, policy.act(state));
    sum.avg_cost += -out.reward;
    sum.avg_queue += out.queue_end;
    sum.avg_delta += out.sensing_accuracy;
    sum.avg_drops += out.overflow_drops;
    sum.avg_frame_loss += out.frame_loss_packets;
    state = out.next_state;
  }
  const double n = static_cast<double>(n_slots);
  return {sum.avg_cost / n, sum.avg_queue / n, sum.avg_delta / n, sum.avg_drops / n, sum.avg_frame_loss / n};
}

EvalResult evaluate(const Policy& policy, const EnvConfig& env_cfg, std::int64_t n_slots,
                    std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("evaluation needs at least one seed");
  EvalResult r;
  for (auto seed : seeds) r.per_seed.push_back(evaluate_one(policy, env_cfg, n_slots, seed));
  const double k = static_cast<double>(r.per_seed.size());
  for (const auto& m : r.per_seed) {
    r.mean.avg_cost += m.avg_cost / k;
    r.mean.avg_queue += m.avg_queue / k;
    r.mean.avg_delta += m.avg_delta / k;
    r.mean.avg_drops += m.avg_drops / k;
    r.mean.avg_frame_loss += m.avg_frame_loss / k;
  }
  return r;
}

}  // namespace ics
