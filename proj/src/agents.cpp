#include "ics/agents.hpp"

#include <algorithm>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ics/nn.hpp"

namespace ics {

double EpsilonSchedule::at(std::int64_t step) const {
  if (decay_steps <= 0 || step >= decay_steps) return end;
  if (step <= 0) return start;
  double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
  return std::max(end, start + (end - start) * frac);
}

int epsilon_greedy(std::span<const double> q_values, double eps, Rng& rng) {
  if (q_values.empty()) throw std::invalid_argument("epsilon_greedy: no actions");
  if (uniform01(rng) < eps) return uniform_index(rng, static_cast<int>(q_values.size()));
  return nn::argmax(q_values);
}

QTable::QTable(int states, int actions, double learning_rate, double discount, LearningRateSchedule schedule)
    : states_(states),
      actions_(actions),
      learning_rate_(learning_rate),
      discount_(discount),
      schedule_(schedule),
      values_(static_cast<std::size_t>(states) * actions, 0.0),
      visits_(values_.size(), 0) {
  if (states < 1 || actions < 1) throw std::invalid_argument("QTable needs at least one state and action");
  if (!(learning_rate >= 0.0 && learning_rate < 1.0)) throw std::invalid_argument("learning rate must lie in [0, 1)");
}

std::size_t QTable::index(int state, int action) const {
  if (state < 0 || state >= states_ || action < 0 || action >= actions_) {
    throw std::out_of_range("QTable index out of range");
  }
  return static_cast<std::size_t>(state) * actions_ + action;
}

double QTable::update(int state, int action, double reward, int next_state) {
  auto next = row(next_state);
  double best_next = *std::max_element(next.begin(), next.end());
  auto i = index(state, action);
  ++visits_[i];
  double alpha = schedule_ == LearningRateSchedule::Constant ? learning_rate_
                                                               : 1.0 / static_cast<double>(visits_[i]);
  values_[i] += alpha * (reward + discount_ * best_next - values_[i]);
  return alpha;
}

void QTable::write_csv(std::ostream& out, int channel_classes) const {
  out << "queue,channel";
  for (int a = 1; a <= actions_; ++a) out << ",a" << a;
  out << '\n';
  out.precision(17);
  for (int s = 0; s < states_; ++s) {
    out << s / channel_classes << ',' << s % channel_classes;
    for (double v : row(s)) out << ',' << v;
    out << '\n';
  }
}

QTable read_qtable_csv(std::istream& in, double learning_rate, double discount) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty Q-table CSV");
  const int actions = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  if (actions < 1) throw std::runtime_error("Q-table CSV header has no action columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    for (int col = 0; std::getline(ss, cell, ','); ++col) {
      if (col >= 2) row.push_back(std::stod(cell));
    }
    if (static_cast<int>(row.size()) != actions) throw std::runtime_error("ragged Q-table CSV row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("Q-table CSV has no rows");
  QTable table(static_cast<int>(rows.size()), actions, learning_rate, discount);
  for (int s = 0; s < table.states(); ++s)
    for (int a = 0; a < actions; ++a) table.at(s, a) = rows[s][a];
  return table;
}

void q_update(QTable& table, int state, int action, double reward, int next_state) {
  table.update(state, action, reward, next_state);
}

namespace {

int best_one_step(int queue, std::span<const int> capacity, std::span<const double> accuracy,
                  const RewardWeights& w) {
  int best = 1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < capacity.size(); ++i) {
    int backlog = std::max(0, queue - capacity[i]);
    double value = -(w.queue * backlog + w.sensing * accuracy[i]);
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(i) + 1;
    }
  }
  return best;
}

}  // namespace

int greedy_action(const EnvState& state, const Environment& env) {
  std::vector<int> cap;
  std::vector<double> acc;
  for (int a = 1; a <= env.action_count(); ++a) {
    cap.push_back(env.capacity(a).total_packets);
    acc.push_back(env.accuracy(a));
  }
  return best_one_step(state.queue, cap, acc, env.config().weights);
}

GreedyPolicy::GreedyPolicy(const EnvConfig& cfg) : cfg_(cfg) {
  auto timing = derive_timing(cfg);
  for (int a = 1; a <= cfg.max_frames; ++a) {
    capacity_.push_back(capacity(a, cfg, timing).total_packets);
    accuracy_.push_back(velocity_accuracy(a, timing.wavelength, timing.frame_spacing, cfg.snr_r));
  }
}

int GreedyPolicy::act(const EnvState& state) const {
  return best_one_step(state.queue, capacity_, accuracy_, cfg_.weights);
}

int deterministic_action(int max_frames) { return std::max(1, max_frames / 2); }

int TablePolicy::act(const EnvState& state) const {
  return nn::argmax(table_.row(state.queue * classes_ + state.channel)) + 1;
}

QLearningResult train_q_learning(Environment& env, const QLearningConfig& cfg) {
  QLearningResult result{QTable(env.state_count(), env.action_count(), cfg.learning_rate, cfg.discount,
                                cfg.lr_schedule),
                         {}};
  Rng rng(cfg.seed);
  MovingAverage avg(kRewardWindow);
  EnvState state{};
  for (std::int64_t t = 0; t < cfg.total_steps; ++t) {
    double eps = cfg.epsilon.at(t);
    int s = env.state_index(state);
    int a = epsilon_greedy(result.table.row(s), eps, rng);
    auto out = env.step(state, a + 1);
    int s_next = env.state_index(out.next_state);
    double before = result.table.at(s, a);
    q_update(result.table, s, a, out.reward, s_next);
    double change = result.table.at(s, a) - before;
    avg.push(out.reward);
    if ((t + 1) % kLogEvery == 0) {
      result.log.push_back({t + 1, eps, avg.value(), change * change});
    }
    state = out.next_state;
  }
  return result;
}

}  // namespace ics
