#include "ics/checks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ics/agents.hpp"
#include "ics/env.hpp"
#include "ics/nn.hpp"

namespace ics {
namespace {

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300); }

CheckResult check_formulas() {
  std::ostringstream why;
  bool ok = true;
  auto expect = [&](const char* what, double got, double want) {
    if (!close_rel(got, want, 1e-9)) {
      ok = false;
      why << what << "=" << got << " want " << want << "; ";
    }
  };
  expect("resolution(10)", velocity_resolution(10, 0.005, 25e-6), 10.0);
  expect("resolution(1)", velocity_resolution(1, 0.005, 25e-6), 100.0);
  expect("accuracy(10)", velocity_accuracy(10, 0.005, 25e-6, 100.0), 10.0 / std::sqrt(200.0));
  expect("frame_error", frame_error_prob(1e-5, 100000), 1.0 - std::pow(1.0 - 1e-5, 100000.0));
  expect("bit_error", bit_error_prob(0.01, 12000), 1.0 - std::pow(0.99, 1.0 / 12000.0));
  expect("reward W1", reward(10, 1.0, 2, kWeightsW1), -1.9);
  expect("reward W2", reward(20, 0.5, 0, kWeightsW2), -0.9);
  return {"formula fidelity", ok, ok ? "all closed forms match" : why.str()};
}

CheckResult check_gradients() {
  double worst = 0.0;
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    int hidden = i % 2 ? 128 : 4;
    auto net = nn::DuelingNet::init(1000 + i, {2, hidden, 10});
    for (auto& b : net.trunk_bias()) b = 0.1 * (2.0 * uniform01(rng) - 1.0);
    std::vector<double> x{uniform01(rng), uniform01(rng)};
    worst = std::max(worst, nn::grad_check(net, x, 2.0 * uniform01(rng) - 1.0, 1e-5));
  }
  std::ostringstream d;
  d << "max relative error " << worst;
  return {"gradient check", worst < 1e-4, d.str()};
}

CheckResult check_dueling_identity() {
  double worst = 0.0;
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    auto net = nn::DuelingNet::init(i, {2, 16, 10});
    std::vector<double> x{uniform01(rng), uniform01(rng)};
    auto out = nn::forward(net, x);
    double mean = 0.0;
    for (double q : out.q) mean += (q - out.v) / out.q.size();
    worst = std::max(worst, std::abs(mean));
  }
  std::ostringstream d;
  d << "max |mean(Q - V)| " << worst;
  return {"dueling identity", worst < 1e-9, d.str()};
}

CheckResult check_micro_mdp() {
  // Q=2, C=1, no arrivals, effectively lossless: every action empties the
  // queue, so Q*(s, a) = -w2 delta(a) + eta max_a' Q*(0, a').
  EnvConfig cfg;
  cfg.queue_capacity = 2;
  cfg.per_levels = {1e-12};
  cfg.class_probs = {1.0};
  cfg.arrival_mean = 0.0;
  Environment env(cfg, 3);
  const double eta = 0.9;
  const int n = env.action_count();
  std::vector<double> v(env.state_count(), 0.0);
  std::vector<double> qstar(env.state_count() * n, 0.0);
  for (int it = 0; it < 2000; ++it) {
    for (int s = 0; s < env.state_count(); ++s) {
      for (int a = 1; a <= n; ++a) {
        auto state = env.state_at(s);
        SlotDraws draws{0, std::vector<double>(a, 1.0), 0};
        auto out = env.resolve(state, a, draws);
        qstar[s * n + a - 1] = out.reward + eta * v[env.state_index(out.next_state)];
      }
    }
    for (int s = 0; s < env.state_count(); ++s) {
      v[s] = *std::max_element(qstar.begin() + s * n, qstar.begin() + (s + 1) * n);
    }
  }
  QTable table(env.state_count(), n, 0.1, eta);
  Rng rng(5);
  for (int t = 0; t < 100000; ++t) {
    EnvState s = env.state_at(uniform_index(rng, env.state_count()));
    int a = uniform_index(rng, n);
    auto out = env.step(s, a + 1);
    q_update(table, env.state_index(s), a, out.reward, env.state_index(out.next_state));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < qstar.size(); ++i) worst = std::max(worst, std::abs(table.values()[i] - qstar[i]));
  std::ostringstream d;
  d << "max |Q - Q*| " << worst;
  return {"q-learning vs value iteration", worst < 1e-2, d.str()};
}

CheckResult check_irreducibility() {
  EnvConfig cfg;
  cfg.queue_capacity = 5;
  cfg.arrival_mean = 2.0;
  Environment env(cfg, 17);
  Rng rng(19);
  std::set<int> seen;
  EnvState s{};
  seen.insert(env.state_index(s));
  long steps = 0;
  for (; steps < 1000000 && static_cast<int>(seen.size()) < env.state_count(); ++steps) {
    s = env.step(s, uniform_index(rng, env.action_count()) + 1).next_state;
    seen.insert(env.state_index(s));
  }
  std::ostringstream d;
  d << seen.size() << "/" << env.state_count() << " states after " << steps << " steps";
  return {"irreducibility", static_cast<int>(seen.size()) == env.state_count(), d.str()};
}

CheckResult check_tradeoff() {
  EnvConfig cfg;
  bool ok = true;
  for (int a = 2; a <= cfg.max_frames; ++a) {
    ok &= capacity(a, cfg).total_packets <= capacity(a - 1, cfg).total_packets;
    ok &= sensing_accuracy(a, cfg.snr_r, cfg) < sensing_accuracy(a - 1, cfg.snr_r, cfg);
  }
  return {"tradeoff monotonicity", ok, ok ? "capacity non-increasing, delta decreasing" : "violated"};
}

}  // namespace

std::vector<CheckResult> run_self_checks() {
  return {check_formulas(), check_gradients(),     check_dueling_identity(),
          check_micro_mdp(), check_irreducibility(), check_tradeoff()};
}

}  // namespace ics
