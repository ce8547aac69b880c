// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 8-10 share one trained experiment matrix, which
// dominates the runtime (tens of dueling-network trainings at 2e5 steps).
//
//   ICS_ACCEPTANCE_OUT   directory for the matrix outputs (default ./acceptance_results)
//   ICS_ACCEPTANCE_JOBS  worker threads for the matrix (default: hardware concurrency)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "ics/agents.hpp"
#include "ics/env.hpp"
#include "ics/harness.hpp"
#include "ics/nn.hpp"
#include "ics/train.hpp"

using namespace ics;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << x;
  return s.str();
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

int jobs_from_env() {
  if (const char* j = std::getenv("ICS_ACCEPTANCE_JOBS")) return std::max(1, std::atoi(j));
  return std::max(1u, std::thread::hardware_concurrency());
}

fs::path out_dir() {
  if (const char* d = std::getenv("ICS_ACCEPTANCE_OUT"); d && *d) return d;
  return "acceptance_results";
}

// 1 -------------------------------------------------------------------------

Verdict formula_fidelity() {
  auto t0 = Clock::now();
  struct Case {
    const char* name;
    double got, want;
  };
  EnvConfig nominal;
  nominal.carrier_freq = kSpeedOfLight / 0.005;  // zeta = 5 mm, T_d = 25 us
  const std::vector<Case> cases{
      {"resolution(10)", velocity_resolution(10, 0.005, 25e-6), 10.0},
      {"resolution(1)", velocity_resolution(1, 0.005, 25e-6), 100.0},
      {"resolution(10) via config", sensing_resolution(10, nominal), 10.0},
      {"resolution(1) via config", sensing_resolution(1, nominal), 100.0},
      {"accuracy(10)", velocity_accuracy(10, 0.005, 25e-6, 100.0), 0.7071067811865475},
      {"accuracy(10) via config", sensing_accuracy(10, 100.0, nominal), 0.7071067811865475},
      {"accuracy ratio 5/10", sensing_accuracy(5, 100.0, nominal) / sensing_accuracy(10, 100.0, nominal), 2.0},
      {"frame_error(1e-5, 1e5)", frame_error_prob(1e-5, 100000), 0.6321223982334277},
      {"frame_error(p, 1)", frame_error_prob(0.25, 1), 0.25},
      {"bit_error(0.01, 12000)", bit_error_prob(0.01, 12000), 8.375276370653195e-07},
      {"reward W1", reward(10, 1.0, 2, kWeightsW1), -1.9},
      {"reward W2", reward(20, 0.5, 0, kWeightsW2), -0.9},
  };
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    double e = rel_err(c.got, c.want);
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  bool exact_zero = frame_error_prob(0.0, 123456) == 0.0 && reward(0, 0.0, 0, kWeightsW1) == 0.0;
  double t = seconds_since(t0);
  bool pass = worst < 1e-9 && exact_zero && t < 1.0;
  return {pass, std::to_string(cases.size()) + " cases, max rel err " + fmt(worst) +
                    (worst_name.empty() ? "" : " (" + worst_name + ")") + ", " + fmt(t, 3) + " s"};
}

// 2 -------------------------------------------------------------------------

Verdict gradient_correctness() {
  auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    int hidden = i % 2 ? 128 : 4;
    auto net = nn::DuelingNet::init(rng(), {2, hidden, 10});
    for (auto& b : net.trunk_bias()) b = 0.2 * (uniform01(rng) - 0.5);
    std::vector<double> x{uniform01(rng), uniform01(rng)};
    worst = std::max(worst, nn::grad_check(net, x, 4.0 * uniform01(rng) - 2.0, 1e-5));
  }
  double t = seconds_since(t0);
  return {worst < 1e-4 && t < 60.0, "100 nets (H=4,128), max rel err " + fmt(worst) + ", " + fmt(t, 3) + " s"};
}

// 3 -------------------------------------------------------------------------

Verdict double_q_target() {
  // I = 1, H = 1, A = 2. Online and target differ only in the second
  // advantage bias, which flips the argmax at s' = 0.
  nn::DuelingNet online(nn::Shape{1, 1, 2});
  auto p = online.params();
  const double w = 2.0, b = 0.5, vw = 1.5, vb = 0.1, a0 = 1.0, a1 = -1.0, c0 = 0.0, c1 = 0.2, c1_target = 2.0;
  p[0] = w, p[1] = b, p[2] = vw, p[3] = vb, p[4] = a0, p[5] = a1, p[6] = c0, p[7] = c1;
  nn::DuelingNet target = online;
  target.advantage_bias()[1] = c1_target;

  const double x2 = 0.0, r = 1.0, eta = 0.9;
  auto q_of = [&](double x, double bias1) {
    double h = std::max(0.0, w * x + b);
    double v = vw * h + vb, d0 = a0 * h + c0, d1 = a1 * h + bias1;
    double m = 0.5 * (d0 + d1);
    return std::array<double, 2>{v + d0 - m, v + d1 - m};
  };
  auto q_on = q_of(x2, c1);
  auto q_tg = q_of(x2, c1_target);
  int sel = q_on[1] > q_on[0] ? 1 : 0;
  int tgt_best = q_tg[1] > q_tg[0] ? 1 : 0;
  double manual = r + eta * q_tg[sel];

  std::vector<double> xs{x2};
  double y = nn::double_q_target(online, target, r, xs, eta);
  std::vector<double> s{0.5};
  auto res = nn::loss_and_grads(online, target, std::vector<nn::TdSample>{{s, 1, r, xs}}, eta);
  double err = std::max(std::abs(y - manual), std::abs(res.targets[0] - manual));
  bool differ = sel != tgt_best;
  return {differ && err <= 1e-12, "online argmax " + std::to_string(sel) + ", target argmax " +
                                      std::to_string(tgt_best) + ", Y=" + fmt(y, 17) + ", |Y - manual| " + fmt(err)};
}

// 4 -------------------------------------------------------------------------

Verdict dueling_identity() {
  Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    int hidden = 1 + static_cast<int>(rng() % 128);
    auto net = nn::DuelingNet::init(rng(), {2, hidden, 10});
    for (auto& b : net.advantage_bias()) b = 10.0 * (uniform01(rng) - 0.5);
    net.value_bias() = 10.0 * (uniform01(rng) - 0.5);
    std::vector<double> x{uniform01(rng), uniform01(rng)};
    auto out = nn::forward(net, x);
    double mean = 0.0;
    for (double q : out.q) mean += q - out.v;
    worst = std::max(worst, std::abs(mean / out.q.size()));
  }
  return {worst < 1e-9, "10^4 (net, state) pairs, max |mean(Q - V)| " + fmt(worst)};
}

// 5 -------------------------------------------------------------------------

Verdict oracle_equivalence() {
  auto t0 = Clock::now();
  EnvConfig cfg;
  cfg.queue_capacity = 2;
  cfg.per_levels = {1e-15};
  cfg.class_probs = {1.0};
  cfg.arrival_mean = 0.0;
  Environment env(cfg, 55);
  const int n = cfg.max_frames, states = env.state_count();
  const double eta = 0.9;

  // Value iteration on the exact model: with at most 2 queued packets every
  // action empties the queue, so the slot reward is -w2 delta(a) and s' = 0.
  std::vector<double> qstar(states * n, 0.0), v(states, 0.0);
  for (int it = 0; it < 100000; ++it) {
    double change = 0.0;
    for (int s = 0; s < states; ++s)
      for (int a = 1; a <= n; ++a) {
        double want = -cfg.weights.sensing * sensing_accuracy(a, cfg.snr_r, cfg) + eta * v[0];
        change = std::max(change, std::abs(want - qstar[s * n + a - 1]));
        qstar[s * n + a - 1] = want;
      }
    for (int s = 0; s < states; ++s) v[s] = *std::max_element(&qstar[s * n], &qstar[s * n] + n);
    if (change < 1e-12) break;
  }

  // The micro-MDP is absorbing at q = 0, so states q = 1, 2 are only
  // reached by exploring starts: each step samples (s, a) uniformly.
  QTable table(states, n, 0.1, eta);
  Rng rng(56);
  for (int t = 0; t < 100000; ++t) {
    int s = uniform_index(rng, states);
    int a = uniform_index(rng, n);
    auto out = env.step(env.state_at(s), a + 1);
    q_update(table, s, a, out.reward, env.state_index(out.next_state));
  }
  double worst = 0.0;
  bool same_policy = true;
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < n; ++a) worst = std::max(worst, std::abs(table.at(s, a) - qstar[s * n + a]));
    same_policy &= nn::argmax(table.row(s)) == nn::argmax(std::span<const double>(&qstar[s * n], n));
  }
  double t = seconds_since(t0);
  return {worst < 1e-2 && same_policy && t < 30.0,
          "max |Q - Q*| " + fmt(worst) + ", greedy policies " + (same_policy ? "equal" : "differ") + ", " +
              fmt(t, 3) + " s"};
}

// 6 -------------------------------------------------------------------------

Verdict irreducibility() {
  EnvConfig cfg;
  cfg.queue_capacity = 5;
  cfg.arrival_mean = 2.0;
  long worst_steps = 0;
  int failures = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Environment env(cfg, seed);
    Rng rng(seed + 1000);
    std::set<int> seen;
    EnvState s{};
    seen.insert(env.state_index(s));
    long steps = 0;
    while (steps < 1000000 && static_cast<int>(seen.size()) < env.state_count()) {
      s = env.step(s, uniform_index(rng, env.action_count()) + 1).next_state;
      seen.insert(env.state_index(s));
      ++steps;
    }
    if (static_cast<int>(seen.size()) < env.state_count()) ++failures;
    worst_steps = std::max(worst_steps, steps);
  }
  return {failures == 0, "18 states, 10 seeds, " + std::to_string(failures) + " incomplete, slowest cover " +
                             std::to_string(worst_steps) + " steps"};
}

// 7 -------------------------------------------------------------------------

Verdict tradeoff() {
  EnvConfig cfg;
  std::string caps, deltas;
  bool ok = true;
  for (int a = 1; a <= cfg.max_frames; ++a) {
    caps += (a > 1 ? "," : "") + std::to_string(capacity(a, cfg).total_packets);
    deltas += (a > 1 ? "," : "") + fmt(sensing_accuracy(a, cfg.snr_r, cfg), 3);
    if (a > 1) {
      ok &= capacity(a, cfg).total_packets <= capacity(a - 1, cfg).total_packets;
      ok &= sensing_accuracy(a, cfg.snr_r, cfg) < sensing_accuracy(a - 1, cfg.snr_r, cfg);
      ok &= sensing_resolution(a, cfg) < sensing_resolution(a - 1, cfg);
    }
  }
  return {ok, "capacity [" + caps + "], delta [" + deltas + "]"};
}

// 8-10 ----------------------------------------------------------------------

struct Band {
  double mean = 0.0, sd = 0.0;
  int n = 0;
};

Band band(const MatrixResult& r, AgentKind agent, double lambda, ChannelPreset ch) {
  const auto* a = r.find(agent, lambda, ch, "W1");
  if (!a) return {};
  return {a->mean.avg_cost, a->stddev.avg_cost, a->seeds};
}

std::string show(const Band& b) { return fmt(b.mean, 5) + "+-" + fmt(b.sd, 2); }

Verdict policy_ordering(const MatrixResult& r, std::size_t seeds) {
  auto icsb = band(r, AgentKind::IIcs, 14, ChannelPreset::Normal);
  auto qlb = band(r, AgentKind::QLearning, 14, ChannelPreset::Normal);
  auto grb = band(r, AgentKind::Greedy, 14, ChannelPreset::Normal);
  auto deb = band(r, AgentKind::Deterministic, 14, ChannelPreset::Normal);
  bool complete = icsb.n == static_cast<int>(seeds) && qlb.n == icsb.n && grb.n == icsb.n && deb.n == icsb.n;
  double worst_baseline = std::max(grb.mean, deb.mean);
  double margin = qlb.mean > 0 ? (qlb.mean - icsb.mean) / qlb.mean : 0.0;
  bool pass = complete && icsb.mean < qlb.mean && qlb.mean < worst_baseline && margin >= 0.10;
  return {pass, "cost i-ics " + show(icsb) + ", qlearning " + show(qlb) + ", greedy " + show(grb) +
                    ", deterministic " + show(deb) + "; i-ics margin over qlearning " + fmt(100 * margin, 3) + "%"};
}

Verdict lambda_trend(const MatrixResult& r, const std::vector<double>& lambdas) {
  bool pass = true;
  std::string detail;
  for (auto agent : all_agents()) {
    detail += (detail.empty() ? "" : "; ") + to_string(agent) + " [";
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      auto cur = band(r, agent, lambdas[i], ChannelPreset::Normal);
      detail += (i ? "," : "") + fmt(cur.mean, 4);
      if (cur.n == 0) pass = false;
      if (i == 0) continue;
      auto prev = band(r, agent, lambdas[i - 1], ChannelPreset::Normal);
      double pooled = std::sqrt(0.5 * (prev.sd * prev.sd + cur.sd * cur.sd));
      if (cur.mean < prev.mean - pooled) {
        pass = false;
        detail += "(drop)";
      }
    }
    detail += "]";
  }
  return {pass, "cost at lambda 2,8,14,20: " + detail};
}

Verdict channel_effect(const MatrixResult& r) {
  auto good = band(r, AgentKind::IIcs, 14, ChannelPreset::Good);
  auto normal = band(r, AgentKind::IIcs, 14, ChannelPreset::Normal);
  auto poor = band(r, AgentKind::IIcs, 14, ChannelPreset::Poor);
  bool complete = good.n > 0 && normal.n > 0 && poor.n > 0;
  bool pass = complete && good.mean < normal.mean && normal.mean < poor.mean;
  return {pass, "i-ics cost good " + show(good) + ", normal " + show(normal) + ", poor " + show(poor)};
}

// 11 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism(const fs::path& root) {
  ExperimentSpec spec;
  spec.lambdas = {2, 14};
  spec.channels = {ChannelPreset::Normal, ChannelPreset::Poor};
  spec.seeds = {1, 2};
  spec.eval_slots = 5000;
  spec.train.total_steps = 5000;
  spec.qlearning.total_steps = 20000;

  std::vector<fs::path> dirs{root / "determinism_a", root / "determinism_b"};
  std::vector<std::string> files;
  for (int run = 0; run < 2; ++run) {
    spec.jobs = run == 0 ? 1 : 3;
    fs::remove_all(dirs[run]);
    auto result = run_matrix(spec);
    if (!result.all_ok()) return {false, "a cell failed in run " + std::to_string(run + 1)};
    auto written = emit(result, dirs[run].string(), true);
    if (run == 0) {
      for (const auto& p : written) {
        auto name = fs::path(p).filename().string();
        if (name != "timings.csv") files.push_back(name);
      }
    }
  }
  std::string mismatched;
  for (const auto& f : files) {
    if (slurp(dirs[0] / f) != slurp(dirs[1] / f)) mismatched += " " + f;
  }
  return {mismatched.empty(), std::to_string(spec.cell_count()) + " cells run twice (1 vs 3 workers), " +
                                  std::to_string(files.size()) + " files compared" +
                                  (mismatched.empty() ? ", all identical" : ", differing:" + mismatched)};
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  int failed = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail << "\n";
    failed += v.pass ? 0 : 1;
  };

  report(1, "formula fidelity", formula_fidelity());
  report(2, "gradient correctness", gradient_correctness());
  report(3, "double-Q target", double_q_target());
  report(4, "dueling identity", dueling_identity());
  report(5, "oracle equivalence", oracle_equivalence());
  report(6, "irreducibility", irreducibility());
  report(7, "tradeoff monotonicity", tradeoff());

  // Desk-scale matrix: all agents over lambda in {2, 8, 14, 20} on the
  // normal channel, plus i-ICS at lambda 14 on the poor and good channels.
  const std::vector<double> lambdas{2, 8, 14, 20};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto root = out_dir();
  const int jobs = jobs_from_env();
  auto t0 = Clock::now();

  ExperimentSpec main_spec;
  main_spec.lambdas = lambdas;
  main_spec.seeds = seeds;
  main_spec.jobs = jobs;
  std::cerr << "training " << main_spec.cell_count() << " cells on " << jobs << " worker(s)\n";
  auto main_result = run_matrix(main_spec, &std::cerr);
  emit(main_result, (root / "lambda_sweep").string(), true);

  ExperimentSpec channel_spec = main_spec;
  channel_spec.agents = {AgentKind::IIcs};
  channel_spec.lambdas = {14};
  channel_spec.channels = {ChannelPreset::Poor, ChannelPreset::Good};
  auto channel_result = run_matrix(channel_spec, &std::cerr);
  emit(channel_result, (root / "channels").string(), false);

  MatrixResult combined = main_result;
  combined.records.insert(combined.records.end(), channel_result.records.begin(), channel_result.records.end());
  combined.aggregates = aggregate(combined.records);
  std::cerr << "matrix done in " << seconds_since(t0) << " s\n";
  if (!combined.all_ok()) std::cerr << "warning: some matrix cells failed; see results.csv\n";

  report(8, "policy ordering", policy_ordering(combined, seeds.size()));
  report(9, "lambda trend", lambda_trend(combined, lambdas));
  report(10, "channel quality", channel_effect(combined));
  report(11, "determinism", determinism(root));

  std::cout << (failed == 0 ? "all 11 criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
