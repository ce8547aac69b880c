#include "ics/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

namespace ics::nn {
namespace {

// Four interleaved partial sums; fixed summation order, vectorizes cleanly.
inline double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

// Scratch buffers for one forward pass.
struct Activations {
  std::vector<double> pre;     // hidden pre-activation
  std::vector<double> hidden;  // relu(pre)
  std::vector<double> d;       // advantage head
  std::vector<double> q;
  double v = 0.0;
  int d_argmax = 0;

  explicit Activations(const Shape& s) : pre(s.hidden), hidden(s.hidden), d(s.actions), q(s.actions) {}
};

void run_forward(const DuelingNet& net, std::span<const double> x, Activations& act) {
  const Shape& s = net.shape();
  const double* p = net.params().data();
  const double* w1 = p;
  const double* b1 = p + net.trunk_b_offset();
  const double* wv = p + net.value_w_offset();
  const double bv = p[net.value_b_offset()];
  const double* wa = p + net.adv_w_offset();
  const double* ba = p + net.adv_b_offset();

  for (int k = 0; k < s.hidden; ++k) {
    double z = b1[k];
    const double* row = w1 + static_cast<std::size_t>(k) * s.inputs;
    for (int i = 0; i < s.inputs; ++i) z += row[i] * x[i];
    act.pre[k] = z;
    act.hidden[k] = z > 0.0 ? z : 0.0;
  }
  double v = bv + dot(wv, act.hidden.data(), s.hidden);
  act.v = v;

  double sum = 0.0;
  for (int j = 0; j < s.actions; ++j) {
    double z = ba[j] + dot(wa + static_cast<std::size_t>(j) * s.hidden, act.hidden.data(), s.hidden);
    act.d[j] = z;
    sum += z;
  }
  act.d_argmax = argmax(act.d);
  double offset = net.aggregation() == Aggregation::Mean ? sum / s.actions : act.d[act.d_argmax];
  for (int j = 0; j < s.actions; ++j) act.q[j] = v + act.d[j] - offset;
}

// grads += d(sum_j dq_j q_j)/d(params), reusing a completed forward pass.
void accumulate_backward(const DuelingNet& net, std::span<const double> x, const Activations& act,
                         std::span<const double> dq, std::vector<double>& grad_hidden, Gradients& grads) {
  const Shape& s = net.shape();
  const double* p = net.params().data();
  const double* wv = p + net.value_w_offset();
  const double* wa = p + net.adv_w_offset();
  double* g = grads.data();

  double gv = 0.0;
  for (int j = 0; j < s.actions; ++j) gv += dq[j];

  std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);

  // Value head.
  double* g_wv = g + net.value_w_offset();
  for (int k = 0; k < s.hidden; ++k) {
    g_wv[k] += gv * act.hidden[k];
    grad_hidden[k] += gv * wv[k];
  }
  g[net.value_b_offset()] += gv;

  // Advantage head.
  double* g_wa = g + net.adv_w_offset();
  double* g_ba = g + net.adv_b_offset();
  const double mean_share = gv / s.actions;
  for (int j = 0; j < s.actions; ++j) {
    double gd = dq[j];
    if (net.aggregation() == Aggregation::Mean) {
      gd -= mean_share;
    } else if (j == act.d_argmax) {
      gd -= gv;
    }
    if (gd == 0.0) continue;
    g_ba[j] += gd;
    double* grow = g_wa + static_cast<std::size_t>(j) * s.hidden;
    const double* wrow = wa + static_cast<std::size_t>(j) * s.hidden;
    for (int k = 0; k < s.hidden; ++k) {
      grow[k] += gd * act.hidden[k];
      grad_hidden[k] += gd * wrow[k];
    }
  }

  // Trunk.
  double* g_w1 = g;
  double* g_b1 = g + net.trunk_b_offset();
  for (int k = 0; k < s.hidden; ++k) {
    if (act.pre[k] <= 0.0) continue;
    double gk = grad_hidden[k];
    g_b1[k] += gk;
    double* row = g_w1 + static_cast<std::size_t>(k) * s.inputs;
    for (int i = 0; i < s.inputs; ++i) row[i] += gk * x[i];
  }
}

void check_input(const DuelingNet& net, std::span<const double> x) {
  if (static_cast<int>(x.size()) != net.shape().inputs) {
    throw std::invalid_argument("network input has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(net.shape().inputs));
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double d) {
  auto bits = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated checkpoint");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

constexpr char kMagic[8] = {'I', 'C', 'S', 'D', 'Q', 'N', '\0', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

DuelingNet::DuelingNet(Shape shape, Aggregation aggregation)
    : shape_(shape), aggregation_(aggregation) {
  if (shape.inputs < 1 || shape.hidden < 1 || shape.actions < 1) {
    throw std::invalid_argument("network dimensions must be >= 1");
  }
  params_.assign(shape.param_count(), 0.0);
}

DuelingNet DuelingNet::init(std::uint64_t seed, Shape shape, Aggregation aggregation) {
  DuelingNet net(shape, aggregation);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::span<double> w, int fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : w) x = (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0) * bound;
  };
  fill(net.trunk_weights(), shape.inputs);
  fill(net.value_weights(), shape.hidden);
  fill(net.advantage_weights(), shape.hidden);
  return net;
}

bool DuelingNet::finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t DuelingNet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : params_) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ForwardResult forward(const DuelingNet& net, std::span<const double> x) {
  check_input(net, x);
  Activations act(net.shape());
  run_forward(net, x, act);
  return {act.q, act.v, act.d};
}

double double_q_target(const DuelingNet& online, const DuelingNet& target, double reward,
                       std::span<const double> next_state, double discount) {
  if (!(online.shape() == target.shape())) throw std::invalid_argument("online/target shape mismatch");
  check_input(online, next_state);
  Activations a(online.shape());
  run_forward(online, next_state, a);
  int best = argmax(a.q);
  Activations b(target.shape());
  run_forward(target, next_state, b);
  return reward + discount * b.q[best];
}

LossResult loss_and_grads(const DuelingNet& online, const DuelingNet& target,
                          std::span<const TdSample> batch, double discount) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads needs a non-empty batch");
  if (!(online.shape() == target.shape())) throw std::invalid_argument("online/target shape mismatch");
  const Shape& s = online.shape();
  LossResult out;
  out.grads.assign(s.param_count(), 0.0);
  out.targets.reserve(batch.size());

  Activations next_online(s), next_target(s), act(s);
  std::vector<double> dq(s.actions, 0.0);
  std::vector<double> grad_hidden(s.hidden);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const auto& sample : batch) {
    check_input(online, sample.state);
    check_input(online, sample.next_state);
    if (sample.action < 0 || sample.action >= s.actions) throw std::invalid_argument("action index out of range");

    run_forward(online, sample.next_state, next_online);
    run_forward(target, sample.next_state, next_target);
    double y = sample.reward + discount * next_target.q[argmax(next_online.q)];
    out.targets.push_back(y);

    run_forward(online, sample.state, act);
    double td = y - act.q[sample.action];
    out.loss += td * td * inv_n;

    dq[sample.action] = -2.0 * td * inv_n;
    accumulate_backward(online, sample.state, act, dq, grad_hidden, out.grads);
    dq[sample.action] = 0.0;
  }
  return out;
}

Gradients backward(const DuelingNet& net, std::span<const double> x, std::span<const double> dq) {
  check_input(net, x);
  if (static_cast<int>(dq.size()) != net.shape().actions) throw std::invalid_argument("dq length mismatch");
  Activations act(net.shape());
  run_forward(net, x, act);
  Gradients grads(net.shape().param_count(), 0.0);
  std::vector<double> grad_hidden(net.shape().hidden);
  accumulate_backward(net, x, act, dq, grad_hidden, grads);
  return grads;
}

AdamState AdamState::for_net(const DuelingNet& net, double learning_rate) {
  AdamState a;
  a.learning_rate = learning_rate;
  a.first_moment.assign(net.params().size(), 0.0);
  a.second_moment.assign(net.params().size(), 0.0);
  return a;
}

void adam_step(DuelingNet& net, const Gradients& grads, AdamState& adam) {
  auto params = net.params();
  if (grads.size() != params.size() || adam.first_moment.size() != params.size() ||
      adam.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient/moment shape mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw TrainingError("non-finite gradient");
  }
  ++adam.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    double& m = adam.first_moment[i];
    double& v = adam.second_moment[i];
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g * g;
    params[i] -= adam.learning_rate * (m / c1) / (std::sqrt(v / c2) + adam.epsilon);
  }
}

double probe_loss(const DuelingNet& net, std::span<const double> x, double target) {
  auto out = forward(net, x);
  double loss = 0.0;
  for (double q : out.q) loss += (q - target) * (q - target);
  return loss / static_cast<double>(out.q.size());
}

Gradients probe_grads(const DuelingNet& net, std::span<const double> x, double target) {
  auto out = forward(net, x);
  std::vector<double> dq(out.q.size());
  for (std::size_t j = 0; j < dq.size(); ++j) dq[j] = 2.0 * (out.q[j] - target) / static_cast<double>(dq.size());
  return backward(net, x, dq);
}

double compare_with_finite_differences(const DuelingNet& net, std::span<const double> x, double target,
                                       double eps, const Gradients& analytic) {
  if (analytic.size() != net.params().size()) throw std::invalid_argument("gradient size mismatch");
  DuelingNet probe = net;
  auto params = probe.params();
  // Central differences carry rounding noise of a few ulps of the loss
  // divided by eps, so gradients below this floor are compared absolutely.
  const double floor = 1e-6 * std::max(1.0, std::abs(probe_loss(net, x, target)));
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    double up = probe_loss(probe, x, target);
    params[i] = saved - eps;
    double down = probe_loss(probe, x, target);
    params[i] = saved;
    double numeric = (up - down) / (2.0 * eps);
    double scale = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

double grad_check(const DuelingNet& net, std::span<const double> x, double target, double eps) {
  return compare_with_finite_differences(net, x, target, eps, probe_grads(net, x, target));
}

void copy_params(const DuelingNet& src, DuelingNet& dst) {
  if (!(src.shape() == dst.shape())) throw std::invalid_argument("copy_params: architecture mismatch");
  auto from = src.params();
  std::copy(from.begin(), from.end(), dst.params().begin());
}

void save_checkpoint(const DuelingNet& net, std::ostream& out) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, net.aggregation() == Aggregation::Mean ? 0u : 1u);
  put_u32(out, static_cast<std::uint32_t>(net.shape().inputs));
  put_u32(out, static_cast<std::uint32_t>(net.shape().hidden));
  put_u32(out, static_cast<std::uint32_t>(net.shape().actions));
  for (double p : net.params()) put_f64(out, p);
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

DuelingNet load_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("not a dueling-net checkpoint");
  }
  if (get_u32(in) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  auto agg = get_u32(in) == 0 ? Aggregation::Mean : Aggregation::Max;
  Shape shape;
  shape.inputs = static_cast<int>(get_u32(in));
  shape.hidden = static_cast<int>(get_u32(in));
  shape.actions = static_cast<int>(get_u32(in));
  DuelingNet net(shape, agg);
  for (auto& p : net.params()) p = get_f64(in);
  return net;
}

void save_checkpoint(const DuelingNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_checkpoint(net, out);
}

DuelingNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace ics::nn
