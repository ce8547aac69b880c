#pragma once

// A small dueling Q-network: one ReLU hidden layer shared by a scalar
// state-value head and a per-action advantage head, recombined as
//
//   Q(s, a) = V(s) + D(s, a) - mean_a' D(s, a')      (Aggregation::Mean)
//   Q(s, a) = V(s) + D(s, a) - max_a'  D(s, a')      (Aggregation::Max)
//
// Backpropagation is written out by hand. All arithmetic is double precision.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ics::nn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Aggregation { Mean, Max };

struct Shape {
  int inputs = 2;
  int hidden = 128;
  int actions = 10;

  std::size_t param_count() const {
    return static_cast<std::size_t>(hidden) * inputs + hidden  // trunk
           + hidden + 1                                        // value head
           + static_cast<std::size_t>(actions) * hidden + actions;  // advantage head
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Flat parameter storage, in checkpoint order:
//   trunk weights (hidden x inputs, row-major), trunk bias (hidden),
//   value weights (hidden), value bias (1),
//   advantage weights (actions x hidden, row-major), advantage bias (actions).
class DuelingNet {
 public:
  explicit DuelingNet(Shape shape = {}, Aggregation aggregation = Aggregation::Mean);

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static DuelingNet init(std::uint64_t seed, Shape shape, Aggregation aggregation = Aggregation::Mean);

  const Shape& shape() const { return shape_; }
  Aggregation aggregation() const { return aggregation_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<double> trunk_weights() { return slice(0, trunk_w_size()); }
  std::span<double> trunk_bias() { return slice(trunk_b_offset(), shape_.hidden); }
  std::span<double> value_weights() { return slice(value_w_offset(), shape_.hidden); }
  double& value_bias() { return params_[value_b_offset()]; }
  std::span<double> advantage_weights() { return slice(adv_w_offset(), adv_w_size()); }
  std::span<double> advantage_bias() { return slice(adv_b_offset(), shape_.actions); }

  std::size_t trunk_w_size() const { return static_cast<std::size_t>(shape_.hidden) * shape_.inputs; }
  std::size_t adv_w_size() const { return static_cast<std::size_t>(shape_.actions) * shape_.hidden; }
  std::size_t trunk_b_offset() const { return trunk_w_size(); }
  std::size_t value_w_offset() const { return trunk_b_offset() + shape_.hidden; }
  std::size_t value_b_offset() const { return value_w_offset() + shape_.hidden; }
  std::size_t adv_w_offset() const { return value_b_offset() + 1; }
  std::size_t adv_b_offset() const { return adv_w_offset() + adv_w_size(); }

  bool finite() const;
  std::uint64_t checksum() const;

 private:
  std::span<double> slice(std::size_t offset, std::size_t n) { return {params_.data() + offset, n}; }

  Shape shape_;
  Aggregation aggregation_;
  std::vector<double> params_;
};

// Same layout as DuelingNet::params().
using Gradients = std::vector<double>;

struct ForwardResult {
  std::vector<double> q;
  double v = 0.0;
  std::vector<double> d;
};

ForwardResult forward(const DuelingNet& net, std::span<const double> x);

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

// One (s, a, r, s') experience with states already encoded as network input.
struct TdSample {
  std::span<const double> state;
  int action = 0;  // 0-based output index
  double reward = 0.0;
  std::span<const double> next_state;
};

// r + discount * Q_target(s', argmax_a' Q_online(s', a')).
double double_q_target(const DuelingNet& online, const DuelingNet& target, double reward,
                       std::span<const double> next_state, double discount);

struct LossResult {
  double loss = 0.0;
  Gradients grads;
  std::vector<double> targets;  // Y per sample
};

// Mean squared TD error over the batch with double-Q targets. Gradients are
// with respect to `online` only; `target` is treated as a constant.
LossResult loss_and_grads(const DuelingNet& online, const DuelingNet& target,
                          std::span<const TdSample> batch, double discount);

// Gradient of sum_a w_a * q_a at input x, given output weights dq (length actions).
Gradients backward(const DuelingNet& net, std::span<const double> x, std::span<const double> dq);

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  static AdamState for_net(const DuelingNet& net, double learning_rate = 1e-4);
};

// Bias-corrected Adam update. Throws TrainingError on a non-finite gradient
// and leaves the net untouched in that case.
void adam_step(DuelingNet& net, const Gradients& grads, AdamState& adam);

// Loss used by the gradient check: mean over actions of (q_a - target)^2.
double probe_loss(const DuelingNet& net, std::span<const double> x, double target);
Gradients probe_grads(const DuelingNet& net, std::span<const double> x, double target);

// Max relative error between `analytic` and central finite differences of
// probe_loss over every parameter. The denominator is
// max(|numeric|, |analytic|, 1e-6 * max(1, loss)).
double compare_with_finite_differences(const DuelingNet& net, std::span<const double> x, double target,
                                       double eps, const Gradients& analytic);
double grad_check(const DuelingNet& net, std::span<const double> x, double target, double eps = 1e-5);

// Overwrites dst's parameters with src's. Shapes must match.
void copy_params(const DuelingNet& src, DuelingNet& dst);

// Binary checkpoint: magic "ICSDQN\0\0", u32 version, u32 aggregation,
// u32 inputs, u32 hidden, u32 actions, then param_count little-endian f64.
void save_checkpoint(const DuelingNet& net, std::ostream& out);
DuelingNet load_checkpoint(std::istream& in);
void save_checkpoint(const DuelingNet& net, const std::string& path);
DuelingNet load_checkpoint(const std::string& path);

}  // namespace ics::nn
