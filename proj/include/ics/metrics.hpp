#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

namespace ics {

// Mean of the last `window` values pushed.
class MovingAverage {
 public:
  explicit MovingAverage(std::size_t window) : window_(window) {}

  void push(double x) {
    values_.push_back(x);
    sum_ += x;
    if (values_.size() > window_) {
      sum_ -= values_.front();
      values_.pop_front();
    }
  }
  double value() const { return values_.empty() ? 0.0 : sum_ / static_cast<double>(values_.size()); }
  std::size_t size() const { return values_.size(); }

 private:
  std::size_t window_;
  std::deque<double> values_;
  double sum_ = 0.0;
};

struct ConvergenceRow {
  std::int64_t step = 0;
  double epsilon = 0.0;
  double moving_avg_reward = 0.0;
  double loss = 0.0;

  friend bool operator==(const ConvergenceRow&, const ConvergenceRow&) = default;
};

inline constexpr std::size_t kRewardWindow = 1000;
inline constexpr std::int64_t kLogEvery = 100;

// CSV with header step,epsilon,moving_avg_reward,loss.
void write_convergence_csv(const std::vector<ConvergenceRow>& log, std::ostream& out);

}  // namespace ics
