#pragma once

// Slot-level model of a vehicle's mmWave integrated communication and
// sensing link. Each slot the transmitter picks how many frames to place in
// the coherent processing interval (CPI). More frames means more preambles,
// hence better velocity estimation, but less room for payload.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ics/config.hpp"
#include "ics/random.hpp"

namespace ics {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s

enum class LostFramePolicy { Discard, Requeue };

std::string to_string(LostFramePolicy policy);
LostFramePolicy lost_frame_policy_from_string(const std::string& name);

// Cost weights on queue length, velocity accuracy and overflow drops.
struct RewardWeights {
  double queue = 0.05;
  double sensing = 0.4;
  double drops = 0.5;
};

inline constexpr RewardWeights kWeightsW1{0.05, 0.4, 0.5};
inline constexpr RewardWeights kWeightsW2{0.025, 0.8, 0.5};

RewardWeights weights_preset(const std::string& name);  // "W1" | "W2"

enum class ChannelPreset { Poor, Normal, Good };

std::string to_string(ChannelPreset preset);
ChannelPreset channel_preset_from_string(const std::string& name);
std::vector<double> class_probs_for(ChannelPreset preset);

struct EnvConfig {
  int queue_capacity = 50;        // packets
  int packet_bytes = 1500;
  double arrival_mean = 14.0;     // packets/slot
  int max_frames = 10;            // frames per CPI (T_CPI = max_frames * T_d)
  double v_max = 50.0;            // m/s
  double carrier_freq = 60e9;     // Hz
  double sample_rate = 1.76e9;    // samples/s
  int preamble_samples = 3328;    // per frame
  double spectral_eff = 0.5;      // data bits per sample
  std::vector<double> per_levels{0.10, 0.01, 0.003};  // packet error ratio per class
  std::vector<double> class_probs{0.2, 0.6, 0.2};     // normal preset
  double snr_r = 100.0;           // linear radar SNR
  RewardWeights weights{};
  LostFramePolicy lost_frame_policy = LostFramePolicy::Discard;

  int channel_classes() const { return static_cast<int>(per_levels.size()); }
  int packet_bits() const { return 8 * packet_bytes; }

  // Throws ConfigError on the first violated invariant.
  void validate() const;
};

// Reads `env.*` keys over `base`. Unknown `env.*` keys are an error.
EnvConfig env_config_from(const KeyValueFile& file, EnvConfig base = {});

struct Timing {
  double wavelength;     // m
  double max_doppler;    // Hz
  double frame_spacing;  // s, T_d
  double cpi;            // s
  std::int64_t slot_samples;
};

Timing derive_timing(const EnvConfig& cfg);

struct Capacity {
  int total_packets = 0;
  std::vector<int> per_frame_packets;
  std::vector<std::int64_t> per_frame_bits;  // data-field length of each frame
};

// Payload budget when `frames` frames share the CPI. The first frames-1
// frames each occupy one T_d slot, the last frame fills the rest.
Capacity capacity(int frames, const EnvConfig& cfg);
Capacity capacity(int frames, const EnvConfig& cfg, const Timing& timing);

// Per-bit error probability recovered from a packet error ratio measured
// over `packet_bits`-bit packets.
double bit_error_prob(double per, std::int64_t packet_bits);

// 1 - (1 - p_b)^F, evaluated through log1p/expm1.
double frame_error_prob(double p_b, std::int64_t frame_bits);

double velocity_resolution(int frames, double wavelength, double frame_spacing);
double velocity_accuracy(int frames, double wavelength, double frame_spacing, double snr_r);

double sensing_resolution(int frames, const EnvConfig& cfg);
double sensing_accuracy(int frames, double snr_r, const EnvConfig& cfg);

double reward(int queue_len, double accuracy, int drops, const RewardWeights& w);
inline double cost(int queue_len, double accuracy, int drops, const RewardWeights& w) {
  return -reward(queue_len, accuracy, drops, w);
}

struct EnvState {
  int queue = 0;
  int channel = 0;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  int queue_end = 0;
  double sensing_accuracy = 0.0;
  int overflow_drops = 0;
  int frame_loss_packets = 0;
  int arrivals = 0;
  int transmitted_ok = 0;
  int realized_class = 0;

  friend bool operator==(const StepOutcome&, const StepOutcome&) = default;
};

// The random quantities consumed by one slot, in draw order.
struct SlotDraws {
  int channel_class = 0;
  std::vector<double> frame_uniforms;  // one per frame; frame i drops if u_i < p_f
  int arrivals = 0;
};

std::array<double, 2> encode_state(const EnvState& state, const EnvConfig& cfg);

class Environment {
 public:
  Environment(EnvConfig cfg, std::uint64_t seed);

  const EnvConfig& config() const { return cfg_; }
  const Timing& timing() const { return timing_; }
  int action_count() const { return cfg_.max_frames; }
  int state_count() const { return (cfg_.queue_capacity + 1) * cfg_.channel_classes(); }
  int state_index(const EnvState& s) const { return s.queue * cfg_.channel_classes() + s.channel; }
  EnvState state_at(int index) const;
  bool valid(const EnvState& s) const;

  const Capacity& capacity(int frames) const;
  double accuracy(int frames) const;
  double frame_drop_prob(int channel_class, int frames, int frame) const;

  SlotDraws draw(int frames);
  StepOutcome step(const EnvState& state, int frames);
  // Deterministic slot transition given explicit draws.
  StepOutcome resolve(const EnvState& state, int frames, const SlotDraws& draws) const;

  Rng& rng() { return rng_; }

 private:
  void check_action(int frames) const;

  EnvConfig cfg_;
  Timing timing_;
  std::vector<Capacity> capacities_;             // index frames-1
  std::vector<double> accuracies_;               // index frames-1
  std::vector<std::vector<std::vector<double>>> drop_probs_;  // [class][frames-1][frame]
  Rng rng_;
};

}  // namespace ics
