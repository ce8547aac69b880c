#include "ics/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ics {

std::string to_string(LostFramePolicy policy) {
  return policy == LostFramePolicy::Discard ? "discard" : "requeue";
}

LostFramePolicy lost_frame_policy_from_string(const std::string& name) {
  if (name == "discard" || name == "Discard") return LostFramePolicy::Discard;
  if (name == "requeue" || name == "Requeue") return LostFramePolicy::Requeue;
  throw ConfigError("unknown lost-frame policy '" + name + "'");
}

RewardWeights weights_preset(const std::string& name) {
  if (name == "W1" || name == "w1") return kWeightsW1;
  if (name == "W2" || name == "w2") return kWeightsW2;
  throw ConfigError("unknown weight preset '" + name + "' (expected W1 or W2)");
}

std::string to_string(ChannelPreset preset) {
  switch (preset) {
    case ChannelPreset::Poor: return "poor";
    case ChannelPreset::Normal: return "normal";
    case ChannelPreset::Good: return "good";
  }
  return "?";
}

ChannelPreset channel_preset_from_string(const std::string& name) {
  if (name == "poor") return ChannelPreset::Poor;
  if (name == "normal") return ChannelPreset::Normal;
  if (name == "good") return ChannelPreset::Good;
  throw ConfigError("unknown channel preset '" + name + "' (expected poor, normal or good)");
}

std::vector<double> class_probs_for(ChannelPreset preset) {
  switch (preset) {
    case ChannelPreset::Poor: return {0.6, 0.2, 0.2};
    case ChannelPreset::Normal: return {0.2, 0.6, 0.2};
    case ChannelPreset::Good: return {0.2, 0.2, 0.6};
  }
  return {};
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid env config: " + what); };
  if (queue_capacity < 1) fail("queue_capacity must be >= 1");
  if (packet_bytes < 1) fail("packet_bytes must be >= 1");
  if (!(arrival_mean >= 0.0) || !std::isfinite(arrival_mean)) fail("arrival_mean must be >= 0");
  if (max_frames < 1) fail("max_frames must be >= 1");
  if (!(v_max > 0.0)) fail("v_max must be > 0");
  if (!(carrier_freq > 0.0)) fail("carrier_freq must be > 0");
  if (!(sample_rate > 0.0)) fail("sample_rate must be > 0");
  if (preamble_samples < 0) fail("preamble_samples must be >= 0");
  if (!(spectral_eff > 0.0)) fail("spectral_eff must be > 0");
  if (!(snr_r > 0.0)) fail("snr_r must be > 0");
  if (per_levels.empty()) fail("per_levels must not be empty");
  for (double p : per_levels) {
    if (!(p > 0.0 && p < 1.0)) fail("every per_level must lie in (0, 1)");
  }
  if (class_probs.size() != per_levels.size()) fail("class_probs and per_levels differ in length");
  double total = 0.0;
  for (double p : class_probs) {
    if (!(p >= 0.0)) fail("class_probs must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) fail("class_probs must sum to 1");
  if (!(weights.queue >= 0.0 && weights.sensing >= 0.0 && weights.drops >= 0.0)) {
    fail("reward weights must be non-negative");
  }
  auto timing = derive_timing(*this);
  if (preamble_samples >= timing.slot_samples) fail("preamble does not fit in one T_d slot");
}

EnvConfig env_config_from(const KeyValueFile& file, EnvConfig cfg) {
  if (auto v = file.get_int("env.queue_capacity")) cfg.queue_capacity = static_cast<int>(*v);
  if (auto v = file.get_int("env.packet_bytes")) cfg.packet_bytes = static_cast<int>(*v);
  if (auto v = file.get_double("env.arrival_mean")) cfg.arrival_mean = *v;
  if (auto v = file.get_int("env.max_frames")) cfg.max_frames = static_cast<int>(*v);
  if (auto v = file.get_double("env.v_max")) cfg.v_max = *v;
  if (auto v = file.get_double("env.carrier_freq")) cfg.carrier_freq = *v;
  if (auto v = file.get_double("env.sample_rate")) cfg.sample_rate = *v;
  if (auto v = file.get_int("env.preamble_samples")) cfg.preamble_samples = static_cast<int>(*v);
  if (auto v = file.get_double("env.spectral_eff")) cfg.spectral_eff = *v;
  if (auto v = file.get_doubles("env.per_levels")) cfg.per_levels = *v;
  if (auto v = file.get_string("env.channel")) cfg.class_probs = class_probs_for(channel_preset_from_string(*v));
  if (auto v = file.get_doubles("env.class_probs")) cfg.class_probs = *v;
  if (auto v = file.get_double("env.snr_r")) cfg.snr_r = *v;
  if (auto v = file.get_string("env.weights")) cfg.weights = weights_preset(*v);
  if (auto v = file.get_double("env.w1")) cfg.weights.queue = *v;
  if (auto v = file.get_double("env.w2")) cfg.weights.sensing = *v;
  if (auto v = file.get_double("env.w3")) cfg.weights.drops = *v;
  if (auto v = file.get_string("env.lost_frame_policy")) {
    cfg.lost_frame_policy = lost_frame_policy_from_string(*v);
  }
  auto unused = file.unused_keys("env.");
  if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
  cfg.validate();
  return cfg;
}

Timing derive_timing(const EnvConfig& cfg) {
  if (!(cfg.carrier_freq > 0.0) || !(cfg.v_max > 0.0) || !(cfg.sample_rate > 0.0)) {
    throw ConfigError("carrier_freq, v_max and sample_rate must be positive");
  }
  Timing t{};
  t.wavelength = kSpeedOfLight / cfg.carrier_freq;
  t.max_doppler = 2.0 * cfg.v_max / t.wavelength;
  t.frame_spacing = 1.0 / (2.0 * t.max_doppler);
  t.cpi = cfg.max_frames * t.frame_spacing;
  t.slot_samples = std::llround(t.frame_spacing * cfg.sample_rate);
  return t;
}

Capacity capacity(int frames, const EnvConfig& cfg) {
  return capacity(frames, cfg, derive_timing(cfg));
}

Capacity capacity(int frames, const EnvConfig& cfg, const Timing& timing) {
  if (frames < 1 || frames > cfg.max_frames) {
    throw std::domain_error("frame count " + std::to_string(frames) + " outside [1, " +
                            std::to_string(cfg.max_frames) + "]");
  }
  auto data_bits = [&](std::int64_t slots) -> std::int64_t {
    double samples = static_cast<double>(slots * timing.slot_samples - cfg.preamble_samples);
    return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(samples * cfg.spectral_eff)));
  };
  const std::int64_t packet_bits = cfg.packet_bits();
  Capacity cap;
  cap.per_frame_bits.assign(frames, data_bits(1));
  cap.per_frame_bits.back() = data_bits(cfg.max_frames - frames + 1);
  for (auto bits : cap.per_frame_bits) {
    cap.per_frame_packets.push_back(static_cast<int>(bits / packet_bits));
  }
  cap.total_packets = std::accumulate(cap.per_frame_packets.begin(), cap.per_frame_packets.end(), 0);
  return cap;
}

double bit_error_prob(double per, std::int64_t packet_bits) {
  if (!(per > 0.0 && per < 1.0)) throw std::domain_error("packet error ratio must lie in (0, 1)");
  if (packet_bits < 1) throw std::domain_error("packet_bits must be >= 1");
  return -std::expm1(std::log1p(-per) / static_cast<double>(packet_bits));
}

double frame_error_prob(double p_b, std::int64_t frame_bits) {
  if (!(p_b >= 0.0 && p_b < 1.0)) throw std::domain_error("bit error probability must lie in [0, 1)");
  if (frame_bits < 0) throw std::domain_error("frame_bits must be >= 0");
  return -std::expm1(static_cast<double>(frame_bits) * std::log1p(-p_b));
}

double velocity_resolution(int frames, double wavelength, double frame_spacing) {
  if (frames < 1) throw std::domain_error("frame count must be >= 1");
  return wavelength / (2.0 * frames * frame_spacing);
}

double velocity_accuracy(int frames, double wavelength, double frame_spacing, double snr_r) {
  if (!(snr_r > 0.0)) throw std::domain_error("radar SNR must be > 0");
  return velocity_resolution(frames, wavelength, frame_spacing) / std::sqrt(2.0 * snr_r);
}

double sensing_resolution(int frames, const EnvConfig& cfg) {
  if (frames < 1 || frames > cfg.max_frames) throw std::domain_error("frame count out of range");
  auto t = derive_timing(cfg);
  return velocity_resolution(frames, t.wavelength, t.frame_spacing);
}

double sensing_accuracy(int frames, double snr_r, const EnvConfig& cfg) {
  if (frames < 1 || frames > cfg.max_frames) throw std::domain_error("frame count out of range");
  auto t = derive_timing(cfg);
  return velocity_accuracy(frames, t.wavelength, t.frame_spacing, snr_r);
}

double reward(int queue_len, double accuracy, int drops, const RewardWeights& w) {
  return -(w.queue * queue_len + w.sensing * accuracy + w.drops * drops);
}

std::array<double, 2> encode_state(const EnvState& state, const EnvConfig& cfg) {
  const int classes = cfg.channel_classes();
  double c = classes > 1 ? static_cast<double>(state.channel) / (classes - 1) : 0.0;
  return {static_cast<double>(state.queue) / cfg.queue_capacity, c};
}

Environment::Environment(EnvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
  cfg_.validate();
  timing_ = derive_timing(cfg_);
  const int n = cfg_.max_frames;
  const int classes = cfg_.channel_classes();
  for (int a = 1; a <= n; ++a) {
    capacities_.push_back(ics::capacity(a, cfg_, timing_));
    accuracies_.push_back(velocity_accuracy(a, timing_.wavelength, timing_.frame_spacing, cfg_.snr_r));
  }
  drop_probs_.resize(classes);
  for (int c = 0; c < classes; ++c) {
    double p_b = bit_error_prob(cfg_.per_levels[c], cfg_.packet_bits());
    for (int a = 1; a <= n; ++a) {
      std::vector<double> probs;
      for (auto bits : capacities_[a - 1].per_frame_bits) probs.push_back(frame_error_prob(p_b, bits));
      drop_probs_[c].push_back(std::move(probs));
    }
  }
}

EnvState Environment::state_at(int index) const {
  const int classes = cfg_.channel_classes();
  return {index / classes, index % classes};
}

bool Environment::valid(const EnvState& s) const {
  return s.queue >= 0 && s.queue <= cfg_.queue_capacity && s.channel >= 0 &&
         s.channel < cfg_.channel_classes();
}

void Environment::check_action(int frames) const {
  if (frames < 1 || frames > cfg_.max_frames) {
    throw std::domain_error("action " + std::to_string(frames) + " outside [1, " +
                            std::to_string(cfg_.max_frames) + "]");
  }
}

const Capacity& Environment::capacity(int frames) const {
  check_action(frames);
  return capacities_[frames - 1];
}

double Environment::accuracy(int frames) const {
  check_action(frames);
  return accuracies_[frames - 1];
}

double Environment::frame_drop_prob(int channel_class, int frames, int frame) const {
  check_action(frames);
  return drop_probs_.at(channel_class).at(frames - 1).at(frame);
}

SlotDraws Environment::draw(int frames) {
  check_action(frames);
  SlotDraws d;
  d.channel_class = sample_categorical(cfg_.class_probs, rng_);
  d.frame_uniforms.resize(frames);
  for (auto& u : d.frame_uniforms) u = uniform01(rng_);
  d.arrivals = sample_poisson(cfg_.arrival_mean, rng_);
  return d;
}

StepOutcome Environment::step(const EnvState& state, int frames) {
  if (!valid(state)) throw std::domain_error("invalid environment state");
  auto draws = draw(frames);
  return resolve(state, frames, draws);
}

StepOutcome Environment::resolve(const EnvState& state, int frames, const SlotDraws& draws) const {
  check_action(frames);
  if (!valid(state)) throw std::domain_error("invalid environment state");
  if (static_cast<int>(draws.frame_uniforms.size()) != frames) {
    throw std::invalid_argument("slot draws carry the wrong number of frame uniforms");
  }
  const auto& cap = capacities_[frames - 1];
  const auto& drop = drop_probs_.at(draws.channel_class)[frames - 1];

  StepOutcome out;
  out.realized_class = draws.channel_class;
  out.arrivals = draws.arrivals;

  int remaining = state.queue;
  int requeued = 0;
  for (int i = 0; i < frames; ++i) {
    int carried = std::min(remaining, cap.per_frame_packets[i]);
    remaining -= carried;
    if (carried == 0) continue;  // dummy frame
    if (draws.frame_uniforms[i] < drop[i]) {
      out.frame_loss_packets += carried;
      if (cfg_.lost_frame_policy == LostFramePolicy::Requeue) requeued += carried;
    } else {
      out.transmitted_ok += carried;
    }
  }
  int queue = remaining + requeued + draws.arrivals;
  out.overflow_drops = std::max(0, queue - cfg_.queue_capacity);
  out.queue_end = queue - out.overflow_drops;
  out.sensing_accuracy = accuracies_[frames - 1];
  out.reward = reward(out.queue_end, out.sensing_accuracy, out.overflow_drops, cfg_.weights);
  out.next_state = {out.queue_end, draws.channel_class};
  return out;
}

}  // namespace ics
