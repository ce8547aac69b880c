#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ics {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key-value configuration with dotted section prefixes:
//
//   # comment
//   env.queue_capacity = 50
//   env.per_levels = 0.10, 0.01, 0.003
//   train.total_steps = 200000
//
// Later assignments to the same key override earlier ones.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, std::string_view origin = "<stream>");
  static KeyValueFile parse_string(std::string_view text);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  std::optional<std::vector<double>> get_doubles(const std::string& key) const;

  // Keys starting with `prefix` that were never read by a getter.
  std::vector<std::string> unused_keys(std::string_view prefix) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> touched_;
};

}  // namespace ics
