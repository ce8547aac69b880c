#include "ics/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ics {
namespace {

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  auto t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return value;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, std::string_view origin) {
  KeyValueFile file;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    file.values_[key] = value;
  }
  return file;
}

KeyValueFile KeyValueFile::parse_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in, "<string>");
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

std::optional<std::string> KeyValueFile::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  touched_[key] = true;
  return it->second;
}

std::optional<double> KeyValueFile::get_double(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  return parse_double(key, *s);
}

std::optional<std::int64_t> KeyValueFile::get_int(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  // Accept "2e5"-style integers as long as they are integral.
  double v = parse_double(key, *s);
  auto i = static_cast<std::int64_t>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + *s + "'");
  }
  return i;
}

std::optional<bool> KeyValueFile::get_bool(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  std::string v = *s;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *s + "'");
}

std::optional<std::vector<double>> KeyValueFile::get_doubles(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  std::string text = *s;
  if (!text.empty() && text.front() == '[') text.erase(0, 1);
  if (!text.empty() && text.back() == ']') text.pop_back();
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_double(key, item));
  }
  return out;
}

std::vector<std::string> KeyValueFile::unused_keys(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (key.rfind(prefix, 0) == 0 && !touched_.count(key)) out.push_back(key);
  }
  return out;
}

}  // namespace ics
