#pragma once

// Flat key = value configuration with dotted namespaces. Lines starting with
// '#' are comments. Every lookup marks the key as consumed so that callers
// can reject keys nobody asked for.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "dualspoof/error.hpp"

namespace dualspoof {

class FlatConfig {
 public:
  static FlatConfig parse(const std::string& text, const std::string& origin = "config") {
    FlatConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static FlatConfig load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) {
    const std::string s = get_string(key, "");
    if (!has(key)) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) {
    const std::string s = get_string(key, "");
    if (!has(key)) return fallback;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + s + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    const std::string s = get_string(key, "");
    if (!has(key)) return fallback;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + s + "'");
  }

  // Throws naming the first key that was never looked up.
  void reject_unconsumed() const {
    for (const auto& [k, v] : values_) {
      if (!consumed_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

}  // namespace dualspoof
