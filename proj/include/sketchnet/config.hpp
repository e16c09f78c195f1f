#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sketchnet/error.hpp"

namespace sketchnet {

/// Ordered key=value text, one pair per line. Blank lines and lines
/// starting with '#' are ignored when parsing.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_[key] = items_.size();
      items_.emplace_back(key, value);
    } else {
      items_[it->second].second = value;
    }
  }

  bool has(const std::string& key) const { return index_.count(key) > 0; }

  const std::string& get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("missing config key '" + key + "'");
    return items_[it->second].second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  template <typename N>
  N number(const std::string& key) const {
    const std::string& s = get(key);
    N v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ConfigError("config key '" + key + "' has invalid numeric value '" + s + "'");
    return v;
  }

  template <typename N>
  N number_or(const std::string& key, N fallback) const {
    return has(key) ? number<N>(key) : fallback;
  }

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

  /// "key=value\n" per entry, insertion order.
  std::string str(const std::string& prefix = "") const {
    std::string out;
    for (const auto& [k, v] : items_) out += prefix + k + "=" + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  std::vector<std::pair<std::string, std::string>> items_;
  std::map<std::string, std::size_t> index_;
};

/// Shortest round-trip text form of a double.
inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size())
      throw ConfigError("invalid integer list '" + s + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

/// Hyper-parameters of one training run. Serialized into every checkpoint.
struct TrainConfig {
  int epochs = 230;
  int batch_size = 128;
  double learning_rate = 0.01;
  double lr_decay = 0.1;
  std::vector<int> lr_decay_epochs{150, 200};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  bool augment = true;
  std::uint64_t seed = 1;

  /// Learning rate in effect during the given zero-based epoch.
  double learning_rate_at(int epoch) const {
    double lr = learning_rate;
    for (int e : lr_decay_epochs)
      if (epoch >= e) lr *= lr_decay;
    return lr;
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("learning_rate", format_number(learning_rate));
    kv.set("lr_decay", format_number(lr_decay));
    kv.set("lr_decay_epochs", join_ints(lr_decay_epochs));
    kv.set("momentum", format_number(momentum));
    kv.set("weight_decay", format_number(weight_decay));
    kv.set("dropout", format_number(dropout));
    kv.set("augment", augment ? "true" : "false");
    kv.set("seed", std::to_string(seed));
    return kv;
  }

  /// Reads whichever keys are present; others keep their defaults.
  static TrainConfig from_kv(const KeyValues& kv) {
    TrainConfig c;
    c.epochs = kv.number_or("epochs", c.epochs);
    c.batch_size = kv.number_or("batch_size", c.batch_size);
    c.learning_rate = kv.number_or("learning_rate", c.learning_rate);
    c.lr_decay = kv.number_or("lr_decay", c.lr_decay);
    if (kv.has("lr_decay_epochs")) {
      const auto& s = kv.get("lr_decay_epochs");
      c.lr_decay_epochs = s.empty() ? std::vector<int>{} : parse_int_list(s);
    }
    c.momentum = kv.number_or("momentum", c.momentum);
    c.weight_decay = kv.number_or("weight_decay", c.weight_decay);
    c.dropout = kv.number_or("dropout", c.dropout);
    if (kv.has("augment")) c.augment = kv.get("augment") == "true" || kv.get("augment") == "1";
    c.seed = kv.number_or<std::uint64_t>("seed", c.seed);
    c.validate();
    return c;
  }

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
    if (momentum < 0 || weight_decay < 0) throw ConfigError("momentum and weight_decay must be >= 0");
  }
};

}  // namespace sketchnet
