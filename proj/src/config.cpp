#include "ignn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ignn/error.hpp"

namespace ignn {
namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table{
      {"lambda1", "0.1"},
      {"lambda1_schedule", "linear_increasing"},
      {"lambda1_warmup", "true"},
      {"lambda2", "5"},
      {"lambda3", "1e-4"},
      {"lambda3_decay", "true"},
      {"lr", "0.002"},
      {"solver_lr", "0.002"},
      {"epochs", "100"},
      {"epoch_max", "100"},
      {"T1", "auto"},
      {"T2", "20"},
      {"warmup_epochs", "0"},
      {"solver_warmup_steps", "100"},
      {"solver_steps", "200"},
      {"kappa", "0.95"},
      {"tol", "3e-6"},
      {"solver_tol", "1e-6"},
      {"adjoint_tol", "1e-6"},
      {"max_iter", "300"},
      {"m", "5"},
      {"K", "10"},
      {"p", "8"},
      {"beta_max", "1.5"},
      {"keep_fraction", "0.25"},
      {"update_rule", "classic_aa"},
      {"init_hidden", "8"},
      {"predictor_hidden", "16"},
      {"nhid", "128"},
      {"dropout", "0.5"},
      {"activation", "relu"},
      {"clip_norm", "5"},
      {"bench_repeats", "5"},
      {"seed", "0"},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, value] : defaults()) k.push_back(key);
    return k;
  }();
  return keys;
}

std::string Config::default_value(const std::string& key) {
  const auto it = defaults().find(key);
  if (it == defaults().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

Config Config::parse(const std::string& text, const std::string& source) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    try {
      c.set(key, trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
  if (value.empty()) throw ConfigError("empty value for '" + key + "'");
  values_[key] = value;
}

std::string Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  return it != values_.end() ? it->second : default_value(key);
}

double Config::real(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' must be a real number, got '" + v + "'");
  }
}

std::uint64_t Config::integer(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' must be a non-negative integer, got '" + v + "'");
  }
}

std::size_t Config::count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }

bool Config::flag(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' must be true or false, got '" + v + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& key : known_keys()) out += key + "=" + get(key) + "\n";
  return out;
}

std::string Config::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ignn
