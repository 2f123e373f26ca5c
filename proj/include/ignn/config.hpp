#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ignn {

/// Flat key=value configuration. Lines starting with '#' are comments.
/// Unknown keys are rejected so typos do not silently fall back to defaults.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::string& path);

  static const std::vector<std::string>& known_keys();
  static std::string default_value(const std::string& key);

  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const { return values_.count(key) != 0; }
  /// Explicit value or the default.
  std::string get(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Every key with its effective value, sorted, one "key=value" per line.
  std::string canonical() const;
  /// 16 hex digits of FNV-1a over `canonical()`.
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ignn
