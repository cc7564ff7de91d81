#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cet {

// Flat `key = value` config file with '#' comments and a mandatory
// `version = 1` entry. Keys are dotted for grouping (train.w0, synth.seed).
class KeyValueConfig {
 public:
  static constexpr int kVersion = 1;

  KeyValueConfig() = default;
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  // Comma-separated list of doubles.
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(
      const std::string& key, const std::vector<std::string>& fallback) const;

  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const { return map_; }

  // Canonical serialization (sorted keys), reparseable.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> map_;
};

}  // namespace cet
