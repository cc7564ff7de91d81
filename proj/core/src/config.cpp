#include "cet/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cet {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_string(buf.str());
  } catch (const std::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": empty key");
    }
    cfg.map_[key] = value;
  }
  if (!cfg.has("version")) {
    throw std::runtime_error("missing required key 'version'");
  }
  if (cfg.get_int("version", -1) != kVersion) {
    throw std::runtime_error("unsupported config version " +
                             cfg.get_string("version") + " (expected " +
                             std::to_string(kVersion) + ")");
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return map_.count(key) != 0;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto it = map_.find(key);
  if (it == map_.end()) throw std::runtime_error("config: missing key " + key);
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = map_.find(key);
  return it == map_.end() ? fallback : it->second;
}

std::int64_t KeyValueConfig::get_int(const std::string& key,
                                     std::int64_t fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw std::runtime_error("config: key " + key + " is not an integer: " +
                             it->second);
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw std::runtime_error("config: key " + key + " is not an integer: " +
                             it->second);
  }
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw std::runtime_error("config: key " + key + " is not a number: " +
                             it->second);
  }
}

std::vector<double> KeyValueConfig::get_double_list(
    const std::string& key, const std::vector<double>& fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_csv(it->second)) {
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw std::runtime_error("config: key " + key +
                               " has a non-numeric item: " + item);
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  return split_csv(it->second);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  map_[key] = value;
}

std::string KeyValueConfig::serialize() const {
  std::ostringstream out;
  auto it = map_.find("version");
  out << "version = " << (it == map_.end() ? std::to_string(kVersion)
                                           : it->second)
      << "\n";
  for (const auto& [k, v] : map_) {
    if (k == "version") continue;
    out << k << " = " << v << "\n";
  }
  return out.str();
}

}  // namespace cet
