#pragma once
// Versioned key-value configuration files:
//
//   # comment
//   version = 1
//   splits = 50
//   epsilons = 0.2, 0.3, 0.4
//
// Keys are unique; values are read back as strings, numbers or comma lists.

#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ccg {

inline constexpr int kKvConfigVersion = 1;

class KvConfig {
 public:
  // Throws ParseError on malformed lines, duplicate keys, or a missing or
  // unsupported version line.
  static KvConfig parse(std::istream& in);
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<long long> get_ints(const std::string& key, const std::vector<long long>& fallback) const;

  // Throws ParseError naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ccg
