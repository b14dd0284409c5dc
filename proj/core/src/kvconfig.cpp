#include "ccg/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T to_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("bad numeric value for " + key, text);
  return v;
}

template <typename T>
std::vector<T> to_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_number<T>(key, trim(item)));
  if (out.empty()) throw ParseError("empty list for " + key, text);
  return out;
}

}  // namespace

KvConfig KvConfig::parse(std::istream& in) {
  KvConfig cfg;
  std::string line;
  bool versioned = false;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line);
    if (key == "version") {
      if (to_number<int>(key, value) != kKvConfigVersion) throw ParseError("unsupported config version", value);
      versioned = true;
      continue;
    }
    if (!cfg.values_.emplace(key, value).second) throw ParseError("duplicate key", key);
  }
  if (!versioned) throw ParseError("config has no version line", "");
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config", path.string());
  return parse(in);
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_number<double>(key, it->second);
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_number<long long>(key, it->second);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ParseError("bad boolean value for " + key, it->second);
}

std::vector<double> KvConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_list<double>(key, it->second);
}

std::vector<long long> KvConfig::get_ints(const std::string& key, const std::vector<long long>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_list<long long>(key, it->second);
}

void KvConfig::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (!known.count(key)) throw ParseError("unknown config key", key);
}

std::string KvConfig::dump() const {
  std::ostringstream out;
  out << "version = " << kKvConfigVersion << '\n';
  for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
  return out.str();
}

}  // namespace ccg
