#include "teleguard/common/config_map.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "teleguard/common/errors.hpp"

namespace teleguard {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("config key '" + key + "': not a number: '" + text + "'");
  }
  return value;
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key=value, got '" + stripped + "'");
    }
    map.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return map;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ValidationError("config: empty key");
  entries_[key] = value;
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("override must be KEY=VALUE, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ConfigMap::merge(const ConfigMap& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

bool ConfigMap::contains(const std::string& key) const { return entries_.count(key) > 0; }

std::optional<std::string> ConfigMap::raw(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  consumed_.insert(key);
  return it->second;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  return v ? parse_double(key, *v) : fallback;
}

std::int64_t ConfigMap::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ValidationError("config key '" + key + "': not an integer: '" + *v + "'");
  }
  return value;
}

std::uint64_t ConfigMap::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), value);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ValidationError("config key '" + key + "': not an unsigned integer: '" + *v + "'");
  }
  return value;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ValidationError("config key '" + key + "': not a boolean: '" + *v + "'");
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  const auto v = raw(key);
  return v ? *v : fallback;
}

std::vector<double> ConfigMap::get_doubles(const std::string& key,
                                           const std::vector<double>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ValidationError("config key '" + key + "': empty list");
  return out;
}

void ConfigMap::ensure_all_consumed() const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ValidationError("unknown config keys: " + unknown);
}

std::string ConfigMap::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_double(values[i]);
  }
  return out;
}

}  // namespace teleguard
