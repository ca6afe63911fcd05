#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace teleguard {

// Flat key=value configuration. Keys are dotted ("world.dt"); blank lines and
// lines starting with '#' are ignored. Every lookup marks the key as consumed so
// callers can reject keys nobody asked for.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(const std::string& text);
  static ConfigMap load(const std::filesystem::path& path);

  // "key=value" override; later values win.
  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& assignment);
  void merge(const ConfigMap& other);

  bool contains(const std::string& key) const;
  std::optional<std::string> raw(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  // Throws ValidationError listing every key that was never looked up.
  void ensure_all_consumed() const;

  // Canonical "key=value\n" text, sorted by key.
  std::string to_text() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> consumed_;
};

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);
std::string format_doubles(const std::vector<double>& values);

}  // namespace teleguard
