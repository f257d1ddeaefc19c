#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mklstm {

// key=value run configuration. Lines starting with '#' and blank lines are
// ignored; later assignments win, so flag overrides can be appended.
class ConfigMap {
 public:
  static ConfigMap load(const std::string& path);
  static ConfigMap from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key,
                            const std::vector<int>& fallback) const;

  // Sorted key=value dump; written as config.resolved next to run outputs.
  std::string resolved_text() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string join_doubles(const std::vector<double>& v);

}  // namespace mklstm
