#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace zol::cli {

// Line-oriented `key = value` run configuration with `#` comment lines.
// Unknown keys, duplicate keys, and out-of-range values are rejected with the
// offending line number. Every recognized key has a declared default, so a
// missing key never fails at lookup time.
class RunConfig {
 public:
  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::uint64_t> get_uint_list(const std::string& key) const;

  bool is_set(const std::string& key) const { return values_.count(key) > 0; }

  // One "key = value" line per recognized key, resolved values. Stable order.
  std::string describe() const;

 private:
  std::string raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace zol::cli
