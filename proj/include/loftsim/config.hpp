#pragma once

#include <map>
#include <string>
#include <vector>

namespace loftsim {

// Minimal INI reader/writer: [section] headers, key = value pairs, full-line
// comments starting with # or ;. Keys and values are whitespace trimmed;
// values keep internal spaces. Sections and keys are case sensitive.
class IniConfig {
public:
  IniConfig() = default;

  // Throws std::invalid_argument naming the offending line for a key outside
  // any section, a line without '=', or an empty key or section name.
  static IniConfig parse(const std::string& text);
  static IniConfig load(const std::string& path);  // std::runtime_error on I/O

  // Sections and keys in sorted order, one blank line between sections.
  std::string to_string() const;
  void save(const std::string& path) const;  // std::runtime_error on I/O

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  // Getters return the fallback when the key is absent and throw
  // std::invalid_argument when a present value does not parse.
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback = "") const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const;
  // Accepts true/false, yes/no, on/off, 1/0 (case insensitive).
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;

  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

private:
  const std::string* lookup(const std::string& section,
                            const std::string& key) const;

  std::map<std::string, std::map<std::string, std::string>> data_;
};

}  // namespace loftsim
