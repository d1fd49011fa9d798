#include "loftsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace loftsim {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] void bad_line(size_t line_no, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                              what);
}

}  // namespace

IniConfig IniConfig::parse(const std::string& text) {
  IniConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  bool have_section = false;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') bad_line(line_no, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) bad_line(line_no, "empty section name");
      have_section = true;
      cfg.data_[section];
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) bad_line(line_no, "expected key = value");
    if (!have_section) bad_line(line_no, "key outside any section");
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) bad_line(line_no, "empty key");
    cfg.data_[section][key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

IniConfig IniConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string IniConfig::to_string() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, kv] : data_) {
    if (!first) out << "\n";
    first = false;
    out << "[" << section << "]\n";
    for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  }
  return out.str();
}

void IniConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << to_string();
  if (!out) throw std::runtime_error("write failed: " + path);
}

const std::string* IniConfig::lookup(const std::string& section,
                                     const std::string& key) const {
  auto s = data_.find(section);
  if (s == data_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  return &k->second;
}

bool IniConfig::has(const std::string& section, const std::string& key) const {
  return lookup(section, key) != nullptr;
}

void IniConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  if (section.empty() || key.empty())
    throw std::invalid_argument("empty section or key");
  data_[section][key] = value;
}

std::string IniConfig::get_string(const std::string& section,
                                  const std::string& key,
                                  const std::string& fallback) const {
  const std::string* v = lookup(section, key);
  return v ? *v : fallback;
}

double IniConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  const std::string* v = lookup(section, key);
  if (!v) return fallback;
  const char* begin = v->c_str();
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::invalid_argument("config [" + section + "] " + key +
                                ": not a number: " + *v);
  return value;
}

long long IniConfig::get_int(const std::string& section, const std::string& key,
                             long long fallback) const {
  const std::string* v = lookup(section, key);
  if (!v) return fallback;
  const char* begin = v->c_str();
  char* end = nullptr;
  long long value = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw std::invalid_argument("config [" + section + "] " + key +
                                ": not an integer: " + *v);
  return value;
}

bool IniConfig::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
  const std::string* v = lookup(section, key);
  if (!v) return fallback;
  std::string s = lower(*v);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw std::invalid_argument("config [" + section + "] " + key +
                              ": not a boolean: " + *v);
}

std::vector<std::string> IniConfig::sections() const {
  std::vector<std::string> out;
  out.reserve(data_.size());
  for (const auto& [section, kv] : data_) out.push_back(section);
  return out;
}

std::vector<std::string> IniConfig::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto s = data_.find(section);
  if (s == data_.end()) return out;
  out.reserve(s->second.size());
  for (const auto& [key, value] : s->second) out.push_back(key);
  return out;
}

}  // namespace loftsim
