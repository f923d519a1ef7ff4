#include "latentadv/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "latentadv/errors.hpp"

namespace latentadv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_type(const std::string& t) {
  return t == "int" || t == "float" || t == "bool" || t == "string" || t == "list";
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

Config Config::parse(std::istream& in, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::string section;
  std::string line;
  int number = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(number) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++number;
    std::string text = trim(line);
    if (text.empty() || text.front() == '#' || text.front() == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']') fail("unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) fail("expected 'key:type = value'");
    const std::string lhs = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (!value.empty() && value.front() != '"') {
      const auto hash = value.find(" #");
      if (hash != std::string::npos) value = trim(value.substr(0, hash));
    }
    const auto colon = lhs.find(':');
    if (colon == std::string::npos) fail("missing type on key '" + lhs + "'");
    const std::string key = trim(lhs.substr(0, colon));
    const std::string type = trim(lhs.substr(colon + 1));
    if (key.empty()) fail("empty key");
    if (!valid_type(type)) fail("unknown type '" + type + "'");
    if (section.empty()) fail("key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    if (cfg.entries_.contains(full)) fail("duplicate key '" + full + "'");
    cfg.entries_[full] = Entry{type, unquote(value), number};
    // Type-check eagerly so errors carry the line number.
    if (type == "int") cfg.get_int(full, 0);
    if (type == "float") cfg.get_float(full, 0);
    if (type == "bool") cfg.get_bool(full, false);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos || key.front() == '.' || key.back() == '.') {
    throw ConfigError("override key '" + key + "' is not section.key");
  }
  set(key, unquote(trim(assignment.substr(eq + 1))));
}

void Config::set(const std::string& key, const std::string& raw, const std::string& type) {
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    it->second.raw = raw;
    it->second.line = 0;
    if (!type.empty()) it->second.type = type;
  } else {
    entries_[key] = Entry{type, raw, 0};
  }
}

const Config::Entry* Config::find(const std::string& key, const char* type) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  const Entry& e = it->second;
  if (!e.type.empty() && e.type != type && !(std::string(type) == "float" && e.type == "int")) {
    throw ConfigError(key + " is declared " + e.type + " but read as " + type);
  }
  return &e;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const Config::Entry& e, const char* type) {
  std::string where = e.line > 0 ? " (line " + std::to_string(e.line) + ")" : " (override)";
  throw ConfigError(key + where + ": '" + e.raw + "' is not a valid " + type);
}

}  // namespace

long long Config::get_int(const std::string& key, long long fallback) const {
  const Entry* e = find(key, "int");
  if (!e) return fallback;
  long long v = 0;
  const char* first = e->raw.data();
  const char* last = first + e->raw.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) bad_value(key, *e, "int");
  return v;
}

double Config::get_float(const std::string& key, double fallback) const {
  const Entry* e = find(key, "float");
  if (!e) return fallback;
  double v = 0;
  const char* first = e->raw.data();
  const char* last = first + e->raw.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) bad_value(key, *e, "float");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key, "bool");
  if (!e) return fallback;
  if (e->raw == "true" || e->raw == "1" || e->raw == "yes") return true;
  if (e->raw == "false" || e->raw == "0" || e->raw == "no") return false;
  bad_value(key, *e, "bool");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key, "string");
  return e ? e->raw : fallback;
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const Entry* e = find(key, "list");
  if (!e) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(e->raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void Config::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, e] : entries_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      std::string where = e.line > 0 ? origin_ + ":" + std::to_string(e.line) + ": " : "";
      throw ConfigError(where + "unknown key '" + key + "'");
    }
  }
}

}  // namespace latentadv
