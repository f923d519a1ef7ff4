#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

namespace latentadv {

// Sectioned key-value text with explicit types:
//
//   # comment
//   [vae]
//   latent_dim:int = 8
//   kl_weight:float = 0.05
//   dedup:bool = true
//   source:string = synthetic
//   methods:list = regular_last_event, gradient_steps
//
// Keys are addressed as "section.key". Values set from the command line have
// no declared type and are checked when read.
class Config {
 public:
  struct Entry {
    std::string type;  // int, float, bool, string, list, or empty
    std::string raw;
    int line = 0;
  };

  static Config parse(std::istream& in, const std::string& origin = "<config>");
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  // "section.key=value"; throws ConfigError on malformed input.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& raw, const std::string& type = "");

  bool has(const std::string& key) const { return entries_.contains(key); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  long long get_int(const std::string& key, long long fallback) const;
  double get_float(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  // Throws ConfigError naming the first key outside `known`.
  void reject_unknown(const std::vector<std::string>& known) const;

 private:
  const Entry* find(const std::string& key, const char* type) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

}  // namespace latentadv
