#pragma once

#include <map>
#include <string>
#include <vector>

namespace epinet {

// INI-style run configuration: [section] headers, `key = value` lines and
// '#' comments. Unknown sections or keys are rejected; missing keys fall
// back to registered defaults and are reported through notices().
class RunConfig {
 public:
  RunConfig();  // defaults only

  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);

  std::string serialize() const;

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key) const;
  int get_int(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::vector<double> get_list(const std::string& section, const std::string& key) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  // keys that fell back to defaults during parse
  const std::vector<std::string>& notices() const { return notices_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
  std::vector<std::string> notices_;
};

}  // namespace epinet
