#include "epinet/config.hpp"

#include <fstream>
#include <sstream>

#include "epinet/error.hpp"

namespace epinet {

namespace {

// Known keys and their defaults; anything else is a typo.
const std::map<std::string, std::map<std::string, std::string>>& registry() {
  static const std::map<std::string, std::map<std::string, std::string>> reg = {
      {"net",
       {{"arch", "class-t"},
        {"classes", "10"},
        {"input_size", "32"},
        {"normalized", "0"},
        {"seed", "1"}}},
      {"train",
       {{"lr", "0.01"},
        {"momentum", "0.9"},
        {"batch", "128"},
        {"weight_decay", "0.0005"},
        {"epochs", "30"},
        {"seed", "1"},
        {"loss_mode", "single"},
        {"patience", "3"},
        {"max_drops", "3"},
        {"flip", "1"},
        {"stop_loss", "-1"}}},
      {"patchwork",
       {{"gutter", "16"},
        {"scales", "1.0,0.75,0.5"}}},
      {"detect",
       {{"nms", "0.3"},
        {"score_threshold", "0.05"},
        {"max_per_class", "100"},
        {"gutter", "8"},
        {"epochs", "3"},
        {"lr", "0.01"},
        {"batch", "64"},
        {"negatives_per_positive", "3"},
        {"square_only", "0"},
        {"subsample_fc", "0"}}},
      {"data",
       {{"dir", "data"},
        {"task", "classify"},
        {"classes", "10"},
        {"image_size", "32"},
        {"train", "5000"},
        {"val", "500"},
        {"test", "1000"},
        {"seed", "7"},
        {"palette", "distinct"},
        {"objects_min", "1"},
        {"objects_max", "3"},
        {"mean_r", "0.5"},
        {"mean_g", "0.5"},
        {"mean_b", "0.5"}}},
  };
  return reg;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() = default;

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error("cli", "config", "malformed section at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      if (!registry().count(section))
        throw Error("cli", "config", "unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("cli", "config", "expected key = value at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw Error("cli", "config", "key outside any section at line " + std::to_string(lineno));
    const auto& known = registry().at(section);
    if (!known.count(key))
      throw Error("cli", "config", "unknown key " + section + "." + key);
    cfg.values_[section][key] = value;
  }
  // note every key that fell back to its default
  for (const auto& [sec, keys] : registry())
    for (const auto& [key, def] : keys)
      if (!cfg.values_.count(sec) || !cfg.values_.at(sec).count(key))
        cfg.notices_.push_back(sec + "." + key + " defaulted to " + def);
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cli", "io", "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [sec, keys] : values_) {
    if (!first) os << "\n";
    first = false;
    os << "[" << sec << "]\n";
    for (const auto& [key, value] : keys) os << key << " = " << value << "\n";
  }
  return os.str();
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  auto sit = values_.find(section);
  return sit != values_.end() && sit->second.count(key) > 0;
}

std::string RunConfig::get_str(const std::string& section, const std::string& key) const {
  if (has(section, key)) return values_.at(section).at(key);
  const auto rit = registry().find(section);
  if (rit == registry().end() || !rit->second.count(key))
    throw Error("cli", "config", "unknown key " + section + "." + key);
  return rit->second.at(key);
}

int RunConfig::get_int(const std::string& section, const std::string& key) const {
  try {
    return std::stoi(get_str(section, key));
  } catch (const Error&) {
    throw;
  } catch (...) {
    throw Error("cli", "config", section + "." + key + " is not an integer");
  }
}

double RunConfig::get_double(const std::string& section, const std::string& key) const {
  try {
    return std::stod(get_str(section, key));
  } catch (const Error&) {
    throw;
  } catch (...) {
    throw Error("cli", "config", section + "." + key + " is not a number");
  }
}

bool RunConfig::get_bool(const std::string& section, const std::string& key) const {
  const std::string v = get_str(section, key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error("cli", "config", section + "." + key + " is not a boolean");
}

std::vector<double> RunConfig::get_list(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  std::string v = get_str(section, key);
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw Error("cli", "config", section + "." + key + " has a non-numeric element");
    }
  }
  return out;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto rit = registry().find(section);
  if (rit == registry().end() || !rit->second.count(key))
    throw Error("cli", "config", "unknown key " + section + "." + key);
  values_[section][key] = value;
}

}  // namespace epinet
