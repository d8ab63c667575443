#include "vfl/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "vfl/core/error.hpp"

namespace vfl::harness {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(what + ": '" + text + "' is not a number");
}

long long parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(what + ": '" + text + "' is not an integer");
}

bool parse_bool(const std::string& text, const std::string& what) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw ConfigError(what + ": '" + text + "' is not a boolean");
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void Config::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> Config::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  return v ? parse_double(*v, key) : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = find(key);
  return v ? parse_int(*v, key) : fallback;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const long long v = get_int(key, (long long)fallback);
  if (v < 0) throw ConfigError(key + " must be nonnegative");
  return std::size_t(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  return v ? parse_bool(*v, key) : fallback;
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  auto v = find(key);
  return v ? split(*v, ',') : std::vector<std::string>{};
}

std::vector<std::string> Config::unknown_keys(const std::set<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!known.count(k)) out.push_back(k);
  return out;
}

}  // namespace vfl::harness
