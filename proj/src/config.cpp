#include "dan/config.hpp"

#include <fstream>
#include <stdexcept>

namespace dan {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: malformed line " + std::to_string(lineno) + " in " +
                               path);
    cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void Config::merge_override(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
  consumed_[key] = true;
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

long long Config::get_int(const std::string& key, long long def) const {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  return std::stoll(it->second);
}

double Config::get_double(const std::string& key, double def) const {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  return std::stod(it->second);
}

bool Config::get_bool(const std::string& key, bool def) const {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config: non-boolean value for " + key);
}

std::string Config::first_unconsumed() const {
  for (const auto& [k, v] : values_)
    if (!consumed_.count(k)) return k;
  return "";
}

void Config::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("config: cannot write " + path);
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
}

}  // namespace dan
