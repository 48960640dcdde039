#ifndef DAN_CONFIG_HPP
#define DAN_CONFIG_HPP

#include <map>
#include <string>

namespace dan {

/// Flat key = value configuration ('#' comments). Unknown keys are the
/// caller's job to reject: consumed() tracks what was read.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  void merge_override(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& def) const;
  long long get_int(const std::string& key, long long def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  /// Keys present in the file/overrides but never read.
  std::string first_unconsumed() const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void save(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> consumed_;
};

}  // namespace dan

#endif
