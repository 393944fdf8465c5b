#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mixbench {

// Flat key=value text with dotted section prefixes ("model.width=128").
// Blank lines and lines starting with '#' are ignored. Every typed getter
// throws ConfigError naming the key on a missing or malformed value.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated numbers, e.g. "0,0.0039,0.0078".
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  // Keys in file order.
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  // Keys present in the file that no getter has asked for; typos show up here.
  std::vector<std::string> unused_keys() const;
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  const std::string* find(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
  mutable std::set<std::string> read_;
};

// Relative dataset paths resolve against $MIXBENCH_DATA_DIR when it is set.
std::filesystem::path resolve_data_path(const std::string& value);

}  // namespace mixbench
