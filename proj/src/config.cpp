#include "mixbench/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mixbench/errors.hpp"

namespace mixbench {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(key, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split_commas(std::string_view text) {
  std::vector<std::string_view> parts;
  while (true) {
    const auto comma = text.find(',');
    parts.push_back(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return parts;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto newline = text.find('\n');
    const std::string_view raw = text.substr(0, newline);
    text.remove_prefix(newline == std::string_view::npos ? text.size() : newline + 1);
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where, "expected key=value, got '" + std::string(line) + "'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where, "empty key");
    if (kv.index_.count(key)) throw ConfigError(key, "duplicate key at " + where);
    kv.set(key, std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

bool KeyValues::has(const std::string& key) const { return index_.count(key) != 0; }

void KeyValues::set(const std::string& key, std::string value) {
  if (auto it = index_.find(key); it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.emplace_back(key, std::move(value));
}

const std::string* KeyValues::find(const std::string& key) const {
  const auto it = index_.find(key);
  if (it == index_.end()) return nullptr;
  read_.insert(key);
  return &entries_[it->second].second;
}

std::string KeyValues::get(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw ConfigError(key, "missing required key");
  return *v;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double KeyValues::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

double KeyValues::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::size_t KeyValues::get_size(const std::string& key) const { return parse_number<std::size_t>(key, get(key)); }

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
  const std::string* v = find(key);
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + *v + "'");
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
  std::vector<double> out;
  const std::string text = get(key);
  for (auto part : split_commas(text)) out.push_back(parse_number<double>(key, part));
  return out;
}

std::vector<std::size_t> KeyValues::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  const std::string text = get(key);
  for (auto part : split_commas(text)) out.push_back(parse_number<std::size_t>(key, part));
  return out;
}

std::vector<std::string> KeyValues::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!read_.count(k)) out.push_back(k);
  return out;
}

std::string KeyValues::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KeyValues::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize();
}

std::filesystem::path resolve_data_path(const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("MIXBENCH_DATA_DIR"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

}  // namespace mixbench
