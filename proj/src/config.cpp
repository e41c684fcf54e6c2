#include "natadiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace natadiff {

namespace {

constexpr int kMaxIncludeDepth = 8;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<long long> to_int(const std::string& s) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

ConfigError::ConfigError(const std::string& file, int line, int column, const std::string& what)
    : Error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      file_(file),
      line_(line),
      column_(column) {}

std::vector<std::string> ConfigSection::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

const ConfigEntry& ConfigSection::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError(file_, line_, 1, "[" + name_ + "] is missing key '" + key + "'");
  }
  read_.insert(key);
  return it->second;
}

void ConfigSection::fail(const std::string& key, const std::string& what) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(file_, line_, 1, "[" + name_ + "] " + what);
  throw ConfigError(it->second.file, it->second.line, it->second.column, key + ": " + what);
}

std::string ConfigSection::get_string(const std::string& key) const { return entry(key).value; }

std::string ConfigSection::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double ConfigSection::get_double(const std::string& key) const {
  const auto v = to_double(entry(key).value);
  if (!v) fail(key, "expected a number, got '" + entry(key).value + "'");
  return *v;
}

double ConfigSection::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long ConfigSection::get_int(const std::string& key) const {
  const auto v = to_int(entry(key).value);
  if (!v) fail(key, "expected an integer, got '" + entry(key).value + "'");
  return *v;
}

long long ConfigSection::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = entry(key).value;
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  fail(key, "expected true or false, got '" + v + "'");
}

std::vector<double> ConfigSection::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split_list(entry(key).value)) {
    const auto v = to_double(tok);
    if (!v) fail(key, "expected numbers, got '" + tok + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<int> ConfigSection::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& tok : split_list(entry(key).value)) {
    const auto v = to_int(tok);
    if (!v) fail(key, "expected integers, got '" + tok + "'");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

void ConfigSection::set(const std::string& key, ConfigEntry entry) {
  if (entries_.count(key)) {
    throw ConfigError(entry.file, entry.line, 1, "duplicate key '" + key + "' in [" + name_ + "]");
  }
  entries_.emplace(key, std::move(entry));
}

std::vector<std::string> ConfigSection::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) {
    if (!read_.count(k)) out.push_back(k);
  }
  return out;
}

Config Config::parse(const std::string& text, const std::string& file,
                     const std::filesystem::path& base_dir) {
  Config cfg;
  cfg.parse_into(text, file, base_dir, 0);
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string(), path.parent_path());
}

void Config::parse_into(const std::string& text, const std::string& file,
                        const std::filesystem::path& base_dir, int depth) {
  if (depth > kMaxIncludeDepth) throw ConfigError(file, 0, 0, "include nesting too deep");
  std::optional<std::size_t> current;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const int indent = static_cast<int>(raw.find_first_not_of(" \t")) + 1;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(file, line_no, indent, "unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw ConfigError(file, line_no, indent + 1, "bad section name");
      sections_.emplace_back(name, file, line_no);
      current = sections_.size() - 1;
      canonical_ += "[" + name + "]\n";
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(file, line_no, indent, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_name(key)) throw ConfigError(file, line_no, indent, "bad key name");
    const auto value_pos = raw.find(value, raw.find('=') + 1);
    const int column = value.empty() ? static_cast<int>(raw.find('=')) + 2
                                     : static_cast<int>(value_pos) + 1;
    if (value.empty()) throw ConfigError(file, line_no, column, "empty value for '" + key + "'");

    if (key == "include") {
      const std::filesystem::path target = base_dir / value;
      std::ifstream inc(target);
      if (!inc) throw ConfigError(file, line_no, column, "cannot open include '" + value + "'");
      std::stringstream ss;
      ss << inc.rdbuf();
      included_.push_back(target);
      parse_into(ss.str(), target.string(), target.parent_path(), depth + 1);
      continue;
    }

    if (!current) {
      sections_.emplace_back("", file, line_no);
      current = sections_.size() - 1;
    }
    sections_[*current].set(key, ConfigEntry{value, file, line_no, column});
    canonical_ += key + "=" + value + "\n";
  }
}

const ConfigSection* Config::find(const std::string& name) const {
  const ConfigSection* found = nullptr;
  for (const auto& s : sections_) {
    if (s.name() != name) continue;
    if (found) throw ConfigError(s.file(), s.line(), 1, "section [" + name + "] appears twice");
    found = &s;
  }
  return found;
}

const ConfigSection& Config::require(const std::string& name) const {
  const ConfigSection* s = find(name);
  if (!s) throw ConfigError("<config>", 0, 0, "missing section [" + name + "]");
  return *s;
}

std::vector<const ConfigSection*> Config::all(const std::string& name) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections_) {
    if (s.name() == name) out.push_back(&s);
  }
  return out;
}

void Config::check_unused() const {
  for (const auto& s : sections_) {
    const auto unused = s.unused();
    if (!unused.empty()) s.fail(unused.front(), "unknown key in [" + s.name() + "]");
  }
}

}  // namespace natadiff
