#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "natadiff/common.hpp"

namespace natadiff {

// Malformed configuration text; carries the source position.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& file, int line, int column, const std::string& what);
  const std::string& file() const { return file_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string file_;
  int line_;
  int column_;
};

struct ConfigEntry {
  std::string value;
  std::string file;
  int line = 0;
  int column = 0;  // of the value
};

// One `[name]` block. Names may repeat (e.g. `[component]`).
class ConfigSection {
 public:
  ConfigSection(std::string name, std::string file, int line)
      : name_(std::move(name)), file_(std::move(file)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }
  const std::string& file() const { return file_; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::vector<std::string> keys() const;

  const ConfigEntry& entry(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Whitespace- or comma-separated numbers.
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  void set(const std::string& key, ConfigEntry entry);
  // Keys never read through a getter.
  std::vector<std::string> unused() const;

  // Error at the position of `key`'s value.
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

 private:
  std::string name_;
  std::string file_;
  int line_;
  std::map<std::string, ConfigEntry> entries_;
  mutable std::set<std::string> read_;
};

// Sectioned key-value text:
//
//   # comment
//   [section]
//   key = value            # trailing comments allowed
//   include = other.cfg    # splices another file's sections here
//
// Keys before the first section header belong to section "" (the preamble).
class Config {
 public:
  static Config parse(const std::string& text, const std::string& file = "<string>",
                      const std::filesystem::path& base_dir = ".");
  static Config load(const std::filesystem::path& path);

  const std::vector<ConfigSection>& sections() const { return sections_; }
  // The unique section `name`; throws ConfigError if it repeats.
  const ConfigSection* find(const std::string& name) const;
  const ConfigSection& require(const std::string& name) const;
  std::vector<const ConfigSection*> all(const std::string& name) const;

  // Canonical text (includes resolved) used for hashing.
  const std::string& canonical() const { return canonical_; }
  std::vector<std::filesystem::path> included_files() const { return included_; }

  // Throws ConfigError on the first key no getter consumed.
  void check_unused() const;

 private:
  void parse_into(const std::string& text, const std::string& file,
                  const std::filesystem::path& base_dir, int depth);

  std::vector<ConfigSection> sections_;
  std::string canonical_;
  std::vector<std::filesystem::path> included_;
};

}  // namespace natadiff
