#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "natadiff/attack.hpp"

namespace natadiff {

nlohmann::json record_to_json(const SampleRecord& rec);
SampleRecord record_from_json(const nlohmann::json& j);

void write_records(const std::filesystem::path& path, const std::vector<SampleRecord>& records);
// One record per non-blank line; throws ValidationError naming the line.
std::vector<SampleRecord> read_records(const std::filesystem::path& path);

struct CleanPoint {
  std::size_t id = 0;
  Vec x;
  std::vector<int> labels;
};

void write_clean(const std::filesystem::path& path, const std::vector<CleanPoint>& points);
std::vector<CleanPoint> read_clean(const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);

// Creates root/<stem>-YYYYmmdd-HHMMSS, adding -2, -3, ... rather than reuse
// an existing directory.
std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& stem);

struct RunManifest {
  std::string tool_version;
  std::string command;
  std::vector<std::string> args;  // full argv after the program name
  std::string config_path;
  std::string config_hash;  // SHA-256 of the resolved config text
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::map<std::string, std::string> inputs;   // path -> SHA-256
  std::map<std::string, std::string> outputs;  // file name in run dir -> SHA-256
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace natadiff
