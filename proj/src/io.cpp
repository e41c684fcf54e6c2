#include "natadiff/io.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "natadiff/digest.hpp"

namespace natadiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_to_json(const Vec& v) { return std::vector<double>(v.begin(), v.end()); }

Vec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no), e.what());
    }
  }
}

}  // namespace

json record_to_json(const SampleRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["x"] = vec_to_json(rec.x);
  j["y"] = rec.y;
  j["y_tilde"] = rec.y_tilde;
  j["mode"] = to_string(rec.mode);
  j["attempts"] = rec.attempts;
  j["mu_final"] = rec.mu_final;
  j["s_final"] = rec.s_final;
  j["success"] = rec.success;
  j["verdicts"] = rec.verdicts;
  j["digest"] = rec.digest;
  return j;
}

SampleRecord record_from_json(const json& j) {
  SampleRecord rec;
  rec.id = j.at("id").get<std::size_t>();
  rec.x = vec_from_json(j.at("x"));
  rec.y = j.at("y").get<int>();
  rec.y_tilde = j.at("y_tilde").get<int>();
  rec.mode = parse_target_mode(j.at("mode").get<std::string>());
  rec.attempts = j.at("attempts").get<int>();
  rec.mu_final = j.at("mu_final").get<double>();
  rec.s_final = j.at("s_final").get<double>();
  rec.success = j.at("success").get<bool>();
  rec.verdicts = j.at("verdicts").get<std::map<std::string, int>>();
  rec.digest = j.at("digest").get<std::string>();
  return rec;
}

void write_records(const fs::path& path, const std::vector<SampleRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<SampleRecord> read_records(const fs::path& path) {
  std::vector<SampleRecord> out;
  for_each_json_line(path, [&](const json& j) { out.push_back(record_from_json(j)); });
  return out;
}

void write_clean(const fs::path& path, const std::vector<CleanPoint>& points) {
  auto out = open_out(path);
  for (const auto& p : points) {
    out << json{{"id", p.id}, {"x", vec_to_json(p.x)}, {"labels", p.labels}}.dump() << '\n';
  }
}

std::vector<CleanPoint> read_clean(const fs::path& path) {
  std::vector<CleanPoint> out;
  for_each_json_line(path, [&](const json& j) {
    out.push_back({j.at("id").get<std::size_t>(), vec_from_json(j.at("x")),
                   j.at("labels").get<std::vector<int>>()});
  });
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.add(buf, static_cast<std::size_t>(in.gcount()));
  return h.hex();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path fresh_run_dir(const fs::path& root, const std::string& stem) {
  fs::create_directories(root);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << stem << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
  const std::string base = os.str();
  for (int n = 1;; ++n) {
    const fs::path dir = root / (n == 1 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

json manifest_to_json(const RunManifest& m) {
  return json{{"tool_version", m.tool_version}, {"command", m.command},
              {"args", m.args},                 {"config_path", m.config_path},
              {"config_hash", m.config_hash},   {"seed", m.seed},
              {"started", m.started},           {"finished", m.finished},
              {"inputs", m.inputs},             {"outputs", m.outputs}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.args = j.at("args").get<std::vector<std::string>>();
  m.config_path = j.at("config_path").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  return m;
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  auto out = open_out(path);
  out << manifest_to_json(m).dump(2) << '\n';
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError("manifest", e.what());
  }
}

}  // namespace natadiff
