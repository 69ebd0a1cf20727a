#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "fcs/file_util.hpp"

namespace fcs {

/// Provenance record written next to an artifact as `<artifact>.manifest.json`.
/// The config snapshot is a `key = value` text that `--config` reads back.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config;
  std::uint64_t seed = 0;
  std::vector<std::string> backend_fingerprints;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["arguments"] = arguments;
    j["config"] = config;
    j["seed"] = seed;
    j["backend_fingerprints"] = backend_fingerprints;
    j["started"] = started;
    j["finished"] = finished;
    j["outputs"] = outputs;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.value("arguments", std::vector<std::string>{});
    m.config = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.backend_fingerprints = j.value("backend_fingerprints", std::vector<std::string>{});
    m.started = j.value("started", std::string());
    m.finished = j.value("finished", std::string());
    m.outputs = j.value("outputs", std::vector<std::string>{});
    return m;
  }
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
  std::filesystem::path p = artifact;
  p += ".manifest.json";
  return p;
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& artifact) {
  write_file_atomic(manifest_path(artifact), m.to_json().dump(2) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  try {
    return RunManifest::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
}

}  // namespace fcs
