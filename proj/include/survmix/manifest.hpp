// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "survmix/version.hpp"

namespace survmix {

/// Provenance record written alongside every CLI run's outputs: the command,
/// its fully resolved configuration, and enough context to regenerate the
/// files from scratch.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;
  std::optional<double> realized_censoring;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["duration_seconds"] = duration_seconds;
    if (realized_censoring) j["realized_censoring"] = *realized_censoring;
    j["version"] = kVersion;
    return j;
  }
};

inline void save_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << m.to_json().dump(2) << "\n";
}

}  // namespace survmix
