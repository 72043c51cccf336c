#pragma once

// Run configuration: one JSON document holding the model, training and
// synthesis settings plus data paths. Unknown keys are rejected at every level.

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include "temba/data.hpp"
#include "temba/model_config.hpp"
#include "temba/train.hpp"

namespace temba {

enum class Precision { f32, f64 };

inline std::string to_string(Precision p) { return p == Precision::f32 ? "float32" : "float64"; }
inline Precision parse_precision(const std::string& s) {
  if (s == "float32" || s == "float") return Precision::f32;
  if (s == "float64" || s == "double") return Precision::f64;
  throw ContractViolation("unknown precision '" + s + "' (expected float32 or float64)");
}

struct RunPaths {
  std::string features_dir;
  std::string annotations_dir;
  std::string manifest;
  std::string out_dir = "out";

  // Features and annotations default to siblings of the manifest.
  DatasetPaths dataset() const {
    const std::filesystem::path root = manifest.empty() ? "." : std::filesystem::path(manifest).parent_path();
    return {features_dir.empty() ? root / "features" : std::filesystem::path(features_dir),
            annotations_dir.empty() ? root / "annotations" : std::filesystem::path(annotations_dir)};
  }
};

struct RunConfig {
  Mode mode = Mode::detection;
  Precision precision = Precision::f32;
  ModelConfig model;
  TrainConfig train;
  std::optional<SynthSpec> synth;
  RunPaths paths;

  // Pushes the top-level mode and seed into the sections that carry them.
  void sync() {
    model.mode = mode;
    if (synth) synth->mode = mode;
  }
};

inline void to_json(nlohmann::json& j, const RunPaths& p) {
  j = nlohmann::json{{"features_dir", p.features_dir},
                     {"annotations_dir", p.annotations_dir},
                     {"manifest", p.manifest},
                     {"out_dir", p.out_dir}};
}

inline void merge_json(const nlohmann::json& j, RunPaths& p) {
  require(j.is_object(), "paths must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "features_dir") p.features_dir = v.get<std::string>();
    else if (key == "annotations_dir") p.annotations_dir = v.get<std::string>();
    else if (key == "manifest") p.manifest = v.get<std::string>();
    else if (key == "out_dir") p.out_dir = v.get<std::string>();
    else throw ContractViolation("unknown paths key '" + key + "'");
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"mode", to_string(c.mode)},
                   {"precision", to_string(c.precision)},
                   {"model", c.model},
                   {"train", c.train},
                   {"paths", c.paths}};
  if (c.synth) j["synth"] = *c.synth;
  return j;
}

inline void merge_json(const nlohmann::json& j, RunConfig& c) {
  require(j.is_object(), "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "mode") c.mode = parse_mode(v.get<std::string>());
      else if (key == "precision") c.precision = parse_precision(v.get<std::string>());
      else if (key == "model") merge_json(v, c.model);
      else if (key == "train") merge_json(v, c.train);
      else if (key == "synth") {
        if (!c.synth) c.synth = SynthSpec{};
        merge_json(v, *c.synth);
      } else if (key == "paths") merge_json(v, c.paths);
      else throw ContractViolation("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("config: ") + e.what());
  }
  if (j.contains("mode")) c.sync();
  else c.mode = c.model.mode;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  merge_json(io::read_json(path), c);
  return c;
}

}  // namespace temba
