#pragma once

// Line-oriented key=value run configuration.
//
// Blank lines and text after '#' are ignored. Keys are namespaced scene.*,
// module.* and train.*; every key has a default (see README), unknown or
// repeated keys are rejected, and key order does not matter. The module's
// feature widths are not separate keys: they follow scene.context_dim and
// scene.motion_dim.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gma3d/aggregation.hpp"
#include "gma3d/synthgen.hpp"
#include "gma3d/trainer.hpp"

namespace gma3d::cli {

struct RunConfig {
  synthgen::SceneConfig scene;
  aggregation::Gma3dConfig module;
  trainer::TrainConfig train;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Throws ConfigError with the line number and key on bad input.
RunConfig parse_run_config(const std::string& text);
// Throws IoError if unreadable.
RunConfig load_run_config(const std::filesystem::path& path);

// Every key with its current value, in canonical order. Parsing the
// rendered lines reproduces the config.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::string render_run_config(const RunConfig& cfg);

}  // namespace gma3d::cli
