#pragma once

// Plain-text run configuration: "key = value" lines mapped onto the scene,
// corruption and pipeline structs. Every key has a default, so an empty file
// is a valid configuration.

#include "dfusion/pipeline.hpp"
#include "dfusion/scene.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dfusion {

struct RunConfig {
  SceneSpec scene;
  CorruptionSpec corruption;
  PipelineConfig pipeline;
  // Occlusion strip over the object, resolved against the scene by
  // resolved_corruption(). fraction 0 disables it.
  double occlusion_strip_fraction = 0.0;
  int occlusion_strip_first = 0;
  int occlusion_strip_last = 0;

  /// Sets one key. Throws std::invalid_argument for unknown keys or values
  /// that do not parse.
  void set(const std::string& key, const std::string& value);

  /// Applies "key=value".
  void set_assignment(const std::string& assignment);

  /// Every key with its current value, one "key = value" line each, in a
  /// fixed order. Reading the text back reproduces this config.
  [[nodiscard]] std::string to_text() const;

  /// Corruption with the occlusion strip, if any, appended.
  [[nodiscard]] CorruptionSpec resolved_corruption() const;

  /// All keys, in to_text order.
  [[nodiscard]] static std::vector<std::string> keys();
};

/// Applies the lines of `text` in order. Blank lines and '#' comments are
/// skipped. Errors name the line number.
void apply_config_text(RunConfig& config, const std::string& text);

/// Throws std::runtime_error when the file cannot be read.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

}  // namespace dfusion
