#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dielinv/inversion.hpp"
#include "dielinv/preprocess.hpp"
#include "dielinv/scene.hpp"
#include "dielinv/synth.hpp"

namespace dielinv {

struct PreprocessConfig {
  std::size_t baseline_samples = 40;  // pre-trigger window for the offset
  TimeZeroOptions time_zero{};
  double source_shift = -0.9;  // moves the source plane onto the top of G
  ExtractOptions extract{};
  double exclusion_margin = 0.05;
  TimeReverseConfig reverse{};
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  TargetScene scene = preset_scene("dielectric_cube");
  AcquisitionConfig acquisition{};
  CorruptionConfig corruption{};
  PreprocessConfig preprocess{};
  InversionConfig inversion{};
  /// Contrast bound; unset picks 29 for Test 1, and 9 or 19 (dielectric or
  /// metallic) for Test 2.
  std::optional<double> d;
  std::string dielectric_calibrator = "wood_calibrator";
  std::string metallic_calibrator = "metal_calibrator";
  bool emit_plots = true;

  void validate() const;
  /// Contrast bound and inner cap for the given class.
  [[nodiscard]] InversionConfig inversion_for(TargetClass c) const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig parse_config(const std::string& yaml_text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical YAML dump with every field; parse_config(dump) reproduces the config.
std::string dump_config(const PipelineConfig& c);
std::uint64_t config_hash(const PipelineConfig& c);

}  // namespace dielinv
