#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dielinv/config.hpp"
#include "dielinv/inversion.hpp"

namespace dielinv {

enum class Stage { Simulate, Preprocess, Invert, Full };
const char* to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct StageRecord {
  std::string status = "pending";  // pending | ok | failed
  std::uint64_t params_hash = 0;
  std::vector<std::string> outputs;  // relative to the run directory
  std::string error;
};

/// Written to manifest.json. Wall-clock times go to timing.json so the
/// manifest itself is reproducible.
struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::map<std::string, StageRecord> stages;
  std::string failed_stage;
  std::map<std::string, double> seconds;

  [[nodiscard]] std::string to_json() const;
};

/// Everything the preprocessing hands to the inversion.
struct PreprocessOutput {
  PseudoFreqSeries w_total;  // on the top face of Omega, at the psi sample points
  TargetClass target_class = TargetClass::Dielectric;
  Classification classification;
  CalibrationRecord calibration;
  std::optional<double> z_front;
  std::size_t n_detected = 0;
  std::size_t n_flagged = 0;
};

/// Offset, time-zero, source shift, extraction and time reversal for one raw cube.
struct ProcessedCube {
  TimeZeroResult time_zero;
  ExtractResult extracted;
  TimeReverseResult propagated;
};
ProcessedCube process_measurement(const TraceCube& raw, const PipelineConfig& cfg);

/// Time at which unwanted direct and structure signals have passed the
/// detectors, in the shifted time frame.
double exclusion_end(const PipelineConfig& cfg);

/// Homogeneous transform over Omega at the psi sample points (memoised).
std::shared_ptr<const ForwardResult> homogeneous_over_omega(const PipelineConfig& cfg, const Domains& dom);

/// Gamma_T from the background-subtracted tail on the backscatter face.
XYProjection gamma_t_from(const PseudoFreqSeries& w_total, const PipelineConfig& cfg, const Domains& dom);

/// Assembles the inversion input from preprocessed data.
InversionInput inversion_input(const PreprocessOutput& pre, const PipelineConfig& cfg, const Domains& dom);

/// Writes CSV data for norm curves, eps slices and the Gamma_T map (with the
/// true footprint of `scene` when given).
std::vector<std::string> emit_plots(const ReconstructionResult& r, const XYProjection& gamma_t,
                                    const TargetScene* scene, const std::filesystem::path& dir);

/// Runs a stage (or all of them) into `out`. Throws on failure after
/// recording the failing stage in the manifest.
RunManifest run_pipeline(Stage stage, const PipelineConfig& cfg, const std::filesystem::path& out);

}  // namespace dielinv
