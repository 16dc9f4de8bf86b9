#pragma once

// Sequential orchestrator: bootstrap on frame 0, then per frame track, fuse,
// extract, rebind and warp. Optionally runs the single-frame baseline beside
// it and scores both against clean frames and ground truth.

#include "dfusion/deformation_graph.hpp"
#include "dfusion/frame.hpp"
#include "dfusion/scene.hpp"
#include "dfusion/tracker.hpp"
#include "dfusion/tsdf_volume.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dfusion {

struct PipelineConfig {
  VolumeConfig volume = VolumeConfig::centered(Vec3(0.0, 0.0, 0.6), 0.35, 128);
  GraphParams graph;
  EnergyParams energy;
  FilterParams filter;
  bool single_frame_baseline = false;
  bool record_timings = true;  // false writes zero timings so reports are bit-reproducible
  std::string out_dir;         // empty: no files written
  bool write_meshes = true;

  /// Turns off graph extension, behind-surface exclusion and the
  /// free-space cell skip.
  void apply_strict_mode();
  void validate() const;
};

/// Raw sensor images for one frame plus optional clean control data.
struct SequenceFrame {
  RenderedFrame observed;
  std::optional<RenderedFrame> clean;              // metrics use this when present
  std::optional<TriangleMesh> ground_truth;        // reference (camera) frame
};

using FrameProvider = std::function<SequenceFrame(int)>;

struct FrameRecord {
  int frame = 0;
  std::optional<double> alignment_error;  // m^2, absent when nothing associates
  std::optional<double> alignment_rms;    // m
  std::optional<double> surface_rms;      // m, absent without ground truth
  std::optional<double> surface_max;      // m
  int correspondences = 0;
  double track_seconds = 0.0;
  double fuse_seconds = 0.0;
  double extract_seconds = 0.0;
  bool lost_tracking = false;
  std::size_t live_vertices = 0;
  std::size_t graph_nodes = 0;
  std::optional<std::size_t> baseline_vertices;
  std::optional<double> baseline_surface_rms;
  std::optional<double> baseline_alignment_rms;
  std::string mesh_path;  // relative to the output directory
};

struct RunReport {
  std::vector<FrameRecord> frames;
};

/// Everything the pipeline holds after processing frame t.
struct PipelineState {
  int frame = 0;
  const ObservationFrame& observed;
  const ObservationFrame& clean;
  const TriangleMesh& reference_mesh;
  const DeformationGraph& graph;
  const TriangleMesh& live_mesh;
  const TriangleMesh* baseline_mesh;       // null unless the baseline runs
  const TriangleMesh* ground_truth;        // null without ground truth
  const TsdfVolume& volume;
  const TrackDiagnostics* diagnostics;     // null on frame 0
};

using PipelineObserver = std::function<void(const PipelineState&)>;

[[nodiscard]] RunReport run_sequence(int frame_count, const CameraIntrinsics& intrinsics,
                                     const FrameProvider& provider, const PipelineConfig& config,
                                     const PipelineObserver& observer = {});

/// Renders the scene, corrupts the observed stream, keeps the clean render
/// for metrics and the ground truth in camera coordinates.
[[nodiscard]] SequenceFrame synthesize_frame(const SceneSpec& scene,
                                             const CorruptionSpec& corruption, int t);

[[nodiscard]] RunReport run_pipeline(const SceneSpec& scene, const CorruptionSpec& corruption,
                                     const PipelineConfig& config,
                                     const PipelineObserver& observer = {});

/// Single-frame method: fuse one frame into a fresh volume with the
/// identity warp and extract.
[[nodiscard]] TriangleMesh single_frame_reconstruction(const ObservationFrame& frame,
                                                       const VolumeConfig& volume);

}  // namespace dfusion
