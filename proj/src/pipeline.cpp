#include "dfusion/pipeline.hpp"

#include "dfusion/io.hpp"
#include "dfusion/metrics.hpp"

#include <chrono>
#include <filesystem>
#include <stdexcept>

namespace dfusion {
namespace {

class StageTimer {
 public:
  explicit StageTimer(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] double seconds() const {
    if (!enabled_) {
      return 0.0;
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<SkinningBinding> bindings_for(const TriangleMesh& mesh, const DeformationGraph& graph,
                                          int influences) {
  if (graph.nodes.empty()) {
    return std::vector<SkinningBinding>(mesh.vertices.size());
  }
  return compute_bindings(mesh.vertices, graph, std::min<int>(influences, graph.size()));
}

int effective_influences(const DeformationGraph& graph, int influences) {
  return std::max(1, std::min<int>(influences, graph.size()));
}

}  // namespace

void PipelineConfig::apply_strict_mode() {
  graph.extend = false;
  volume.behind_surface_exclusion = false;
  volume.skip_free_space_cells = false;
}

void PipelineConfig::validate() const {
  volume.validate();
  energy.validate();
  if (!(graph.sampling_radius > 0.0) || !(graph.sigma > 0.0) || graph.n_neighbors < 1 ||
      graph.influences < 1 || graph.influences > kMaxInfluences) {
    throw std::invalid_argument("pipeline: invalid graph parameters");
  }
}

TriangleMesh single_frame_reconstruction(const ObservationFrame& frame, const VolumeConfig& volume) {
  TsdfVolume fresh = create_volume(volume);
  fuse_frame(fresh, DeformationGraph{}, frame);
  return extract_reference_mesh(fresh);
}

RunReport run_sequence(int frame_count, const CameraIntrinsics& intrinsics,
                       const FrameProvider& provider, const PipelineConfig& config,
                       const PipelineObserver& observer) {
  config.validate();
  intrinsics.validate();
  if (frame_count < 0) {
    throw std::invalid_argument("run_sequence: negative frame count");
  }
  const std::filesystem::path out_dir = config.out_dir;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
  }

  RunReport report;
  TsdfVolume volume = create_volume(config.volume);
  DeformationGraph graph;
  TriangleMesh mesh0;
  TriangleMesh live;
  std::vector<SkinningBinding> bindings;
  const int influences = config.graph.influences;

  for (int t = 0; t < frame_count; ++t) {
    SequenceFrame input = provider(t);
    const ObservationFrame frame =
        build_frame(t, input.observed.depth, input.observed.color, intrinsics, config.filter);
    const ObservationFrame clean =
        input.clean ? build_frame(t, input.clean->depth, input.clean->color, intrinsics, config.filter)
                    : frame;

    FrameRecord rec;
    rec.frame = t;
    TrackDiagnostics diagnostics;
    bool tracked = false;

    if (t > 0) {
      const StageTimer timer(config.record_timings);
      TrackResult result = track_frame(graph, mesh0, bindings, frame, config.energy);
      rec.track_seconds = timer.seconds();
      rec.lost_tracking = result.diagnostics.lost_tracking;
      rec.correspondences = result.diagnostics.correspondences;
      graph = std::move(result.graph);
      diagnostics = std::move(result.diagnostics);
      tracked = true;
    }
    {
      const StageTimer timer(config.record_timings);
      fuse_frame(volume, graph, frame, effective_influences(graph, influences));
      rec.fuse_seconds = timer.seconds();
    }
    {
      const StageTimer timer(config.record_timings);
      mesh0 = extract_reference_mesh(volume);
      rec.extract_seconds = timer.seconds();
    }
    if (t == 0) {
      const auto positions = sample_nodes(mesh0, config.graph.sampling_radius);
      graph = build_graph(positions, config.graph.n_neighbors, config.graph.sigma);
    } else if (config.graph.extend) {
      graph = extend_graph(graph, mesh0, config.graph.sampling_radius, config.graph.n_neighbors,
                           config.graph.sigma);
    }
    bindings = bindings_for(mesh0, graph, influences);
    live = warp_mesh(mesh0, graph, bindings);
    rec.live_vertices = live.vertex_count();
    rec.graph_nodes = graph.nodes.size();

    if (const auto a = alignment_error(live, clean, config.energy)) {
      rec.alignment_error = a->energy;
      rec.alignment_rms = a->rms;
    }
    if (!tracked) {
      rec.correspondences = static_cast<int>(
          associate(live.vertices, live.normals, frame, config.energy).size());
    }
    const TriangleMesh* gt = input.ground_truth ? &*input.ground_truth : nullptr;
    if (gt != nullptr && !live.empty()) {
      const SurfaceError e = surface_error(live, *gt);
      rec.surface_rms = e.rms;
      rec.surface_max = e.max;
    }

    std::optional<TriangleMesh> baseline;
    if (config.single_frame_baseline) {
      baseline = single_frame_reconstruction(frame, config.volume);
      rec.baseline_vertices = baseline->vertex_count();
      if (gt != nullptr && !baseline->empty()) {
        rec.baseline_surface_rms = surface_error(*baseline, *gt).rms;
      }
      if (const auto a = alignment_error(*baseline, clean, config.energy)) {
        rec.baseline_alignment_rms = a->rms;
      }
    }

    if (!out_dir.empty() && config.write_meshes) {
      rec.mesh_path = frame_file_name("mesh", t, "ply");
      write_ply(live, out_dir / rec.mesh_path);
    }
    if (observer) {
      observer(PipelineState{t, frame, clean, mesh0, graph, live,
                             baseline ? &*baseline : nullptr, gt, volume,
                             tracked ? &diagnostics : nullptr});
    }
    report.frames.push_back(std::move(rec));
  }
  if (!out_dir.empty()) {
    write_report(report, out_dir / "report.csv");
  }
  return report;
}

SequenceFrame synthesize_frame(const SceneSpec& scene, const CorruptionSpec& corruption, int t) {
  SequenceFrame out;
  RenderedFrame clean = render_frame(generate_scene_mesh(scene, t), scene.intrinsics, scene.camera_pose);
  out.observed = corrupt_frame(clean, corruption, t);
  out.clean = std::move(clean);
  out.ground_truth = transform_mesh(generate_ground_truth(scene, t), scene.camera_pose);
  return out;
}

RunReport run_pipeline(const SceneSpec& scene, const CorruptionSpec& corruption,
                       const PipelineConfig& config, const PipelineObserver& observer) {
  scene.validate();
  corruption.validate(scene.intrinsics.width, scene.intrinsics.height);
  return run_sequence(
      scene.frame_count, scene.intrinsics,
      [&](int t) { return synthesize_frame(scene, corruption, t); }, config, observer);
}

}  // namespace dfusion
