// dfusion: command-line entry point.
//
//   dfusion run     full pipeline on a synthetic scene or a frame directory
//   dfusion render  write a synthetic sequence to disk
//   dfusion fuse    volume-only fusion with the identity warp
//   dfusion report  recompute metrics for stored meshes
//
// Parameters come from a "key = value" config file plus --set overrides;
// the resolved values are echoed to config_used.txt in the output directory.

#include "dfusion/config.hpp"
#include "dfusion/io.hpp"
#include "dfusion/metrics.hpp"
#include "dfusion/pipeline.hpp"
#include "dfusion/simd/kernels.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dfusion;

namespace {

constexpr int kExitError = 1;
constexpr int kExitLost = 2;

struct Options {
  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string input_dir;
  std::string mesh_dir;
  bool strict_mode = false;
  bool fail_on_lost = false;
  bool quiet = false;
};

RunConfig resolve(const Options& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) {
    apply_config_file(cfg, opt.config_path);
  }
  for (const auto& a : opt.assignments) {
    cfg.set_assignment(a);
  }
  if (opt.seed) {
    cfg.corruption.seed = *opt.seed;
  }
  if (opt.strict_mode) {
    cfg.pipeline.apply_strict_mode();
  }
  return cfg;
}

void echo_config(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "config_used.txt");
  out << cfg.to_text();
  if (!out) {
    throw std::runtime_error("cannot write " + (out_dir / "config_used.txt").string());
  }
}

// Frames either synthesized from the scene or read from a directory.
struct Source {
  int frame_count = 0;
  CameraIntrinsics intrinsics;
  FrameProvider provider;
};

Source open_source(const RunConfig& cfg, const std::string& input_dir) {
  Source src;
  if (input_dir.empty()) {
    cfg.scene.validate();
    const CorruptionSpec corruption = cfg.resolved_corruption();
    corruption.validate(cfg.scene.intrinsics.width, cfg.scene.intrinsics.height);
    src.frame_count = cfg.scene.frame_count;
    src.intrinsics = cfg.scene.intrinsics;
    src.provider = [scene = cfg.scene, corruption](int t) {
      return synthesize_frame(scene, corruption, t);
    };
    return src;
  }
  const fs::path dir = input_dir;
  src.intrinsics = read_intrinsics(dir / "intrinsics.txt");
  src.frame_count = count_sequence_frames(dir);
  if (src.frame_count == 0) {
    throw std::runtime_error("no depth_00000.png in " + dir.string());
  }
  src.provider = [dir](int t) {
    SequenceFrame f;
    f.observed = read_sequence_frame(dir, t);
    // Ground truth written by `render`, already in the reference frame.
    const fs::path gt = dir / frame_file_name("gt", t, "ply");
    if (fs::exists(gt)) {
      f.ground_truth = read_ply(gt);
    }
    return f;
  };
  return src;
}

void print_record(const FrameRecord& r, bool quiet) {
  if (quiet) {
    return;
  }
  auto mm = [](const std::optional<double>& v) { return v ? *v * 1000.0 : -1.0; };
  std::printf("frame %5d  corr %6d  align_rms %8.4f mm  surface_rms %8.4f mm  vertices %zu%s\n",
              r.frame, r.correspondences, mm(r.alignment_rms), mm(r.surface_rms), r.live_vertices,
              r.lost_tracking ? "  LOST" : "");
  std::fflush(stdout);
}

int finish_lost_check(const RunReport& report, bool fail_on_lost) {
  for (const auto& r : report.frames) {
    if (r.lost_tracking) {
      std::fprintf(stderr, "dfusion: lost tracking at frame %d (no correspondences)\n", r.frame);
      if (fail_on_lost) {
        return kExitLost;
      }
    }
  }
  return 0;
}

int cmd_run(const Options& opt) {
  RunConfig cfg = resolve(opt);
  cfg.pipeline.out_dir = opt.out_dir;
  echo_config(cfg, opt.out_dir);
  const Source src = open_source(cfg, opt.input_dir);
  const RunReport report = run_sequence(src.frame_count, src.intrinsics, src.provider, cfg.pipeline);
  for (const auto& r : report.frames) {
    print_record(r, opt.quiet);
  }
  return finish_lost_check(report, opt.fail_on_lost);
}

int cmd_render(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  echo_config(cfg, opt.out_dir);
  const Source src = open_source(cfg, "");
  const fs::path dir = opt.out_dir;
  write_intrinsics(src.intrinsics, dir / "intrinsics.txt");
  for (int t = 0; t < src.frame_count; ++t) {
    const SequenceFrame f = src.provider(t);
    write_sequence_frame(f.observed, dir, t);
    write_ply(*f.ground_truth, dir / frame_file_name("gt", t, "ply"));
    if (!opt.quiet) {
      std::printf("frame %5d written\n", t);
    }
  }
  return 0;
}

int cmd_fuse(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  cfg.pipeline.validate();
  echo_config(cfg, opt.out_dir);
  const Source src = open_source(cfg, opt.input_dir);
  const fs::path dir = opt.out_dir;
  TsdfVolume volume = create_volume(cfg.pipeline.volume);
  const DeformationGraph identity;
  RunReport report;
  for (int t = 0; t < src.frame_count; ++t) {
    const SequenceFrame input = src.provider(t);
    const ObservationFrame frame = build_frame(t, input.observed.depth, input.observed.color,
                                               src.intrinsics, cfg.pipeline.filter);
    FrameRecord rec;
    rec.frame = t;
    using Clock = std::chrono::steady_clock;
    auto seconds = [&](Clock::time_point start) {
      return cfg.pipeline.record_timings
                 ? std::chrono::duration<double>(Clock::now() - start).count()
                 : 0.0;
    };
    auto start = Clock::now();
    fuse_frame(volume, identity, frame);
    rec.fuse_seconds = seconds(start);
    start = Clock::now();
    const TriangleMesh mesh = extract_reference_mesh(volume);
    rec.extract_seconds = seconds(start);
    rec.live_vertices = mesh.vertex_count();
    const ObservationFrame scored =
        input.clean ? build_frame(t, input.clean->depth, input.clean->color, src.intrinsics,
                                  cfg.pipeline.filter)
                    : frame;
    if (const auto a = alignment_error(mesh, scored, cfg.pipeline.energy)) {
      rec.alignment_error = a->energy;
      rec.alignment_rms = a->rms;
      rec.correspondences = a->count;
    }
    if (input.ground_truth && !mesh.empty()) {
      const SurfaceError e = surface_error(mesh, *input.ground_truth);
      rec.surface_rms = e.rms;
      rec.surface_max = e.max;
    }
    if (cfg.pipeline.write_meshes) {
      rec.mesh_path = frame_file_name("mesh", t, "ply");
      write_ply(mesh, dir / rec.mesh_path);
    }
    print_record(rec, opt.quiet);
    report.frames.push_back(std::move(rec));
  }
  write_report(report, dir / "report.csv");
  return 0;
}

int cmd_report(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  echo_config(cfg, opt.out_dir);
  const Source src = open_source(cfg, opt.input_dir);
  const fs::path mesh_dir = opt.mesh_dir;
  // Timings and correspondence counts cannot be recomputed from meshes;
  // carry them over from the original report when it exists.
  std::optional<RunReport> original;
  if (fs::exists(mesh_dir / "report.csv")) {
    original = read_report(mesh_dir / "report.csv");
  }
  RunReport report;
  for (int t = 0; t < src.frame_count; ++t) {
    const fs::path mesh_path = mesh_dir / frame_file_name("mesh", t, "ply");
    if (!fs::exists(mesh_path)) {
      continue;
    }
    const SequenceFrame input = src.provider(t);
    const RenderedFrame& scored = input.clean ? *input.clean : input.observed;
    const ObservationFrame frame =
        build_frame(t, scored.depth, scored.color, src.intrinsics, cfg.pipeline.filter);
    const TriangleMesh mesh = read_ply(mesh_path);
    FrameRecord rec;
    if (original) {
      for (const auto& o : original->frames) {
        if (o.frame == t) {
          rec = o;
        }
      }
    }
    rec.frame = t;
    rec.mesh_path = fs::relative(mesh_path, opt.out_dir).string();
    rec.live_vertices = mesh.vertex_count();
    rec.alignment_error.reset();
    rec.alignment_rms.reset();
    rec.surface_rms.reset();
    rec.surface_max.reset();
    if (const auto a = alignment_error(mesh, frame, cfg.pipeline.energy)) {
      rec.alignment_error = a->energy;
      rec.alignment_rms = a->rms;
    }
    if (input.ground_truth && !mesh.empty()) {
      const SurfaceError e = surface_error(mesh, *input.ground_truth);
      rec.surface_rms = e.rms;
      rec.surface_max = e.max;
    }
    print_record(rec, opt.quiet);
    report.frames.push_back(std::move(rec));
  }
  if (report.frames.empty()) {
    throw std::runtime_error("no mesh_%05d.ply files in " + mesh_dir.string());
  }
  write_report(report, fs::path(opt.out_dir) / "report.csv");
  return 0;
}

void add_common(CLI::App* cmd, Options& opt, bool with_input) {
  cmd->add_option("--config", opt.config_path, "Config file of key = value lines")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", opt.assignments, "Override one key: --set key=value (repeatable)");
  cmd->add_option("--seed", opt.seed, "Noise seed (overrides corruption.seed)");
  cmd->add_option("--out-dir", opt.out_dir, "Output directory")->capture_default_str();
  cmd->add_flag("--strict-paper", opt.strict_mode,
                "Disable graph extension, behind-surface exclusion and the free-space cell skip");
  cmd->add_flag("-q,--quiet", opt.quiet, "No per-frame output");
  if (with_input) {
    cmd->add_option("--input-dir", opt.input_dir,
                    "Read depth_%05d.png, color_%05d.png and intrinsics.txt instead of "
                    "synthesizing the scene")
        ->check(CLI::ExistingDirectory);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-rigid RGB-D tracking and TSDF fusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dfusion 1.0");
  bool show_isa = false;
  app.add_flag("--isa", show_isa, "Print the selected SIMD kernel variant to stderr");

  Options opt;
  auto* run = app.add_subcommand("run", "Track and fuse a sequence");
  add_common(run, opt, true);
  run->add_flag("--fail-on-lost", opt.fail_on_lost, "Exit with status 2 when tracking is lost");

  auto* render = app.add_subcommand("render", "Write the synthetic sequence to disk");
  add_common(render, opt, false);

  auto* fuse = app.add_subcommand("fuse", "Fuse a sequence with the identity warp");
  add_common(fuse, opt, true);

  auto* report = app.add_subcommand("report", "Recompute metrics for stored meshes");
  add_common(report, opt, true);
  report->add_option("--mesh-dir", opt.mesh_dir, "Directory with mesh_%05d.ply files")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  if (show_isa) {
    std::fprintf(stderr, "dfusion: kernels %s\n", std::string(simd::isa_name(simd::active_isa())).c_str());
  }
  try {
    if (*run) {
      return cmd_run(opt);
    }
    if (*render) {
      return cmd_render(opt);
    }
    if (*fuse) {
      return cmd_fuse(opt);
    }
    return cmd_report(opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dfusion: error: %s\n", e.what());
    return kExitError;
  }
}
