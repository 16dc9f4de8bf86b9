#pragma once

// Synthetic ground truth: analytic sheet scenes, an exact ray-cast renderer
// standing in for the depth camera, and seeded corruption (occlusion boxes
// and depth noise).

#include "dfusion/frame.hpp"
#include "dfusion/geometry.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dfusion {

enum class SceneKind { bending_sheet, rigid_motion, static_scene };

[[nodiscard]] std::string scene_kind_name(SceneKind kind);
/// Accepts "bending-sheet", "rigid-motion", "static".
[[nodiscard]] SceneKind parse_scene_kind(const std::string& name);

/// Height field A sin(2 pi s / L) sin(2 pi y / L) over sheet coordinates,
/// displacing the sheet toward the camera.
struct SheetRelief {
  double amplitude = 0.0;  // meters; 0 disables
  double wavelength = 0.08;  // meters

  [[nodiscard]] bool enabled() const { return amplitude != 0.0; }
  [[nodiscard]] double at(double s, double y) const;
  /// (dh/ds, dh/dy)
  [[nodiscard]] std::pair<double, double> gradient(double s, double y) const;
  void validate() const;
};

struct SceneSpec {
  SceneKind kind = SceneKind::bending_sheet;
  double width = 0.30;   // bend direction, meters
  double height = 0.20;  // meters
  int segments_x = 90;
  int segments_y = 60;
  // Bending sheet: curvature ramps linearly from start to end over the sequence.
  double curvature_start = 0.0;  // 1/m
  double curvature_end = 4.0;    // 1/m
  // Rigid motion: fixed curvature plus relief, world translation of t * step
  // at frame t. A plain flat or cylindrical sheet slides along itself
  // without changing its depth image; the relief gives the motion something
  // to register against.
  double rigid_curvature = 0.0;
  SheetRelief rigid_relief{0.01, 0.08};
  Vec3 translation_step = Vec3(0.001, 0.0, 0.0);
  // World to camera. The default puts the flat sheet centered 0.6 m in front
  // of the camera, bending away from it.
  RigidTransform camera_pose{Mat3::Identity(), Vec3(-0.15, 0.0, 0.6)};
  CameraIntrinsics intrinsics{400.0, 400.0, 160.0, 120.0, 320, 240};
  int frame_count = 60;
  double frame_rate = 30.0;
  // Static wall at world z = backdrop_distance, seen wherever the sheet is
  // not; 0 leaves the background empty (invalid depth). The default sits
  // outside the default volume.
  double backdrop_distance = 0.5;
  double backdrop_half_extent = 1.0;  // meters

  /// Throws std::invalid_argument when an invariant fails.
  void validate() const;

  /// Bend curvature at frame t.
  [[nodiscard]] double curvature(int t) const;
  /// World translation applied at frame t.
  [[nodiscard]] Vec3 translation(int t) const;
};

/// Flat sheet in the z = 0 plane with arc coordinate s in [0, width] along x
/// and y in [-height/2, height/2], wrapped onto a cylinder of curvature
/// kappa: (sin(kappa s)/kappa, y, (1 - cos(kappa s))/kappa). A relief
/// displaces each point by its height along the camera-side normal.
[[nodiscard]] TriangleMesh make_sheet(double width, double height, int segments_x, int segments_y,
                                      double kappa, const SheetRelief& relief = {});

/// Ground-truth mesh in world coordinates. Throws std::out_of_range when t
/// is outside [0, frame_count).
[[nodiscard]] TriangleMesh generate_ground_truth(const SceneSpec& spec, int t);

/// Everything the camera sees at frame t: the ground truth plus the
/// backdrop when enabled. World coordinates.
[[nodiscard]] TriangleMesh generate_scene_mesh(const SceneSpec& spec, int t);

/// UV sphere with outward normals.
[[nodiscard]] TriangleMesh make_sphere(const Vec3& center, double radius, int slices, int stacks);

[[nodiscard]] TriangleMesh transform_mesh(const TriangleMesh& mesh, const RigidTransform& pose);

struct RenderedFrame {
  DepthMap depth;
  ColorMap color;
};

/// Casts one ray per pixel center; the nearest hit wins. Depth is the
/// camera-frame z of the hit, color is interpolated from vertex colors.
/// Triangles with a vertex at or behind the camera plane are skipped.
[[nodiscard]] RenderedFrame render_frame(const TriangleMesh& world_mesh, const CameraIntrinsics& k,
                                         const RigidTransform& camera_pose);

struct OcclusionRect {
  int u0 = 0;  // half-open pixel box [u0, u1) x [v0, v1)
  int v0 = 0;
  int u1 = 0;
  int v1 = 0;
  int first_frame = 0;  // inclusive
  int last_frame = 0;   // inclusive

  [[nodiscard]] bool active(int t) const { return t >= first_frame && t <= last_frame; }
};

struct CorruptionSpec {
  std::vector<OcclusionRect> occlusions;
  double depth_noise_sigma = 0.0;  // meters
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when a rectangle leaves the image or the
  /// sigma is negative.
  void validate(int width, int height) const;
};

/// Vertical box over the middle of the object, as narrow as possible while
/// still covering at least `fraction` of the object's pixels in the
/// ground-truth render of frame `first_frame`. Active over
/// [first_frame, last_frame].
[[nodiscard]] OcclusionRect occlusion_strip(const SceneSpec& spec, double fraction, int first_frame,
                                            int last_frame);

/// Blanks active occlusion boxes (invalid depth, black color), then adds
/// seeded Gaussian noise to the remaining valid depths. Noise that pushes a
/// depth to zero or below marks the pixel invalid.
[[nodiscard]] RenderedFrame corrupt_frame(const RenderedFrame& frame, const CorruptionSpec& spec,
                                          int t);

}  // namespace dfusion
