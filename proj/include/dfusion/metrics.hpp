#pragma once

// Evaluation metrics: point-to-plane alignment against a frame and exact
// point-to-surface distance against a ground-truth mesh.

#include "dfusion/frame.hpp"
#include "dfusion/geometry.hpp"
#include "dfusion/tracker.hpp"

#include <optional>

namespace dfusion {

struct AlignmentError {
  double energy = 0.0;  // sum of squared point-to-plane residuals, m^2
  double rms = 0.0;     // sqrt(energy / count), m
  int count = 0;
};

/// Associates the live mesh against the frame with the tracker's rules.
/// Empty when nothing associates.
[[nodiscard]] std::optional<AlignmentError> alignment_error(const TriangleMesh& live_mesh,
                                                            const ObservationFrame& frame,
                                                            const EnergyParams& params);

/// Closest point to p on triangle (a, b, c), degenerate triangles included.
[[nodiscard]] Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                             const Vec3& c);

struct SurfaceError {
  double rms = 0.0;
  double max = 0.0;
};

/// Distance from every live vertex to the nearest ground-truth triangle.
/// Throws std::invalid_argument when either mesh has no vertices or the
/// ground truth has no triangles.
[[nodiscard]] SurfaceError surface_error(const TriangleMesh& live_mesh, const TriangleMesh& gt_mesh);

}  // namespace dfusion
