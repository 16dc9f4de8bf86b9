#include "dfusion/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dfusion {
namespace {

// Checkerboard texture in 2 cm cells of the flat parameterization.
Rgb sheet_color(double s, double y) {
  const auto cs = static_cast<long>(std::floor(s / 0.02));
  const auto cy = static_cast<long>(std::floor(y / 0.02));
  return ((cs + cy) & 1) == 0 ? Rgb{200, 64, 48} : Rgb{48, 96, 200};
}

std::uint8_t interpolate_channel(double b0, double b1, double b2, std::uint8_t c0, std::uint8_t c1,
                                 std::uint8_t c2) {
  const double v = b0 * c0 + b1 * c1 + b2 * c2;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

std::string scene_kind_name(SceneKind kind) {
  switch (kind) {
    case SceneKind::bending_sheet:
      return "bending-sheet";
    case SceneKind::rigid_motion:
      return "rigid-motion";
    case SceneKind::static_scene:
      return "static";
  }
  return "unknown";
}

SceneKind parse_scene_kind(const std::string& name) {
  if (name == "bending-sheet") {
    return SceneKind::bending_sheet;
  }
  if (name == "rigid-motion") {
    return SceneKind::rigid_motion;
  }
  if (name == "static") {
    return SceneKind::static_scene;
  }
  throw std::invalid_argument("unknown scene kind: " + name);
}

void SceneSpec::validate() const {
  if (frame_count < 1) {
    throw std::invalid_argument("scene: frame count must be at least 1");
  }
  if (!(width > 0.0) || !(height > 0.0)) {
    throw std::invalid_argument("scene: sheet dimensions must be positive");
  }
  if (segments_x < 1 || segments_y < 1) {
    throw std::invalid_argument("scene: tessellation counts must be at least 1");
  }
  if (curvature_start < 0.0 || curvature_end < 0.0 || rigid_curvature < 0.0) {
    throw std::invalid_argument("scene: curvature must be non-negative");
  }
  rigid_relief.validate();
  if (backdrop_distance < 0.0 || (backdrop_distance > 0.0 && !(backdrop_half_extent > 0.0))) {
    throw std::invalid_argument("scene: invalid backdrop");
  }
  if (!(frame_rate > 0.0)) {
    throw std::invalid_argument("scene: frame rate must be positive");
  }
  intrinsics.validate();
}

double SceneSpec::curvature(int t) const {
  switch (kind) {
    case SceneKind::bending_sheet: {
      if (frame_count == 1) {
        return curvature_start;
      }
      const double a = static_cast<double>(t) / (frame_count - 1);
      return curvature_start + a * (curvature_end - curvature_start);
    }
    case SceneKind::rigid_motion:
      return rigid_curvature;
    case SceneKind::static_scene:
      return 0.0;
  }
  return 0.0;
}

Vec3 SceneSpec::translation(int t) const {
  return kind == SceneKind::rigid_motion ? Vec3(static_cast<double>(t) * translation_step)
                                         : Vec3::Zero();
}

double SheetRelief::at(double s, double y) const {
  if (!enabled()) {
    return 0.0;
  }
  const double k = 2.0 * std::numbers::pi / wavelength;
  return amplitude * std::sin(k * s) * std::sin(k * y);
}

std::pair<double, double> SheetRelief::gradient(double s, double y) const {
  if (!enabled()) {
    return {0.0, 0.0};
  }
  const double k = 2.0 * std::numbers::pi / wavelength;
  return {amplitude * k * std::cos(k * s) * std::sin(k * y),
          amplitude * k * std::sin(k * s) * std::cos(k * y)};
}

void SheetRelief::validate() const {
  if (enabled() && !(wavelength > 0.0)) {
    throw std::invalid_argument("relief: wavelength must be positive");
  }
}

TriangleMesh make_sheet(double width, double height, int segments_x, int segments_y, double kappa,
                        const SheetRelief& relief) {
  if (!(width > 0.0) || !(height > 0.0) || segments_x < 1 || segments_y < 1) {
    throw std::invalid_argument("make_sheet: invalid dimensions");
  }
  relief.validate();
  TriangleMesh mesh;
  const int nx = segments_x + 1;
  const int ny = segments_y + 1;
  mesh.vertices.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    const double y = -0.5 * height + height * j / segments_y;
    for (int i = 0; i < nx; ++i) {
      const double s = width * i / segments_x;
      // Base point c, unit tangent along s, and camera-side normal n.
      Vec3 c;
      Vec3 tangent;
      Vec3 n;
      if (kappa > 0.0) {
        const double a = kappa * s;
        c = Vec3(std::sin(a) / kappa, y, (1.0 - std::cos(a)) / kappa);
        tangent = Vec3(std::cos(a), 0.0, std::sin(a));
        n = Vec3(std::sin(a), 0.0, -std::cos(a));
      } else {
        c = Vec3(s, y, 0.0);
        tangent = Vec3::UnitX();
        n = Vec3(0.0, 0.0, -1.0);
      }
      const double h = relief.at(s, y);
      if (relief.enabled()) {
        // p = c + h n, with dn/ds = kappa tangent.
        const auto [hs, hy] = relief.gradient(s, y);
        const Vec3 dps = (1.0 + kappa * h) * tangent + hs * n;
        const Vec3 dpy = Vec3::UnitY() + hy * n;
        c += h * n;
        n = dpy.cross(dps).normalized();
      }
      mesh.vertices.push_back(c);
      mesh.normals.push_back(n);
      mesh.colors.push_back(sheet_color(s, y));
    }
  }
  for (int j = 0; j < segments_y; ++j) {
    for (int i = 0; i < segments_x; ++i) {
      const std::int32_t a = j * nx + i;
      const std::int32_t b = a + 1;
      const std::int32_t c = a + nx;
      const std::int32_t d = c + 1;
      // Faces point along -z on the flat sheet, the same side as the normals.
      mesh.triangles.push_back({a, c, b});
      mesh.triangles.push_back({b, c, d});
    }
  }
  return mesh;
}

TriangleMesh generate_ground_truth(const SceneSpec& spec, int t) {
  if (t < 0 || t >= spec.frame_count) {
    throw std::out_of_range("generate_ground_truth: frame index out of range");
  }
  const SheetRelief relief = spec.kind == SceneKind::rigid_motion ? spec.rigid_relief : SheetRelief{};
  TriangleMesh mesh = make_sheet(spec.width, spec.height, spec.segments_x, spec.segments_y,
                                 spec.curvature(t), relief);
  const Vec3 offset = spec.translation(t);
  for (auto& v : mesh.vertices) {
    v += offset;
  }
  return mesh;
}

TriangleMesh generate_scene_mesh(const SceneSpec& spec, int t) {
  TriangleMesh mesh = generate_ground_truth(spec, t);
  if (spec.backdrop_distance > 0.0) {
    const double e = spec.backdrop_half_extent;
    const auto base = static_cast<std::int32_t>(mesh.vertices.size());
    const Vec3 center = spec.camera_pose.inverse().apply(Vec3::Zero());
    for (const auto& [dx, dy] : {std::pair{-e, -e}, {e, -e}, {-e, e}, {e, e}}) {
      mesh.vertices.emplace_back(center.x() + dx, center.y() + dy, spec.backdrop_distance);
      mesh.normals.emplace_back(0.0, 0.0, -1.0);
      mesh.colors.push_back(Rgb{90, 90, 90});
    }
    mesh.triangles.push_back({base, base + 2, base + 1});
    mesh.triangles.push_back({base + 1, base + 2, base + 3});
  }
  return mesh;
}

TriangleMesh make_sphere(const Vec3& center, double radius, int slices, int stacks) {
  if (!(radius > 0.0) || slices < 3 || stacks < 2) {
    throw std::invalid_argument("make_sphere: invalid parameters");
  }
  TriangleMesh mesh;
  auto add = [&](const Vec3& n) {
    mesh.vertices.push_back(center + radius * n);
    mesh.normals.push_back(n);
    mesh.colors.push_back(Rgb{180, 180, 180});
    return static_cast<std::int32_t>(mesh.vertices.size() - 1);
  };
  const std::int32_t north = add(Vec3(0.0, 0.0, 1.0));
  for (int st = 1; st < stacks; ++st) {
    const double theta = std::numbers::pi * st / stacks;
    for (int sl = 0; sl < slices; ++sl) {
      const double phi = 2.0 * std::numbers::pi * sl / slices;
      add(Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)));
    }
  }
  const std::int32_t south = add(Vec3(0.0, 0.0, -1.0));
  auto ring = [&](int st, int sl) { return 1 + (st - 1) * slices + (sl % slices); };
  for (int sl = 0; sl < slices; ++sl) {
    mesh.triangles.push_back({north, ring(1, sl), ring(1, sl + 1)});
    mesh.triangles.push_back({south, ring(stacks - 1, sl + 1), ring(stacks - 1, sl)});
  }
  for (int st = 1; st + 1 < stacks; ++st) {
    for (int sl = 0; sl < slices; ++sl) {
      const std::int32_t a = ring(st, sl);
      const std::int32_t b = ring(st, sl + 1);
      const std::int32_t c = ring(st + 1, sl);
      const std::int32_t d = ring(st + 1, sl + 1);
      mesh.triangles.push_back({a, c, b});
      mesh.triangles.push_back({b, c, d});
    }
  }
  return mesh;
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const RigidTransform& pose) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) {
    v = pose.apply(v);
  }
  for (auto& n : out.normals) {
    n = pose.rotate(n);
  }
  return out;
}

RenderedFrame render_frame(const TriangleMesh& world_mesh, const CameraIntrinsics& k,
                           const RigidTransform& camera_pose) {
  k.validate();
  RenderedFrame out{DepthMap(k.width, k.height, kInvalidDepth), ColorMap(k.width, k.height)};
  if (world_mesh.empty()) {
    return out;
  }
  std::vector<Vec3> cam;
  cam.reserve(world_mesh.vertices.size());
  for (const auto& v : world_mesh.vertices) {
    cam.push_back(camera_pose.apply(v));
  }
  const bool has_color = world_mesh.colors.size() == world_mesh.vertices.size();
  constexpr double kNear = 1e-6;
  // Barycentric slack so a pixel center on a shared edge is claimed by both
  // triangles; without it roundoff can reject it from both and leave a crack.
  constexpr double kEdgeSlack = 1e-9;

  for (const auto& tri : world_mesh.triangles) {
    const Vec3& p0 = cam[tri[0]];
    const Vec3& p1 = cam[tri[1]];
    const Vec3& p2 = cam[tri[2]];
    if (p0.z() <= kNear || p1.z() <= kNear || p2.z() <= kNear) {
      continue;
    }
    double umin = std::numeric_limits<double>::max();
    double umax = std::numeric_limits<double>::lowest();
    double vmin = umin;
    double vmax = umax;
    for (const Vec3* p : {&p0, &p1, &p2}) {
      const double u = k.fx * p->x() / p->z() + k.cx;
      const double v = k.fy * p->y() / p->z() + k.cy;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    // One pixel of slack so rounding never drops a covered pixel center.
    const int u_lo = std::max(0, static_cast<int>(std::floor(umin)) - 1);
    const int u_hi = std::min(k.width - 1, static_cast<int>(std::ceil(umax)) + 1);
    const int v_lo = std::max(0, static_cast<int>(std::floor(vmin)) - 1);
    const int v_hi = std::min(k.height - 1, static_cast<int>(std::ceil(vmax)) + 1);
    if (u_lo > u_hi || v_lo > v_hi) {
      continue;
    }
    const Vec3 e1 = p1 - p0;
    const Vec3 e2 = p2 - p0;
    for (int v = v_lo; v <= v_hi; ++v) {
      for (int u = u_lo; u <= u_hi; ++u) {
        const Vec3 dir((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const Vec3 pvec = dir.cross(e2);
        const double det = e1.dot(pvec);
        if (std::abs(det) < 1e-15) {
          continue;
        }
        const double inv_det = 1.0 / det;
        const Vec3 tvec = -p0;
        const double b1 = tvec.dot(pvec) * inv_det;
        if (b1 < -kEdgeSlack || b1 > 1.0 + kEdgeSlack) {
          continue;
        }
        const Vec3 qvec = tvec.cross(e1);
        const double b2 = dir.dot(qvec) * inv_det;
        if (b2 < -kEdgeSlack || b1 + b2 > 1.0 + kEdgeSlack) {
          continue;
        }
        const double t = e2.dot(qvec) * inv_det;
        if (!(t > 0.0)) {
          continue;
        }
        double& depth = out.depth.at(u, v);
        // The ray has unit z, so the ray parameter is the camera-frame depth.
        if (is_valid_depth(depth) && !(t < depth)) {
          continue;
        }
        depth = t;
        if (has_color) {
          const double b0 = 1.0 - b1 - b2;
          const Rgb& c0 = world_mesh.colors[tri[0]];
          const Rgb& c1 = world_mesh.colors[tri[1]];
          const Rgb& c2 = world_mesh.colors[tri[2]];
          out.color.at(u, v) = Rgb{interpolate_channel(b0, b1, b2, c0.r, c1.r, c2.r),
                                   interpolate_channel(b0, b1, b2, c0.g, c1.g, c2.g),
                                   interpolate_channel(b0, b1, b2, c0.b, c1.b, c2.b)};
        } else {
          out.color.at(u, v) = Rgb{128, 128, 128};
        }
      }
    }
  }
  return out;
}

OcclusionRect occlusion_strip(const SceneSpec& spec, double fraction, int first_frame,
                              int last_frame) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("occlusion_strip: fraction must be in (0, 1]");
  }
  const auto& k = spec.intrinsics;
  const auto render = render_frame(generate_ground_truth(spec, first_frame), k, spec.camera_pose);
  std::vector<long> columns(static_cast<std::size_t>(k.width), 0);
  int v_min = k.height;
  int v_max = -1;
  long total = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      if (is_valid_depth(render.depth.at(u, v))) {
        ++columns[u];
        ++total;
        v_min = std::min(v_min, v);
        v_max = std::max(v_max, v);
      }
    }
  }
  if (total == 0) {
    throw std::invalid_argument("occlusion_strip: object not visible");
  }
  // Median column, then widen.
  int center = 0;
  for (long seen = 0; center < k.width; ++center) {
    seen += columns[center];
    if (2 * seen >= total) {
      break;
    }
  }
  const auto needed = static_cast<long>(std::ceil(fraction * static_cast<double>(total)));
  int u0 = center;
  int u1 = center + 1;
  long covered = columns[center];
  while (covered < needed) {
    const bool grow_left = u0 > 0 && (u1 >= k.width || (u1 - center) > (center - u0));
    if (grow_left) {
      covered += columns[--u0];
    } else {
      covered += columns[u1++];
    }
  }
  return {u0, v_min, u1, v_max + 1, first_frame, last_frame};
}

void CorruptionSpec::validate(int width, int height) const {
  if (depth_noise_sigma < 0.0) {
    throw std::invalid_argument("corruption: noise sigma must be non-negative");
  }
  for (const auto& r : occlusions) {
    if (r.u0 < 0 || r.v0 < 0 || r.u1 > width || r.v1 > height || r.u0 >= r.u1 || r.v0 >= r.v1) {
      throw std::invalid_argument("corruption: occlusion rectangle outside the image");
    }
    if (r.first_frame > r.last_frame) {
      throw std::invalid_argument("corruption: occlusion frame range is empty");
    }
  }
}

RenderedFrame corrupt_frame(const RenderedFrame& frame, const CorruptionSpec& spec, int t) {
  spec.validate(frame.depth.width(), frame.depth.height());
  RenderedFrame out = frame;
  for (const auto& r : spec.occlusions) {
    if (!r.active(t)) {
      continue;
    }
    for (int v = r.v0; v < r.v1; ++v) {
      for (int u = r.u0; u < r.u1; ++u) {
        out.depth.at(u, v) = kInvalidDepth;
        out.color.at(u, v) = Rgb{0, 0, 0};
      }
    }
  }
  if (spec.depth_noise_sigma > 0.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                      static_cast<std::uint32_t>(spec.seed >> 32), static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, spec.depth_noise_sigma);
    for (auto& d : out.depth.pixels()) {
      if (!is_valid_depth(d)) {
        continue;
      }
      d += noise(rng);
      if (!is_valid_depth(d)) {
        d = kInvalidDepth;
      }
    }
  }
  return out;
}

}  // namespace dfusion
