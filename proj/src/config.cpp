#include "dfusion/config.hpp"

#include <Eigen/Geometry>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace dfusion {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string to_text(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  const std::string t = trim(s);
  Int v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw std::invalid_argument("not an integer: '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "on" || t == "yes") {
    return true;
  }
  if (t == "false" || t == "0" || t == "off" || t == "no") {
    return false;
  }
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

// Whitespace- or comma-separated items.
std::vector<std::string> tokens(const std::string& s) {
  std::string t = s;
  for (char& ch : t) {
    if (ch == ',') {
      ch = ' ';
    }
  }
  std::istringstream in(t);
  std::vector<std::string> out;
  std::string item;
  while (in >> item) {
    out.push_back(item);
  }
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : tokens(s)) {
    out.push_back(parse_double(item));
  }
  return out;
}

Vec3 parse_vec3(const std::string& s) {
  const auto v = parse_list(s);
  if (v.size() != 3) {
    throw std::invalid_argument("expected three numbers: '" + s + "'");
  }
  return {v[0], v[1], v[2]};
}

std::string to_text(const Vec3& v) {
  return to_text(v.x()) + ", " + to_text(v.y()) + ", " + to_text(v.z());
}

std::string to_text(bool b) { return b ? "true" : "false"; }

// "u0 v0 u1 v1 first last" boxes separated by ';'.
std::vector<OcclusionRect> parse_occlusions(const std::string& s) {
  std::vector<OcclusionRect> out;
  std::istringstream in(s);
  std::string box;
  while (std::getline(in, box, ';')) {
    if (trim(box).empty()) {
      continue;
    }
    const auto v = tokens(box);
    if (v.size() != 6) {
      throw std::invalid_argument("occlusion box needs u0 v0 u1 v1 first last: '" + box + "'");
    }
    auto i = [&](std::size_t k) { return parse_int<int>(v[k]); };
    out.push_back({i(0), i(1), i(2), i(3), i(4), i(5)});
  }
  return out;
}

std::string occlusions_text(const std::vector<OcclusionRect>& rects) {
  std::string out;
  for (const auto& r : rects) {
    if (!out.empty()) {
      out += "; ";
    }
    out += std::to_string(r.u0) + " " + std::to_string(r.v0) + " " + std::to_string(r.u1) + " " +
           std::to_string(r.v1) + " " + std::to_string(r.first_frame) + " " +
           std::to_string(r.last_frame);
  }
  return out;
}

Vec3 volume_center(const VolumeConfig& v) {
  return v.origin + Vec3::Constant(0.5 * v.side_length - 0.5 * v.voxel_size());
}

void set_volume_extent(VolumeConfig& v, double side_length, int resolution) {
  const Vec3 center = volume_center(v);
  const double tau = v.tau;
  const VolumeConfig shaped = VolumeConfig::centered(center, side_length, resolution, tau);
  v.side_length = shaped.side_length;
  v.resolution = shaped.resolution;
  v.origin = shaped.origin;
}

Vec3 rotation_vector(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Field number(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_double(v); },
          [access](const RunConfig& c) { return to_text(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field integer(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_int<int>(v); },
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field flag(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_bool(v); },
          [access](const RunConfig& c) { return to_text(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field vector3(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, const std::string& v) { access(c) = parse_vec3(v); },
          [access](const RunConfig& c) { return to_text(access(const_cast<RunConfig&>(c))); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"scene.kind",
                 [](RunConfig& c, const std::string& v) { c.scene.kind = parse_scene_kind(trim(v)); },
                 [](const RunConfig& c) { return scene_kind_name(c.scene.kind); }});
    f.push_back(number("scene.width", [](RunConfig& c) -> double& { return c.scene.width; }));
    f.push_back(number("scene.height", [](RunConfig& c) -> double& { return c.scene.height; }));
    f.push_back(integer("scene.segments_x", [](RunConfig& c) -> int& { return c.scene.segments_x; }));
    f.push_back(integer("scene.segments_y", [](RunConfig& c) -> int& { return c.scene.segments_y; }));
    f.push_back(number("scene.curvature_start",
                       [](RunConfig& c) -> double& { return c.scene.curvature_start; }));
    f.push_back(number("scene.curvature_end",
                       [](RunConfig& c) -> double& { return c.scene.curvature_end; }));
    f.push_back(number("scene.rigid_curvature",
                       [](RunConfig& c) -> double& { return c.scene.rigid_curvature; }));
    f.push_back(number("scene.relief_amplitude",
                       [](RunConfig& c) -> double& { return c.scene.rigid_relief.amplitude; }));
    f.push_back(number("scene.relief_wavelength",
                       [](RunConfig& c) -> double& { return c.scene.rigid_relief.wavelength; }));
    f.push_back(vector3("scene.translation_step",
                        [](RunConfig& c) -> Vec3& { return c.scene.translation_step; }));
    f.push_back(integer("scene.frame_count", [](RunConfig& c) -> int& { return c.scene.frame_count; }));
    f.push_back(number("scene.frame_rate", [](RunConfig& c) -> double& { return c.scene.frame_rate; }));
    f.push_back(number("scene.backdrop_distance",
                       [](RunConfig& c) -> double& { return c.scene.backdrop_distance; }));
    f.push_back(number("scene.backdrop_half_extent",
                       [](RunConfig& c) -> double& { return c.scene.backdrop_half_extent; }));

    f.push_back({"camera.rotation",
                 [](RunConfig& c, const std::string& v) {
                   const Vec3 w = parse_vec3(v);
                   c.scene.camera_pose = RigidTransform(se3_exp({w, Vec3::Zero()}).rotation(),
                                                        c.scene.camera_pose.translation());
                 },
                 [](const RunConfig& c) { return to_text(rotation_vector(c.scene.camera_pose.rotation())); }});
    f.push_back({"camera.translation",
                 [](RunConfig& c, const std::string& v) {
                   c.scene.camera_pose = RigidTransform(c.scene.camera_pose.rotation(), parse_vec3(v));
                 },
                 [](const RunConfig& c) { return to_text(c.scene.camera_pose.translation()); }});
    f.push_back(number("camera.fx", [](RunConfig& c) -> double& { return c.scene.intrinsics.fx; }));
    f.push_back(number("camera.fy", [](RunConfig& c) -> double& { return c.scene.intrinsics.fy; }));
    f.push_back(number("camera.cx", [](RunConfig& c) -> double& { return c.scene.intrinsics.cx; }));
    f.push_back(number("camera.cy", [](RunConfig& c) -> double& { return c.scene.intrinsics.cy; }));
    f.push_back(integer("camera.width", [](RunConfig& c) -> int& { return c.scene.intrinsics.width; }));
    f.push_back(integer("camera.height", [](RunConfig& c) -> int& { return c.scene.intrinsics.height; }));

    f.push_back(number("corruption.depth_noise_sigma",
                       [](RunConfig& c) -> double& { return c.corruption.depth_noise_sigma; }));
    f.push_back({"corruption.seed",
                 [](RunConfig& c, const std::string& v) { c.corruption.seed = parse_int<std::uint64_t>(v); },
                 [](const RunConfig& c) { return std::to_string(c.corruption.seed); }});
    f.push_back({"corruption.occlusions",
                 [](RunConfig& c, const std::string& v) { c.corruption.occlusions = parse_occlusions(v); },
                 [](const RunConfig& c) { return occlusions_text(c.corruption.occlusions); }});
    f.push_back(number("corruption.occlusion_strip_fraction",
                       [](RunConfig& c) -> double& { return c.occlusion_strip_fraction; }));
    f.push_back(integer("corruption.occlusion_strip_first",
                        [](RunConfig& c) -> int& { return c.occlusion_strip_first; }));
    f.push_back(integer("corruption.occlusion_strip_last",
                        [](RunConfig& c) -> int& { return c.occlusion_strip_last; }));

    f.push_back({"volume.side_length",
                 [](RunConfig& c, const std::string& v) {
                   auto& vol = c.pipeline.volume;
                   set_volume_extent(vol, parse_double(v), vol.resolution);
                 },
                 [](const RunConfig& c) { return to_text(c.pipeline.volume.side_length); }});
    f.push_back({"volume.resolution",
                 [](RunConfig& c, const std::string& v) {
                   auto& vol = c.pipeline.volume;
                   set_volume_extent(vol, vol.side_length, parse_int<int>(v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.pipeline.volume.resolution); }});
    f.push_back({"volume.center",
                 [](RunConfig& c, const std::string& v) {
                   auto& vol = c.pipeline.volume;
                   vol.origin = VolumeConfig::centered(parse_vec3(v), vol.side_length, vol.resolution).origin;
                 },
                 [](const RunConfig& c) { return to_text(volume_center(c.pipeline.volume)); }});
    f.push_back(number("volume.tau", [](RunConfig& c) -> double& { return c.pipeline.volume.tau; }));
    f.push_back(number("volume.omega_max",
                       [](RunConfig& c) -> double& { return c.pipeline.volume.omega_max; }));
    f.push_back(number("volume.default_new_weight",
                       [](RunConfig& c) -> double& { return c.pipeline.volume.default_new_weight; }));
    f.push_back(flag("volume.behind_surface_exclusion",
                     [](RunConfig& c) -> bool& { return c.pipeline.volume.behind_surface_exclusion; }));
    f.push_back(flag("volume.skip_free_space_cells",
                     [](RunConfig& c) -> bool& { return c.pipeline.volume.skip_free_space_cells; }));
    f.push_back({"volume.memory_budget_mb",
                 [](RunConfig& c, const std::string& v) {
                   c.pipeline.volume.memory_budget_bytes = parse_int<std::size_t>(v) << 20;
                 },
                 [](const RunConfig& c) { return std::to_string(c.pipeline.volume.memory_budget_bytes >> 20); }});

    f.push_back(number("graph.sampling_radius",
                       [](RunConfig& c) -> double& { return c.pipeline.graph.sampling_radius; }));
    f.push_back(integer("graph.n_neighbors", [](RunConfig& c) -> int& { return c.pipeline.graph.n_neighbors; }));
    f.push_back(number("graph.sigma", [](RunConfig& c) -> double& { return c.pipeline.graph.sigma; }));
    f.push_back(integer("graph.influences", [](RunConfig& c) -> int& { return c.pipeline.graph.influences; }));
    f.push_back(flag("graph.extend", [](RunConfig& c) -> bool& { return c.pipeline.graph.extend; }));

    f.push_back(number("energy.lambda_data",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.lambda_data; }));
    f.push_back(number("energy.lambda_reg",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.lambda_reg; }));
    f.push_back(number("energy.max_corr_distance",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.max_corr_distance; }));
    f.push_back(number("energy.max_normal_angle",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.max_normal_angle; }));
    f.push_back(integer("energy.gn_iterations",
                        [](RunConfig& c) -> int& { return c.pipeline.energy.gn_iterations; }));
    f.push_back(integer("energy.pcg_max_iterations",
                        [](RunConfig& c) -> int& { return c.pipeline.energy.pcg_max_iterations; }));
    f.push_back(number("energy.pcg_tolerance",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.pcg_tolerance; }));
    f.push_back(number("energy.lm_damping_init",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.lm_damping_init; }));
    f.push_back(number("energy.min_relative_decrease",
                       [](RunConfig& c) -> double& { return c.pipeline.energy.min_relative_decrease; }));

    f.push_back(flag("filter.enabled", [](RunConfig& c) -> bool& { return c.pipeline.filter.enabled; }));
    f.push_back(integer("filter.radius", [](RunConfig& c) -> int& { return c.pipeline.filter.radius; }));
    f.push_back(number("filter.spatial_sigma",
                       [](RunConfig& c) -> double& { return c.pipeline.filter.spatial_sigma; }));
    f.push_back(number("filter.range_sigma",
                       [](RunConfig& c) -> double& { return c.pipeline.filter.range_sigma; }));
    f.push_back(number("filter.depth_max", [](RunConfig& c) -> double& { return c.pipeline.filter.depth_max; }));

    f.push_back(flag("pipeline.single_frame_baseline",
                     [](RunConfig& c) -> bool& { return c.pipeline.single_frame_baseline; }));
    f.push_back(flag("pipeline.record_timings",
                     [](RunConfig& c) -> bool& { return c.pipeline.record_timings; }));
    f.push_back(flag("pipeline.write_meshes", [](RunConfig& c) -> bool& { return c.pipeline.write_meshes; }));
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  for (const auto& f : fields()) {
    if (f.key == k) {
      try {
        f.set(*this, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(k + ": " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key: " + k);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("expected key=value: " + assignment);
  }
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

CorruptionSpec RunConfig::resolved_corruption() const {
  CorruptionSpec out = corruption;
  if (occlusion_strip_fraction > 0.0) {
    out.occlusions.push_back(occlusion_strip(scene, occlusion_strip_fraction, occlusion_strip_first,
                                             occlusion_strip_last));
  }
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) {
    out.push_back(f.key);
  }
  return out;
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (trim(line).empty()) {
      continue;
    }
    try {
      config.set_assignment(line);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config: " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str());
}

}  // namespace dfusion
