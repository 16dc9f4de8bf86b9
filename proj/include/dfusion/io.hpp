#pragma once

// File formats: binary PLY meshes, 16-bit millimeter depth and 8-bit RGB
// PNGs, plain-text intrinsics, and the per-frame CSV report.
// All functions throw std::runtime_error on I/O or format failures.

#include "dfusion/frame.hpp"
#include "dfusion/geometry.hpp"
#include "dfusion/pipeline.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace dfusion {

/// Binary little-endian: float x y z nx ny nz, uchar red green blue; faces
/// as a uchar count followed by int indices.
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path);
/// Reads binary little-endian or ASCII PLY with at least x y z.
[[nodiscard]] TriangleMesh read_ply(const std::filesystem::path& path);

/// Depth stored in whole millimeters; 0 is invalid. Depths beyond 65.535 m
/// are written as invalid.
void write_depth_png(const DepthMap& depth, const std::filesystem::path& path);
[[nodiscard]] DepthMap read_depth_png(const std::filesystem::path& path);
void write_color_png(const ColorMap& color, const std::filesystem::path& path);
[[nodiscard]] ColorMap read_color_png(const std::filesystem::path& path);

/// "fx fy cx cy width height" as key/value lines.
void write_intrinsics(const CameraIntrinsics& k, const std::filesystem::path& path);
/// Accepts "key = value", "key: value" or "key value" lines; '#' starts a
/// comment.
[[nodiscard]] CameraIntrinsics read_intrinsics(const std::filesystem::path& path);

/// "<prefix>_%05d.<extension>", e.g. depth_00007.png.
[[nodiscard]] std::string frame_file_name(std::string_view prefix, int t, std::string_view extension);

/// Sequence directories hold depth_%05d.png, color_%05d.png and
/// intrinsics.txt.
void write_sequence_frame(const RenderedFrame& frame, const std::filesystem::path& dir, int t);
[[nodiscard]] RenderedFrame read_sequence_frame(const std::filesystem::path& dir, int t);
/// Number of consecutive depth_%05d.png files starting at frame 0.
[[nodiscard]] int count_sequence_frames(const std::filesystem::path& dir);

inline constexpr const char* kReportHeader =
    "frame,alignment_error,alignment_rms,surface_rms,surface_max,correspondences,"
    "track_seconds,fuse_seconds,extract_seconds";

/// Nine significant digits; empty string for absent values.
[[nodiscard]] std::string format_number(double value);

void write_report(const RunReport& report, const std::filesystem::path& path);
/// Parses the columns written by write_report.
[[nodiscard]] RunReport read_report(const std::filesystem::path& path);

}  // namespace dfusion
