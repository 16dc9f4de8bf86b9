#pragma once

// Sensor frame preprocessing: depth filtering and the dense vertex/normal
// maps consumed by projective data association.

#include "dfusion/geometry.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace dfusion {

template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {}

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] std::size_t size() const { return pixels_.size(); }
  [[nodiscard]] bool in_bounds(int u, int v) const {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }

  [[nodiscard]] T& at(int u, int v) { return pixels_[index(u, v)]; }
  [[nodiscard]] const T& at(int u, int v) const { return pixels_[index(u, v)]; }

  [[nodiscard]] std::vector<T>& pixels() { return pixels_; }
  [[nodiscard]] const std::vector<T>& pixels() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  [[nodiscard]] std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

/// Depth in meters; kInvalidDepth marks missing measurements.
using DepthMap = Image<double>;
using ColorMap = Image<Rgb>;
using VertexMap = Image<std::optional<Vec3>>;
using NormalMap = Image<std::optional<Vec3>>;

inline constexpr double kInvalidDepth = 0.0;

[[nodiscard]] inline bool is_valid_depth(double d) { return d > 0.0; }

struct FilterParams {
  int radius = 3;
  double spatial_sigma = 2.0;   // pixels
  double range_sigma = 0.01;    // meters
  double depth_max = 10.0;      // meters; farther readings are dropped
  bool enabled = true;
};

struct ObservationFrame {
  int index = 0;
  DepthMap depth;
  ColorMap color;
  VertexMap vertex_map;
  NormalMap normal_map;
  CameraIntrinsics intrinsics;
};

/// Edge-preserving smoothing over valid pixels only. Invalid pixels stay
/// invalid and never contribute. Throws std::invalid_argument for
/// non-positive sigmas or a negative radius.
[[nodiscard]] DepthMap bilateral_filter(const DepthMap& depth, double spatial_sigma,
                                        double range_sigma, int radius);

[[nodiscard]] VertexMap compute_vertex_map(const DepthMap& depth, const CameraIntrinsics& k);

/// Central-difference normals, oriented toward the camera. Absent on the
/// image border and wherever a stencil neighbor is absent.
[[nodiscard]] NormalMap compute_normal_map(const VertexMap& vertices);

/// Throws std::invalid_argument when depth and color sizes differ or do not
/// match the intrinsics.
[[nodiscard]] ObservationFrame build_frame(int index, const DepthMap& raw_depth,
                                           const ColorMap& color, const CameraIntrinsics& k,
                                           const FilterParams& params = {});

}  // namespace dfusion
