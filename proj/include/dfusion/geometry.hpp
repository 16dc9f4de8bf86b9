#pragma once

// Core 3D types shared by every stage: rigid transforms with a twist chart,
// the pinhole camera, and the triangle mesh.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace dfusion {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

[[nodiscard]] Mat3 skew(const Vec3& v);

/// Minimal SE(3) chart: rotational part first, translational part second.
struct Twist {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  [[nodiscard]] static Twist from_vector(const Vec6& v) {
    return {v.head<3>(), v.tail<3>()};
  }
  [[nodiscard]] Vec6 to_vector() const {
    Vec6 v;
    v << rotation, translation;
    return v;
  }
  [[nodiscard]] Twist operator-() const { return {-rotation, -translation}; }
};

/// Rigid motion x -> R x + t with R kept orthonormal.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  [[nodiscard]] static RigidTransform identity() { return {}; }
  [[nodiscard]] static RigidTransform from_translation(const Vec3& t) {
    return {Mat3::Identity(), t};
  }

  [[nodiscard]] const Mat3& rotation() const { return rotation_; }
  [[nodiscard]] const Vec3& translation() const { return translation_; }

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  [[nodiscard]] Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  [[nodiscard]] RigidTransform inverse() const;

  /// (this * other)(x) == this(other(x)). Re-orthonormalizes when drift
  /// exceeds kOrthonormalTolerance.
  [[nodiscard]] RigidTransform operator*(const RigidTransform& other) const;

  /// Largest |(R^T R - I)_ij| plus |det R - 1|.
  [[nodiscard]] double orthonormality_error() const;

  static constexpr double kOrthonormalTolerance = 1e-12;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Closest rotation in Frobenius norm (polar decomposition via SVD).
[[nodiscard]] Mat3 orthonormalize(const Mat3& m);

/// Exponential map: Rodrigues for the rotation, SE(3) left Jacobian for the
/// translation. Angles below kSmallAngle use the series expansion.
[[nodiscard]] RigidTransform se3_exp(const Twist& xi);

inline constexpr double kSmallAngle = 1e-8;

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Pinhole projection; empty when z <= 0 or the rounded pixel falls outside
/// the image.
[[nodiscard]] std::optional<Vec2> project(const Vec3& p, const CameraIntrinsics& k);

/// Nearest integer pixel of `project`, if any.
[[nodiscard]] std::optional<std::array<int, 2>> project_to_pixel(const Vec3& p,
                                                                 const CameraIntrinsics& k);

/// Throws std::invalid_argument for depth <= 0.
[[nodiscard]] Vec3 unproject(const Vec2& pixel, double depth, const CameraIntrinsics& k);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
  std::vector<Rgb> colors;
  std::vector<std::array<std::int32_t, 3>> triangles;

  [[nodiscard]] std::size_t vertex_count() const { return vertices.size(); }
  [[nodiscard]] bool empty() const { return vertices.empty(); }

  /// Throws std::invalid_argument on length mismatch, non-unit normals or
  /// out-of-range indices.
  void validate() const;
};

}  // namespace dfusion
