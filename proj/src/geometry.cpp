#include "dfusion/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <string>

namespace dfusion {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  if (out.orthonormality_error() > kOrthonormalTolerance) {
    out.rotation_ = orthonormalize(out.rotation_);
  }
  return out;
}

double RigidTransform::orthonormality_error() const {
  const Mat3 gram = rotation_.transpose() * rotation_ - Mat3::Identity();
  return gram.cwiseAbs().maxCoeff() + std::abs(rotation_.determinant() - 1.0);
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) = -u.col(2);
  }
  return u * v.transpose();
}

RigidTransform se3_exp(const Twist& xi) {
  const Vec3& w = xi.rotation;
  const double theta_sq = w.squaredNorm();
  const double theta = std::sqrt(theta_sq);

  // R = I + a W + b W^2, V = I + b W + c W^2
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  if (theta < kSmallAngle) {
    a = 1.0 - theta_sq / 6.0;
    b = 0.5 - theta_sq / 24.0;
    c = 1.0 / 6.0 - theta_sq / 120.0;
  } else {
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    a = s / theta;
    b = (1.0 - co) / theta_sq;
    c = (theta - s) / (theta_sq * theta);
  }
  const Mat3 wx = skew(w);
  const Mat3 wx2 = wx * wx;
  const Mat3 r = Mat3::Identity() + a * wx + b * wx2;
  const Mat3 v = Mat3::Identity() + b * wx + c * wx2;
  return {r, v * xi.translation};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw std::invalid_argument("camera intrinsics: principal point outside the image");
  }
}

std::optional<Vec2> project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) {
    return std::nullopt;
  }
  const Vec2 uv(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  const double u = std::round(uv.x());
  const double v = std::round(uv.y());
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) {
    return std::nullopt;
  }
  return uv;
}

std::optional<std::array<int, 2>> project_to_pixel(const Vec3& p, const CameraIntrinsics& k) {
  const auto uv = project(p, k);
  if (!uv) {
    return std::nullopt;
  }
  return std::array<int, 2>{static_cast<int>(std::round(uv->x())),
                            static_cast<int>(std::round(uv->y()))};
}

Vec3 unproject(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) {
    throw std::invalid_argument("unproject: depth must be positive, got " + std::to_string(depth));
  }
  return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

void TriangleMesh::validate() const {
  if (normals.size() != vertices.size() || colors.size() != vertices.size()) {
    throw std::invalid_argument("mesh: attribute arrays differ in length from vertices");
  }
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (std::abs(normals[i].norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("mesh: normal " + std::to_string(i) + " is not unit length");
    }
  }
  const auto n = static_cast<std::int64_t>(vertices.size());
  for (const auto& tri : triangles) {
    for (const auto idx : tri) {
      if (idx < 0 || idx >= n) {
        throw std::invalid_argument("mesh: triangle index out of range");
      }
    }
  }
}

}  // namespace dfusion
