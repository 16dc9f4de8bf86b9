#include "dfusion/frame.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfusion {

DepthMap bilateral_filter(const DepthMap& depth, double spatial_sigma, double range_sigma,
                          int radius) {
  if (!(spatial_sigma > 0.0) || !(range_sigma > 0.0)) {
    throw std::invalid_argument("bilateral_filter: sigmas must be positive");
  }
  if (radius < 0) {
    throw std::invalid_argument("bilateral_filter: radius must be non-negative");
  }
  const int w = depth.width();
  const int h = depth.height();
  const double inv_2s2 = 1.0 / (2.0 * spatial_sigma * spatial_sigma);
  const double inv_2r2 = 1.0 / (2.0 * range_sigma * range_sigma);

  std::vector<double> spatial((2 * radius + 1) * (2 * radius + 1));
  for (int dv = -radius; dv <= radius; ++dv) {
    for (int du = -radius; du <= radius; ++du) {
      spatial[(dv + radius) * (2 * radius + 1) + (du + radius)] =
          std::exp(-static_cast<double>(du * du + dv * dv) * inv_2s2);
    }
  }

  DepthMap out(w, h, kInvalidDepth);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double center = depth.at(u, v);
      if (!is_valid_depth(center)) {
        continue;
      }
      double sum = 0.0;
      double wsum = 0.0;
      double lo = center;
      double hi = center;
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          const int uu = u + du;
          const int vv = v + dv;
          if (!depth.in_bounds(uu, vv)) {
            continue;
          }
          const double d = depth.at(uu, vv);
          if (!is_valid_depth(d)) {
            continue;
          }
          const double diff = d - center;
          const double wt =
              spatial[(dv + radius) * (2 * radius + 1) + (du + radius)] * std::exp(-diff * diff * inv_2r2);
          sum += wt * d;
          wsum += wt;
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
      }
      // The center contributes weight 1, so wsum >= 1. The clamp removes
      // last-ulp overshoot of the convex combination.
      out.at(u, v) = std::clamp(sum / wsum, lo, hi);
    }
  }
  return out;
}

VertexMap compute_vertex_map(const DepthMap& depth, const CameraIntrinsics& k) {
  VertexMap out(depth.width(), depth.height());
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth.at(u, v);
      if (is_valid_depth(d)) {
        out.at(u, v) = unproject(Vec2(u, v), d, k);
      }
    }
  }
  return out;
}

NormalMap compute_normal_map(const VertexMap& vertices) {
  const int w = vertices.width();
  const int h = vertices.height();
  NormalMap out(w, h);
  for (int v = 1; v + 1 < h; ++v) {
    for (int u = 1; u + 1 < w; ++u) {
      const auto& c = vertices.at(u, v);
      const auto& left = vertices.at(u - 1, v);
      const auto& right = vertices.at(u + 1, v);
      const auto& up = vertices.at(u, v - 1);
      const auto& down = vertices.at(u, v + 1);
      if (!c || !left || !right || !up || !down) {
        continue;
      }
      Vec3 n = (*right - *left).cross(*down - *up);
      const double len = n.norm();
      if (!(len > 0.0)) {
        continue;
      }
      n /= len;
      double facing = n.dot(*c);
      if (facing > 0.0) {
        n = -n;
        facing = -facing;
      }
      if (facing < 0.0) {
        out.at(u, v) = n;
      }
    }
  }
  return out;
}

ObservationFrame build_frame(int index, const DepthMap& raw_depth, const ColorMap& color,
                             const CameraIntrinsics& k, const FilterParams& params) {
  if (raw_depth.width() != color.width() || raw_depth.height() != color.height()) {
    throw std::invalid_argument("build_frame: depth and color dimensions differ");
  }
  if (raw_depth.width() != k.width || raw_depth.height() != k.height) {
    throw std::invalid_argument("build_frame: image size does not match the intrinsics");
  }
  if (index < 0) {
    throw std::invalid_argument("build_frame: negative frame index");
  }

  DepthMap depth = raw_depth;
  for (double& d : depth.pixels()) {
    if (!is_valid_depth(d) || d > params.depth_max || !std::isfinite(d)) {
      d = kInvalidDepth;
    }
  }
  if (params.enabled) {
    depth = bilateral_filter(depth, params.spatial_sigma, params.range_sigma, params.radius);
  }

  ObservationFrame frame;
  frame.index = index;
  frame.intrinsics = k;
  frame.vertex_map = compute_vertex_map(depth, k);
  frame.normal_map = compute_normal_map(frame.vertex_map);
  frame.depth = std::move(depth);
  frame.color = color;
  return frame;
}

}  // namespace dfusion
