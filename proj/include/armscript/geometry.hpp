#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <cstddef>
#include <optional>
#include <vector>

#include "armscript/common.hpp"

namespace armscript {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

ARMSCRIPT_DEFINE_ERROR(EmptySelection);

// Rigid SE(3) transform. Rotation kept as a matrix for math; files carry the
// 7-tuple [tx,ty,tz,qw,qx,qy,qz].
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  static Pose from_translation(const Vec3& t) { return Pose{Mat3::Identity(), t}; }

  static Pose from_axis_angle(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero()) {
    return Pose{Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), t};
  }

  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return Pose{rt, -(rt * translation)};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  bool is_valid(double tol = 1e-9) const {
    const Mat3 should_be_identity = rotation.transpose() * rotation;
    return (should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

// a then b applied in a's frame: homogeneous matrix product a * b.
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

// Rotation of `angle` radians about the line (point, axis), as a world-frame pose.
inline Pose rotation_about_line(const Vec3& point, const Vec3& axis, double angle) {
  const Mat3 r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  return Pose{r, point - r * point};
}

inline std::array<double, 7> pose_to_seven(const Pose& p) {
  Eigen::Quaterniond q(p.rotation);
  if (q.w() < 0) q.coeffs() *= -1.0;  // canonical sign for exact round-trips
  return {p.translation.x(), p.translation.y(), p.translation.z(), q.w(), q.x(), q.y(), q.z()};
}

inline Pose pose_from_seven(const std::array<double, 7>& v) {
  Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
  q.normalize();
  return Pose{q.toRotationMatrix(), Vec3(v[0], v[1], v[2])};
}

// Pinhole camera. `rotation`/`translation` are the camera pose in the world
// frame (x_world = R * x_cam + t). Image origin top-left, x right, y down;
// camera looks along +z.
struct CameraModel {
  Mat3 intrinsics = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 0;
  int height = 0;

  Vec3 to_camera(const Vec3& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }

  Pose pose() const { return Pose{rotation, translation}; }
};

constexpr double kBehindCameraEps = 1e-6;

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

// Pinhole projection; empty when the point is at or behind the camera plane.
inline std::optional<Pixel> project(const CameraModel& cam, const Vec3& p_world) {
  const Vec3 pc = cam.to_camera(p_world);
  if (pc.z() <= kBehindCameraEps) return std::nullopt;
  const double u = cam.intrinsics(0, 0) * pc.x() / pc.z() + cam.intrinsics(0, 2);
  const double v = cam.intrinsics(1, 1) * pc.y() / pc.z() + cam.intrinsics(1, 2);
  return Pixel{u, v};
}

struct BBox2D {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  // Closed-interval containment on all four edges.
  bool contains(double u, double v) const {
    return u >= x_min && u <= x_max && v >= y_min && v <= y_max;
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }

  BBox2D clipped(int image_width, int image_height) const {
    BBox2D b = *this;
    b.x_min = std::max(0.0, b.x_min);
    b.y_min = std::max(0.0, b.y_min);
    b.x_max = std::min(static_cast<double>(image_width - 1), b.x_max);
    b.y_max = std::min(static_cast<double>(image_height - 1), b.y_max);
    return b;
  }
};

inline bool bbox2d_contains_projection(const CameraModel& cam, const BBox2D& b, const Vec3& p) {
  const auto px = project(cam, p);
  return px.has_value() && b.contains(px->u, px->v);
}

struct BBox3D {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extents() const { return max - min; }

  BBox3D inflated(double margin) const {
    return BBox3D{min - Vec3::Constant(margin), max + Vec3::Constant(margin)};
  }

  bool intersects(const BBox3D& other, double eps = 0.0) const {
    return (min.array() < other.max.array() - eps).all() &&
           (other.min.array() < max.array() - eps).all();
  }

  static BBox3D of_points(const std::vector<Vec3>& pts) {
    BBox3D b{pts.front(), pts.front()};
    for (const Vec3& p : pts) {
      b.min = b.min.cwiseMin(p);
      b.max = b.max.cwiseMax(p);
    }
    return b;
  }

  // Exterior squared distance from a point to the box (0 inside).
  double squared_distance(const Vec3& p) const {
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      double d = std::max({min[i] - p[i], 0.0, p[i] - max[i]});
      d2 += d * d;
    }
    return d2;
  }
};

// Point set with stable indexing: the index is the identity of a point.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline BBox3D bbox3d_of(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw EmptySelection("bbox3d_of needs at least one point");
  BBox3D b{cloud.points[indices.front()], cloud.points[indices.front()]};
  for (std::size_t i : indices) {
    b.min = b.min.cwiseMin(cloud.points[i]);
    b.max = b.max.cwiseMax(cloud.points[i]);
  }
  return b;
}

// One bit per point of an associated cloud: bit i says whether point i
// projects inside a particular 2D bounding box.
struct MembershipVector {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

}  // namespace armscript
