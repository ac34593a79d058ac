#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pickorder {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Collinearity / degeneracy tolerance in meters.
inline constexpr double kGeomTol = 1e-9;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a) noexcept;

/// Rotation from roll/pitch/yaw, R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rotation_from_rpy(const Vec3& rpy) noexcept;

/// Inverse of rotation_from_rpy; pitch is returned in [-pi/2, pi/2].
Vec3 rpy_from_rotation(const Mat3& r) noexcept;

struct Pose {
  Vec3 center = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();  ///< roll, pitch, yaw in radians, each in (-pi, pi]

  Pose() = default;
  Pose(const Vec3& c, const Vec3& angles);

  double yaw() const noexcept { return rpy.z(); }
  Mat3 rotation() const noexcept { return rotation_from_rpy(rpy); }
};

/// Rigid homogeneous transform. The rotation block is checked on construction.
class HomTransform {
 public:
  HomTransform() : m_(Mat4::Identity()) {}

  /// Throws InvalidTransformError if the rotation block is not a proper rotation
  /// (orthonormal and det = 1 within 1e-9) or the last row is not [0 0 0 1].
  explicit HomTransform(const Mat4& m);
  HomTransform(const Mat3& rotation, const Vec3& translation);

  static HomTransform translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static HomTransform from_rpy(const Vec3& rpy, const Vec3& t = Vec3::Zero()) {
    return {rotation_from_rpy(rpy), t};
  }

  const Mat4& matrix() const noexcept { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }
  HomTransform inverse() const;
  HomTransform operator*(const HomTransform& rhs) const;

 private:
  Mat4 m_;
};

/// Maps the pose center through the full transform and composes orientations.
Pose transform_pose(const HomTransform& t, const Pose& p);

struct Obb {
  Pose pose;
  Vec3 extent = Vec3::Ones();  ///< full side lengths

  Obb() = default;
  Obb(const Pose& p, const Vec3& e);
};

/// Corner i has local signs (bit0 -> x, bit1 -> y, bit2 -> z), bit set = +half extent.
std::array<Vec3, 8> obb_corners(const Obb& b);

/// Max z over the eight corners.
double obb_top(const Obb& b);
/// Min z over the eight corners.
double obb_bottom(const Obb& b);

/// Counter-clockwise convex polygon with at least three vertices.
class ConvexPolygon {
 public:
  /// Validates strict convexity, CCW orientation and positive area.
  explicit ConvexPolygon(std::vector<Vec2> ccw_vertices);

  const std::vector<Vec2>& vertices() const noexcept { return v_; }
  std::size_t size() const noexcept { return v_.size(); }
  double area() const noexcept;
  double diameter() const noexcept;
  /// Closed containment test (boundary counts as inside).
  bool contains(const Vec2& p) const noexcept;

 private:
  std::vector<Vec2> v_;
};

/// Andrew monotone chain; collinear and duplicate points are dropped.
/// Throws DegenerateHullError when fewer than three extreme points remain.
ConvexPolygon convex_hull_2d(std::span<const Vec2> points);

/// Convex hull of the eight corners projected onto z = 0.
ConvexPolygon obb_footprint(const Obb& b);

/// Exact Euclidean distance between two closed convex polygons; 0 iff they touch.
double polygon_min_distance(const ConvexPolygon& a, const ConvexPolygon& b);

/// Closed-set intersection test by separating axes; touching counts.
bool polygons_intersect(const ConvexPolygon& a, const ConvexPolygon& b);

/// Area of the intersection of two convex polygons (Sutherland-Hodgman clip).
double intersection_area(const ConvexPolygon& a, const ConvexPolygon& b);

/// Distance from a point to a closed segment.
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) noexcept;

}  // namespace pickorder
