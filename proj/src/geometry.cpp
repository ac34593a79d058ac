#include "pickorder/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pickorder/errors.hpp"

namespace pickorder {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) noexcept {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

double shoelace(const std::vector<Vec2>& v) noexcept {
  double s = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % n];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * s;
}

// Projects the polygon onto an (unnormalized) axis.
std::pair<double, double> project(const std::vector<Vec2>& v, const Vec2& axis) noexcept {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Vec2& p : v) {
    const double d = p.dot(axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

bool has_separating_edge(const std::vector<Vec2>& edges_of, const std::vector<Vec2>& other) {
  const std::size_t n = edges_of.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = edges_of[(i + 1) % n] - edges_of[i];
    const Vec2 axis(-e.y(), e.x());
    const auto [alo, ahi] = project(edges_of, axis);
    const auto [blo, bhi] = project(other, axis);
    if (ahi < blo || bhi < alo) return true;
  }
  return false;
}

}  // namespace

double wrap_angle(double a) noexcept {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

Mat3 rotation_from_rpy(const Vec3& rpy) noexcept {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 rpy_from_rotation(const Mat3& r) noexcept {
  const double sp = std::clamp(-r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(sp);
  double roll, yaw;
  if (std::abs(sp) < 1.0 - 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: only roll -/+ yaw is observable; put it all in roll.
    roll = std::atan2(-r(1, 2), r(1, 1));
    yaw = 0.0;
  }
  return {wrap_angle(roll), pitch, wrap_angle(yaw)};
}

Pose::Pose(const Vec3& c, const Vec3& angles)
    : center(c), rpy(wrap_angle(angles.x()), wrap_angle(angles.y()), wrap_angle(angles.z())) {
  if (!c.allFinite()) throw Error("pose center must be finite");
}

HomTransform::HomTransform(const Mat4& m) : m_(m) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!m.allFinite() || ortho > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9) {
    throw InvalidTransformError("rotation block is not a proper rotation");
  }
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    throw InvalidTransformError("last row must be [0 0 0 1]");
  }
}

HomTransform::HomTransform(const Mat3& rotation, const Vec3& translation)
    : HomTransform([&] {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
      }()) {}

HomTransform HomTransform::inverse() const {
  const Mat3 rt = rotation().transpose();
  return {rt, -(rt * translation())};
}

HomTransform HomTransform::operator*(const HomTransform& rhs) const {
  return {rotation() * rhs.rotation(), rotation() * rhs.translation() + translation()};
}

Pose transform_pose(const HomTransform& t, const Pose& p) {
  return Pose(t.apply(p.center), rpy_from_rotation(t.rotation() * p.rotation()));
}

Obb::Obb(const Pose& p, const Vec3& e) : pose(p), extent(e) {
  if (!(e.x() > 0.0 && e.y() > 0.0 && e.z() > 0.0)) throw Error("box extents must be positive");
}

std::array<Vec3, 8> obb_corners(const Obb& b) {
  const Mat3 r = b.pose.rotation();
  const Vec3 h = 0.5 * b.extent;
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
    out[i] = b.pose.center + r * local;
  }
  return out;
}

double obb_top(const Obb& b) {
  double z = -std::numeric_limits<double>::infinity();
  for (const Vec3& c : obb_corners(b)) z = std::max(z, c.z());
  return z;
}

double obb_bottom(const Obb& b) {
  double z = std::numeric_limits<double>::infinity();
  for (const Vec3& c : obb_corners(b)) z = std::min(z, c.z());
  return z;
}

ConvexPolygon::ConvexPolygon(std::vector<Vec2> ccw_vertices) : v_(std::move(ccw_vertices)) {
  const std::size_t n = v_.size();
  if (n < 3) throw DegenerateHullError("polygon needs at least three vertices");
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = v_[i];
    const Vec2& b = v_[(i + 1) % n];
    const Vec2& c = v_[(i + 2) % n];
    const double len = (c - a).norm();
    if (cross(a, b, c) < -kGeomTol * std::max(len, 1.0)) {
      throw DegenerateHullError("polygon is not convex counter-clockwise");
    }
  }
  if (!(shoelace(v_) > 0.0)) throw DegenerateHullError("polygon has non-positive signed area");
}

double ConvexPolygon::area() const noexcept { return shoelace(v_); }

double ConvexPolygon::diameter() const noexcept {
  double d = 0.0;
  for (std::size_t i = 0; i < v_.size(); ++i)
    for (std::size_t j = i + 1; j < v_.size(); ++j) d = std::max(d, (v_[i] - v_[j]).norm());
  return d;
}

bool ConvexPolygon::contains(const Vec2& p) const noexcept {
  for (std::size_t i = 0, n = v_.size(); i < n; ++i) {
    if (cross(v_[i], v_[(i + 1) % n], p) < 0.0) return false;
  }
  return true;
}

ConvexPolygon convex_hull_2d(std::span<const Vec2> points) {
  std::vector<Vec2> pts(points.begin(), points.end());
  for (const Vec2& p : pts)
    if (!p.allFinite()) throw DegenerateHullError("non-finite hull input");
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2& a, const Vec2& b) { return (a - b).norm() <= kGeomTol; }),
            pts.end());
  if (pts.size() < 3) throw DegenerateHullError("fewer than three distinct points");

  // A turn o->a->b is kept only if b lies more than kGeomTol left of line o-a.
  auto left_turn = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return cross(o, a, b) > kGeomTol * (b - o).norm();
  };
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && !left_turn(hull[k - 2], hull[k - 1], p)) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    const Vec2& p = pts[i];
    while (k >= lower && !left_turn(hull[k - 2], hull[k - 1], p)) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw DegenerateHullError("points are collinear");
  return ConvexPolygon(std::move(hull));
}

ConvexPolygon obb_footprint(const Obb& b) {
  std::array<Vec2, 8> pts;
  const auto corners = obb_corners(b);
  for (int i = 0; i < 8; ++i) pts[i] = corners[i].head<2>();
  return convex_hull_2d(pts);
}

bool polygons_intersect(const ConvexPolygon& a, const ConvexPolygon& b) {
  return !has_separating_edge(a.vertices(), b.vertices()) &&
         !has_separating_edge(b.vertices(), a.vertices());
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) noexcept {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

double polygon_min_distance(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (polygons_intersect(a, b)) return 0.0;
  const auto& va = a.vertices();
  const auto& vb = b.vertices();
  double best = std::numeric_limits<double>::infinity();
  // Disjoint convex sets: the gap is realized between a vertex and an edge.
  for (std::size_t i = 0; i < va.size(); ++i) {
    for (std::size_t j = 0; j < vb.size(); ++j) {
      const Vec2& b0 = vb[j];
      const Vec2& b1 = vb[(j + 1) % vb.size()];
      best = std::min(best, point_segment_distance(va[i], b0, b1));
    }
  }
  for (std::size_t j = 0; j < vb.size(); ++j) {
    for (std::size_t i = 0; i < va.size(); ++i) {
      const Vec2& a0 = va[i];
      const Vec2& a1 = va[(i + 1) % va.size()];
      best = std::min(best, point_segment_distance(vb[j], a0, a1));
    }
  }
  return best;
}

double intersection_area(const ConvexPolygon& a, const ConvexPolygon& b) {
  std::vector<Vec2> poly = a.vertices();
  const auto& clip = b.vertices();
  for (std::size_t i = 0, n = clip.size(); i < n && !poly.empty(); ++i) {
    const Vec2& c0 = clip[i];
    const Vec2& c1 = clip[(i + 1) % n];
    std::vector<Vec2> next;
    next.reserve(poly.size() + 1);
    for (std::size_t j = 0, m = poly.size(); j < m; ++j) {
      const Vec2& p = poly[j];
      const Vec2& q = poly[(j + 1) % m];
      const double sp = cross(c0, c1, p);
      const double sq = cross(c0, c1, q);
      if (sp >= 0.0) next.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        next.push_back(p + t * (q - p));
      }
    }
    poly = std::move(next);
  }
  return poly.size() < 3 ? 0.0 : std::max(0.0, shoelace(poly));
}

}  // namespace pickorder
