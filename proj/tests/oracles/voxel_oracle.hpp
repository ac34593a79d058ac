#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "pickorder/priors.hpp"
#include "pickorder/rng.hpp"

// Brute-force priors on grids aligned with the world axes: 1 cm voxels for
// topmost, finer columns for independence.
namespace pickorder::oracle {

inline constexpr double kVoxel = 0.01;
inline constexpr double kColumn = 0.0025;

inline bool inside_box(const ObjectState& o, const Vec3& p) {
  const Vec3 local = o.pose.rotation().transpose() * (p - o.pose.center);
  return (local.array().abs() <= 0.5 * o.extent.array()).all();
}

/// Centers of the grid columns (cell size h) whose center falls inside the object's footprint.
inline std::vector<Vec2> footprint_columns(const ObjectState& o, double h = kVoxel) {
  const ConvexPolygon fp = obb_footprint(o.box());
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (const Vec2& v : fp.vertices()) {
    x0 = std::min(x0, v.x());
    x1 = std::max(x1, v.x());
    y0 = std::min(y0, v.y());
    y1 = std::max(y1, v.y());
  }
  std::vector<Vec2> cells;
  for (double x = (std::floor(x0 / h) + 0.5) * h; x <= x1; x += h)
    for (double y = (std::floor(y0 / h) + 0.5) * h; y <= y1; y += h)
      if (fp.contains({x, y})) cells.emplace_back(x, y);
  return cells;
}

using Cell = std::pair<long, long>;

inline Cell cell_of(const Vec2& c, double h) { return {std::lround(c.x() / h - 0.5), std::lround(c.y() / h - 0.5)}; }

inline std::set<Cell> cell_set(const std::vector<Vec2>& cells, double h) {
  std::set<Cell> out;
  for (const Vec2& c : cells) out.insert(cell_of(c, h));
  return out;
}

/// The columns with at least one of their four grid neighbors missing.
inline std::vector<Vec2> boundary_columns(const std::vector<Vec2>& cells, double h) {
  const std::set<Cell> present = cell_set(cells, h);
  std::vector<Vec2> out;
  for (const Vec2& c : cells) {
    const auto [i, j] = cell_of(c, h);
    if (!present.count({i + 1, j}) || !present.count({i - 1, j}) || !present.count({i, j + 1}) ||
        !present.count({i, j - 1}))
      out.push_back(c);
  }
  return out;
}

/// Footprint distance between the voxel columns of two objects.
inline double column_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& p : a)
    for (const Vec2& q : b) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

struct VoxelFlags {
  std::vector<bool> independent;
  std::vector<bool> topmost;
};

/// Independence: no shared column (cell size kColumn) with another object and no
/// other object's boundary columns within tau of this object's boundary columns.
/// Topmost: no voxel of the prism above this object's top, restricted to its
/// columns, has its center inside another box. Indexed like scene.objects.
inline VoxelFlags voxel_flags(const Scene& scene, double tau) {
  const std::size_t n = scene.objects.size();
  std::vector<std::vector<Vec2>> cols(n), rims(n);
  std::vector<std::set<Cell>> fine(n);
  std::vector<double> tops(n);
  double ceiling = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cols[i] = footprint_columns(scene.objects[i]);
    const auto cells = footprint_columns(scene.objects[i], kColumn);
    rims[i] = boundary_columns(cells, kColumn);
    fine[i] = cell_set(cells, kColumn);
    tops[i] = obb_top(scene.objects[i].box());
    ceiling = std::max(ceiling, tops[i]);
  }
  VoxelFlags f{std::vector<bool>(n, true), std::vector<bool>(n, true)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (f.independent[i]) {
        const bool shared = std::any_of(fine[k].begin(), fine[k].end(), [&](const Cell& c) { return fine[i].count(c); });
        if (shared || column_distance(rims[i], rims[k]) < tau) f.independent[i] = false;
      }
      if (!f.topmost[i]) continue;
      for (const Vec2& c : cols[i]) {
        for (double z = tops[i] + 0.5 * kVoxel; z < ceiling; z += kVoxel) {
          if (inside_box(scene.objects[k], {c.x(), c.y(), z})) {
            f.topmost[i] = false;
            break;
          }
        }
        if (!f.topmost[i]) break;
      }
    }
  }
  return f;
}

/// Minimum width of a convex polygon over its edge normals.
inline double min_width(const ConvexPolygon& p) {
  const auto& v = p.vertices();
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < v.size(); ++e) {
    const Vec2 a = v[e], b = v[(e + 1) % v.size()];
    const Vec2 nrm = Vec2(b.y() - a.y(), a.x() - b.x()).normalized();
    double far = 0.0;
    for (const Vec2& q : v) far = std::max(far, std::abs((q - a).dot(nrm)));
    width = std::min(width, far);
  }
  return width;
}

/// Clips the convex polygon a to the half-planes of b (both CCW).
inline std::vector<Vec2> clip(const ConvexPolygon& a, const ConvexPolygon& b) {
  std::vector<Vec2> out = a.vertices();
  const auto& w = b.vertices();
  for (std::size_t e = 0; e < w.size() && !out.empty(); ++e) {
    const Vec2 p = w[e], q = w[(e + 1) % w.size()];
    auto side = [&](const Vec2& x) { return (q - p).x() * (x - p).y() - (q - p).y() * (x - p).x(); };
    std::vector<Vec2> next;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Vec2 s = out[i], t = out[(i + 1) % out.size()];
      const double ss = side(s), st = side(t);
      if (ss >= 0) next.push_back(s);
      if ((ss >= 0) != (st >= 0)) next.push_back(s + (t - s) * (ss / (ss - st)));
    }
    out = std::move(next);
  }
  return out;
}

/// Objects whose flags lie within grid resolution of a decision boundary:
///  independence: some neighbor's exact footprint distance lies in [tau - band, tau),
///    band defaulting to two columns;
///  topmost: some higher box has a footprint overlap too thin to contain a grid
///    point (minimum width below 2.2 voxels), or a top less than one voxel higher.
struct Unresolved {
  std::vector<bool> independence;
  std::vector<bool> topmost;
};

inline Unresolved unresolved(const Scene& scene, double tau, double band = 2.0 * kColumn) {
  const SceneGeometry g(scene);
  const std::size_t n = g.size();
  Unresolved u{std::vector<bool>(n, false), std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (g.dist(i, k) < tau && g.dist(i, k) >= tau - band) u.independence[i] = true;
      if (g.dist(i, k) > 0.0 || g.tops[k] <= g.tops[i] + kTopEpsilon) continue;
      if (g.tops[k] < g.tops[i] + kVoxel) {
        u.topmost[i] = true;
        continue;
      }
      const auto overlap = clip(g.footprints[i], g.footprints[k]);
      bool thin = overlap.size() < 3;
      if (!thin) {
        try {
          thin = min_width(convex_hull_2d(overlap)) < 2.2 * kVoxel;
        } catch (const Error&) {
          thin = true;
        }
      }
      if (thin) u.topmost[i] = true;
    }
  }
  return u;
}

/// A generated scene with a share of the boxes given a random roll and pitch, settled.
inline Scene tilted_scene(std::uint64_t seed, Difficulty d, double tilt_share = 0.4) {
  Scene s = generate_scene(seed, d);
  Rng rng(seed, 0x7117);
  for (ObjectState& o : s.objects) {
    if (rng.uniform() >= tilt_share) continue;
    o.pose = Pose(o.pose.center, {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), o.pose.yaw()});
  }
  return settle(s);
}

}  // namespace pickorder::oracle
