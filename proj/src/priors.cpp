#include "pickorder/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "pickorder/errors.hpp"

namespace pickorder {

void SphConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(large_area_quantile >= 0.0 && large_area_quantile <= 1.0))
    throw ConfigError("large_area_quantile must lie in [0, 1]");
}

SceneGeometry::SceneGeometry(const Scene& scene) {
  const std::size_t n = scene.objects.size();
  footprints.reserve(n);
  tops.resize(n);
  bottoms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Obb b = scene.objects[i].box();
    footprints.push_back(obb_footprint(b));
    tops[i] = obb_top(b);
    bottoms[i] = obb_bottom(b);
  }
  distance.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      distance[i * n + j] = distance[j * n + i] = polygon_min_distance(footprints[i], footprints[j]);
}

bool independence(ObjectId id, const Scene& scene, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  const std::size_t i = scene.index_of(id);
  const ConvexPolygon a = obb_footprint(scene.objects[i].box());
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    if (j == i) continue;
    if (polygon_min_distance(a, obb_footprint(scene.objects[j].box())) < tau) return false;
  }
  return true;
}

bool local_optimality(ObjectId id, const Scene& scene) {
  const std::size_t i = scene.index_of(id);
  const Obb bi = scene.objects[i].box();
  const ConvexPolygon a = obb_footprint(bi);
  const double top = obb_top(bi);
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    if (k == i) continue;
    const Obb bk = scene.objects[k].box();
    if (obb_top(bk) > top + kTopEpsilon && polygons_intersect(obb_footprint(bk), a)) return false;
  }
  return true;
}

std::vector<PriorFlags> compute_flags_indexed(const Scene& scene, const SceneGeometry& geom,
                                              double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  const std::size_t n = scene.objects.size();
  std::vector<PriorFlags> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    PriorFlags& f = out[i];
    f.footprint_area = geom.footprints[i].area();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double d = geom.dist(i, k);
      f.min_neighbor_distance = std::min(f.min_neighbor_distance, d);
      if (d < tau) ++f.neighbors_within_tau;
      if (d == 0.0 && geom.tops[k] > geom.tops[i] + kTopEpsilon) f.topmost = false;
    }
    f.independent = f.neighbors_within_tau == 0;
  }
  return out;
}

std::map<ObjectId, PriorFlags> compute_flags(const Scene& scene, double tau) {
  const SceneGeometry geom(scene);
  const auto flags = compute_flags_indexed(scene, geom, tau);
  std::map<ObjectId, PriorFlags> out;
  for (std::size_t i = 0; i < flags.size(); ++i) out.emplace(scene.objects[i].id, flags[i]);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Ranking sph_order_scaled(const Scene& scene, const SphConfig& cfg,
                         std::span<const double> primary_scale,
                         std::span<const double> secondary_scale) {
  cfg.validate();
  const std::size_t n = scene.objects.size();
  if (n == 0) throw EmptySceneError();
  if (primary_scale.size() != n || secondary_scale.size() != n)
    throw ShapeError("key scale vectors must have one entry per object");

  const SceneGeometry geom(scene);
  const auto flags = compute_flags_indexed(scene, geom, cfg.tau);
  std::vector<double> areas(n);
  for (std::size_t i = 0; i < n; ++i) areas[i] = flags[i].footprint_area;
  const double large = quantile(areas, cfg.large_area_quantile);

  // (tier, primary key, secondary key, id); all keys ascending.
  using Key = std::tuple<int, double, double, ObjectId>;
  std::vector<Key> keys;
  keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ObjectState& o = scene.objects[i];
    const double dist = (o.pose.center - scene.effector_home).norm();
    const double yaw = std::abs(o.pose.yaw());
    const double p = primary_scale[i];
    const double s = secondary_scale[i];
    if (flags[i].independent && flags[i].footprint_area >= large) {
      keys.emplace_back(1, -flags[i].footprint_area * p, 0.0, o.id);
    } else if (flags[i].topmost) {
      keys.emplace_back(2, dist * p, 0.0, o.id);
    } else {
      keys.emplace_back(3, (yaw + cfg.distance_weight * dist) * p, dist * s, o.id);
    }
  }
  std::sort(keys.begin(), keys.end());
  Ranking r;
  r.reserve(n);
  for (const auto& k : keys) r.push_back(std::get<3>(k));
  return r;
}

Ranking sph_order(const Scene& scene, const SphConfig& cfg) {
  const std::vector<double> ones(scene.objects.size(), 1.0);
  return sph_order_scaled(scene, cfg, ones, ones);
}

}  // namespace pickorder
