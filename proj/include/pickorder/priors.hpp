#pragma once

#include <map>
#include <span>
#include <vector>

#include "pickorder/scene.hpp"

namespace pickorder {

using Ranking = std::vector<ObjectId>;

/// Sentinel for "no other object" in min_neighbor_distance.
inline constexpr double kNoNeighborDistance = 1e6;
/// Height margin for the vertical-occlusion test, meters.
inline constexpr double kTopEpsilon = 1e-6;
inline constexpr double kDefaultTau = 0.05;

struct PriorFlags {
  bool independent = true;
  bool topmost = true;
  double min_neighbor_distance = kNoNeighborDistance;
  double footprint_area = 0.0;
  int neighbors_within_tau = 0;  ///< other footprints closer than tau
};

struct SphConfig {
  double tau = kDefaultTau;
  double large_area_quantile = 0.5;
  /// Weight of center distance inside the tier-3 sort key (|yaw| + w * distance).
  double distance_weight = 0.0;

  void validate() const;
};

/// Footprints, heights and pairwise footprint distances of a scene, computed once.
struct SceneGeometry {
  explicit SceneGeometry(const Scene& scene);

  std::vector<ConvexPolygon> footprints;
  std::vector<double> tops;
  std::vector<double> bottoms;
  /// Row-major n x n; diagonal is 0.
  std::vector<double> distance;

  std::size_t size() const noexcept { return tops.size(); }
  double dist(std::size_t i, std::size_t j) const noexcept { return distance[i * size() + j]; }
};

/// True iff the footprint of `id` is at least tau away from every other footprint.
bool independence(ObjectId id, const Scene& scene, double tau);

/// True iff no other box has a footprint meeting this box's footprint and a
/// top more than kTopEpsilon above this box's top. For tilted boxes the test is
/// conservative: a box whose highest corner lies outside this footprint can still
/// mark it as covered, so it may report false where the space above the
/// footprint is actually empty, never the reverse.
bool local_optimality(ObjectId id, const Scene& scene);

std::map<ObjectId, PriorFlags> compute_flags(const Scene& scene, double tau);
/// Same as compute_flags but indexed like scene.objects.
std::vector<PriorFlags> compute_flags_indexed(const Scene& scene, const SceneGeometry& geom,
                                              double tau);

/// Linear-interpolation quantile (R type 7) of a non-empty sample.
double quantile(std::vector<double> values, double q);

/// Tiered heuristic order: (1) independent and large, by descending area;
/// (2) remaining topmost, by ascending distance to the effector home;
/// (3) the rest, by ascending |yaw| then distance. Ties by ascending id.
Ranking sph_order(const Scene& scene, const SphConfig& cfg = {});

/// sph_order with each object's tier-internal keys multiplied by the given
/// factors (indexed like scene.objects). Tier membership is unaffected.
Ranking sph_order_scaled(const Scene& scene, const SphConfig& cfg,
                         std::span<const double> primary_scale,
                         std::span<const double> secondary_scale);

}  // namespace pickorder
