#include "pickorder/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pickorder/errors.hpp"
#include "pickorder/rng.hpp"

namespace pickorder {

namespace {

// Minimum footprint gap between boxes placed directly on the table.
constexpr double kTableGap = 0.005;
// Footprints must stay this far inside the workspace at generation time.
constexpr double kBorderMargin = 0.01;
constexpr double kMinStackOverlap = 0.30;
constexpr int kTableTries = 400;
constexpr int kStackTries = 60;

struct Placed {
  ObjectState state;
  ConvexPolygon footprint;
  double top;
};

bool footprint_inside(const ConvexPolygon& fp, const Workspace& ws) {
  for (const Vec2& v : fp.vertices()) {
    if (v.x() < ws.min.x() + kBorderMargin || v.x() > ws.max.x() - kBorderMargin ||
        v.y() < ws.min.y() + kBorderMargin || v.y() > ws.max.y() - kBorderMargin)
      return false;
  }
  return true;
}

ObjectState make_object(ObjectId id, Category cat, const Vec3& extent, const Vec2& xy, double bottom,
                        double yaw) {
  ObjectState o;
  o.id = id;
  o.category = cat;
  o.extent = extent;
  o.pose = Pose(Vec3(xy.x(), xy.y(), bottom + 0.5 * extent.z()), Vec3(0.0, 0.0, yaw));
  return o;
}

std::optional<Placed> try_table(Rng& rng, const Scene& scene, const std::vector<Placed>& placed,
                                ObjectId id, Category cat, const Vec3& extent, double yaw) {
  const Workspace& ws = scene.workspace;
  for (int t = 0; t < kTableTries; ++t) {
    const Vec2 xy(rng.uniform(ws.min.x(), ws.max.x()), rng.uniform(ws.min.y(), ws.max.y()));
    ObjectState o = make_object(id, cat, extent, xy, 0.0, yaw);
    ConvexPolygon fp = obb_footprint(o.box());
    if (!footprint_inside(fp, ws)) continue;
    bool clear = true;
    for (const Placed& p : placed) {
      if (polygon_min_distance(fp, p.footprint) < kTableGap) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    const double top = obb_top(o.box());
    return Placed{std::move(o), std::move(fp), top};
  }
  return std::nullopt;
}

std::optional<Placed> try_stack(Rng& rng, const Scene& scene, const std::vector<Placed>& placed,
                                ObjectId id, Category cat, const Vec3& extent, double yaw) {
  if (placed.empty()) return std::nullopt;
  for (int t = 0; t < kStackTries; ++t) {
    const Placed& base = placed[rng.below(placed.size())];
    const double reach = 0.5 * std::min(base.state.extent.x(), base.state.extent.y()) +
                         0.25 * std::min(extent.x(), extent.y());
    const double r = reach * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec2 xy = base.state.pose.center.head<2>() + r * Vec2(std::cos(phi), std::sin(phi));
    ObjectState o = make_object(id, cat, extent, xy, 0.0, yaw);
    ConvexPolygon fp = obb_footprint(o.box());
    if (!footprint_inside(fp, scene.workspace)) continue;
    const double overlap = intersection_area(fp, base.footprint);
    if (overlap < kMinStackOverlap * std::min(fp.area(), base.footprint.area())) continue;
    double bottom = 0.0;
    for (const Placed& p : placed)
      if (polygons_intersect(fp, p.footprint)) bottom = std::max(bottom, p.top);
    o = make_object(id, cat, extent, xy, bottom, yaw);
    const double top = obb_top(o.box());
    return Placed{std::move(o), std::move(fp), top};
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Difficulty d) noexcept {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
  }
  return "easy";
}

Difficulty difficulty_from_string(std::string_view s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "moderate" || s == "medium") return Difficulty::Moderate;
  if (s == "hard") return Difficulty::Hard;
  throw ParseError("unknown difficulty '" + std::string(s) + "'");
}

int object_count(Difficulty d) noexcept {
  switch (d) {
    case Difficulty::Easy: return 24;
    case Difficulty::Moderate: return 36;
    case Difficulty::Hard: return 60;
  }
  return 24;
}

double stack_probability(Difficulty d) noexcept {
  switch (d) {
    case Difficulty::Easy: return 0.2;
    case Difficulty::Moderate: return 0.4;
    case Difficulty::Hard: return 0.6;
  }
  return 0.2;
}

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::LargeBox: return "large_box";
    case Category::SmallBox: return "small_box";
    case Category::Can: return "can";
    case Category::FlatPack: return "flat_pack";
    case Category::Bar: return "bar";
  }
  return "small_box";
}

Category category_from_string(std::string_view s) {
  for (int i = 0; i < kCategoryCount; ++i) {
    const auto c = static_cast<Category>(i);
    if (to_string(c) == s) return c;
  }
  throw ParseError("unknown category '" + std::string(s) + "'");
}

const ExtentRange& extent_range(Category c) noexcept {
  static const std::array<ExtentRange, kCategoryCount> kRanges{{
      {Vec3(0.14, 0.10, 0.04), Vec3(0.20, 0.16, 0.08)},  // large_box
      {Vec3(0.06, 0.05, 0.03), Vec3(0.10, 0.08, 0.06)},  // small_box
      {Vec3(0.06, 0.06, 0.08), Vec3(0.08, 0.08, 0.12)},  // can
      {Vec3(0.10, 0.08, 0.02), Vec3(0.16, 0.12, 0.03)},  // flat_pack
      {Vec3(0.12, 0.03, 0.03), Vec3(0.20, 0.05, 0.05)},  // bar
  }};
  return kRanges[static_cast<int>(c)];
}

std::size_t Scene::index_of(ObjectId id) const {
  if (auto i = find(id)) return *i;
  throw MissingObjectError(id);
}

std::optional<std::size_t> Scene::find(ObjectId id) const noexcept {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].id == id) return i;
  return std::nullopt;
}

std::vector<ObjectId> Scene::ids() const {
  std::vector<ObjectId> out;
  out.reserve(objects.size());
  for (const auto& o : objects) out.push_back(o.id);
  return out;
}

std::vector<ObjectId> SupportGraph::supported_by(ObjectId supporter) const {
  std::vector<ObjectId> out;
  for (const auto& [k, i] : edges)
    if (k == supporter) out.push_back(i);
  return out;
}

std::vector<ObjectId> SupportGraph::supporters_of(ObjectId supported) const {
  std::vector<ObjectId> out;
  for (const auto& [k, i] : edges)
    if (i == supported) out.push_back(k);
  return out;
}

Scene generate_scene(std::uint64_t seed, Difficulty difficulty) {
  Scene scene;
  scene.seed = seed;
  scene.difficulty = difficulty;
  Rng rng(seed, static_cast<std::uint64_t>(difficulty) + 1);

  const int n = object_count(difficulty);
  const double p_stack = stack_probability(difficulty);
  std::vector<Placed> placed;
  placed.reserve(n);
  for (ObjectId id = 0; id < n; ++id) {
    const auto cat = static_cast<Category>(rng.below(kCategoryCount));
    const ExtentRange& range = extent_range(cat);
    Vec3 extent;
    for (int a = 0; a < 3; ++a) extent[a] = rng.uniform(range.lo[a], range.hi[a]);
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const bool want_stack = !placed.empty() && rng.uniform() < p_stack;

    std::optional<Placed> p;
    if (want_stack) p = try_stack(rng, scene, placed, id, cat, extent, yaw);
    if (!p) p = try_table(rng, scene, placed, id, cat, extent, yaw);
    if (!p && !want_stack) p = try_stack(rng, scene, placed, id, cat, extent, yaw);
    if (!p) throw GenerationError("could not place object " + std::to_string(id), seed);
    placed.push_back(std::move(*p));
  }
  for (auto& p : placed) scene.objects.push_back(std::move(p.state));
  return scene;
}

Scene settle(const Scene& scene) {
  Scene out = scene;
  const std::size_t n = out.objects.size();
  std::vector<ConvexPolygon> fps;
  std::vector<double> bottoms(n);
  fps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Obb b = out.objects[i].box();
    fps.push_back(obb_footprint(b));
    bottoms[i] = obb_bottom(b);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (bottoms[a] != bottoms[b]) return bottoms[a] < bottoms[b];
    return out.objects[a].id < out.objects[b].id;
  });

  std::vector<double> tops(n, 0.0);
  std::vector<std::size_t> done;
  done.reserve(n);
  for (std::size_t i : order) {
    double rest = 0.0;
    for (std::size_t k : done)
      if (polygons_intersect(fps[i], fps[k])) rest = std::max(rest, tops[k]);
    ObjectState& o = out.objects[i];
    const double shift = rest - bottoms[i];
    // Already-resting boxes stay untouched.
    if (std::abs(shift) > 1e-12) o.pose.center.z() += shift;
    tops[i] = obb_top(o.box());
    done.push_back(i);
  }
  return out;
}

bool is_settled(const Scene& scene, double tol) {
  const Scene s = settle(scene);
  for (std::size_t i = 0; i < s.objects.size(); ++i)
    if (std::abs(s.objects[i].pose.center.z() - scene.objects[i].pose.center.z()) > tol)
      return false;
  return true;
}

SupportGraph support_graph(const Scene& scene) {
  if (!is_settled(scene)) throw MustSettleFirstError();
  const std::size_t n = scene.objects.size();
  std::vector<ConvexPolygon> fps;
  std::vector<double> tops(n), bottoms(n);
  fps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Obb b = scene.objects[i].box();
    fps.push_back(obb_footprint(b));
    tops[i] = obb_top(b);
    bottoms[i] = obb_bottom(b);
  }
  SupportGraph g;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (i != k && std::abs(bottoms[i] - tops[k]) <= kContactTol &&
          polygons_intersect(fps[i], fps[k]))
        g.edges.emplace_back(scene.objects[k].id, scene.objects[i].id);
  return g;
}

std::vector<std::pair<ObjectId, ObjectId>> interpenetrations(const Scene& scene) {
  const std::size_t n = scene.objects.size();
  std::vector<ConvexPolygon> fps;
  std::vector<double> tops(n), bottoms(n);
  fps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Obb b = scene.objects[i].box();
    fps.push_back(obb_footprint(b));
    tops[i] = obb_top(b);
    bottoms[i] = obb_bottom(b);
  }
  std::vector<std::pair<ObjectId, ObjectId>> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double overlap = std::min(tops[i], tops[j]) - std::max(bottoms[i], bottoms[j]);
      if (overlap > kContactTol && polygons_intersect(fps[i], fps[j]))
        out.emplace_back(scene.objects[i].id, scene.objects[j].id);
    }
  return out;
}

}  // namespace pickorder
