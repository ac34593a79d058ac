#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pickorder/geometry.hpp"

namespace pickorder {

using ObjectId = int;

enum class Difficulty { Easy, Moderate, Hard };

std::string_view to_string(Difficulty d) noexcept;
/// Accepts "easy", "moderate" (or "medium") and "hard".
Difficulty difficulty_from_string(std::string_view s);
/// 24 / 36 / 60 objects.
int object_count(Difficulty d) noexcept;
/// Probability that a new object is stacked on an existing one: 0.2 / 0.4 / 0.6.
double stack_probability(Difficulty d) noexcept;

/// Box and can templates roughly the size of common grocery items.
enum class Category { LargeBox, SmallBox, Can, FlatPack, Bar };

inline constexpr int kCategoryCount = 5;
std::string_view to_string(Category c) noexcept;
Category category_from_string(std::string_view s);

struct ExtentRange {
  Vec3 lo;
  Vec3 hi;
};
const ExtentRange& extent_range(Category c) noexcept;

struct ObjectState {
  ObjectId id = 0;
  Category category = Category::SmallBox;
  Vec3 extent = Vec3::Ones();
  Pose pose;

  Obb box() const { return Obb(pose, extent); }
  bool operator==(const ObjectState& o) const {
    return id == o.id && category == o.category && extent == o.extent &&
           pose.center == o.pose.center && pose.rpy == o.pose.rpy;
  }
};

struct Workspace {
  Vec2 min{-0.5, -0.5};
  Vec2 max{0.5, 0.5};

  bool contains(const Vec2& p) const noexcept {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
  bool operator==(const Workspace&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::Easy;
  Workspace workspace;
  Vec3 effector_home{0.7, -0.7, 0.5};
  std::vector<ObjectState> objects;

  /// Index of the object with this id; throws MissingObjectError.
  std::size_t index_of(ObjectId id) const;
  const ObjectState& object(ObjectId id) const { return objects[index_of(id)]; }
  ObjectState& object(ObjectId id) { return objects[index_of(id)]; }
  std::optional<std::size_t> find(ObjectId id) const noexcept;
  std::vector<ObjectId> ids() const;
  bool operator==(const Scene& o) const {
    return seed == o.seed && difficulty == o.difficulty && workspace == o.workspace &&
           effector_home == o.effector_home && objects == o.objects;
  }
};

/// Directed supporter -> supported edges.
struct SupportGraph {
  std::vector<std::pair<ObjectId, ObjectId>> edges;

  std::vector<ObjectId> supported_by(ObjectId supporter) const;
  std::vector<ObjectId> supporters_of(ObjectId supported) const;
};

/// Tolerance for resting contact and interpenetration checks, meters.
inline constexpr double kContactTol = 1e-6;

/// Deterministic in (seed, difficulty). Throws GenerationError if an object
/// cannot be placed after bounded retries.
Scene generate_scene(std::uint64_t seed, Difficulty difficulty);

/// Drops every box onto the table or the highest top among boxes below it
/// whose footprints intersect its own. Only z changes. Idempotent.
Scene settle(const Scene& scene);

bool is_settled(const Scene& scene, double tol = kContactTol);

/// Edge (k -> i) iff footprints intersect and bottom(i) == top(k) within 1e-6.
/// Throws MustSettleFirstError on an unsettled scene.
SupportGraph support_graph(const Scene& scene);

/// Pairs (i, j) whose footprints intersect and whose z-intervals overlap by more
/// than kContactTol.
std::vector<std::pair<ObjectId, ObjectId>> interpenetrations(const Scene& scene);

/// Structured text form: see README for the field list.
std::string scene_to_json(const Scene& scene);
/// Throws ParseError naming the offending field.
Scene scene_from_json(std::string_view text);

Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);

}  // namespace pickorder
