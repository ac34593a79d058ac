#include <functional>
#include <set>

#include "doctest.h"
#include "pickorder/errors.hpp"
#include "pickorder/priors.hpp"
#include "pickorder/scene.hpp"
#include "support.hpp"

using namespace pickorder;
using testing::cube;
using testing::scene_of;

namespace {

bool acyclic(const Scene& s, const SupportGraph& g) {
  std::map<ObjectId, int> state;
  std::function<bool(ObjectId)> visit = [&](ObjectId v) {
    state[v] = 1;
    for (ObjectId w : g.supported_by(v)) {
      if (state[w] == 1) return false;
      if (state[w] == 0 && !visit(w)) return false;
    }
    state[v] = 2;
    return true;
  };
  for (ObjectId id : s.ids())
    if (state[id] == 0 && !visit(id)) return false;
  return true;
}

}  // namespace

TEST_CASE("difficulty tables") {
  CHECK(object_count(Difficulty::Easy) == 24);
  CHECK(object_count(Difficulty::Moderate) == 36);
  CHECK(object_count(Difficulty::Hard) == 60);
  CHECK(stack_probability(Difficulty::Easy) < stack_probability(Difficulty::Moderate));
  CHECK(stack_probability(Difficulty::Moderate) < stack_probability(Difficulty::Hard));
  CHECK(difficulty_from_string("medium") == Difficulty::Moderate);
  CHECK_THROWS_AS(difficulty_from_string("extreme"), ParseError);
}

TEST_CASE("generate_scene is deterministic and sized by difficulty") {
  for (Difficulty d : {Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard}) {
    const Scene a = generate_scene(42, d);
    CHECK(a.objects.size() == static_cast<std::size_t>(object_count(d)));
    CHECK(scene_to_json(a) == scene_to_json(generate_scene(42, d)));
    for (const auto& o : a.objects) CHECK(a.workspace.contains(o.pose.center.head<2>()));
  }
  CHECK_FALSE(scene_to_json(generate_scene(1, Difficulty::Easy)) ==
              scene_to_json(generate_scene(2, Difficulty::Easy)));
}

TEST_CASE("generated scenes have no interpenetration and are settled") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (Difficulty d : {Difficulty::Easy, Difficulty::Hard}) {
      const Scene s = generate_scene(seed, d);
      CHECK(interpenetrations(s).empty());
      CHECK(is_settled(s));
      std::set<ObjectId> ids;
      for (const auto& o : s.objects) {
        ids.insert(o.id);
        const ExtentRange& r = extent_range(o.category);
        for (int a = 0; a < 3; ++a) {
          CHECK(o.extent[a] >= r.lo[a]);
          CHECK(o.extent[a] <= r.hi[a]);
        }
      }
      CHECK(ids.size() == s.objects.size());
    }
  }
}

TEST_CASE("stacking frequency grows with difficulty") {
  auto stacked_fraction = [](Difficulty d) {
    double stacked = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Scene s = generate_scene(seed, d);
      for (const auto& o : s.objects) {
        total += 1;
        if (obb_bottom(o.box()) > 1e-6) stacked += 1;
      }
    }
    return stacked / total;
  };
  const double e = stacked_fraction(Difficulty::Easy);
  const double m = stacked_fraction(Difficulty::Moderate);
  const double h = stacked_fraction(Difficulty::Hard);
  CHECK(e < m);
  CHECK(m < h);
}

TEST_CASE("settle examples") {
  const Scene floating = scene_of({cube(0, 0, 0, 0.7)});
  CHECK(obb_bottom(settle(floating).objects[0].box()) == doctest::Approx(0.0));

  Scene drop = scene_of({testing::box(0, {0, 0, 0.1}, {0.3, 0.3, 0.2}), cube(1, 0.05, 0, 0.9)});
  const Scene settled = settle(drop);
  CHECK(obb_bottom(settled.objects[1].box()) == doctest::Approx(0.2));
  CHECK(settle(settled) == settled);
}

TEST_CASE("settle is idempotent on perturbed generated scenes") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Scene s = generate_scene(seed, Difficulty::Moderate);
    for (auto& o : s.objects) o.pose.center.z() += 0.05 * static_cast<double>(o.id % 3);
    const Scene once = settle(s);
    CHECK(settle(once) == once);
    CHECK(interpenetrations(once).empty());
  }
}

TEST_CASE("support_graph examples") {
  const Scene stack = settle(scene_of({cube(0, 0, 0, 0.05), cube(1, 0.02, 0, 0.5)}));
  const SupportGraph g = support_graph(stack);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::make_pair(0, 1));
  CHECK(g.supporters_of(1) == std::vector<ObjectId>{0});

  const Scene side = scene_of({cube(0, 0, 0, 0.05), cube(1, 0.11, 0, 0.05)});
  CHECK(support_graph(side).edges.empty());

  const Scene floating = scene_of({cube(0, 0, 0, 0.5)});
  CHECK_THROWS_AS(support_graph(floating), MustSettleFirstError);
}

TEST_CASE("support graphs are acyclic and consistent with heights") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Scene s = generate_scene(seed, seed % 2 ? Difficulty::Hard : Difficulty::Moderate);
    const SupportGraph g = support_graph(s);
    CHECK(acyclic(s, g));
    for (const auto& [k, i] : g.edges)
      CHECK(std::abs(obb_top(s.object(k).box()) - obb_bottom(s.object(i).box())) <= 1e-6);
    for (const auto& o : s.objects)
      if (obb_bottom(o.box()) > 1e-6) CHECK_FALSE(g.supporters_of(o.id).empty());
  }
}

TEST_CASE("non-topmost objects have something above them") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(seed, Difficulty::Hard);
    const auto flags = compute_flags(s, kDefaultTau);
    for (const auto& o : s.objects) {
      if (flags.at(o.id).topmost) continue;
      bool above = false;
      const ConvexPolygon fp = obb_footprint(o.box());
      for (const auto& k : s.objects)
        if (k.id != o.id && polygons_intersect(obb_footprint(k.box()), fp) &&
            obb_bottom(k.box()) >= obb_top(o.box()) - 1e-6)
          above = true;
      CHECK(above);
    }
  }
}

TEST_CASE("scene text round trip and parse errors") {
  const Scene s = generate_scene(9, Difficulty::Easy);
  const std::string text = scene_to_json(s);
  CHECK(scene_from_json(text) == s);
  CHECK(scene_to_json(scene_from_json(text)) == text);

  std::string missing = text;
  missing.replace(missing.find("\"effector_home\""), 15, "\"effector_hom\"");
  try {
    scene_from_json(missing);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("effector_home") != std::string::npos);
  }
  CHECK_THROWS_AS(scene_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(load_scene("/nonexistent/scene.json"), IoError);
}

TEST_CASE("index_of reports missing ids") {
  const Scene s = scene_of({cube(3, 0, 0, 0.05)});
  CHECK(s.index_of(3) == 0);
  CHECK_THROWS_AS(s.index_of(4), MissingObjectError);
}
