#include "pickorder/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <unordered_map>

#include "pickorder/errors.hpp"
#include "pickorder/labels.hpp"
#include "pickorder/rng.hpp"

namespace pickorder {

namespace {

Vec3 random_lateral(Rng& rng, double magnitude) {
  const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {magnitude * std::cos(a), magnitude * std::sin(a), 0.0};
}

void shift(ObjectState& o, const Vec3& delta) { o.pose = Pose(o.pose.center + delta, o.pose.rpy); }

bool inside(const Scene& s, const ObjectState& o) {
  return s.workspace.contains(o.pose.center.head<2>());
}

}  // namespace

PickOutcome step_pick(Scene& state, ObjectId target, const Vec3& est_center, std::uint64_t seed,
                      double tau) {
  const std::size_t ti = state.index_of(target);
  const ObjectState tgt = state.objects[ti];
  const Obb tbox = tgt.box();
  const ConvexPolygon tfp = obb_footprint(tbox);
  const double ttop = obb_top(tbox), tbot = obb_bottom(tbox);

  std::map<ObjectId, Vec3> before;
  std::set<ObjectId> was_inside;
  for (const auto& o : state.objects) {
    before[o.id] = o.pose.center;
    if (inside(state, o)) was_inside.insert(o.id);
  }

  PickOutcome out;
  Rng rng(seed, 0x9e7);
  const bool close = (est_center - tgt.pose.center).norm() < kSuccessRadius;
  const bool topmost = local_optimality(target, state);
  const bool reachable = inside(state, tgt);
  bool moved = false;

  if (close && topmost && reachable) {
    out.success = true;
    out.removed = target;
    state.objects.erase(state.objects.begin() + static_cast<std::ptrdiff_t>(ti));
    for (auto& o : state.objects) {
      const Obb b = o.box();
      const ConvexPolygon fp = obb_footprint(b);
      const double bot = obb_bottom(b), top = obb_top(b);
      if (std::abs(bot - ttop) <= kContactTol && polygons_intersect(fp, tfp)) {
        const double ratio = intersection_area(fp, tfp) / fp.area();
        shift(o, random_lateral(rng, kSupportJitter * ratio));
        moved = true;
        continue;
      }
      const bool level = bot < ttop - kContactTol && top > tbot + kContactTol;
      const double d = polygon_min_distance(fp, tfp);
      if (!level || d >= tau) continue;
      Vec3 dir = o.pose.center - tgt.pose.center;
      dir.z() = 0.0;
      const double len = dir.norm();
      dir = len > 1e-12 ? Vec3(dir / len) : random_lateral(rng, 1.0);
      shift(o, dir * ((tau - d) * kPushFactor));
      moved = true;
    }
  } else if (!topmost) {
    for (auto& o : state.objects) {
      if (o.id == target) continue;
      const Obb b = o.box();
      if (obb_top(b) > ttop + kTopEpsilon && polygons_intersect(obb_footprint(b), tfp)) {
        shift(o, random_lateral(rng, kOccluderJitter));
        moved = true;
      }
    }
  }

  if (moved) state = settle(state);
  for (const auto& o : state.objects) {
    out.disturbance += (o.pose.center - before.at(o.id)).norm();
    if (was_inside.count(o.id) && !inside(state, o)) out.newly_residual.push_back(o.id);
  }
  return out;
}

std::string_view to_string(PolicyKind k) noexcept {
  switch (k) {
    case PolicyKind::Sph: return "sph";
    case PolicyKind::Learned: return "learned";
    case PolicyKind::ConfidenceRandom: return "confidence-random";
    case PolicyKind::DistanceGreedy: return "distance-greedy";
  }
  return "sph";
}

PolicyKind policy_kind_from_string(std::string_view s) {
  for (PolicyKind k : {PolicyKind::Sph, PolicyKind::Learned, PolicyKind::ConfidenceRandom,
                       PolicyKind::DistanceGreedy})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown policy '" + std::string(s) + "'");
}

void PolicyConfig::validate() const {
  if (replan_interval < 1) throw ConfigError("replan_interval must be >= 1");
  if (!(perception_sigma >= 0.0) || !std::isfinite(perception_sigma))
    throw ConfigError("perception sigma must be finite and >= 0");
  if (max_attempts_per_object < 1) throw ConfigError("max_attempts_per_object must be >= 1");
}

std::string PolicyConfig::label() const {
  std::string s = std::string(to_string(kind)) + "@" + std::to_string(replan_interval);
  if (perception_sigma > 0.0) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "~%g", perception_sigma);
    s += buf;
  }
  return s;
}

Ranking distance_greedy_order(const Scene& scene) {
  std::vector<std::pair<double, ObjectId>> keyed;
  for (const auto& o : scene.objects) keyed.emplace_back((o.pose.center - scene.effector_home).norm(), o.id);
  std::sort(keyed.begin(), keyed.end());
  Ranking r;
  for (const auto& [d, id] : keyed) r.push_back(id);
  return r;
}

Planner make_planner(PolicyKind kind, const Checkpoint* checkpoint, std::uint64_t seed) {
  switch (kind) {
    case PolicyKind::Sph:
      return [](const Scene& s) { return sph_order(s); };
    case PolicyKind::DistanceGreedy:
      return [](const Scene& s) { return distance_greedy_order(s); };
    case PolicyKind::ConfidenceRandom: {
      auto calls = std::make_shared<std::uint64_t>(0);
      return [seed, calls](const Scene& s) {
        Rng rng(seed, 0xc0f + (*calls)++);
        Ranking r = s.ids();
        for (std::size_t i = r.size(); i > 1; --i) std::swap(r[i - 1], r[rng.below(i)]);
        return r;
      };
    }
    case PolicyKind::Learned: {
      if (!checkpoint) throw ConfigError("the learned policy needs a checkpoint");
      const Checkpoint ck = *checkpoint;
      return [ck](const Scene& s) {
        return ranking_from_scores(s, forward(s, ck.config.tau, ck.config.k, ck.params).scores);
      };
    }
  }
  throw ConfigError("unknown policy kind");
}

double EpisodeReport::sr() const noexcept {
  return attempts > 0 ? static_cast<double>(successes) / attempts : 0.0;
}

double EpisodeReport::mean_plan_distance() const noexcept {
  if (plan_distances.empty()) return 0.0;
  double s = 0.0;
  for (auto d : plan_distances) s += static_cast<double>(d);
  return s / static_cast<double>(plan_distances.size());
}

namespace {

Ranking restrict_to(const Ranking& r, const std::set<ObjectId>& keep) {
  Ranking out;
  for (ObjectId id : r)
    if (keep.count(id)) out.push_back(id);
  return out;
}

}  // namespace

EpisodeReport run_episode(const Scene& scene, const PolicyConfig& policy, const Planner& planner,
                          std::uint64_t seed) {
  policy.validate();
  Scene state = settle(scene);
  EpisodeReport rep;
  rep.initial_count = static_cast<int>(state.objects.size());

  std::set<ObjectId> residual, skipped;
  std::map<ObjectId, int> tries;
  for (const auto& o : state.objects)
    if (!inside(state, o)) residual.insert(o.id);

  Rng noise(seed, 0x5e1);
  std::optional<Ranking> prev_plan;
  int step = 0;
  for (;;) {
    std::set<ObjectId> pickable;
    for (const auto& o : state.objects)
      if (!residual.count(o.id) && !skipped.count(o.id)) pickable.insert(o.id);
    if (pickable.empty()) break;

    const Ranking full = planner(state);
    if (!is_permutation_of(full, state.ids()))
      throw PlannerContractError("planner did not return a permutation of the scene ids");
    const Ranking plan = restrict_to(full, pickable);
    if (prev_plan) {
      std::set<ObjectId> common(plan.begin(), plan.end());
      std::set<ObjectId> prev_ids(prev_plan->begin(), prev_plan->end());
      std::erase_if(common, [&](ObjectId id) { return !prev_ids.count(id); });
      rep.plan_distances.push_back(levenshtein(restrict_to(*prev_plan, common), restrict_to(plan, common)));
    }
    prev_plan = plan;

    int executed = 0;
    for (ObjectId target : plan) {
      if (executed == policy.replan_interval) break;
      if (!state.find(target) || residual.count(target) || skipped.count(target)) continue;
      Vec3 est = state.object(target).pose.center;
      if (policy.perception_sigma > 0.0)
        for (int a = 0; a < 3; ++a) est[a] += noise.normal(0.0, policy.perception_sigma);
      const PickOutcome po = step_pick(state, target, est, derive_seed(seed, static_cast<std::uint64_t>(step)));
      ++rep.attempts;
      ++executed;
      if (po.success) {
        ++rep.successes;
      } else if (++tries[target] >= policy.max_attempts_per_object) {
        skipped.insert(target);
      }
      for (ObjectId id : po.newly_residual) {
        residual.insert(id);
        skipped.erase(id);
      }
      rep.total_disturbance += po.disturbance;
      rep.log.push_back({step, target, po.success, po.disturbance, po.newly_residual});
      ++step;
    }
  }
  rep.skipped = static_cast<int>(skipped.size());
  rep.residual_count = static_cast<int>(residual.size());
  return rep;
}

std::string episode_log_text(const EpisodeReport& report) {
  std::string out = "step target success disturbance residuals\n";
  char buf[128];
  for (const auto& a : report.log) {
    std::snprintf(buf, sizeof buf, "%d %d %d %.9f ", a.step, a.target, a.success ? 1 : 0, a.disturbance);
    out += buf;
    if (a.newly_residual.empty()) out += "-";
    for (std::size_t i = 0; i < a.newly_residual.size(); ++i)
      out += (i ? ";" : "") + std::to_string(a.newly_residual[i]);
    out += "\n";
  }
  return out;
}

std::string episode_report_text(const EpisodeReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "initial=%d successes=%d attempts=%d skipped=%d residual=%d disturbance=%.17g\n",
                report.initial_count, report.successes, report.attempts, report.skipped,
                report.residual_count, report.total_disturbance);
  std::string out = buf;
  out += "plan_distances=";
  for (std::size_t i = 0; i < report.plan_distances.size(); ++i)
    out += (i ? "," : "") + std::to_string(report.plan_distances[i]);
  out += "\n";
  return out + episode_log_text(report);
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

SuiteRow evaluate_policy(const PolicyConfig& policy, const std::vector<Scene>& scenes,
                         std::uint64_t seed, const Checkpoint* checkpoint) {
  policy.validate();
  if (scenes.empty()) throw ConfigError("evaluation needs at least one scene");
  SuiteRow row;
  row.policy = policy.label();
  row.difficulty = scenes.front().difficulty;
  std::vector<double> sr, rc, od;
  double ld = 0.0;
  for (const auto& s : scenes) {
    const std::uint64_t ep_seed = seed + s.seed;
    const Planner planner = make_planner(policy.kind, checkpoint, ep_seed);
    EpisodeReport rep = run_episode(s, policy, planner, ep_seed);
    sr.push_back(rep.sr());
    rc.push_back(rep.residual_count);
    od.push_back(rep.total_disturbance);
    ld += rep.mean_plan_distance();
    row.episodes.push_back(std::move(rep));
  }
  mean_std(sr, row.sr_mean, row.sr_std);
  mean_std(rc, row.rc_mean, row.rc_std);
  mean_std(od, row.od_mean, row.od_std);
  row.ld_mean = ld / static_cast<double>(scenes.size());
  return row;
}

std::vector<SuiteRow> evaluate_suite(const std::vector<PolicyConfig>& policies,
                                     const std::vector<Difficulty>& difficulties, int n_scenes,
                                     std::uint64_t seed, const Checkpoint* checkpoint) {
  if (n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
  std::map<Difficulty, std::vector<Scene>> scenes;
  for (Difficulty d : difficulties)
    for (int s = 0; s < n_scenes; ++s) scenes[d].push_back(generate_scene(seed + static_cast<std::uint64_t>(s), d));
  std::vector<SuiteRow> rows;
  for (const auto& p : policies)
    for (Difficulty d : difficulties) rows.push_back(evaluate_policy(p, scenes[d], seed, checkpoint));
  return rows;
}

std::string suite_csv(const std::vector<SuiteRow>& rows) {
  std::string out = "policy,difficulty,sr_mean,sr_std,rc_mean,rc_std,od_mean,od_std,ld_mean\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.policy.c_str(),
                  std::string(to_string(r.difficulty)).c_str(), r.sr_mean, r.sr_std, r.rc_mean,
                  r.rc_std, r.od_mean, r.od_std, r.ld_mean);
    out += buf;
  }
  return out;
}

}  // namespace pickorder
