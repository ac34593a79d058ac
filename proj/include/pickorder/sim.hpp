#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pickorder/metrics.hpp"
#include "pickorder/model.hpp"

namespace pickorder {

/// A pick succeeds only if the effector lands closer than this to the true center.
inline constexpr double kSuccessRadius = 0.05;
/// Lateral jitter applied to each occluder on a blocked pick, meters.
inline constexpr double kOccluderJitter = 0.01;
/// Lateral jitter per unit overlap ratio for objects resting on a removed one.
inline constexpr double kSupportJitter = 0.01;
/// Fraction of the tau shortfall by which close neighbors are pushed away.
inline constexpr double kPushFactor = 0.5;

struct PickOutcome {
  bool success = false;
  double disturbance = 0.0;  ///< summed displacement of the objects that moved
  std::vector<ObjectId> newly_residual;
  std::optional<ObjectId> removed;
};

/// Executes one pick on `state` (which must be settled).
///  success iff |est_center - center| < kSuccessRadius, the target is topmost and
///  its center lies inside the workspace.
///  success: the target is removed; objects it supported get a random lateral
///    jitter of kSupportJitter * (overlap area / own footprint area); other
///    objects at the target's level with footprint distance d < tau are pushed
///    horizontally away from the target by (tau - d) * kPushFactor; everything
///    is then re-settled.
///  blocked (not topmost): each occluder is jittered kOccluderJitter in a random
///    horizontal direction, then the scene is re-settled.
///  other failures leave the scene untouched.
/// newly_residual lists objects whose centers crossed from inside to outside
/// the workspace during this action.
PickOutcome step_pick(Scene& state, ObjectId target, const Vec3& est_center, std::uint64_t seed,
                      double tau = kDefaultTau);

enum class PolicyKind { Sph, Learned, ConfidenceRandom, DistanceGreedy };

std::string_view to_string(PolicyKind k) noexcept;
/// "sph", "learned", "confidence-random" or "distance-greedy".
PolicyKind policy_kind_from_string(std::string_view s);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Sph;
  int replan_interval = 1;
  double perception_sigma = 0.0;  ///< per-axis std of the effector landing error, meters
  int max_attempts_per_object = 3;

  void validate() const;
  /// e.g. "sph@1"; a nonzero sigma is appended as "~0.01".
  std::string label() const;
};

/// Maps the current scene to a ranking of all of its ids.
using Planner = std::function<Ranking(const Scene&)>;

/// Planner for a policy kind. Learned needs a checkpoint (ConfigError otherwise);
/// confidence-random draws its orders from `seed`.
Planner make_planner(PolicyKind kind, const Checkpoint* checkpoint = nullptr, std::uint64_t seed = 0);

Ranking distance_greedy_order(const Scene& scene);

struct ActionRecord {
  int step = 0;
  ObjectId target = 0;
  bool success = false;
  double disturbance = 0.0;
  std::vector<ObjectId> newly_residual;
};

struct EpisodeReport {
  int initial_count = 0;
  int successes = 0;
  int attempts = 0;
  int skipped = 0;
  int residual_count = 0;
  double total_disturbance = 0.0;
  std::vector<std::size_t> plan_distances;
  std::vector<ActionRecord> log;

  /// successes / attempts (0 when nothing was attempted).
  double sr() const noexcept;
  /// Mean of plan_distances (0 when fewer than two plans were made).
  double mean_plan_distance() const noexcept;
};

/// Closed-loop episode. The scene is settled first; objects starting outside
/// the workspace count as residual. Every replan_interval actions the planner
/// ranks the current scene and the order is restricted to pickable objects;
/// successive plans are compared by Levenshtein distance over their common ids.
/// Throws PlannerContractError if a plan is not a permutation of the scene ids.
EpisodeReport run_episode(const Scene& scene, const PolicyConfig& policy, const Planner& planner,
                          std::uint64_t seed);

/// One action per line: step target success disturbance residuals.
std::string episode_log_text(const EpisodeReport& report);
/// Complete, deterministic text form of a report.
std::string episode_report_text(const EpisodeReport& report);

struct SuiteRow {
  std::string policy;
  Difficulty difficulty = Difficulty::Easy;
  double sr_mean = 0.0, sr_std = 0.0;
  double rc_mean = 0.0, rc_std = 0.0;
  double od_mean = 0.0, od_std = 0.0;
  double ld_mean = 0.0;
  std::vector<EpisodeReport> episodes;
};

/// Runs one policy on the given scenes; episode i uses seed + scenes[i].seed.
SuiteRow evaluate_policy(const PolicyConfig& policy, const std::vector<Scene>& scenes,
                         std::uint64_t seed, const Checkpoint* checkpoint = nullptr);

/// For every (policy, difficulty): n_scenes generated scenes with seeds
/// seed, seed + 1, ... Rows ordered by policy, then difficulty.
std::vector<SuiteRow> evaluate_suite(const std::vector<PolicyConfig>& policies,
                                     const std::vector<Difficulty>& difficulties, int n_scenes,
                                     std::uint64_t seed, const Checkpoint* checkpoint = nullptr);

/// Header policy,difficulty,sr_mean,sr_std,rc_mean,rc_std,od_mean,od_std,ld_mean.
std::string suite_csv(const std::vector<SuiteRow>& rows);

}  // namespace pickorder
