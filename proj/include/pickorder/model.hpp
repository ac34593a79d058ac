#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pickorder/priors.hpp"

namespace pickorder {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-object input features, in this order:
///   0-2  extent / 0.1 m
///   3    footprint area / 0.01 m^2
///   4    height of the top above the lowest box bottom / 0.1 m
///   5    |yaw| in radians
///   6-8  (center - effector home) / 0.5 m
///   9    |center - effector home| / 0.5 m
///   10   independence flag
///   11   topmost flag
///   12   number of footprints closer than tau, times 0.25
///   13   min neighbor footprint distance clipped at 0.2 m, / 0.1 m
inline constexpr int kFeatureCount = 14;

/// n x kFeatureCount, rows in scene.objects order.
MatrixXd compute_features(const Scene& scene, double tau);

/// Neighbor lists (indices into the point list), self excluded, sorted by
/// ascending distance with ties broken by ascending id.
struct SpatialGraph {
  std::vector<std::vector<std::size_t>> neighbors;
  std::size_t size() const noexcept { return neighbors.size(); }
};

/// Euclidean kNN. `ids` (optional) supplies the tie-break key; defaults to index.
SpatialGraph build_knn_graph(std::span<const Vec3> centers, int k,
                             std::span<const ObjectId> ids = {});

/// Offsets of each block inside the flat parameter vector (all matrices row-major).
struct ScorerLayout {
  explicit ScorerLayout(int dim);

  int dim;
  std::size_t embed_w, embed_b;    // kFeatureCount x d, d
  std::size_t fuse_w, fuse_b;      // 2d x d, d
  std::size_t self_q, self_k, self_v, self_o;     // d x d each
  std::size_t cross_q, cross_k, cross_v, cross_o; // d x d each
  std::size_t head_w, head_b;      // d, 1
  std::size_t total;
};

struct ScorerParams {
  int dim = 32;
  VectorXd values;

  ScorerParams() = default;
  ScorerParams(int d, VectorXd v);

  ScorerLayout layout() const { return ScorerLayout(dim); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  /// Row-major view of a block.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> block(
      std::size_t offset, Eigen::Index rows, Eigen::Index cols) const {
    return {values.data() + offset, rows, cols};
  }
};

/// Scaled-normal initialization; the head starts at `head_scale` times its fan-in scale.
ScorerParams init_params(int dim, std::uint64_t seed, double head_scale = 1.0);

struct ScorerConfig {
  int dim = 32;
  int k = 8;
  double tau = kDefaultTau;
};

struct ScoreOutput {
  VectorXd scores;                  ///< one per object, in scene.objects order
  std::optional<VectorXd> gradient; ///< d(sum upstream_i * score_i)/d(params)
};

/// Neighbor fusion: per object, element-wise max over neighbors of
/// Linear([f_i, f_j - f_i]); an empty neighborhood uses Linear([f_i, 0]).
MatrixXd fuse_neighbors(const MatrixXd& embeddings, const SpatialGraph& graph,
                        const ScorerParams& params);

/// Scores from a precomputed feature matrix and graph (rows in the order used
/// for max-pool tie-breaking). If `upstream` is given the gradient is filled.
ScoreOutput score_features(const MatrixXd& features, const SpatialGraph& graph,
                           const ScorerParams& params,
                           const std::optional<VectorXd>& upstream = std::nullopt);

/// Full pipeline on a scene. Objects are processed in ascending-id order, so
/// permuting scene.objects permutes the scores exactly.
ScoreOutput forward(const Scene& scene, double tau, int k, const ScorerParams& params);

/// Exact reverse-mode gradient of sum_i upstream_i * score_i. Max-pool ties
/// route the gradient to the lowest id.
VectorXd backward(const Scene& scene, double tau, int k, const ScorerParams& params,
                  const VectorXd& upstream);

/// Maps scores (scene.objects order) to the upstream gradient d(loss)/d(scores).
using UpstreamFn = std::function<VectorXd(const VectorXd&)>;

/// One forward pass plus the backward pass for an upstream gradient that may
/// depend on the scores (e.g. a loss). Returns scores and parameter gradient.
ScoreOutput forward_backward(const Scene& scene, double tau, int k, const ScorerParams& params,
                             const UpstreamFn& upstream_of);

/// Ranking by descending score, ties by ascending id.
Ranking ranking_from_scores(const Scene& scene, const VectorXd& scores);

/// Random scene with n objects and random params; returns the max relative
/// error between analytic and central-difference gradients of a random
/// linear functional of the scores.
double grad_check(std::uint64_t seed, int n, int d);

/// |a - f| / max(|a|, |f|, 1e-6), the per-coordinate error used by grad_check.
double gradient_relative_error(double analytic, double numeric) noexcept;

/// Random scene used by grad_check and property tests (boxes of mixed heights,
/// some tilted, some overlapping).
Scene random_test_scene(std::uint64_t seed, int n);

struct Checkpoint {
  ScorerConfig config;
  ScorerParams params;
};

inline constexpr const char* kCheckpointLayout = "pickorder-scorer/v1";

std::string checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);
Checkpoint load_checkpoint(const std::string& path);
void save_checkpoint(const Checkpoint& c, const std::string& path);

}  // namespace pickorder
