#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pickorder/model.hpp"

namespace pickorder {

struct MatchConfig {
  double center_weight = 1.0;    ///< per meter
  double extent_weight = 1.0;    ///< per meter (L1)
  double category_weight = 1.0;  ///< per mismatch

  void validate() const;
};

/// Injective partial map from predictions to ground truth.
struct Assignment {
  std::vector<long> pred_to_gt;  ///< -1 when unmatched
  std::vector<long> gt_to_pred;  ///< -1 when unmatched
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_gt;
  double total_cost = 0.0;

  bool is_identity() const;
};

/// Minimum-cost rectangular assignment on a rows x cols cost matrix
/// (min(rows, cols) pairs are matched). O(n^2 m) shortest augmenting paths.
Assignment solve_assignment(const MatrixXd& cost);

double match_cost(const ObjectState& pred, const ObjectState& gt, const MatchConfig& cfg);

/// Globally optimal matching of predicted to ground-truth objects.
Assignment hungarian_match(const std::vector<ObjectState>& pred, const std::vector<ObjectState>& gt,
                           const MatchConfig& cfg = {});

enum class LossNormalization { Sum, MeanPerPair };

struct OrderLoss {
  double value = 0.0;
  VectorXd grad;  ///< d value / d score, one per prediction
  std::size_t pairs = 0;
};

/// Weighted pairwise logistic ranking loss:
///   sum over gt pairs (j, k) with o_j < o_k of
///   log(1 + |o_j - o_k|) * log(1 + exp(s_pred(k) - s_pred(j))).
/// Unmatched ground truth objects contribute nothing.
OrderLoss order_loss(const VectorXd& scores, const std::vector<int>& gt_ranks,
                     const Assignment& assignment,
                     LossNormalization norm = LossNormalization::Sum);

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 24;
  int epochs = 10;
  double loss_weight = 5.0;
  double lr_floor_factor = 0.01;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  ScorerConfig scorer;
  double head_init_scale = 1.0;
  /// Perception-noise mode: predictions are jittered / dropped / duplicated copies.
  double pred_center_sigma = 0.0;
  double pred_drop_prob = 0.0;
  double pred_duplicate_prob = 0.0;
  MatchConfig match;
  double val_fraction = 0.2;

  void validate() const;
};

/// Parses "key = value" lines ('#' starts a comment). Unknown keys and
/// malformed values raise ConfigError naming the key.
TrainConfig parse_train_config(const std::string& text);
std::string train_config_to_text(const TrainConfig& cfg);

/// Cosine annealing from lr0 down to lr_floor_factor * lr0.
double cosine_lr(long step, long total_steps, const TrainConfig& cfg);

/// Decoupled-weight-decay Adam.
class AdamW {
 public:
  AdamW(std::size_t n, const TrainConfig& cfg);
  void step(VectorXd& params, const VectorXd& grad, double lr);
  long steps() const noexcept { return t_; }

 private:
  VectorXd m_, v_;
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

struct TrainingExample {
  Scene scene;
  Ranking ranking;  ///< ground-truth order, first = picked first
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_kendall_tau = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ScorerParams params;
  std::vector<EpochStats> history;
};

/// Rank values (1 = first) for every object of the scene, indexed like scene.objects.
std::vector<int> ranks_from_ranking(const Scene& scene, const Ranking& ranking);

/// lambda * order loss (mean per pair) and its parameter gradient for one example.
double example_loss_and_grad(const TrainingExample& ex, const ScorerParams& params,
                             const TrainConfig& cfg, VectorXd* grad, std::uint64_t noise_seed = 0);

/// Mean Kendall tau between predicted and labelled orders.
double mean_kendall_tau(const std::vector<TrainingExample>& set, const ScorerParams& params,
                        const ScorerConfig& scorer);

/// Mini-batch AdamW with the cosine schedule; deterministic given cfg.seed.
/// Throws ConfigError on an empty training set.
TrainResult train(const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val_set, const TrainConfig& cfg);

/// Deterministic split: scenes sorted by seed, the last val_fraction go to validation.
void split_by_seed(const std::vector<TrainingExample>& all, double val_fraction,
                   std::vector<TrainingExample>& train_set, std::vector<TrainingExample>& val_set);

/// CSV with header epoch,mean_loss,val_kendall_tau,lr.
std::string metrics_csv(const std::vector<EpochStats>& history);

}  // namespace pickorder
