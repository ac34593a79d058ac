#include "pickorder/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "pickorder/errors.hpp"
#include "pickorder/labels.hpp"
#include "pickorder/metrics.hpp"
#include "pickorder/rng.hpp"

namespace pickorder {

void MatchConfig::validate() const {
  for (double w : {center_weight, extent_weight, category_weight})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("match weights must be finite and >= 0");
  if (center_weight == 0.0 && extent_weight == 0.0 && category_weight == 0.0)
    throw ConfigError("at least one match weight must be positive");
}

bool Assignment::is_identity() const {
  if (!unmatched_pred.empty() || !unmatched_gt.empty()) return false;
  for (std::size_t i = 0; i < pred_to_gt.size(); ++i)
    if (pred_to_gt[i] != static_cast<long>(i)) return false;
  return true;
}

namespace {

// Shortest augmenting paths with potentials; requires rows <= cols.
// Returns, for each row, its column.
std::vector<long> assign_rows(const MatrixXd& a) {
  const long n = a.rows(), m = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<long> p(m + 1, 0), way(m + 1, 0);
  for (long i = 1; i <= n; ++i) {
    p[0] = i;
    long j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const long i0 = p[j0];
      double delta = inf;
      long j1 = 0;
      for (long j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (long j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const long j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<long> row_to_col(static_cast<std::size_t>(n), -1);
  for (long j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

Assignment solve_assignment(const MatrixXd& cost) {
  if (!cost.allFinite()) throw NumericError("assignment cost matrix has non-finite entries");
  const long rows = cost.rows(), cols = cost.cols();
  Assignment out;
  out.pred_to_gt.assign(static_cast<std::size_t>(rows), -1);
  out.gt_to_pred.assign(static_cast<std::size_t>(cols), -1);
  if (rows > 0 && cols > 0) {
    if (rows <= cols) {
      const auto r2c = assign_rows(cost);
      for (long r = 0; r < rows; ++r) {
        out.pred_to_gt[r] = r2c[r];
        out.gt_to_pred[r2c[r]] = r;
      }
    } else {
      const MatrixXd t = cost.transpose();
      const auto c2r = assign_rows(t);
      for (long c = 0; c < cols; ++c) {
        out.gt_to_pred[c] = c2r[c];
        out.pred_to_gt[c2r[c]] = c;
      }
    }
  }
  for (long r = 0; r < rows; ++r) {
    if (out.pred_to_gt[r] < 0)
      out.unmatched_pred.push_back(static_cast<std::size_t>(r));
    else
      out.total_cost += cost(r, out.pred_to_gt[r]);
  }
  for (long c = 0; c < cols; ++c)
    if (out.gt_to_pred[c] < 0) out.unmatched_gt.push_back(static_cast<std::size_t>(c));
  return out;
}

double match_cost(const ObjectState& pred, const ObjectState& gt, const MatchConfig& cfg) {
  return cfg.center_weight * (pred.pose.center - gt.pose.center).norm() +
         cfg.extent_weight * (pred.extent - gt.extent).cwiseAbs().sum() +
         cfg.category_weight * (pred.category == gt.category ? 0.0 : 1.0);
}

Assignment hungarian_match(const std::vector<ObjectState>& pred, const std::vector<ObjectState>& gt,
                           const MatchConfig& cfg) {
  cfg.validate();
  MatrixXd cost(static_cast<Eigen::Index>(pred.size()), static_cast<Eigen::Index>(gt.size()));
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j) cost(i, j) = match_cost(pred[i], gt[j], cfg);
  return solve_assignment(cost);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

OrderLoss order_loss(const VectorXd& scores, const std::vector<int>& gt_ranks,
                     const Assignment& assignment, LossNormalization norm) {
  if (!scores.allFinite()) throw NumericError("order loss received a non-finite score");
  if (assignment.gt_to_pred.size() != gt_ranks.size())
    throw ShapeError("assignment and gt_ranks cover different object counts");
  if (assignment.pred_to_gt.size() != static_cast<std::size_t>(scores.size()))
    throw ShapeError("assignment and scores cover different prediction counts");

  OrderLoss out;
  out.grad = VectorXd::Zero(scores.size());
  const std::size_t g = gt_ranks.size();
  for (std::size_t j = 0; j < g; ++j) {
    const long pj = assignment.gt_to_pred[j];
    if (pj < 0) continue;
    for (std::size_t k = 0; k < g; ++k) {
      const long pk = assignment.gt_to_pred[k];
      if (pk < 0 || gt_ranks[j] >= gt_ranks[k]) continue;
      const double w = std::log1p(static_cast<double>(gt_ranks[k] - gt_ranks[j]));
      const double margin = scores[pk] - scores[pj];
      out.value += w * softplus(margin);
      const double d = w * sigmoid(margin);
      out.grad[pk] += d;
      out.grad[pj] -= d;
      ++out.pairs;
    }
  }
  if (norm == LossNormalization::MeanPerPair && out.pairs > 0) {
    const double inv = 1.0 / static_cast<double>(out.pairs);
    out.value *= inv;
    out.grad *= inv;
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(loss_weight > 0.0) || !std::isfinite(loss_weight)) throw ConfigError("loss_weight must be > 0");
  if (!(lr_floor_factor >= 0.0 && lr_floor_factor <= 1.0))
    throw ConfigError("lr_floor_factor must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (scorer.dim < 1) throw ConfigError("dim must be >= 1");
  if (scorer.k < 0) throw ConfigError("k must be >= 0");
  if (!(scorer.tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(head_init_scale >= 0.0)) throw ConfigError("head_init_scale must be >= 0");
  if (!(pred_center_sigma >= 0.0)) throw ConfigError("pred_center_sigma must be >= 0");
  if (!(pred_drop_prob >= 0.0 && pred_drop_prob < 1.0))
    throw ConfigError("pred_drop_prob must lie in [0, 1)");
  if (!(pred_duplicate_prob >= 0.0 && pred_duplicate_prob <= 1.0))
    throw ConfigError("pred_duplicate_prob must lie in [0, 1]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  match.validate();
}

namespace {

struct ConfigKey {
  const char* name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

#define PO_DOUBLE(key, field)                                                                \
  ConfigKey {                                                                                \
    key, [](TrainConfig& c, const std::string& v) { c.field = parse_double(key, v); },       \
        [](const TrainConfig& c) { return fmt_double(c.field); }                             \
  }
#define PO_INT(key, field)                                                                   \
  ConfigKey {                                                                                \
    key, [](TrainConfig& c, const std::string& v) { c.field = static_cast<int>(parse_int(key, v)); }, \
        [](const TrainConfig& c) { return std::to_string(c.field); }                         \
  }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      PO_DOUBLE("learning_rate", learning_rate),
      PO_INT("batch_size", batch_size),
      PO_INT("epochs", epochs),
      PO_DOUBLE("loss_weight", loss_weight),
      PO_DOUBLE("lr_floor_factor", lr_floor_factor),
      PO_DOUBLE("weight_decay", weight_decay),
      PO_DOUBLE("beta1", beta1),
      PO_DOUBLE("beta2", beta2),
      PO_DOUBLE("adam_eps", adam_eps),
      ConfigKey{"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                [](const TrainConfig& c) { return std::to_string(c.seed); }},
      PO_INT("dim", scorer.dim),
      PO_INT("k", scorer.k),
      PO_DOUBLE("tau", scorer.tau),
      PO_DOUBLE("head_init_scale", head_init_scale),
      PO_DOUBLE("pred_center_sigma", pred_center_sigma),
      PO_DOUBLE("pred_drop_prob", pred_drop_prob),
      PO_DOUBLE("pred_duplicate_prob", pred_duplicate_prob),
      PO_DOUBLE("match_center_weight", match.center_weight),
      PO_DOUBLE("match_extent_weight", match.extent_weight),
      PO_DOUBLE("match_category_weight", match.category_weight),
      PO_DOUBLE("val_fraction", val_fraction),
  };
  return keys;
}

#undef PO_DOUBLE
#undef PO_INT

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(),
                                 [&](const ConfigKey& k) { return key == k.name; });
    if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

std::string train_config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

double cosine_lr(long step, long total_steps, const TrainConfig& cfg) {
  const double lr0 = cfg.learning_rate;
  if (total_steps <= 0) return lr0;
  if (step < 0 || step > total_steps) throw ConfigError("step outside [0, total_steps]");
  const double floor = cfg.lr_floor_factor * lr0;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return floor + (lr0 - floor) * (1.0 + std::cos(phase)) / 2.0;
}

AdamW::AdamW(std::size_t n, const TrainConfig& cfg)
    : m_(VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(VectorXd::Zero(static_cast<Eigen::Index>(n))),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      wd_(cfg.weight_decay) {}

void AdamW::step(VectorXd& params, const VectorXd& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ShapeError("optimizer state and parameter sizes differ");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params *= 1.0 - lr * wd_;
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

std::vector<int> ranks_from_ranking(const Scene& scene, const Ranking& ranking) {
  if (!is_permutation_of(ranking, scene.ids()))
    throw ShapeError("ranking is not a permutation of the scene ids");
  std::vector<int> ranks(scene.objects.size(), 0);
  for (std::size_t r = 0; r < ranking.size(); ++r) ranks[scene.index_of(ranking[r])] = static_cast<int>(r) + 1;
  return ranks;
}

namespace {

bool noisy_perception(const TrainConfig& cfg) {
  return cfg.pred_center_sigma > 0.0 || cfg.pred_drop_prob > 0.0 || cfg.pred_duplicate_prob > 0.0;
}

// Simulated detections: jittered copies of ground truth, some dropped, some duplicated.
Scene perceive(const Scene& gt, const TrainConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, 0xde7ec7);
  Scene pred = gt;
  pred.objects.clear();
  ObjectId next = 0;
  auto jittered = [&](const ObjectState& o) {
    ObjectState p = o;
    p.id = next++;
    Vec3 c = o.pose.center;
    for (int a = 0; a < 3; ++a) c[a] += rng.normal(0.0, cfg.pred_center_sigma);
    p.pose = Pose(c, o.pose.rpy);
    return p;
  };
  for (const auto& o : gt.objects) {
    if (rng.uniform() < cfg.pred_drop_prob) continue;
    pred.objects.push_back(jittered(o));
    if (rng.uniform() < cfg.pred_duplicate_prob) pred.objects.push_back(jittered(o));
  }
  if (pred.objects.empty()) pred.objects.push_back(jittered(gt.objects.front()));
  return pred;
}

}  // namespace

double example_loss_and_grad(const TrainingExample& ex, const ScorerParams& params,
                             const TrainConfig& cfg, VectorXd* grad, std::uint64_t noise_seed) {
  const std::vector<int> ranks = ranks_from_ranking(ex.scene, ex.ranking);
  const bool noisy = noisy_perception(cfg);
  const Scene pred = noisy ? perceive(ex.scene, cfg, noise_seed) : ex.scene;
  const Assignment assignment = hungarian_match(pred.objects, ex.scene.objects, cfg.match);
  if (!noisy && !assignment.is_identity())
    throw NumericError("matching ground truth against itself did not return the identity");

  double loss = 0.0;
  const UpstreamFn upstream = [&](const VectorXd& scores) {
    const OrderLoss l = order_loss(scores, ranks, assignment, LossNormalization::MeanPerPair);
    loss = cfg.loss_weight * l.value;
    return VectorXd(cfg.loss_weight * l.grad);
  };
  const ScorerConfig& sc = cfg.scorer;
  if (grad) {
    *grad = *forward_backward(pred, sc.tau, sc.k, params, upstream).gradient;
  } else {
    upstream(forward(pred, sc.tau, sc.k, params).scores);
  }
  return loss;
}

double mean_kendall_tau(const std::vector<TrainingExample>& set, const ScorerParams& params,
                        const ScorerConfig& scorer) {
  if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& ex : set) {
    const VectorXd s = forward(ex.scene, scorer.tau, scorer.k, params).scores;
    sum += kendall_tau(ranking_from_scores(ex.scene, s), ex.ranking);
  }
  return sum / static_cast<double>(set.size());
}

namespace {

// Runs fn(i) for i in [0, n) on a small worker pool; results are written by index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(hw, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

TrainResult train(const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");

  TrainResult result;
  result.params = init_params(cfg.scorer.dim, cfg.seed, cfg.head_init_scale);
  AdamW opt(result.params.size(), cfg);

  const std::size_t n = train_set.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const long batches_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;
  long step = 0;

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(cfg.seed, 0x5400 + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    double lr = cosine_lr(step, total_steps, cfg);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const std::size_t b = end - start;
      std::vector<VectorXd> grads(b);
      std::vector<double> losses(b, 0.0);
      parallel_for(b, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        const std::uint64_t noise_seed =
            derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)), idx);
        losses[i] = example_loss_and_grad(train_set[idx], result.params, cfg, &grads[i], noise_seed);
      });
      VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(result.params.size()));
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        g += grads[i];
        batch_loss += losses[i];
      }
      g /= static_cast<double>(b);
      loss_sum += batch_loss / static_cast<double>(b);
      lr = cosine_lr(step, total_steps, cfg);
      opt.step(result.params.values, g, lr);
      ++step;
    }
    EpochStats st;
    st.epoch = epoch + 1;
    st.mean_loss = loss_sum / static_cast<double>(batches_per_epoch);
    st.val_kendall_tau = mean_kendall_tau(val_set, result.params, cfg.scorer);
    st.lr = lr;
    result.history.push_back(st);
  }
  return result;
}

void split_by_seed(const std::vector<TrainingExample>& all, double val_fraction,
                   std::vector<TrainingExample>& train_set, std::vector<TrainingExample>& val_set) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].scene.seed < all[b].scene.seed; });
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(all.size())));
  // Scenes sharing a seed stay on the same side of the split.
  std::size_t cut = all.size() - n_val;
  while (cut > 0 && cut < all.size() && all[idx[cut]].scene.seed == all[idx[cut - 1]].scene.seed) ++cut;
  train_set.clear();
  val_set.clear();
  for (std::size_t i = 0; i < idx.size(); ++i) (i < cut ? train_set : val_set).push_back(all[idx[i]]);
}

std::string metrics_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,mean_loss,val_kendall_tau,lr\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", h.epoch, h.mean_loss, h.val_kendall_tau, h.lr);
    out += buf;
  }
  return out;
}

}  // namespace pickorder
