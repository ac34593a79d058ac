#include "pickorder/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pickorder/errors.hpp"
#include "pickorder/rng.hpp"

namespace pickorder {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GradMap = Eigen::Map<RowMat>;

constexpr double kLengthScale = 0.1;
constexpr double kAreaScale = 0.01;
constexpr double kReachScale = 0.5;
constexpr double kNeighborCountScale = 0.25;
constexpr double kDistanceClip = 0.2;

MatrixXd softmax_rows(const MatrixXd& s) {
  MatrixXd a(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (s.row(r).array() - m).exp().matrix();
    a.row(r) = e / e.sum();
  }
  return a;
}

// d(loss)/d(logits) for a row-wise softmax given d(loss)/d(probabilities).
MatrixXd softmax_rows_backward(const MatrixXd& a, const MatrixXd& da) {
  const VectorXd inner = (a.array() * da.array()).rowwise().sum();
  return (a.array() * (da.colwise() - inner).array()).matrix();
}

struct Trace {
  MatrixXd x, e;                   // features, tanh embeddings
  MatrixXd h;                      // fused tokens Q
  std::vector<long> fuse_arg;      // n*d neighbor index or -1
  std::vector<std::size_t> g_arg;  // d
  MatrixXd t, sq, sk, sv, sa, so, t1;
  MatrixXd mem, cq, ck, cv, ca, co, q2;
};

struct Weights {
  explicit Weights(const ScorerParams& p) : lay(p.dim) {
    const int d = p.dim;
    we = p.block(lay.embed_w, kFeatureCount, d);
    be = p.block(lay.embed_b, 1, d);
    wf = p.block(lay.fuse_w, 2 * d, d);
    bf = p.block(lay.fuse_b, 1, d);
    wq = p.block(lay.self_q, d, d);
    wk = p.block(lay.self_k, d, d);
    wv = p.block(lay.self_v, d, d);
    wo = p.block(lay.self_o, d, d);
    cq = p.block(lay.cross_q, d, d);
    ck = p.block(lay.cross_k, d, d);
    cv = p.block(lay.cross_v, d, d);
    co = p.block(lay.cross_o, d, d);
    wh = p.block(lay.head_w, d, 1);
    bh = p.values[static_cast<Eigen::Index>(lay.head_b)];
  }
  ScorerLayout lay;
  MatrixXd we, be, wf, bf, wq, wk, wv, wo, cq, ck, cv, co, wh;
  double bh;
};

// Fusion with argmax bookkeeping; arg[i*d+u] = neighbor index or -1 (empty).
// The message to i from j is (e_i A + b_f - e_i B) + e_j B.
MatrixXd fuse_impl(const MatrixXd& e, const SpatialGraph& graph, const MatrixXd& wf,
                   const MatrixXd& bf, std::vector<long>* arg) {
  const Eigen::Index n = e.rows(), d = e.cols();
  const MatrixXd self = (e * wf.topRows(d)).rowwise() + bf.row(0);
  const MatrixXd eb = e * wf.bottomRows(d);
  const MatrixXd base = self - eb;
  MatrixXd out(n, d);
  if (arg) arg->assign(static_cast<std::size_t>(n * d), -1);
  std::vector<long> best_j(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) {
      out.row(i) = self.row(i);
      continue;
    }
    std::fill(best_j.begin(), best_j.end(), -1);
    for (Eigen::Index u = 0; u < d; ++u) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j : nb) {
        const double msg = base(i, u) + eb(static_cast<Eigen::Index>(j), u);
        const long jl = static_cast<long>(j);
        if (msg > best || (msg == best && jl < best_j[u])) {
          best = msg;
          best_j[u] = jl;
        }
      }
      out(i, u) = best;
    }
    if (arg)
      for (Eigen::Index u = 0; u < d; ++u) (*arg)[static_cast<std::size_t>(i * d + u)] = best_j[u];
  }
  return out;
}

Trace run_forward(const MatrixXd& x, const SpatialGraph& graph, const Weights& w) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = w.lay.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Trace tr;
  tr.x = x;
  tr.e = ((x * w.we).rowwise() + w.be.row(0)).array().tanh().matrix();
  tr.h = fuse_impl(tr.e, graph, w.wf, w.bf, &tr.fuse_arg);

  // Global token: column-wise max, ties to the lowest row.
  Eigen::RowVectorXd g(d);
  tr.g_arg.assign(static_cast<std::size_t>(d), 0);
  for (Eigen::Index u = 0; u < d; ++u) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (tr.h(i, u) > tr.h(best, u)) best = i;
    g[u] = tr.h(best, u);
    tr.g_arg[static_cast<std::size_t>(u)] = static_cast<std::size_t>(best);
  }

  tr.t.resize(n + 1, d);
  tr.t.topRows(n) = tr.h;
  tr.t.row(n) = g;
  tr.sq = tr.t * w.wq;
  tr.sk = tr.t * w.wk;
  tr.sv = tr.t * w.wv;
  tr.sa = softmax_rows(tr.sq * tr.sk.transpose() * inv_sqrt_d);
  tr.so = tr.sa * tr.sv;
  tr.t1 = tr.t + tr.so * w.wo;

  tr.mem.resize(n + 1, d);
  tr.mem.row(0) = tr.t1.row(n);
  tr.mem.bottomRows(n) = tr.e;
  tr.cq = tr.t1.topRows(n) * w.cq;
  tr.ck = tr.mem * w.ck;
  tr.cv = tr.mem * w.cv;
  tr.ca = softmax_rows(tr.cq * tr.ck.transpose() * inv_sqrt_d);
  tr.co = tr.ca * tr.cv;
  tr.q2 = tr.t1.topRows(n) + tr.co * w.co;
  return tr;
}

VectorXd run_backward(const Trace& tr, const Weights& w, const VectorXd& ds) {
  const ScorerLayout& lay = w.lay;
  const Eigen::Index n = tr.x.rows();
  const Eigen::Index d = lay.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(lay.total));
  auto gblock = [&](std::size_t off, Eigen::Index r, Eigen::Index c) {
    return GradMap(grad.data() + off, r, c);
  };

  // Head.
  gblock(lay.head_w, d, 1) = tr.q2.transpose() * ds;
  grad[static_cast<Eigen::Index>(lay.head_b)] = ds.sum();
  const MatrixXd dq2 = ds * w.wh.transpose();

  // Cross-attention with residual.
  gblock(lay.cross_o, d, d) = tr.co.transpose() * dq2;
  const MatrixXd dco = dq2 * w.co.transpose();
  const MatrixXd dca = dco * tr.cv.transpose();
  const MatrixXd dcv = tr.ca.transpose() * dco;
  const MatrixXd dcs = softmax_rows_backward(tr.ca, dca) * inv_sqrt_d;
  const MatrixXd dcq = dcs * tr.ck;
  const MatrixXd dck = dcs.transpose() * tr.cq;
  gblock(lay.cross_q, d, d) = tr.t1.topRows(n).transpose() * dcq;
  gblock(lay.cross_k, d, d) = tr.mem.transpose() * dck;
  gblock(lay.cross_v, d, d) = tr.mem.transpose() * dcv;
  const MatrixXd dmem = dck * w.ck.transpose() + dcv * w.cv.transpose();

  MatrixXd dt1(n + 1, d);
  dt1.topRows(n) = dq2 + dcq * w.cq.transpose();
  dt1.row(n) = dmem.row(0);

  // Self-attention with residual.
  gblock(lay.self_o, d, d) = tr.so.transpose() * dt1;
  const MatrixXd dso = dt1 * w.wo.transpose();
  const MatrixXd dsa = dso * tr.sv.transpose();
  const MatrixXd dsv = tr.sa.transpose() * dso;
  const MatrixXd dss = softmax_rows_backward(tr.sa, dsa) * inv_sqrt_d;
  const MatrixXd dsq = dss * tr.sk;
  const MatrixXd dsk = dss.transpose() * tr.sq;
  gblock(lay.self_q, d, d) = tr.t.transpose() * dsq;
  gblock(lay.self_k, d, d) = tr.t.transpose() * dsk;
  gblock(lay.self_v, d, d) = tr.t.transpose() * dsv;
  const MatrixXd dt = dt1 + dsq * w.wq.transpose() + dsk * w.wk.transpose() + dsv * w.wv.transpose();

  // Global max-pool.
  MatrixXd dh = dt.topRows(n);
  for (Eigen::Index u = 0; u < d; ++u)
    dh(static_cast<Eigen::Index>(tr.g_arg[static_cast<std::size_t>(u)]), u) += dt(n, u);

  // Neighbor fusion: each output coordinate came from one message.
  MatrixXd deb = MatrixXd::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index u = 0; u < d; ++u) {
      const long j = tr.fuse_arg[static_cast<std::size_t>(i * d + u)];
      if (j < 0) continue;
      deb(j, u) += dh(i, u);
      deb(i, u) -= dh(i, u);
    }
  }
  gblock(lay.fuse_w, 2 * d, d).topRows(d) = tr.e.transpose() * dh;
  gblock(lay.fuse_w, 2 * d, d).bottomRows(d) = tr.e.transpose() * deb;
  gblock(lay.fuse_b, 1, d) = dh.colwise().sum();
  MatrixXd de = dmem.bottomRows(n) + dh * w.wf.topRows(d).transpose() + deb * w.wf.bottomRows(d).transpose();

  // Embedding.
  const MatrixXd dz = (de.array() * (1.0 - tr.e.array().square())).matrix();
  gblock(lay.embed_w, kFeatureCount, d) = tr.x.transpose() * dz;
  gblock(lay.embed_b, 1, d) = dz.colwise().sum();
  return grad;
}

ScoreOutput score_impl(const MatrixXd& features, const SpatialGraph& graph,
                       const ScorerParams& params, const UpstreamFn* upstream_of) {
  if (features.rows() == 0) throw EmptySceneError();
  if (features.cols() != kFeatureCount) throw ShapeError("feature matrix must have 14 columns");
  if (graph.size() != static_cast<std::size_t>(features.rows()))
    throw ShapeError("graph and features cover different object counts");
  if (params.size() != ScorerLayout(params.dim).total)
    throw ShapeError("parameter vector has wrong length");

  const Weights w(params);
  const Trace tr = run_forward(features, graph, w);
  ScoreOutput out;
  out.scores = (tr.q2 * w.wh).col(0).array() + w.bh;
  if (upstream_of) {
    const VectorXd up = (*upstream_of)(out.scores);
    if (up.size() != features.rows())
      throw ShapeError("upstream gradient must have one entry per object");
    out.gradient = run_backward(tr, w, up);
  }
  return out;
}

std::vector<std::size_t> id_order(const Scene& scene) {
  std::vector<std::size_t> order(scene.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scene.objects[a].id < scene.objects[b].id;
  });
  return order;
}

ScoreOutput scene_pass(const Scene& scene, double tau, int k, const ScorerParams& params,
                       const UpstreamFn* upstream_of) {
  const std::size_t n = scene.objects.size();
  if (n == 0) throw EmptySceneError();

  Scene canon = scene;
  const auto order = id_order(scene);
  for (std::size_t r = 0; r < n; ++r) canon.objects[r] = scene.objects[order[r]];

  const MatrixXd x = compute_features(canon, tau);
  std::vector<Vec3> centers;
  std::vector<ObjectId> ids;
  for (const auto& o : canon.objects) {
    centers.push_back(o.pose.center);
    ids.push_back(o.id);
  }
  const SpatialGraph graph = build_knn_graph(centers, k, ids);

  // Callers see scores and supply upstream gradients in their own object order.
  UpstreamFn canon_upstream;
  if (upstream_of) {
    canon_upstream = [&](const VectorXd& canon_scores) {
      VectorXd scores(static_cast<Eigen::Index>(n));
      for (std::size_t r = 0; r < n; ++r) scores[order[r]] = canon_scores[r];
      const VectorXd up = (*upstream_of)(scores);
      if (static_cast<std::size_t>(up.size()) != n)
        throw ShapeError("upstream gradient must have one entry per object");
      VectorXd canon_up(static_cast<Eigen::Index>(n));
      for (std::size_t r = 0; r < n; ++r) canon_up[r] = up[order[r]];
      return canon_up;
    };
  }
  ScoreOutput canon_out = score_impl(x, graph, params, upstream_of ? &canon_upstream : nullptr);
  ScoreOutput out;
  out.scores.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) out.scores[order[r]] = canon_out.scores[r];
  out.gradient = std::move(canon_out.gradient);
  return out;
}

}  // namespace

MatrixXd compute_features(const Scene& scene, double tau) {
  const std::size_t n = scene.objects.size();
  const SceneGeometry geom(scene);
  const auto flags = compute_flags_indexed(scene, geom, tau);
  const double floor = n ? *std::min_element(geom.bottoms.begin(), geom.bottoms.end()) : 0.0;
  MatrixXd x(static_cast<Eigen::Index>(n), kFeatureCount);
  for (std::size_t i = 0; i < n; ++i) {
    const ObjectState& o = scene.objects[i];
    const Vec3 rel = o.pose.center - scene.effector_home;
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = o.extent.x() / kLengthScale;
    x(r, 1) = o.extent.y() / kLengthScale;
    x(r, 2) = o.extent.z() / kLengthScale;
    x(r, 3) = flags[i].footprint_area / kAreaScale;
    x(r, 4) = (geom.tops[i] - floor) / kLengthScale;
    x(r, 5) = std::abs(o.pose.yaw());
    x(r, 6) = rel.x() / kReachScale;
    x(r, 7) = rel.y() / kReachScale;
    x(r, 8) = rel.z() / kReachScale;
    x(r, 9) = rel.norm() / kReachScale;
    x(r, 10) = flags[i].independent ? 1.0 : 0.0;
    x(r, 11) = flags[i].topmost ? 1.0 : 0.0;
    x(r, 12) = flags[i].neighbors_within_tau * kNeighborCountScale;
    x(r, 13) = std::min(flags[i].min_neighbor_distance, kDistanceClip) / kLengthScale;
  }
  return x;
}

SpatialGraph build_knn_graph(std::span<const Vec3> centers, int k, std::span<const ObjectId> ids) {
  if (k < 0) throw ConfigError("k must be non-negative");
  if (!ids.empty() && ids.size() != centers.size())
    throw ShapeError("ids and centers differ in length");
  const std::size_t n = centers.size();
  auto key = [&](std::size_t i) { return ids.empty() ? static_cast<long>(i) : static_cast<long>(ids[i]); };
  SpatialGraph g;
  g.neighbors.resize(n);
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), n ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back((centers[j] - centers[i]).squaredNorm(), j);
    std::sort(cand.begin(), cand.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return key(a.second) < key(b.second);
    });
    for (std::size_t t = 0; t < keep; ++t) g.neighbors[i].push_back(cand[t].second);
  }
  return g;
}

ScorerLayout::ScorerLayout(int d) : dim(d) {
  if (d < 1) throw ConfigError("model dimension must be positive");
  const auto ud = static_cast<std::size_t>(d);
  std::size_t off = 0;
  auto take = [&](std::size_t count) {
    const std::size_t at = off;
    off += count;
    return at;
  };
  embed_w = take(kFeatureCount * ud);
  embed_b = take(ud);
  fuse_w = take(2 * ud * ud);
  fuse_b = take(ud);
  self_q = take(ud * ud);
  self_k = take(ud * ud);
  self_v = take(ud * ud);
  self_o = take(ud * ud);
  cross_q = take(ud * ud);
  cross_k = take(ud * ud);
  cross_v = take(ud * ud);
  cross_o = take(ud * ud);
  head_w = take(ud);
  head_b = take(1);
  total = off;
}

ScorerParams::ScorerParams(int d, VectorXd v) : dim(d), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != ScorerLayout(d).total)
    throw ShapeError("parameter vector length does not match dimension " + std::to_string(d));
  if (!values.allFinite()) throw NumericError("parameters must be finite");
}

ScorerParams init_params(int dim, std::uint64_t seed, double head_scale) {
  const ScorerLayout lay(dim);
  VectorXd v = VectorXd::Zero(static_cast<Eigen::Index>(lay.total));
  Rng rng(seed, 0x1417);
  auto fill = [&](std::size_t off, std::size_t count, double sigma) {
    for (std::size_t i = 0; i < count; ++i) v[static_cast<Eigen::Index>(off + i)] = rng.normal(0.0, sigma);
  };
  const auto ud = static_cast<std::size_t>(dim);
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(dim));
  fill(lay.embed_w, kFeatureCount * ud, 1.0 / std::sqrt(static_cast<double>(kFeatureCount)));
  fill(lay.fuse_w, 2 * ud * ud, 1.0 / std::sqrt(2.0 * dim));
  for (std::size_t off : {lay.self_q, lay.self_k, lay.cross_q, lay.cross_k}) fill(off, ud * ud, inv_d);
  for (std::size_t off : {lay.self_v, lay.self_o, lay.cross_v, lay.cross_o}) fill(off, ud * ud, inv_d);
  fill(lay.head_w, ud, head_scale * inv_d);
  return ScorerParams(dim, std::move(v));
}

MatrixXd fuse_neighbors(const MatrixXd& embeddings, const SpatialGraph& graph,
                        const ScorerParams& params) {
  const int d = params.dim;
  if (embeddings.cols() != d) throw ShapeError("embedding width does not match parameters");
  if (graph.size() != static_cast<std::size_t>(embeddings.rows()))
    throw ShapeError("graph and embeddings cover different object counts");
  if (params.size() != ScorerLayout(d).total) throw ShapeError("parameter vector has wrong length");
  const ScorerLayout lay(d);
  return fuse_impl(embeddings, graph, params.block(lay.fuse_w, 2 * d, d),
                   params.block(lay.fuse_b, 1, d), nullptr);
}

ScoreOutput score_features(const MatrixXd& features, const SpatialGraph& graph,
                           const ScorerParams& params, const std::optional<VectorXd>& upstream) {
  if (!upstream) return score_impl(features, graph, params, nullptr);
  const UpstreamFn fixed = [&](const VectorXd&) { return *upstream; };
  return score_impl(features, graph, params, &fixed);
}

ScoreOutput forward(const Scene& scene, double tau, int k, const ScorerParams& params) {
  return scene_pass(scene, tau, k, params, nullptr);
}

VectorXd backward(const Scene& scene, double tau, int k, const ScorerParams& params,
                  const VectorXd& upstream) {
  const UpstreamFn fixed = [&](const VectorXd&) { return upstream; };
  return *scene_pass(scene, tau, k, params, &fixed).gradient;
}

ScoreOutput forward_backward(const Scene& scene, double tau, int k, const ScorerParams& params,
                             const UpstreamFn& upstream_of) {
  return scene_pass(scene, tau, k, params, &upstream_of);
}

Ranking ranking_from_scores(const Scene& scene, const VectorXd& scores) {
  if (static_cast<std::size_t>(scores.size()) != scene.objects.size())
    throw ShapeError("one score per object expected");
  std::vector<std::size_t> order(scene.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sb = scores[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return scene.objects[a].id < scene.objects[b].id;
  });
  Ranking r;
  r.reserve(order.size());
  for (std::size_t i : order) r.push_back(scene.objects[i].id);
  return r;
}

double gradient_relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

Scene random_test_scene(std::uint64_t seed, int n) {
  Rng rng(seed, 0x7e57);
  Scene s;
  s.seed = seed;
  s.difficulty = Difficulty::Easy;
  for (int i = 0; i < n; ++i) {
    ObjectState o;
    o.id = i;
    o.category = static_cast<Category>(rng.below(kCategoryCount));
    o.extent = Vec3(rng.uniform(0.04, 0.2), rng.uniform(0.04, 0.2), rng.uniform(0.03, 0.12));
    const bool tilted = rng.uniform() < 0.3;
    const Vec3 rpy(tilted ? rng.uniform(-0.6, 0.6) : 0.0, tilted ? rng.uniform(-0.6, 0.6) : 0.0,
                   rng.uniform(-3.1, 3.1));
    o.pose = Pose(Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(0.02, 0.3)), rpy);
    s.objects.push_back(o);
  }
  return s;
}

double grad_check(std::uint64_t seed, int n, int d) {
  if (n < 1) throw ConfigError("grad_check needs at least one object");
  Rng rng(seed, 0x9c);
  const Scene scene = random_test_scene(seed, n);
  ScorerParams params = init_params(d, derive_seed(seed, 1));
  // Perturb every block (including the zero biases) so no coordinate is trivially 0.
  for (Eigen::Index i = 0; i < params.values.size(); ++i) params.values[i] += rng.normal(0.0, 0.1);
  VectorXd c(n);
  for (int i = 0; i < n; ++i) c[i] = rng.uniform(-1.0, 1.0);
  const int k = std::min(3, n - 1);
  const double tau = kDefaultTau;

  const VectorXd analytic = backward(scene, tau, k, params, c);
  const double h = 1e-5;
  double worst = 0.0;
  ScorerParams probe = params;
  for (Eigen::Index p = 0; p < probe.values.size(); ++p) {
    const double keep = probe.values[p];
    probe.values[p] = keep + h;
    const double fp = c.dot(forward(scene, tau, k, probe).scores);
    probe.values[p] = keep - h;
    const double fm = c.dot(forward(scene, tau, k, probe).scores);
    probe.values[p] = keep;
    worst = std::max(worst, gradient_relative_error(analytic[p], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

}  // namespace pickorder
