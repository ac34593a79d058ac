#include "pickorder/labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

#include "pickorder/errors.hpp"
#include "pickorder/rng.hpp"

namespace pickorder {

bool is_permutation_of(const Ranking& r, const std::vector<ObjectId>& ids) {
  if (r.size() != ids.size()) return false;
  std::vector<ObjectId> a = r, b = ids;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b && std::adjacent_find(a.begin(), a.end()) == a.end();
}

std::vector<Ranking> oracle_rankings(const Scene& scene, int k, double jitter, std::uint64_t seed,
                                     const SphConfig& cfg) {
  if (scene.objects.empty()) throw EmptySceneError();
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(jitter >= 0.0 && jitter <= 1.0)) throw ConfigError("jitter must lie in [0, 1]");
  const std::size_t n = scene.objects.size();
  std::vector<Ranking> out;
  out.reserve(k);
  std::vector<double> primary(n, 1.0), secondary(n, 1.0);
  for (int r = 0; r < k; ++r) {
    if (jitter > 0.0) {
      Rng rng(seed, static_cast<std::uint64_t>(r));
      for (std::size_t i = 0; i < n; ++i) {
        primary[i] = rng.uniform(1.0 - jitter, 1.0 + jitter);
        secondary[i] = rng.uniform(1.0 - jitter, 1.0 + jitter);
      }
    }
    out.push_back(sph_order_scaled(scene, cfg, primary, secondary));
  }
  return out;
}

Ranking perturb_pairs(const Ranking& r, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio must lie in [0, 1]");
  const std::size_t n = r.size();
  const std::size_t pairs = n * (n - (n > 0 ? 1 : 0)) / 2;
  const auto m = std::min<std::size_t>(
      pairs, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pairs) + 1e-9)));
  if (m == 0) return r;

  // Pair index p enumerates position pairs (a < b) row by row.
  std::vector<std::size_t> pool(pairs);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed, 0x5eed);
  for (std::size_t i = 0; i < m; ++i) std::swap(pool[i], pool[i + rng.below(pairs - i)]);

  std::vector<std::pair<std::size_t, std::size_t>> index_to_pair;
  index_to_pair.reserve(pairs);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) index_to_pair.emplace_back(a, b);

  std::vector<char> flipped(n * n, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto [a, b] = index_to_pair[pool[i]];
    flipped[a * n + b] = flipped[b * n + a] = 1;
  }

  // Each element scores one win per element it precedes under the perturbed
  // preferences; bubble passes then sort by descending wins, ties keeping the
  // original order.
  std::vector<std::size_t> wins(n, 0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) ++wins[flipped[a * n + b] ? b : a];
  std::vector<std::size_t> seq(n);
  std::iota(seq.begin(), seq.end(), 0);
  for (bool swapped = true; swapped;) {
    swapped = false;
    for (std::size_t j = 0; j + 1 < n; ++j) {
      if (wins[seq[j + 1]] > wins[seq[j]]) {
        std::swap(seq[j], seq[j + 1]);
        swapped = true;
      }
    }
  }
  Ranking out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = r[seq[i]];
  return out;
}

std::size_t kendall_distance(const Ranking& a, const Ranking& b) {
  if (!is_permutation_of(a, b)) throw MetricError("rankings are over different id sets");
  std::unordered_map<ObjectId, std::size_t> pos;
  for (std::size_t i = 0; i < b.size(); ++i) pos[b[i]] = i;
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (pos[a[i]] > pos[a[j]]) ++d;
  return d;
}

namespace {

// Rankings re-expressed as index sequences into a sorted id list.
std::vector<std::vector<std::size_t>> to_indices(const std::vector<Ranking>& rankings,
                                                 const std::vector<ObjectId>& ids) {
  std::unordered_map<ObjectId, std::size_t> idx;
  for (std::size_t i = 0; i < ids.size(); ++i) idx[ids[i]] = i;
  std::vector<std::vector<std::size_t>> out;
  out.reserve(rankings.size());
  for (const auto& r : rankings) {
    std::vector<std::size_t> v;
    v.reserve(r.size());
    for (ObjectId id : r) v.push_back(idx.at(id));
    out.push_back(std::move(v));
  }
  return out;
}

double log_likelihood(const std::vector<std::vector<std::size_t>>& seqs,
                      const std::vector<double>& w) {
  double ll = 0.0;
  for (const auto& s : seqs) {
    double tail = 0.0;
    // Accumulate from the back so each stage's denominator is a suffix sum.
    for (std::size_t t = s.size(); t-- > 0;) {
      tail += w[s[t]];
      if (t + 1 < s.size()) ll += std::log(w[s[t]]) - std::log(tail);
    }
  }
  return ll;
}

struct MmResult {
  std::vector<double> worths;
  int iterations = 0;
  std::vector<double> trace;
};

// MM iterations on sequences over items 0..m-1 (every item wins at least once).
MmResult fit_component(const std::vector<std::vector<std::size_t>>& seqs, std::size_t m, double tol,
                       int max_iter) {
  std::vector<double> wins(m, 0.0);
  for (const auto& s : seqs)
    for (std::size_t t = 0; t + 1 < s.size(); ++t) wins[s[t]] += 1.0;

  MmResult res;
  std::vector<double> w(m, 1.0 / static_cast<double>(m));
  std::vector<double> denom(m), inv_tail;
  double prev_ll = log_likelihood(seqs, w);
  for (int it = 1; it <= max_iter; ++it) {
    std::fill(denom.begin(), denom.end(), 0.0);
    for (const auto& s : seqs) {
      const std::size_t len = s.size();
      inv_tail.assign(len, 0.0);
      double tail = 0.0;
      for (std::size_t t = len; t-- > 0;) {
        tail += w[s[t]];
        inv_tail[t] = 1.0 / tail;
      }
      // Item at position u appears in the choice sets of stages 0..min(u, len - 2).
      double acc = 0.0;
      for (std::size_t u = 0; u < len; ++u) {
        if (u + 1 < len) acc += inv_tail[u];
        denom[s[u]] += acc;
      }
    }
    std::vector<double> next(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      next[i] = wins[i] / denom[i];
      sum += next[i];
    }
    double change = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      next[i] /= sum;
      change = std::max(change, std::abs(next[i] - w[i]) / w[i]);
    }
    w = std::move(next);
    const double ll = log_likelihood(seqs, w);
    res.trace.push_back(ll);
    if (ll < prev_ll - 1e-9 * std::max(1.0, std::abs(prev_ll)))
      throw NumericError("Plackett-Luce MM step decreased the likelihood");
    prev_ll = ll;
    if (change < tol) {
      res.worths = std::move(w);
      res.iterations = it;
      return res;
    }
  }
  throw ConvergenceError("Plackett-Luce MM did not converge in " + std::to_string(max_iter) +
                             " iterations",
                         w);
}

}  // namespace

double plackett_luce_log_likelihood(const std::vector<Ranking>& rankings,
                                    const std::vector<ObjectId>& sorted_ids,
                                    const std::vector<double>& worths) {
  return log_likelihood(to_indices(rankings, sorted_ids), worths);
}

PlackettLuceFit plackett_luce_fit(const std::vector<Ranking>& rankings, double tol, int max_iter) {
  if (rankings.empty()) throw ConfigError("need at least one ranking");
  PlackettLuceFit fit;
  fit.ids = rankings.front();
  std::sort(fit.ids.begin(), fit.ids.end());
  for (const auto& r : rankings)
    if (!is_permutation_of(r, fit.ids)) throw ConfigError("rankings are over different id sets");

  const std::size_t n = fit.ids.size();
  const auto seqs = to_indices(rankings, fit.ids);

  // reach[a][b]: a is ranked above b directly or transitively.
  std::vector<char> reach(n * n, 0);
  for (const auto& s : seqs)
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) reach[s[i] * n + s[j]] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t a = 0; a < n; ++a)
      if (reach[a * n + k])
        for (std::size_t b = 0; b < n; ++b)
          if (reach[k * n + b]) reach[a * n + b] = 1;

  // Components of a semi-complete digraph form a chain; order by how many
  // items each one reaches outside itself.
  std::vector<int> comp(n, -1);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t a = 0; a < n; ++a) {
    if (comp[a] >= 0) continue;
    const int c = static_cast<int>(members.size());
    members.emplace_back();
    for (std::size_t b = 0; b < n; ++b)
      if (b == a || (reach[a * n + b] && reach[b * n + a])) {
        comp[b] = c;
        members.back().push_back(b);
      }
  }
  std::vector<std::size_t> reach_count(members.size(), 0);
  for (std::size_t c = 0; c < members.size(); ++c) {
    const std::size_t a = members[c].front();
    for (std::size_t b = 0; b < n; ++b)
      if (comp[b] != static_cast<int>(c) && reach[a * n + b]) ++reach_count[c];
  }
  std::vector<std::size_t> comp_order(members.size());
  std::iota(comp_order.begin(), comp_order.end(), 0);
  std::sort(comp_order.begin(), comp_order.end(),
            [&](std::size_t x, std::size_t y) { return reach_count[x] > reach_count[y]; });

  fit.worths.assign(n, 0.0);
  fit.component_worths.assign(n, 0.0);
  fit.component.assign(n, 0);
  for (std::size_t rank = 0; rank < comp_order.size(); ++rank) {
    const auto& mem = members[comp_order[rank]];
    std::vector<double> w(mem.size(), 1.0);
    if (mem.size() > 1) {
      std::vector<std::size_t> local(n, 0);
      for (std::size_t i = 0; i < mem.size(); ++i) local[mem[i]] = i;
      std::vector<std::vector<std::size_t>> sub;
      sub.reserve(seqs.size());
      for (const auto& s : seqs) {
        std::vector<std::size_t> v;
        for (std::size_t item : s)
          if (comp[item] == static_cast<int>(comp_order[rank])) v.push_back(local[item]);
        sub.push_back(std::move(v));
      }
      MmResult r = fit_component(sub, mem.size(), tol, max_iter);
      fit.iterations = std::max(fit.iterations, r.iterations);
      fit.log_likelihood_trace.insert(fit.log_likelihood_trace.end(), r.trace.begin(),
                                      r.trace.end());
      w = std::move(r.worths);
    }
    std::vector<std::size_t> order(mem.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (w[x] != w[y]) return w[x] > w[y];
      return fit.ids[mem[x]] < fit.ids[mem[y]];
    });
    for (std::size_t i = 0; i < mem.size(); ++i) {
      fit.component_worths[mem[i]] = w[i];
      fit.component[mem[i]] = static_cast<int>(rank);
      if (rank == 0) fit.worths[mem[i]] = w[i];
    }
    for (std::size_t i : order) fit.ranking.push_back(fit.ids[mem[i]]);
  }
  return fit;
}

Ranking plackett_luce_aggregate(const std::vector<Ranking>& rankings, double tol, int max_iter) {
  return plackett_luce_fit(rankings, tol, max_iter).ranking;
}

Ranking label_scene(const Scene& scene, int k, double jitter, double noise_ratio, std::uint64_t seed) {
  const Ranking consensus = plackett_luce_aggregate(oracle_rankings(scene, k, jitter, derive_seed(seed, scene.seed)));
  return perturb_pairs(consensus, noise_ratio, derive_seed(seed ^ 0x6e6f697365ULL, scene.seed));
}

std::string dataset_record_to_json(const DatasetRecord& r) {
  nlohmann::ordered_json j;
  j["scene_file"] = r.scene_file;
  j["ranking"] = r.ranking;
  j["noise_ratio"] = r.noise_ratio;
  j["k"] = r.k;
  j["seed"] = r.seed;
  return j.dump();
}

DatasetRecord dataset_record_from_json(const std::string& line) {
  DatasetRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"scene_file", "ranking", "noise_ratio", "k", "seed"})
      if (!j.contains(key)) throw ParseError(std::string("dataset record: missing field '") + key + "'");
    r.scene_file = j.at("scene_file").get<std::string>();
    r.ranking = j.at("ranking").get<Ranking>();
    r.noise_ratio = j.at("noise_ratio").get<double>();
    r.k = j.at("k").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset record: ") + e.what());
  }
  return r;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<DatasetRecord> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      out.push_back(dataset_record_from_json(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << dataset_record_to_json(r) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace pickorder
