#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pickorder/errors.hpp"
#include "pickorder/labels.hpp"
#include "pickorder/rng.hpp"
#include "support.hpp"

using namespace pickorder;
using testing::cube;
using testing::scene_of;

namespace {

// Independent reference for perturb_pairs: flip a uniform set of pairs drawn
// with a different generator, then stable-sort by descending win count.
Ranking reference_perturb(const Ranking& r, double ratio, std::mt19937_64& gen) {
  const std::size_t n = r.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::shuffle(pairs.begin(), pairs.end(), gen);
  const auto m = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pairs.size()) + 1e-9));
  std::vector<std::vector<bool>> flipped(n, std::vector<bool>(n, false));
  for (std::size_t p = 0; p < m; ++p) flipped[pairs[p].first][pairs[p].second] = true;
  std::vector<int> wins(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) ++wins[flipped[i][j] ? j : i];
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), 0);
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return wins[a] > wins[b]; });
  Ranking out;
  for (std::size_t p : pos) out.push_back(r[p]);
  return out;
}

double pl_grid_ll(double w1, double w2, double w3) {
  // log L of {[1,2,3],[1,2,3],[2,1,3]}; the last factor of each ranking is 1.
  const double s = w1 + w2 + w3;
  auto term = [](double num, double den) { return num > 0.0 ? std::log(num / den) : -1e300; };
  return 2.0 * (term(w1, s) + term(w2, w2 + w3)) + term(w2, s) + term(w1, w1 + w3);
}

}  // namespace

TEST_CASE("is_permutation_of") {
  CHECK(is_permutation_of({2, 0, 1}, {0, 1, 2}));
  CHECK_FALSE(is_permutation_of({0, 0, 1}, {0, 1, 2}));
  CHECK_FALSE(is_permutation_of({0, 1}, {0, 1, 2}));
}

TEST_CASE("oracle_rankings examples") {
  const Scene s = generate_scene(3, Difficulty::Easy);
  const auto five = oracle_rankings(s, 5, 0.0, 1);
  REQUIRE(five.size() == 5);
  for (const Ranking& r : five) CHECK(r == sph_order(s));
  CHECK(oracle_rankings(s, 4, 0.3, 9) == oracle_rankings(s, 4, 0.3, 9));
  for (const Ranking& r : oracle_rankings(s, 4, 0.3, 9)) CHECK(is_permutation_of(r, s.ids()));

  // Two topmost, touching boxes at nearly the same distance from home.
  Scene pair = scene_of({cube(0, 0.0, 0.0, 0.05), cube(1, 0.1, 0.0, 0.05)});
  pair.effector_home = {0.05, 0.3, 0.05};
  pair.objects[1].pose.center.x() += 1e-3;
  int first0 = 0;
  for (const Ranking& r : oracle_rankings(pair, 100, 0.5, 5)) first0 += r.front() == 0;
  CHECK(first0 > 0);
  CHECK(first0 < 100);

  CHECK_THROWS_AS(oracle_rankings(Scene{}, 1, 0.0, 0), EmptySceneError);
  CHECK_THROWS_AS(oracle_rankings(s, 0, 0.0, 0), ConfigError);
  CHECK_THROWS_AS(oracle_rankings(s, 1, 1.5, 0), ConfigError);
}

TEST_CASE("perturb_pairs examples") {
  const Ranking r{4, 2, 7, 1, 0};
  CHECK(perturb_pairs(r, 0.0, 3) == r);
  CHECK(perturb_pairs({1, 2}, 1.0, 3) == Ranking{2, 1});
  CHECK(perturb_pairs(r, 1.0, 3) == Ranking{0, 1, 7, 2, 4});
  for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(is_permutation_of(perturb_pairs(r, 0.4, seed), r));
  CHECK(perturb_pairs(r, 0.4, 11) == perturb_pairs(r, 0.4, 11));
  CHECK_THROWS_AS(perturb_pairs(r, -0.1, 0), ConfigError);
}

TEST_CASE("perturb_pairs matches the brute-force sampler") {
  Ranking base(10);
  std::iota(base.begin(), base.end(), 0);
  std::mt19937_64 gen(12345);
  const int reference_samples = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < reference_samples; ++s) {
    const double d = static_cast<double>(kendall_distance(base, reference_perturb(base, 0.5, gen)));
    sum += d;
    sum_sq += d * d;
  }
  const double expected = sum / reference_samples;
  const double sigma = std::sqrt(sum_sq / reference_samples - expected * expected);

  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const double d = static_cast<double>(kendall_distance(base, perturb_pairs(base, 0.5, seed)));
    mean += d / 200.0;
  }
  CHECK(std::abs(mean - expected) <= 3.0 * sigma / std::sqrt(200.0));
}

TEST_CASE("perturb_pairs distance grows with the ratio") {
  Ranking base(12);
  std::iota(base.begin(), base.end(), 0);
  double previous = -1.0;
  for (double ratio : {0.0, 0.1, 0.2, 0.5, 0.7, 1.0}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed)
      mean += static_cast<double>(kendall_distance(base, perturb_pairs(base, ratio, seed)));
    CHECK(mean > previous);
    previous = mean;
  }
}

TEST_CASE("kendall_distance") {
  CHECK(kendall_distance({1, 2, 3}, {1, 2, 3}) == 0);
  CHECK(kendall_distance({1, 2, 3}, {3, 2, 1}) == 3);
  CHECK(kendall_distance({1, 2, 3}, {2, 1, 3}) == 1);
  CHECK_THROWS_AS(kendall_distance({1, 2}, {1, 3}), MetricError);
}

TEST_CASE("plackett-luce three-ranking example") {
  const std::vector<Ranking> rs{{1, 2, 3}, {1, 2, 3}, {2, 1, 3}};
  const PlackettLuceFit fit = plackett_luce_fit(rs);
  CHECK(fit.ranking == Ranking{1, 2, 3});
  REQUIRE(fit.ids == std::vector<ObjectId>{1, 2, 3});
  CHECK(fit.worths[0] > fit.worths[1]);
  CHECK(fit.worths[1] > fit.worths[2]);

  double best = -1e300, b1 = 0, b2 = 0, b3 = 0;
  for (int i = 0; i <= 1000; ++i) {
    for (int j = 0; i + j <= 1000; ++j) {
      const double w1 = i / 1000.0, w2 = j / 1000.0, w3 = 1.0 - w1 - w2;
      const double ll = pl_grid_ll(w1, w2, std::max(w3, 0.0));
      if (ll > best) best = ll, b1 = w1, b2 = w2, b3 = w3;
    }
  }
  const double total = std::accumulate(fit.worths.begin(), fit.worths.end(), 0.0);
  CHECK(std::abs(fit.worths[0] / total - b1) < 1e-2);
  CHECK(std::abs(fit.worths[1] / total - b2) < 1e-2);
  CHECK(std::abs(fit.worths[2] / total - b3) < 1e-2);
}

TEST_CASE("plackett-luce degenerate inputs") {
  const Ranking r{5, 3, 9, 1};
  CHECK(plackett_luce_aggregate({r}) == r);
  CHECK(plackett_luce_aggregate({r, r, r, r}) == r);
  CHECK_THROWS_AS(plackett_luce_aggregate({}), Error);
  CHECK_THROWS_AS(plackett_luce_aggregate({{1, 2}, {1, 3}}), Error);
}

TEST_CASE("plackett-luce likelihood is monotone and labels commute") {
  Rng rng(7, 1);
  for (int t = 0; t < 20; ++t) {
    Ranking base(6);
    std::iota(base.begin(), base.end(), 0);
    std::vector<Ranking> rs;
    for (int k = 0; k < 5; ++k) rs.push_back(perturb_pairs(base, 0.3, rng.next_u64()));
    const PlackettLuceFit fit = plackett_luce_fit(rs);
    const bool one_component = *std::max_element(fit.component.begin(), fit.component.end()) == 0;
    if (one_component)
      for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i)
        CHECK(fit.log_likelihood_trace[i] >= fit.log_likelihood_trace[i - 1] - 1e-12);

    // Relabel id x -> label[x]: the aggregate relabels the same way.
    const std::vector<ObjectId> label{40, 11, 25, 3, 17, 8};
    std::vector<Ranking> relabeled;
    for (const Ranking& r : rs) {
      Ranking q;
      for (ObjectId id : r) q.push_back(label[static_cast<std::size_t>(id)]);
      relabeled.push_back(q);
    }
    Ranking expected;
    for (ObjectId id : fit.ranking) expected.push_back(label[static_cast<std::size_t>(id)]);
    const Ranking got = plackett_luce_aggregate(relabeled);
    // Exact worth ties fall back to id order, which relabeling can change.
    std::vector<double> w = fit.worths;
    std::sort(w.begin(), w.end());
    if (std::adjacent_find(w.begin(), w.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }) == w.end())
      CHECK(got == expected);
  }
}

TEST_CASE("plackett-luce reports non-convergence") {
  const std::vector<Ranking> rs{{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}, {0, 2, 1, 3}};
  try {
    plackett_luce_fit(rs, 1e-300, 2);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_iterate().size() == 4);
  }
}

TEST_CASE("dataset round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "pickorder_labels_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "labels.jsonl").string();
  const std::vector<DatasetRecord> records{{"scene_0000.json", {3, 1, 2, 0}, 0.2, 5, 17},
                                           {"scene_0001.json", {0}, 0.0, 1, 18}};
  save_dataset(records, path);
  const auto back = load_dataset(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].scene_file == records[i].scene_file);
    CHECK(back[i].ranking == records[i].ranking);
    CHECK(back[i].noise_ratio == records[i].noise_ratio);
    CHECK(back[i].k == records[i].k);
    CHECK(back[i].seed == records[i].seed);
  }
  CHECK(dataset_record_from_json(dataset_record_to_json(records[0])).ranking == records[0].ranking);
  CHECK_THROWS_AS(dataset_record_from_json("{\"scene_file\": 3}"), ParseError);
  CHECK_THROWS_AS(load_dataset((dir / "missing.jsonl").string()), IoError);
  std::filesystem::remove_all(dir);
}
