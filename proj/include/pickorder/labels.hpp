#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pickorder/priors.hpp"

namespace pickorder {

/// True iff `r` is a permutation of `ids` (no repeats, no omissions).
bool is_permutation_of(const Ranking& r, const std::vector<ObjectId>& ids);

/// K orderings from the rule-based oracle. With jitter > 0 every tier-internal
/// sort key is multiplied by an independent U(1 - jitter, 1 + jitter) factor.
std::vector<Ranking> oracle_rankings(const Scene& scene, int k, double jitter, std::uint64_t seed,
                                     const SphConfig& cfg = {});

/// Picks floor(ratio * n(n-1)/2) unordered pairs uniformly without replacement
/// and inverts their preferred order. The resulting (possibly cyclic)
/// preferences are reconciled by counting each element's wins and repairing
/// the sequence with adjacent transpositions until wins are non-increasing
/// (ties keep the original order). Always returns a permutation.
Ranking perturb_pairs(const Ranking& r, double ratio, std::uint64_t seed);

/// Number of discordant pairs between two rankings over the same ids.
std::size_t kendall_distance(const Ranking& a, const Ranking& b);

struct PlackettLuceFit {
  Ranking ranking;
  std::vector<ObjectId> ids;  ///< sorted ascending; indexes the vectors below
  /// Maximum-likelihood worths. Items in components ranked strictly below the
  /// first one get zero worth (the boundary MLE).
  std::vector<double> worths;
  /// Worths fitted inside each strongly connected component, summing to 1 per component.
  std::vector<double> component_worths;
  std::vector<int> component;  ///< 0 = ranked first
  int iterations = 0;
  /// Log-likelihood after each MM iteration, per component, concatenated.
  std::vector<double> log_likelihood_trace;
};

/// Maximum-likelihood Plackett-Luce aggregation by minorize-maximize updates.
/// Items are first split into strongly connected components of the
/// "ranked above" relation; components are totally ordered, and worths are
/// fitted inside each component where the MLE is finite.
/// Throws ConvergenceError (carrying the last iterate) after max_iter sweeps.
PlackettLuceFit plackett_luce_fit(const std::vector<Ranking>& rankings, double tol = 1e-8,
                                  int max_iter = 10000);

Ranking plackett_luce_aggregate(const std::vector<Ranking>& rankings, double tol = 1e-8,
                                int max_iter = 10000);

/// Log-likelihood of rankings under PL worths (indexed like the sorted ids).
double plackett_luce_log_likelihood(const std::vector<Ranking>& rankings,
                                    const std::vector<ObjectId>& sorted_ids,
                                    const std::vector<double>& worths);

/// Full labelling pipeline for one scene: k oracle rankings drawn with
/// derive_seed(seed, scene.seed), their Plackett-Luce aggregate, then
/// perturb_pairs at noise_ratio with a second stream derived from the same seed.
Ranking label_scene(const Scene& scene, int k, double jitter, double noise_ratio, std::uint64_t seed);

/// One line of the dataset file.
struct DatasetRecord {
  std::string scene_file;
  Ranking ranking;
  double noise_ratio = 0.0;
  int k = 1;
  std::uint64_t seed = 0;
};

std::string dataset_record_to_json(const DatasetRecord& r);
DatasetRecord dataset_record_from_json(const std::string& line);
std::vector<DatasetRecord> load_dataset(const std::string& path);
void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path);

}  // namespace pickorder
