#pragma once

#include <cstddef>

#include "pickorder/priors.hpp"

namespace pickorder {

/// Minimum number of single-id insertions, deletions and substitutions.
std::size_t levenshtein(const Ranking& a, const Ranking& b);

/// (concordant - discordant) / (n(n-1)/2). Throws MetricError unless both
/// rankings are permutations of the same id set. Defined as 1 for n < 2.
double kendall_tau(const Ranking& a, const Ranking& b);

}  // namespace pickorder
