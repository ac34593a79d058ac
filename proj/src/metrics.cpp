#include "pickorder/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "pickorder/labels.hpp"

namespace pickorder {

std::size_t levenshtein(const Ranking& a, const Ranking& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double kendall_tau(const Ranking& a, const Ranking& b) {
  const std::size_t discordant = kendall_distance(a, b);
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  const double pairs = n * (n - 1.0) / 2.0;
  return (pairs - 2.0 * static_cast<double>(discordant)) / pairs;
}

}  // namespace pickorder
