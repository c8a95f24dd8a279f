#include "imanip/memory/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "imanip/errors.hpp"

namespace imanip::memory {

std::vector<double> distance_array(const std::vector<double>& e) {
  const std::size_t n = e.size();
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = std::abs(e[i] - e[j]);
  }
  return a;
}

double dispersion_objective(const std::vector<double>& e, const std::vector<std::size_t>& subset) {
  double total = 0.0;
  for (auto i : subset) {
    for (auto j : subset) total += std::abs(e.at(i) - e.at(j));
  }
  return total;
}

std::vector<std::size_t> farthest_entropy_sample(const std::vector<double>& e, std::size_t k) {
  const std::size_t n = e.size();
  if (k < 1 || k > n) {
    throw ContractError("farthest_entropy_sample: K=" + std::to_string(k) + " outside [1," + std::to_string(n) + "]");
  }
  const auto a = distance_array(e);
  std::vector<std::size_t> picked;
  std::vector<bool> used(n, false);
  std::vector<double> score(n, 0.0);
  // First pick: largest row sum.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) score[i] += a[i * n + j];
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (score[i] > score[best]) best = i;
  }
  picked.push_back(best);
  used[best] = true;
  std::fill(score.begin(), score.end(), 0.0);
  while (picked.size() < k) {
    const std::size_t last = picked.back();
    for (std::size_t j = 0; j < n; ++j) score[j] += a[j * n + last];
    std::size_t pick = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j]) continue;
      if (pick == n || score[j] > score[pick]) pick = j;
    }
    picked.push_back(pick);
    used[pick] = true;
  }
  return picked;
}

DispersionOptimum brute_force_dispersion(const std::vector<double>& e, std::size_t k, double budget) {
  const std::size_t n = e.size();
  if (k < 1 || k > n) throw ContractError("brute_force_dispersion: K outside [1,N]");
  double combos = 1.0;
  for (std::size_t i = 0; i < k; ++i) combos = combos * static_cast<double>(n - i) / static_cast<double>(i + 1);
  if (combos > budget) {
    throw ContractError("brute_force_dispersion: C(" + std::to_string(n) + "," + std::to_string(k) +
                        ") exceeds the enumeration budget");
  }
  if (k == 1) {
    // Every singleton scores 0 under the pair sum; rank them by row sum, the
    // same quantity the greedy's first pick uses.
    const auto a = distance_array(e);
    DispersionOptimum best{{0}, -1.0};
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += a[i * n + j];
      if (row > best.objective) best = {{i}, row};
    }
    return best;
  }
  std::vector<std::size_t> cur(k);
  std::iota(cur.begin(), cur.end(), 0);
  DispersionOptimum best{cur, dispersion_objective(e, cur)};
  for (;;) {
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
    const double obj = dispersion_objective(e, cur);
    if (obj > best.objective) best = {cur, obj};
  }
  return best;
}

std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features, std::size_t k) {
  const std::size_t n = features.size();
  if (k > n) throw ContractError("herding_select: K exceeds candidate count");
  if (n == 0) return {};
  const std::size_t dim = features[0].size();
  std::vector<double> mu(dim, 0.0);
  for (const auto& f : features) {
    if (f.size() != dim) throw DimensionError("herding_select: ragged features");
    for (std::size_t d = 0; d < dim; ++d) mu[d] += f[d] / static_cast<double>(n);
  }
  std::vector<double> acc(dim, 0.0);
  std::vector<bool> used(n, false);
  std::vector<std::size_t> picked;
  for (std::size_t t = 1; t <= k; ++t) {
    std::size_t best = n;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double dist = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = mu[d] - (acc[d] + features[i][d]) / static_cast<double>(t);
        dist += diff * diff;
      }
      if (best == n || dist < best_dist) {
        best = i;
        best_dist = dist;
      }
    }
    used[best] = true;
    picked.push_back(best);
    for (std::size_t d = 0; d < dim; ++d) acc[d] += features[best][d];
  }
  return picked;
}

std::vector<std::size_t> top_k(const std::vector<double>& e, std::size_t k) {
  if (k > e.size()) throw ContractError("top_k: K exceeds candidate count");
  std::vector<std::size_t> idx(e.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return e[a] > e[b]; });
  idx.resize(k);
  return idx;
}

}  // namespace imanip::memory
