#pragma once

#include <cstddef>
#include <vector>

namespace imanip::memory {

// A[i][j] = |e_i − e_j|, row-major N×N.
std::vector<double> distance_array(const std::vector<double>& e);

// Σ_{i,j∈S} A[i][j] (ordered pairs, so each unordered pair counts twice).
double dispersion_objective(const std::vector<double>& e, const std::vector<std::size_t>& subset);

// Greedy farthest-distance selection. First pick maximizes the row sum of A,
// each later pick maximizes its summed distance to the picks so far. Ties go
// to the lowest index. Returns indices in selection order.
std::vector<std::size_t> farthest_entropy_sample(const std::vector<double>& e, std::size_t k);

struct DispersionOptimum {
  std::vector<std::size_t> subset;  // ascending
  double objective = 0;
};
// Exhaustive max-sum dispersion; first subset in lexicographic order wins ties.
// K=1 is degenerate under the pair sum, so there the objective is the row sum.
// Throws ContractError when C(N,K) exceeds `budget`.
DispersionOptimum brute_force_dispersion(const std::vector<double>& e, std::size_t k, double budget = 1e6);

// Herding: repeatedly add the feature vector that brings the running mean of
// the picks closest (L2) to the mean of all features. Ties go to the lowest index.
std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features, std::size_t k);

// Indices of the k largest values, larger first, ties to the lowest index.
std::vector<std::size_t> top_k(const std::vector<double>& e, std::size_t k);

}  // namespace imanip::memory
