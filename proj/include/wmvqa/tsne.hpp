#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace wmvqa {

struct TsneOptions {
  double perplexity = 5.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = -1;  // -1: first quarter of `iterations`
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
};

struct TsneResult {
  std::vector<double> coords;        // N x 2, row-major
  double kl_after_exaggeration = 0;  // KL(P||Q) when exaggeration ends
  double kl_final = 0;
  std::vector<double> perplexities;  // achieved per-point perplexity
};

// Exact O(N^2) t-SNE to 2-D. `points` is N x dim row-major. Requires N >= 4
// and perplexity < (N - 1) / 3; all-identical inputs are rejected. Throws
// AnalysisInputError.
TsneResult tsne(std::span<const double> points, std::size_t dim, const TsneOptions& options = {});

// Index of each row's nearest neighbour under squared Euclidean distance
// (lowest index on ties).
std::vector<std::size_t> nearest_neighbours(std::span<const double> points, std::size_t dim);

}  // namespace wmvqa
