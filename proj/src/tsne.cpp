#include "wmvqa/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

namespace {

std::vector<double> squared_distances(std::span<const double> x, std::size_t n, std::size_t dim) {
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = x[i * dim + k] - x[j * dim + k];
        s += t * t;
      }
      d[i * n + j] = d[j * n + i] = s;
    }
  return d;
}

constexpr double kEntropyTol = 1e-5;  // nats; keeps perplexity well within 1e-4
constexpr int kMaxBisection = 200;

// Row i of the conditional P with precision beta; returns its entropy (nats).
double conditional_row(const std::vector<double>& d2, std::size_t n, std::size_t i, double beta, double* row) {
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d2[i * n + j]);
  double sum = 0, wsum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0;
      continue;
    }
    const double shifted = d2[i * n + j] - dmin;
    row[j] = std::exp(-beta * shifted);
    sum += row[j];
    wsum += row[j] * shifted;
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  return std::log(sum) + beta * wsum / sum;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

}  // namespace

std::vector<std::size_t> nearest_neighbours(std::span<const double> points, std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw AnalysisInputError("point array is not N x dim");
  const std::size_t n = points.size() / dim;
  if (n < 2) throw AnalysisInputError("nearest neighbours need at least two points");
  const auto d2 = squared_distances(points, n, dim);
  std::vector<std::size_t> nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && d2[i * n + j] < d2[i * n + best]) best = j;
    nn[i] = best;
  }
  return nn;
}

TsneResult tsne(std::span<const double> points, std::size_t dim, const TsneOptions& opt) {
  if (dim == 0 || points.size() % dim != 0) throw AnalysisInputError("point array is not N x dim");
  const std::size_t n = points.size() / dim;
  if (n < 4) throw AnalysisInputError("t-SNE needs at least 4 points, got " + std::to_string(n));
  if (!(opt.perplexity > 0) || !(opt.perplexity < (static_cast<double>(n) - 1) / 3))
    throw AnalysisInputError("perplexity " + format_fixed(opt.perplexity, 2) + " must lie in (0, (N-1)/3) for N=" +
                             std::to_string(n));
  if (opt.iterations < 1) throw ValidationError("t-SNE iterations must be >= 1");
  for (double v : points)
    if (!std::isfinite(v)) throw AnalysisInputError("t-SNE input contains non-finite values");

  const auto d2 = squared_distances(points, n, dim);
  if (*std::max_element(d2.begin(), d2.end()) == 0.0)
    throw AnalysisInputError("t-SNE input points are all identical");

  // Conditional affinities with per-point precision found by bisection.
  TsneResult result;
  result.perplexities.resize(n);
  const double target = std::log(opt.perplexity);
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = conditional_row(d2, n, i, beta, &p[i * n]);
    for (int it = 0; it < kMaxBisection && std::abs(h - target) > kEntropyTol; ++it) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = (beta + lo) / 2;
      }
      h = conditional_row(d2, n, i, beta, &p[i * n]);
    }
    result.perplexities[i] = std::exp(h);
  }
  // Symmetrise.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * n), 1e-12);
      p[i * n + j] = p[j * n + i] = v;
    }
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0;

  Prng rng(opt.seed);
  std::vector<double> y(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
  for (double& v : y) v = 1e-4 * standard_normal(rng);

  std::vector<double> num(n * n), q(n * n);
  auto compute_q = [&] {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = v;
        sum += 2 * v;
      }
    }
    for (std::size_t k = 0; k < n * n; ++k) q[k] = std::max(num[k] / sum, 1e-12);
    for (std::size_t i = 0; i < n; ++i) q[i * n + i] = 0;
  };

  const int exag_iters = opt.exaggeration_iterations >= 0 ? opt.exaggeration_iterations : opt.iterations / 4;
  bool recorded = false;
  for (int t = 0; t < opt.iterations; ++t) {
    if (t == exag_iters) {
      compute_q();
      result.kl_after_exaggeration = kl_divergence(p, q);
      recorded = true;
    }
    const double exag = t < exag_iters ? opt.early_exaggeration : 1.0;
    const double momentum = t < exag_iters ? 0.5 : 0.8;
    compute_q();
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double m = (exag * p[i * n + j] - q[i * n + j]) * num[i * n + j];
        grad[2 * i] += 4 * m * (y[2 * i] - y[2 * j]);
        grad[2 * i + 1] += 4 * m * (y[2 * i + 1] - y[2 * j + 1]);
      }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      gains[k] = (grad[k] > 0) != (update[k] > 0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - opt.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx / n;
      y[2 * i + 1] -= my / n;
    }
  }
  compute_q();
  result.kl_final = kl_divergence(p, q);
  if (!recorded) result.kl_after_exaggeration = result.kl_final;
  result.coords = std::move(y);
  return result;
}

}  // namespace wmvqa
