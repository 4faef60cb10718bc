#pragma once

// K-means over L2-normalised points with k-means++ seeding. On unit vectors
// the squared-Euclidean objective orders partitions the same way the cosine
// objective does.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/random.hpp"
#include "dlx/vector_core.hpp"

namespace dlx {

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double inertia_tolerance = 1e-6;
  double unit_norm_tolerance = 1e-6;
};

struct KMeansResult {
  std::vector<std::uint32_t> assignments;  // cluster id per point, ids in [0, num_clusters)
  std::size_t num_clusters = 0;
  double inertia = 0.0;  // sum of squared distances to the assigned centroid
  std::size_t iterations = 0;
};

namespace detail {

inline double squared_distance(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline std::vector<Vec> kmeanspp_seeds(std::span<const Vec> points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Vec> centers;
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  centers.push_back(points[first]);
  chosen[first] = true;

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centers[0]);

  while (centers.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > r) break;
      }
    }
    if (pick == n) {
      // All remaining points coincide with a center.
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    chosen[pick] = true;
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
  }
  return centers;
}

}  // namespace detail

/// Partitions unit-norm points into min(k, |points|) non-empty clusters.
/// Cluster ids are numbered by first appearance in `points`.
inline KMeansResult spherical_kmeans(std::span<const Vec> points, std::size_t k, std::uint64_t seed,
                                     const KMeansOptions& opts = {}) {
  if (k < 1) throw ContractError("kmeans: k must be >= 1");
  if (points.empty()) throw ContractError("kmeans: no points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ContractError("kmeans: inconsistent point dimension");
    if (std::abs(norm(std::span<const double>(p)) - 1.0) > opts.unit_norm_tolerance)
      throw ContractError("kmeans: points must be unit-norm");
  }
  const std::size_t n = points.size();
  const std::size_t kk = std::min(k, n);

  Rng rng(seed);
  auto centers = detail::kmeanspp_seeds(points, kk, rng);

  std::vector<std::uint32_t> assign(n, 0), previous;
  std::vector<double> dist(n, 0.0);
  std::vector<std::size_t> sizes(kk, 0);
  double inertia = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;

  auto recompute_centers = [&] {
    for (auto& c : centers) std::fill(c.begin(), c.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = centers[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) c[j] += points[i][j];
      ++sizes[assign[i]];
    }
    for (std::size_t c = 0; c < kk; ++c)
      for (auto& x : centers[c]) x /= static_cast<double>(sizes[c]);
  };

  while (iter < opts.max_iterations) {
    ++iter;
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      double best_d = detail::squared_distance(points[i], centers[0]);
      for (std::size_t c = 1; c < kk; ++c) {
        const double d = detail::squared_distance(points[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      assign[i] = best;
      dist[i] = best_d;
      ++sizes[best];
    }
    // Empty-cluster repair: move the point farthest from its centroid.
    for (std::size_t c = 0; c < kk; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assign[i]] <= 1) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      --sizes[assign[far]];
      assign[far] = static_cast<std::uint32_t>(c);
      sizes[c] = 1;
      dist[far] = 0.0;
    }
    recompute_centers();

    double new_inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) new_inertia += detail::squared_distance(points[i], centers[assign[i]]);

    const bool unchanged = assign == previous;
    const bool flat = std::abs(inertia - new_inertia) < opts.inertia_tolerance;
    inertia = new_inertia;
    previous = assign;
    if (unchanged || flat) break;
  }

  // Canonical labels: order clusters by their first member.
  std::vector<std::uint32_t> relabel(kk, std::numeric_limits<std::uint32_t>::max());
  std::uint32_t next = 0;
  for (auto& a : assign) {
    if (relabel[a] == std::numeric_limits<std::uint32_t>::max()) relabel[a] = next++;
    a = relabel[a];
  }
  return KMeansResult{std::move(assign), kk, inertia, iter};
}

}  // namespace dlx
