#pragma once

// Shared fixtures and reference implementations for the test suites. The
// oracles here are written independently of the library code paths they
// check: plain loops, full tables, no shared helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dlx/provider.hpp"
#include "dlx/random.hpp"
#include "dlx/sense_index.hpp"
#include "dlx/vector_core.hpp"

namespace dlx::testing {

// Full (m+1)x(n+1) Levenshtein table over bytes.
inline std::size_t reference_levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      t[i][j] = std::min(sub, std::min(t[i - 1][j] + 1, t[i][j - 1] + 1));
    }
  return t[a.size()][b.size()];
}

// cos(a, b) = a.b / sqrt(|a|^2 |b|^2), clamped, accumulated left to right.
template <class A, class B>
double oracle_cosine(const std::vector<A>& a, const std::vector<B>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += double(a[i]) * double(b[i]);
  for (std::size_t i = 0; i < a.size(); ++i) aa += double(a[i]) * double(a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) bb += double(b[i]) * double(b[i]);
  double c = ab / std::sqrt(aa * bb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

inline std::vector<float> row(const SenseIndexEntry& e, std::size_t k) {
  return std::vector<float>(e.centroids.begin() + long(k * e.dim()), e.centroids.begin() + long((k + 1) * e.dim()));
}

struct OracleScore {
  std::string word;
  double score;
};

// Exhaustive double loop over (word, cluster).
inline std::vector<OracleScore> oracle_scores(const std::vector<double>& fxc, const SenseIndexEntry* target,
                                              const SenseIndex& index, double lambda) {
  std::vector<float> target_centroid;
  if (target) {
    double best = -2.0;
    for (std::size_t j = 0; j < target->cluster_count(); ++j) {
      double c = oracle_cosine(row(*target, j), fxc);
      if (c > best) {
        best = c;
        target_centroid = row(*target, j);
      }
    }
  } else {
    lambda = 1.0;
  }
  std::vector<OracleScore> out;
  for (const auto& y : index.entries()) {
    double best = -1e300;
    for (std::size_t k = 0; k < y.cluster_count(); ++k) {
      auto c = row(y, k);
      double global = target ? oracle_cosine(c, target_centroid) : 0.0;
      double s = lambda * oracle_cosine(c, fxc) + (1.0 - lambda) * global;
      if (s > best) best = s;
    }
    out.push_back({y.word, best});
  }
  std::sort(out.begin(), out.end(), [](const OracleScore& a, const OracleScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.word < b.word;
  });
  return out;
}

// Direct transcription of the GAP definition with 1-based indices.
inline double oracle_gap(const std::vector<std::string>& pred, const std::map<std::string, double>& gold) {
  const std::size_t N = pred.size();
  std::vector<double> alpha(N + 1, 0.0);
  std::vector<std::string> used;
  for (std::size_t i = 1; i <= N; ++i) {
    auto it = gold.find(pred[i - 1]);
    bool repeat = std::find(used.begin(), used.end(), pred[i - 1]) != used.end();
    if (it != gold.end() && !repeat) alpha[i] = it->second;
    used.push_back(pred[i - 1]);
  }
  double numerator = 0.0;
  for (std::size_t i = 1; i <= N; ++i) {
    double I = alpha[i] > 0 ? 1.0 : 0.0;
    double p = 0.0;
    for (std::size_t k = 1; k <= i; ++k) p += alpha[k];
    p /= double(i);
    numerator += I * p;
  }
  std::vector<double> beta;
  for (const auto& [w, v] : gold) beta.push_back(v);
  std::sort(beta.begin(), beta.end(), [](double a, double b) { return a > b; });
  const std::size_t R = beta.size();
  double denominator = 0.0;
  for (std::size_t i = 1; i <= R; ++i) {
    double I = beta[i - 1] > 0 ? 1.0 : 0.0;
    double mean = 0.0;
    for (std::size_t k = 1; k <= i; ++k) mean += beta[k - 1];
    mean /= double(i);
    denominator += I * mean;
  }
  return numerator / denominator;
}

// Adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  std::map<std::uint32_t, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  auto c2 = [](double n) { return n * (n - 1) / 2; };
  double sum_joint = 0, sum_a = 0, sum_b = 0;
  for (auto& [_, n] : joint) sum_joint += c2(n);
  for (auto& [_, n] : ca) sum_a += c2(n);
  for (auto& [_, n] : cb) sum_b += c2(n);
  const double total = c2(double(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = (sum_a + sum_b) / 2;
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

inline std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

// Two groups around +e1 and -e1 with tangential Gaussian noise.
inline std::vector<std::vector<double>> antipodal_groups(std::size_t per_group, std::size_t dim, double sigma,
                                                         std::uint64_t seed, std::vector<std::uint32_t>* truth) {
  Rng rng(seed);
  std::vector<std::vector<double>> pts;
  for (int g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < per_group; ++i) {
      std::vector<double> p(dim, 0.0);
      p[0] = g == 0 ? 1.0 : -1.0;
      for (std::size_t d = 1; d < dim; ++d) p[d] = sigma * rng.normal();
      pts.push_back(unit(p));
      if (truth) truth->push_back(std::uint32_t(g));
    }
  return pts;
}

inline SenseIndexEntry make_entry(const std::string& word, const std::vector<std::vector<float>>& centroids,
                                  const std::vector<std::uint32_t>& sizes) {
  SenseIndexEntry e;
  e.word = word;
  const std::size_t dim = centroids.front().size();
  e.cluster_sizes = sizes;
  e.occurrence_count = 0;
  for (auto s : sizes) e.occurrence_count += s;
  std::vector<double> mean(dim, 0.0);
  for (std::size_t k = 0; k < centroids.size(); ++k)
    for (std::size_t i = 0; i < dim; ++i) {
      e.centroids.push_back(centroids[k][i]);
      mean[i] += double(sizes[k]) * centroids[k][i];
    }
  for (double m : mean) e.mean_embedding.push_back(float(m / e.occurrence_count));
  return e;
}

// Seeded index with `words` entries of 1..k random clusters each.
inline SenseIndex random_index(std::size_t words, std::uint16_t k, std::uint32_t dim, std::uint64_t seed,
                               bool full_clusters = true) {
  Rng rng(seed);
  SenseIndex index(dim, k);
  for (std::size_t w = 0; w < words; ++w) {
    const std::size_t clusters = full_clusters ? k : 1 + rng.below(k);
    std::vector<std::vector<float>> cs;
    std::vector<std::uint32_t> sizes;
    for (std::size_t c = 0; c < clusters; ++c) {
      std::vector<float> v(dim);
      for (auto& x : v) x = float(rng.normal());
      cs.push_back(v);
      sizes.push_back(std::uint32_t(1 + rng.below(100)));
    }
    char name[16];
    std::snprintf(name, sizeof(name), "w%04zu", w);
    index.add(make_entry(name, cs, sizes));
  }
  return index;
}

inline EmbeddingSpec small_spec(std::uint32_t dim = 4, std::uint16_t first = 3, std::uint16_t last = 5) {
  return EmbeddingSpec::layer_range(dim, first, last);
}

}  // namespace dlx::testing
