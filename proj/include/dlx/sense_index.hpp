#pragma once

// Decontextualised word embeddings: per word, the mean of its layer-summed
// occurrence vectors plus one centroid per usage cluster. The on-disk format
// ("DLXI") stores all vectors as little-endian float32.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dlx/binary_io.hpp"
#include "dlx/error.hpp"
#include "dlx/kmeans.hpp"
#include "dlx/parallel.hpp"
#include "dlx/random.hpp"
#include "dlx/vector_core.hpp"

namespace dlx {

struct SenseIndexEntry {
  std::string word;
  std::vector<float> mean_embedding;       // dim
  std::vector<float> centroids;            // cluster_count x dim, row-major
  std::vector<std::uint32_t> cluster_sizes;
  std::uint32_t occurrence_count = 0;

  std::size_t cluster_count() const noexcept { return cluster_sizes.size(); }
  std::size_t dim() const noexcept { return mean_embedding.size(); }

  std::span<const float> centroid(std::size_t k) const {
    if (k >= cluster_count()) throw ContractError("cluster id out of range");
    return std::span<const float>(centroids).subspan(k * dim(), dim());
  }

  std::span<const float> mean() const noexcept { return mean_embedding; }

  // Throws ContractError describing the first violated invariant.
  void validate(std::size_t expected_dim, std::size_t max_clusters) const {
    if (word.empty()) throw ContractError("index entry with empty word");
    if (mean_embedding.size() != expected_dim) throw ContractError("entry '" + word + "': dim mismatch");
    if (cluster_sizes.empty() || cluster_sizes.size() > max_clusters)
      throw ContractError("entry '" + word + "': cluster count out of range");
    if (centroids.size() != cluster_sizes.size() * expected_dim)
      throw ContractError("entry '" + word + "': centroid payload size mismatch");
    std::uint64_t total = 0;
    for (auto s : cluster_sizes) {
      if (s == 0) throw ContractError("entry '" + word + "': empty cluster");
      total += s;
    }
    if (total != occurrence_count) throw ContractError("entry '" + word + "': cluster sizes do not sum to count");
    for (std::size_t i = 0; i < expected_dim; ++i) {
      double weighted = 0.0;
      for (std::size_t k = 0; k < cluster_count(); ++k)
        weighted += static_cast<double>(cluster_sizes[k]) * centroids[k * expected_dim + i];
      weighted /= static_cast<double>(occurrence_count);
      const double m = mean_embedding[i];
      // float32 storage: allow rounding relative to the component magnitude
      if (std::abs(weighted - m) > 1e-6 * std::max(1.0, std::abs(m)))
        throw ContractError("entry '" + word + "': mean is not the size-weighted centroid mean");
    }
  }

  friend bool operator==(const SenseIndexEntry&, const SenseIndexEntry&) = default;
};

/// Groups occurrences into at most k usage clusters (assignment on the
/// concatenated, normalised layers) and averages the layer sums per cluster.
inline SenseIndexEntry build_entry(std::string word, std::span<const LayeredEmbedding> occurrences, std::size_t k,
                                   std::uint64_t seed, Normalization normalization = Normalization::kAfterConcat) {
  if (occurrences.empty()) throw ContractError("build_entry: no occurrences for '" + word + "'");
  const auto& spec = occurrences.front().spec();
  for (const auto& o : occurrences)
    if (!(o.spec() == spec)) throw ContractError("build_entry: occurrences disagree on embedding spec");

  std::vector<Vec> points;
  std::vector<Vec> sums;
  points.reserve(occurrences.size());
  sums.reserve(occurrences.size());
  for (const auto& o : occurrences) {
    points.push_back(concat_normalized(o, normalization));
    sums.push_back(sum_layers(o));
  }
  const auto km = spherical_kmeans(points, k, seed);

  const std::size_t dim = spec.dim;
  std::vector<Vec> centroid_acc(km.num_clusters, Vec(dim, 0.0));
  std::vector<std::uint32_t> sizes(km.num_clusters, 0);
  Vec mean(dim, 0.0);
  for (std::size_t i = 0; i < sums.size(); ++i) {
    auto& c = centroid_acc[km.assignments[i]];
    for (std::size_t j = 0; j < dim; ++j) {
      c[j] += sums[i][j];
      mean[j] += sums[i][j];
    }
    ++sizes[km.assignments[i]];
  }

  SenseIndexEntry entry;
  entry.word = std::move(word);
  entry.occurrence_count = static_cast<std::uint32_t>(occurrences.size());
  entry.cluster_sizes = sizes;
  entry.mean_embedding.resize(dim);
  for (std::size_t j = 0; j < dim; ++j)
    entry.mean_embedding[j] = static_cast<float>(mean[j] / static_cast<double>(occurrences.size()));
  entry.centroids.reserve(km.num_clusters * dim);
  for (std::size_t c = 0; c < km.num_clusters; ++c)
    for (std::size_t j = 0; j < dim; ++j)
      entry.centroids.push_back(static_cast<float>(centroid_acc[c][j] / static_cast<double>(sizes[c])));
  return entry;
}

/// Immutable once built; safe to share across threads for reading.
class SenseIndex {
 public:
  SenseIndex() = default;
  SenseIndex(std::uint32_t dim, std::uint16_t k) : dim_(dim), k_(k) {
    if (dim == 0) throw ContractError("index dim must be positive");
    if (k == 0) throw ContractError("index K must be >= 1");
  }

  void add(SenseIndexEntry entry) {
    entry.validate(dim_, k_);
    if (lookup_.contains(entry.word)) throw ContractError("duplicate index entry: " + entry.word);
    lookup_.emplace(entry.word, entries_.size());
    entries_.push_back(std::move(entry));
  }

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint16_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<SenseIndexEntry>& entries() const noexcept { return entries_; }

  const SenseIndexEntry* find(std::string_view word) const {
    auto it = lookup_.find(std::string(word));
    return it == lookup_.end() ? nullptr : &entries_[it->second];
  }

  friend bool operator==(const SenseIndex& a, const SenseIndex& b) {
    return a.dim_ == b.dim_ && a.k_ == b.k_ && a.entries_ == b.entries_;
  }

 private:
  std::uint32_t dim_ = 0;
  std::uint16_t k_ = 0;
  std::vector<SenseIndexEntry> entries_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct IndexBuildOptions {
  std::uint16_t k = 4;
  std::uint64_t seed = 0;
  Normalization normalization = Normalization::kAfterConcat;
  unsigned threads = 0;
};

struct WordOccurrences {
  std::string word;
  std::vector<LayeredEmbedding> occurrences;
};

/// Builds one entry per word, in input order. Each word's clustering seed is
/// derived from (seed, word), so results do not depend on thread count or
/// word order.
inline SenseIndex build_index(std::span<const WordOccurrences> words, std::uint32_t dim,
                              const IndexBuildOptions& opts) {
  std::vector<SenseIndexEntry> built(words.size());
  parallel_for(words.size(), opts.threads, [&](std::size_t i) {
    const auto& w = words[i];
    built[i] = build_entry(w.word, w.occurrences, opts.k, splitmix64(opts.seed ^ fnv1a(w.word)), opts.normalization);
  });
  SenseIndex index(dim, opts.k);
  for (auto& e : built) index.add(std::move(e));
  return index;
}

inline constexpr char kIndexMagic[4] = {'D', 'L', 'X', 'I'};
inline constexpr std::uint16_t kIndexVersion = 1;
inline constexpr std::size_t kIndexHeaderBytes = 4 + 2 + 4 + 2 + 4;

/// Exact file size for entries with the given word byte lengths and cluster
/// counts.
inline std::uint64_t index_file_size(std::uint32_t dim, std::span<const std::size_t> word_bytes,
                                     std::span<const std::size_t> cluster_counts) {
  if (word_bytes.size() != cluster_counts.size()) throw ContractError("index_file_size: length mismatch");
  std::uint64_t size = kIndexHeaderBytes;
  for (std::size_t i = 0; i < word_bytes.size(); ++i) {
    const std::uint64_t c = cluster_counts[i];
    size += 2 + word_bytes[i];              // word
    size += 4 + 1 + 4 * c;                  // count, cluster count, sizes
    size += 4ULL * (c + 1) * dim;           // centroids + mean
  }
  return size;
}

inline std::string serialize_index(const SenseIndex& index) {
  io::Writer w;
  w.put_bytes(std::string_view(kIndexMagic, 4));
  w.put<std::uint16_t>(kIndexVersion);
  w.put<std::uint32_t>(index.dim());
  w.put<std::uint16_t>(index.k());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.size()));
  for (const auto& e : index.entries()) {
    w.put_string<std::uint16_t>(e.word);
    w.put<std::uint32_t>(e.occurrence_count);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.cluster_count()));
    w.put_array<std::uint32_t>(e.cluster_sizes);
    w.put_array<float>(e.centroids);
    w.put_array<float>(e.mean_embedding);
  }
  return std::move(w).take();
}

inline SenseIndex parse_index(std::string_view bytes) {
  io::Reader r(bytes);
  auto magic = r.get_bytes(4, "magic");
  if (magic != std::string_view(kIndexMagic, 4)) throw FormatError("not a DLXI index (bad magic)", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kIndexVersion)
    throw FormatError("unsupported index version " + std::to_string(version), r.offset() - 2);
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) throw FormatError("index dim is zero", r.offset() - 4);
  const auto k = r.get<std::uint16_t>("K");
  if (k == 0) throw FormatError("index K is zero", r.offset() - 2);
  const auto count = r.get<std::uint32_t>("entry count");

  SenseIndex index(dim, k);
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto entry_offset = r.offset();
    SenseIndexEntry e;
    e.word = r.get_string<std::uint16_t>("word");
    e.occurrence_count = r.get<std::uint32_t>("occurrence count");
    const auto clusters = r.get<std::uint8_t>("cluster count");
    if (clusters == 0 || clusters > k)
      throw FormatError("entry " + std::to_string(n) + ": cluster count " + std::to_string(clusters) +
                            " outside [1, " + std::to_string(k) + "]",
                        r.offset() - 1);
    e.cluster_sizes.resize(clusters);
    r.get_array<std::uint32_t>(e.cluster_sizes, "cluster sizes");
    e.centroids.resize(static_cast<std::size_t>(clusters) * dim);
    r.get_array<float>(e.centroids, "centroids");
    e.mean_embedding.resize(dim);
    r.get_array<float>(e.mean_embedding, "mean vector");
    for (float v : e.centroids)
      if (!std::isfinite(v)) throw FormatError("entry " + std::to_string(n) + ": non-finite value", entry_offset);
    for (float v : e.mean_embedding)
      if (!std::isfinite(v)) throw FormatError("entry " + std::to_string(n) + ": non-finite value", entry_offset);
    try {
      index.add(std::move(e));
    } catch (const ContractError& err) {
      throw FormatError(err.what(), entry_offset);
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after last index entry");
  return index;
}

inline void save_index(const SenseIndex& index, const std::string& path) {
  io::write_file(path, serialize_index(index));
}

inline SenseIndex load_index(const std::string& path) { return parse_index(io::read_file(path)); }

}  // namespace dlx
