#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/text.hpp"

namespace dlx {

using Vec = std::vector<double>;

/// Shape of the per-occurrence embeddings: width, model depth and the
/// ordered subset of layers that are kept.
struct EmbeddingSpec {
  std::uint32_t dim = 0;
  std::uint32_t num_layers = 0;
  std::vector<std::uint16_t> layer_set;

  void validate() const {
    if (dim == 0) throw ContractError("embedding dim must be positive");
    if (num_layers == 0) throw ContractError("layer count must be positive");
    if (layer_set.empty()) throw ContractError("layer set must be non-empty");
    for (std::size_t i = 0; i < layer_set.size(); ++i) {
      if (layer_set[i] < 1 || layer_set[i] > num_layers)
        throw ContractError("layer " + std::to_string(layer_set[i]) + " outside [1, " +
                            std::to_string(num_layers) + "]");
      if (i > 0 && layer_set[i] <= layer_set[i - 1])
        throw ContractError("layer set must be strictly increasing");
    }
  }

  std::size_t width() const noexcept { return layer_set.size() * dim; }

  // Position of a layer id inside layer_set, or npos.
  std::size_t position_of(std::uint16_t layer) const noexcept {
    auto it = std::lower_bound(layer_set.begin(), layer_set.end(), layer);
    if (it == layer_set.end() || *it != layer) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(it - layer_set.begin());
  }

  /// All layers except the first and last two: {3, ..., L-2}.
  static EmbeddingSpec middle_layers(std::uint32_t dim, std::uint32_t num_layers) {
    if (num_layers < 5) throw ContractError("middle-layer selection needs at least 5 layers");
    EmbeddingSpec spec{dim, num_layers, {}};
    for (std::uint32_t l = 3; l <= num_layers - 2; ++l) spec.layer_set.push_back(static_cast<std::uint16_t>(l));
    return spec;
  }

  static EmbeddingSpec layer_range(std::uint32_t dim, std::uint16_t first, std::uint16_t last) {
    if (first < 1 || last < first) throw ContractError("invalid layer range");
    EmbeddingSpec spec{dim, last, {}};
    for (std::uint32_t l = first; l <= last; ++l) spec.layer_set.push_back(static_cast<std::uint16_t>(l));
    return spec;
  }

  // Two specs are interchangeable when they select the same layers at the
  // same width; num_layers only bounds the selection.
  friend bool operator==(const EmbeddingSpec& a, const EmbeddingSpec& b) {
    return a.dim == b.dim && a.layer_set == b.layer_set;
  }
};

/// Per-layer vectors of one word occurrence, stored flat in increasing layer
/// order (layer_set[0] first).
class LayeredEmbedding {
 public:
  LayeredEmbedding() = default;

  LayeredEmbedding(EmbeddingSpec spec, std::vector<float> values)
      : spec_(std::move(spec)), values_(std::move(values)) {
    validate();
  }

  const EmbeddingSpec& spec() const noexcept { return spec_; }
  std::span<const float> values() const noexcept { return values_; }
  std::size_t layer_count() const noexcept { return spec_.layer_set.size(); }

  std::span<const float> layer_at(std::size_t position) const {
    if (position >= layer_count()) throw ContractError("layer position out of range");
    return std::span<const float>(values_).subspan(position * spec_.dim, spec_.dim);
  }

  std::span<const float> layer(std::uint16_t layer_id) const {
    auto pos = spec_.position_of(layer_id);
    if (pos == static_cast<std::size_t>(-1))
      throw ContractError("layer " + std::to_string(layer_id) + " not in layer set");
    return layer_at(pos);
  }

  /// Keeps only the given layers (must be a subset of the current set).
  LayeredEmbedding select_layers(const EmbeddingSpec& target) const {
    if (target.dim != spec_.dim) throw ContractError("dim mismatch in layer selection");
    std::vector<float> out;
    out.reserve(target.width());
    for (auto id : target.layer_set) {
      auto l = layer(id);
      out.insert(out.end(), l.begin(), l.end());
    }
    return LayeredEmbedding(target, std::move(out));
  }

  friend bool operator==(const LayeredEmbedding&, const LayeredEmbedding&) = default;

 private:
  void validate() const {
    spec_.validate();
    if (values_.size() != spec_.width())
      throw ContractError("embedding has " + std::to_string(values_.size()) + " values, expected " +
                          std::to_string(spec_.width()));
    for (float v : values_)
      if (!std::isfinite(v)) throw ContractError("embedding contains a non-finite value");
  }

  EmbeddingSpec spec_;
  std::vector<float> values_;
};

template <class A, class B>
double dot(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) throw ContractError("vector length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  return acc;
}

template <class A>
double squared_norm(std::span<const A> u) {
  double acc = 0.0;
  for (A x : u) acc += static_cast<double>(x) * static_cast<double>(x);
  return acc;
}

template <class A>
double norm(std::span<const A> u) {
  return std::sqrt(squared_norm(u));
}

/// u.v / (|u| |v|), accumulated in double. Computed as
/// u.v / sqrt(|u|^2 |v|^2) so that cosine(u, u) is exactly 1.
template <class A, class B>
double cosine(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) throw ContractError("cosine: vector length mismatch");
  const double nu2 = squared_norm(u);
  const double nv2 = squared_norm(v);
  if (nu2 == 0.0 || nv2 == 0.0) throw DomainError("cosine: zero-norm vector");
  return std::clamp(dot(u, v) / std::sqrt(nu2 * nv2), -1.0, 1.0);
}

// Same value as cosine() when the squared norms are already known.
template <class A, class B>
double cosine_with_norms(std::span<const A> u, double u_sq_norm, std::span<const B> v, double v_sq_norm) {
  if (u_sq_norm == 0.0 || v_sq_norm == 0.0) throw DomainError("cosine: zero-norm vector");
  return std::clamp(dot(u, v) / std::sqrt(u_sq_norm * v_sq_norm), -1.0, 1.0);
}

inline double cosine(const Vec& u, const Vec& v) {
  return cosine(std::span<const double>(u), std::span<const double>(v));
}

/// Componentwise sum over every selected layer.
inline Vec sum_layers(const LayeredEmbedding& e) {
  const auto dim = e.spec().dim;
  Vec out(dim, 0.0);
  for (std::size_t p = 0; p < e.layer_count(); ++p) {
    auto l = e.layer_at(p);
    for (std::size_t i = 0; i < dim; ++i) out[i] += static_cast<double>(l[i]);
  }
  return out;
}

enum class Normalization {
  kAfterConcat,    // normalise the concatenated vector once
  kPerLayerThenConcat,  // unit-normalise each layer, then the concatenation
};

/// Concatenates the layers in increasing order and L2-normalises the result.
inline Vec concat_normalized(const LayeredEmbedding& e, Normalization mode = Normalization::kAfterConcat) {
  auto values = e.values();
  Vec out(values.begin(), values.end());
  if (mode == Normalization::kPerLayerThenConcat) {
    const auto dim = e.spec().dim;
    for (std::size_t p = 0; p < e.layer_count(); ++p) {
      std::span<double> l(out.data() + p * dim, dim);
      const double n = norm(std::span<const double>(l));
      if (n == 0.0) throw DomainError("concat_normalized: zero layer vector");
      for (auto& x : l) x /= n;
    }
  }
  const double n = norm(std::span<const double>(out));
  if (n == 0.0) throw DomainError("concat_normalized: all-zero occurrence vector");
  for (auto& x : out) x /= n;
  return out;
}

/// Levenshtein distance over code points.
inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + cost});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Levenshtein(a, b) / max(|a|, |b|) on lowercase-folded code points.
inline double normalized_edit_distance(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) throw ContractError("normalized_edit_distance: empty string");
  const auto ca = text::to_lower_codepoints(a);
  const auto cb = text::to_lower_codepoints(b);
  const auto longest = std::max(ca.size(), cb.size());
  return static_cast<double>(levenshtein(ca, cb)) / static_cast<double>(longest);
}

}  // namespace dlx
