#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/provider.hpp"
#include "dlx/sense_index.hpp"

namespace dlx {

/// Groups batch records by word (first-appearance order). With `layers`,
/// each occurrence is cut down to that layer subset.
inline std::vector<WordOccurrences> group_occurrences(std::span<const ExchangeBatch> batches,
                                                      const std::optional<EmbeddingSpec>& layers = std::nullopt) {
  std::vector<WordOccurrences> out;
  std::unordered_map<std::string, std::size_t> slot;
  const EmbeddingSpec* first = nullptr;
  for (const auto& batch : batches) {
    if (!first) first = &batch.spec;
    if (!(batch.spec == *first)) throw DataError("batches disagree on embedding shape");
    for (std::size_t i = 0; i < batch.records.size(); ++i) {
      auto emb = batch.embedding(i);
      if (layers) emb = emb.select_layers(*layers);
      auto [it, inserted] = slot.try_emplace(batch.records[i].word, out.size());
      if (inserted) out.push_back({batch.records[i].word, {}});
      out[it->second].occurrences.push_back(std::move(emb));
    }
  }
  return out;
}

inline SenseIndex build_index_from_batches(std::span<const ExchangeBatch> batches, const IndexBuildOptions& opts,
                                           const std::optional<EmbeddingSpec>& layers = std::nullopt) {
  if (batches.empty()) throw DataError("no batches to build an index from");
  auto words = group_occurrences(batches, layers);
  return build_index(words, batches.front().spec.dim, opts);
}

}  // namespace dlx
