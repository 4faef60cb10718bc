#pragma once

// Substitute vocabulary construction and context sampling over a corpus
// stored as one UTF-8 sentence per line.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/random.hpp"
#include "dlx/text.hpp"

namespace dlx {

using TokenCounts = std::unordered_map<std::string, std::uint64_t>;

struct VocabEntry {
  std::string word;
  std::uint64_t corpus_frequency = 0;

  friend bool operator==(const VocabEntry&, const VocabEntry&) = default;
};

struct Vocabulary {
  std::vector<VocabEntry> entries;
  // Set when fewer tokens survived the filter than were requested.
  bool short_of_requested = false;
};

/// Whitespace token counts; every surface form is counted as-is.
inline TokenCounts count_tokens(std::istream& corpus) {
  TokenCounts counts;
  std::string line;
  while (std::getline(corpus, line)) {
    for (const auto& tok : text::split_whitespace(line)) ++counts[std::string(tok.text)];
  }
  return counts;
}

inline void merge_counts(TokenCounts& into, const TokenCounts& shard) {
  for (const auto& [w, c] : shard) into[w] += c;
}

/// Drops non-lexical tokens, then keeps the `size` most frequent, ordered by
/// count descending and word ascending.
inline Vocabulary build_vocab(const TokenCounts& counts, std::size_t size) {
  if (size < 1) throw ContractError("vocabulary size must be >= 1");
  Vocabulary vocab;
  for (const auto& [w, c] : counts)
    if (text::is_lexical_token(w)) vocab.entries.push_back({w, c});
  std::sort(vocab.entries.begin(), vocab.entries.end(), [](const VocabEntry& a, const VocabEntry& b) {
    if (a.corpus_frequency != b.corpus_frequency) return a.corpus_frequency > b.corpus_frequency;
    return a.word < b.word;
  });
  if (vocab.entries.size() < size) {
    vocab.short_of_requested = true;
  } else {
    vocab.entries.resize(size);
  }
  return vocab;
}

inline void write_vocab(std::ostream& out, const std::vector<VocabEntry>& entries) {
  for (const auto& e : entries) out << e.word << '\t' << e.corpus_frequency << '\n';
}

inline std::vector<VocabEntry> read_vocab(std::istream& in, const std::string& source = "vocab") {
  std::vector<VocabEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty()) continue;
    auto fields = text::split(view, '\t');
    if (fields.size() != 2) throw ParseError(source, lineno, "expected word<TAB>count");
    auto count = text::parse_number<std::uint64_t>(fields[1]);
    if (!count || fields[0].empty()) throw ParseError(source, lineno, "bad vocabulary row");
    out.push_back({std::string(fields[0]), *count});
  }
  return out;
}

struct Occurrence {
  std::uint64_t sentence_id = 0;
  std::uint32_t start = 0;  // byte offsets, [start, end)
  std::uint32_t end = 0;

  friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

/// word -> first occurrence in each sentence containing it, in sentence order.
using SentenceIndex = std::unordered_map<std::string, std::vector<Occurrence>>;

inline SentenceIndex index_sentences(std::istream& corpus, const std::unordered_set<std::string>& words) {
  SentenceIndex index;
  std::string line;
  std::uint64_t sentence_id = 0;
  std::unordered_set<std::string_view> seen;
  while (std::getline(corpus, line)) {
    seen.clear();
    for (const auto& tok : text::split_whitespace(line)) {
      if (!words.contains(std::string(tok.text)) || !seen.insert(tok.text).second) continue;
      index[std::string(tok.text)].push_back(
          {sentence_id, static_cast<std::uint32_t>(tok.start), static_cast<std::uint32_t>(tok.end)});
    }
    ++sentence_id;
  }
  return index;
}

struct ContextManifest {
  std::string word;
  std::vector<Occurrence> occurrences;  // sorted by sentence_id
  std::size_t requested_n = 0;

  friend bool operator==(const ContextManifest&, const ContextManifest&) = default;
};

/// Uniform sample of min(n, available) sentences without replacement. The
/// draw depends only on (word, the word's occurrence list, n, seed).
inline ContextManifest sample_contexts(const std::string& word, const SentenceIndex& index, std::size_t n,
                                       std::uint64_t seed) {
  if (n < 1) throw ContractError("sample size must be >= 1");
  auto it = index.find(word);
  if (it == index.end() || it->second.empty()) throw NotFoundError("word not found in corpus: " + word);
  const auto& pool = it->second;

  ContextManifest manifest{word, {}, n};
  if (pool.size() <= n) {
    manifest.occurrences = pool;
    return manifest;
  }
  std::vector<std::size_t> ids(pool.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  Rng rng(splitmix64(seed ^ fnv1a(word)));
  // Partial Fisher-Yates: the first n slots become the sample.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + rng.below(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  manifest.occurrences.reserve(n);
  for (auto i : ids) manifest.occurrences.push_back(pool[i]);
  return manifest;
}

inline void write_manifest(std::ostream& out, const std::vector<ContextManifest>& manifests) {
  for (const auto& m : manifests)
    for (const auto& o : m.occurrences)
      out << m.word << '\t' << o.sentence_id << '\t' << o.start << '\t' << o.end << '\n';
}

struct ManifestRow {
  std::string word;
  Occurrence occurrence;
};

inline std::vector<ManifestRow> read_manifest(std::istream& in, const std::string& source = "manifest") {
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty()) continue;
    auto f = text::split(view, '\t');
    if (f.size() != 4) throw ParseError(source, lineno, "expected word<TAB>sentence_id<TAB>start<TAB>end");
    auto sid = text::parse_number<std::uint64_t>(f[1]);
    auto start = text::parse_number<std::uint32_t>(f[2]);
    auto end = text::parse_number<std::uint32_t>(f[3]);
    if (f[0].empty() || !sid || !start || !end || *start >= *end)
      throw ParseError(source, lineno, "bad manifest row");
    rows.push_back({std::string(f[0]), {*sid, *start, *end}});
  }
  return rows;
}

}  // namespace dlx
