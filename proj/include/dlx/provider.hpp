#pragma once

// Embedding exchange between the core and an extractor. Bulk occurrence
// vectors travel as "DLXB" batch files; in-context requests go through a
// Provider (a local socket client, or the deterministic StubProvider).

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dlx/binary_io.hpp"
#include "dlx/error.hpp"
#include "dlx/random.hpp"
#include "dlx/text.hpp"
#include "dlx/vector_core.hpp"

namespace dlx {

struct BatchRecord {
  std::string word;
  std::uint64_t sentence_id = 0;
  std::vector<float> values;  // |layers| x dim, increasing layer order

  friend bool operator==(const BatchRecord&, const BatchRecord&) = default;
};

struct ExchangeBatch {
  EmbeddingSpec spec;
  std::vector<BatchRecord> records;

  LayeredEmbedding embedding(std::size_t i) const { return LayeredEmbedding(spec, records.at(i).values); }

  friend bool operator==(const ExchangeBatch& a, const ExchangeBatch& b) {
    return a.spec == b.spec && a.records == b.records;
  }
};

inline constexpr char kBatchMagic[4] = {'D', 'L', 'X', 'B'};
inline constexpr std::uint16_t kBatchVersion = 1;

inline void encode_batch(io::Writer& w, const ExchangeBatch& batch) {
  batch.spec.validate();
  w.put_bytes(std::string_view(kBatchMagic, 4));
  w.put<std::uint16_t>(kBatchVersion);
  w.put<std::uint32_t>(batch.spec.dim);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(batch.spec.layer_set.size()));
  w.put_array<std::uint16_t>(batch.spec.layer_set);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(batch.records.size()));
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    const auto& r = batch.records[i];
    if (r.values.size() != batch.spec.width())
      throw ContractError("batch record " + std::to_string(i) + " has " + std::to_string(r.values.size()) +
                          " values, expected " + std::to_string(batch.spec.width()));
    w.put_string<std::uint16_t>(r.word);
    w.put<std::uint64_t>(r.sentence_id);
    w.put_array<float>(r.values);
  }
}

/// Decodes one batch starting at the reader's position. The spec's layer
/// count L is not stored, so it is set to the highest layer id.
inline ExchangeBatch decode_batch(io::Reader& r) {
  const auto start = r.offset();
  if (r.get_bytes(4, "magic") != std::string_view(kBatchMagic, 4))
    throw FormatError("not a DLXB batch (bad magic)", start);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kBatchVersion) throw FormatError("unsupported batch version " + std::to_string(version), start + 4);
  ExchangeBatch batch;
  batch.spec.dim = r.get<std::uint32_t>("dim");
  if (batch.spec.dim == 0) throw FormatError("batch dim is zero", r.offset() - 4);
  const auto layer_count = r.get<std::uint16_t>("layer count");
  if (layer_count == 0) throw FormatError("batch declares no layers", r.offset() - 2);
  batch.spec.layer_set.resize(layer_count);
  r.get_array<std::uint16_t>(batch.spec.layer_set, "layer ids");
  for (std::size_t i = 0; i < layer_count; ++i) {
    if (batch.spec.layer_set[i] == 0 || (i > 0 && batch.spec.layer_set[i] <= batch.spec.layer_set[i - 1]))
      throw FormatError("layer ids must be positive and strictly increasing", r.offset());
  }
  batch.spec.num_layers = batch.spec.layer_set.back();
  const auto count = r.get<std::uint32_t>("record count");
  const std::size_t width = batch.spec.width();
  batch.records.reserve(std::min<std::size_t>(count, r.remaining() / (2 + 8 + 4 * width) + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    try {
      BatchRecord rec;
      rec.word = r.get_string<std::uint16_t>("record word");
      rec.sentence_id = r.get<std::uint64_t>("sentence id");
      rec.values.resize(width);
      r.get_array<float>(rec.values, "record vectors");
      for (float v : rec.values)
        if (!std::isfinite(v)) r.fail("non-finite value");
      batch.records.push_back(std::move(rec));
    } catch (const FormatError& e) {
      throw FormatError("record " + std::to_string(i) + ": " + e.what(), r.offset());
    }
  }
  return batch;
}

inline std::string serialize_batch(const ExchangeBatch& batch) {
  io::Writer w;
  encode_batch(w, batch);
  return std::move(w).take();
}

inline ExchangeBatch parse_batch(std::string_view bytes) {
  io::Reader r(bytes);
  auto batch = decode_batch(r);
  if (!r.at_end()) r.fail("trailing bytes after last batch record");
  return batch;
}

inline void write_batch(const ExchangeBatch& batch, const std::string& path) {
  io::write_file(path, serialize_batch(batch));
}

inline ExchangeBatch read_batch(const std::string& path) { return parse_batch(io::read_file(path)); }

struct Span {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  std::uint32_t length() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Embed the word at `target_span`; if `replacement` is set, that text is
/// substituted at the span before encoding.
struct InContextRequest {
  std::string sentence;
  Span target_span;
  std::optional<std::string> replacement;

  // Empty string when valid, otherwise a description of the problem.
  std::string problem() const {
    if (target_span.start >= target_span.end) return "empty or inverted target span";
    if (target_span.end > sentence.size()) return "target span past end of sentence";
    if (replacement && replacement->empty()) return "empty replacement";
    return {};
  }

  /// Sentence and span after applying the replacement.
  std::pair<std::string, Span> resolved() const {
    if (!replacement) return {sentence, target_span};
    std::string s = sentence.substr(0, target_span.start) + *replacement + sentence.substr(target_span.end);
    return {std::move(s),
            Span{target_span.start, static_cast<std::uint32_t>(target_span.start + replacement->size())}};
  }

  friend bool operator==(const InContextRequest&, const InContextRequest&) = default;
};

/// Either an embedding or the extractor's per-request error message.
struct InContextResult {
  std::optional<LayeredEmbedding> embedding;
  std::string error;

  bool ok() const noexcept { return embedding.has_value(); }
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual const EmbeddingSpec& spec() const = 0;
  virtual std::size_t batch_limit() const { return 1024; }

  /// One result per request, in request order. Whole-batch failures (e.g.
  /// the channel is down) throw ProviderError.
  virtual std::vector<InContextResult> embed(std::span<const InContextRequest> requests) = 0;
};

/// Splits the requests into provider-sized batches and preserves order.
inline std::vector<InContextResult> request_in_context(std::span<const InContextRequest> requests,
                                                       Provider& provider) {
  std::vector<InContextResult> out;
  out.reserve(requests.size());
  const std::size_t limit = std::max<std::size_t>(1, provider.batch_limit());
  for (std::size_t i = 0; i < requests.size(); i += limit) {
    auto chunk = requests.subspan(i, std::min(limit, requests.size() - i));
    auto res = provider.embed(chunk);
    if (res.size() != chunk.size())
      throw ProviderError("provider returned " + std::to_string(res.size()) + " results for " +
                          std::to_string(chunk.size()) + " requests");
    for (auto& r : res) {
      if (r.ok() && !(r.embedding->spec() == provider.spec()))
        throw ProviderError("provider returned an embedding with the wrong shape");
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// Deterministic stand-in for a transformer encoder. The vector for a word
/// in context is
///   base(word) + context_weight * noise(sentence with the word removed)
/// per layer, where base() is a pseudo-random direction per word, shifted
/// towards a shared direction for words in the same synonym group. Identical
/// inputs give bit-identical outputs.
class StubProvider : public Provider {
 public:
  struct Options {
    double context_weight = 0.25;
    double group_weight = 1.0;
    double own_weight = 0.35;
  };

  explicit StubProvider(EmbeddingSpec spec) : StubProvider(std::move(spec), {}, Options{}) {}

  StubProvider(EmbeddingSpec spec, std::unordered_map<std::string, std::string> groups, Options opts)
      : spec_(std::move(spec)), groups_(std::move(groups)), opts_(opts) {
    spec_.validate();
  }

  const EmbeddingSpec& spec() const override { return spec_; }

  std::vector<InContextResult> embed(std::span<const InContextRequest> requests) override {
    std::vector<InContextResult> out;
    out.reserve(requests.size());
    for (const auto& req : requests) out.push_back(embed_one(req));
    return out;
  }

  /// Vector for a word regardless of context (context_weight ignored).
  LayeredEmbedding base_embedding(std::string_view word) const {
    std::vector<float> values(spec_.width());
    fill_base(text::to_lower(word), values);
    return LayeredEmbedding(spec_, std::move(values));
  }

  InContextResult embed_one(const InContextRequest& req) const {
    if (auto p = req.problem(); !p.empty()) return {std::nullopt, p};
    auto [sentence, span] = req.resolved();
    const std::string word = text::to_lower(std::string_view(sentence).substr(span.start, span.length()));
    const std::string context = sentence.substr(0, span.start) + "\x1f" + sentence.substr(span.end);
    std::vector<float> values(spec_.width());
    fill_base(word, values);
    if (opts_.context_weight != 0.0) {
      std::vector<double> noise(spec_.width());
      fill_direction(fnv1a(context) ^ 0x5bd1e995ULL, noise);
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = static_cast<float>(values[i] + opts_.context_weight * noise[i]);
    }
    return {LayeredEmbedding(spec_, std::move(values)), {}};
  }

 private:
  // Per-layer unit directions from a hashed seed; layer id is mixed in.
  void fill_direction(std::uint64_t seed, std::span<double> out) const {
    const auto dim = spec_.dim;
    for (std::size_t p = 0; p < spec_.layer_set.size(); ++p) {
      Rng rng(splitmix64(seed ^ (0x9E37ULL * spec_.layer_set[p])));
      double sq = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        out[p * dim + i] = rng.normal();
        sq += out[p * dim + i] * out[p * dim + i];
      }
      const double n = std::sqrt(sq);
      for (std::size_t i = 0; i < dim; ++i) out[p * dim + i] /= n;
    }
  }

  void fill_base(const std::string& word, std::span<float> out) const {
    std::vector<double> own(spec_.width());
    fill_direction(fnv1a(word), own);
    auto g = groups_.find(word);
    if (g == groups_.end()) {
      for (std::size_t i = 0; i < own.size(); ++i) out[i] = static_cast<float>(own[i]);
      return;
    }
    std::vector<double> shared(spec_.width());
    fill_direction(fnv1a("group:" + g->second), shared);
    for (std::size_t i = 0; i < own.size(); ++i)
      out[i] = static_cast<float>(opts_.group_weight * shared[i] + opts_.own_weight * own[i]);
  }

  EmbeddingSpec spec_;
  std::unordered_map<std::string, std::string> groups_;
  Options opts_;
};

/// Slices another provider's output down to a subset of its layers.
class LayerSelectProvider : public Provider {
 public:
  LayerSelectProvider(Provider& inner, EmbeddingSpec subset) : inner_(inner), spec_(std::move(subset)) {
    spec_.validate();
    if (spec_.dim != inner_.spec().dim) throw ContractError("layer subset has a different dim");
    for (auto id : spec_.layer_set)
      if (inner_.spec().position_of(id) == static_cast<std::size_t>(-1))
        throw NotFoundError("provider does not supply layer " + std::to_string(id));
  }

  const EmbeddingSpec& spec() const override { return spec_; }
  std::size_t batch_limit() const override { return inner_.batch_limit(); }

  std::vector<InContextResult> embed(std::span<const InContextRequest> requests) override {
    auto res = inner_.embed(requests);
    for (auto& r : res)
      if (r.ok()) r.embedding = r.embedding->select_layers(spec_);
    return res;
  }

 private:
  Provider& inner_;
  EmbeddingSpec spec_;
};

}  // namespace dlx
