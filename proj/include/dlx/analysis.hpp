#pragma once

// Diagnostics over predictions: agreement with a preceding article,
// frequency buckets of correctly predicted words, and per-layer sweeps.

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/corpus_vocab.hpp"
#include "dlx/evaluation.hpp"
#include "dlx/lemma.hpp"
#include "dlx/provider.hpp"
#include "dlx/sense_index.hpp"
#include "dlx/substitution.hpp"
#include "dlx/text.hpp"

namespace dlx {

enum class AgreementMode { kPhonetic, kGender };
enum class AgreementClass { kVowelInitial, kConsonantInitial, kMasculine, kFeminine };

inline AgreementMode mode_of(AgreementClass c) {
  return (c == AgreementClass::kVowelInitial || c == AgreementClass::kConsonantInitial) ? AgreementMode::kPhonetic
                                                                                          : AgreementMode::kGender;
}

inline std::optional<AgreementClass> parse_agreement_class(std::string_view s) {
  if (s == "vowel" || s == "vowel-initial") return AgreementClass::kVowelInitial;
  if (s == "consonant" || s == "consonant-initial") return AgreementClass::kConsonantInitial;
  if (s == "masculine" || s == "m") return AgreementClass::kMasculine;
  if (s == "feminine" || s == "f") return AgreementClass::kFeminine;
  return std::nullopt;
}

/// word -> phonetic class (English) or grammatical gender (Italian). All
/// entries come from one mode.
class AgreementLexicon {
 public:
  AgreementLexicon() = default;
  explicit AgreementLexicon(AgreementMode mode) : mode_(mode) {}

  AgreementMode mode() const noexcept { return mode_; }

  void add(std::string word, AgreementClass cls) {
    if (mode_of(cls) != mode_) throw ContractError("lexicon mixes phonetic and gender classes");
    map_[std::move(word)] = cls;
  }

  std::optional<AgreementClass> lookup(const std::string& word) const {
    auto it = map_.find(word);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const noexcept { return map_.size(); }

  // TSV: word<TAB>class
  static AgreementLexicon read(std::istream& in, const std::string& source = "lexicon") {
    std::optional<AgreementLexicon> lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = text::strip_cr(line);
      if (view.empty() || view.front() == '#') continue;
      auto f = text::split(view, '\t');
      if (f.size() != 2 || f[0].empty()) throw ParseError(source, lineno, "expected word<TAB>class");
      auto cls = parse_agreement_class(text::trim(f[1]));
      if (!cls) throw ParseError(source, lineno, "unknown class '" + std::string(f[1]) + "'");
      if (!lex) lex.emplace(mode_of(*cls));
      if (mode_of(*cls) != lex->mode()) throw ParseError(source, lineno, "lexicon mixes phonetic and gender classes");
      lex->add(std::string(f[0]), *cls);
    }
    if (!lex) throw ParseError(source, lineno, "empty lexicon");
    return std::move(*lex);
  }

 private:
  AgreementMode mode_ = AgreementMode::kPhonetic;
  std::unordered_map<std::string, AgreementClass> map_;
};

inline const std::vector<std::string>& configured_articles(AgreementMode mode) {
  static const std::vector<std::string> phonetic{"a", "an"};
  static const std::vector<std::string> gender{"un", "una", "la", "le", "il", "i"};
  return mode == AgreementMode::kPhonetic ? phonetic : gender;
}

/// Class a noun must have to agree with the article.
inline AgreementClass required_class(std::string_view article, AgreementMode mode) {
  if (mode == AgreementMode::kPhonetic) {
    if (article == "a") return AgreementClass::kConsonantInitial;
    if (article == "an") return AgreementClass::kVowelInitial;
  } else {
    if (article == "una" || article == "la" || article == "le") return AgreementClass::kFeminine;
    if (article == "un" || article == "il" || article == "i") return AgreementClass::kMasculine;
  }
  throw ContractError("article '" + std::string(article) + "' is not configured for this lexicon mode");
}

struct AgreementResult {
  std::size_t usable = 0;  // predictions known to the lexicon
  std::size_t agreeing = 0;

  std::optional<double> fraction() const {
    if (usable == 0) return std::nullopt;
    return static_cast<double>(agreeing) / static_cast<double>(usable);
  }
};

/// Share of top-n predictions (pooled over instances) whose class matches
/// the article. Words unknown to the lexicon are left out entirely.
inline AgreementResult article_agreement(std::span<const std::vector<std::string>> predictions,
                                         std::string_view article, const AgreementLexicon& lexicon,
                                         std::size_t top_n = 10) {
  const auto want = required_class(article, lexicon.mode());
  AgreementResult r;
  for (const auto& list : predictions) {
    for (std::size_t i = 0; i < list.size() && i < top_n; ++i) {
      auto cls = lexicon.lookup(list[i]);
      if (!cls) continue;
      ++r.usable;
      if (*cls == want) ++r.agreeing;
    }
  }
  return r;
}

/// The lowercased token immediately before the target span, if any.
inline std::optional<std::string> preceding_token(const std::string& sentence, Span span) {
  auto tokens = text::split_whitespace(std::string_view(sentence).substr(0, span.start));
  if (tokens.empty()) return std::nullopt;
  return text::to_lower(tokens.back().text);
}

/// Bucket edges: low < low_edge <= med <= high_edge < high.
class FrequencyTable {
 public:
  enum class Bucket { kLow, kMed, kHigh, kUnknown };

  explicit FrequencyTable(std::uint64_t low_edge = 50000, std::uint64_t high_edge = 100000)
      : low_edge_(low_edge), high_edge_(high_edge) {
    if (low_edge >= high_edge) throw ContractError("frequency bucket edges must be strictly increasing");
  }

  void set(std::string word, std::uint64_t count) { counts_[std::move(word)] = count; }

  Bucket bucket(const std::string& word) const {
    auto it = counts_.find(word);
    if (it == counts_.end()) return Bucket::kUnknown;
    if (it->second < low_edge_) return Bucket::kLow;
    if (it->second <= high_edge_) return Bucket::kMed;
    return Bucket::kHigh;
  }

  // TSV: word<TAB>count
  static FrequencyTable read(std::istream& in, const std::string& source = "frequencies",
                             std::uint64_t low_edge = 50000, std::uint64_t high_edge = 100000) {
    FrequencyTable t(low_edge, high_edge);
    for (auto& e : read_vocab(in, source)) t.set(std::move(e.word), e.corpus_frequency);
    return t;
  }

 private:
  std::uint64_t low_edge_;
  std::uint64_t high_edge_;
  std::unordered_map<std::string, std::uint64_t> counts_;
};

struct BucketCounts {
  std::size_t low = 0, med = 0, high = 0, unknown = 0;

  std::size_t total() const noexcept { return low + med + high + unknown; }
  friend bool operator==(const BucketCounts&, const BucketCounts&) = default;
};

inline BucketCounts freq_buckets(std::span<const std::string> matches, const FrequencyTable& table) {
  BucketCounts c;
  for (const auto& w : matches) {
    switch (table.bucket(w)) {
      case FrequencyTable::Bucket::kLow: ++c.low; break;
      case FrequencyTable::Bucket::kMed: ++c.med; break;
      case FrequencyTable::Bucket::kHigh: ++c.high; break;
      case FrequencyTable::Bucket::kUnknown: ++c.unknown; break;
    }
  }
  return c;
}

/// Top-n predictions (folded) that appear in the item's gold set.
inline std::vector<std::string> matched_predictions(std::span<const GoldItem> gold, const PredictionTable& predictions,
                                                    const LemmaTable& lemmas, GoldLabel level, std::size_t top_n = 10) {
  std::vector<std::string> out;
  for (const auto& item : gold) {
    auto it = predictions.find(item.instance_id);
    if (it == predictions.end()) continue;
    auto g = gold_set(item, lemmas, level);
    for (auto& w : fold_top_n(it->second, lemmas, nullptr, top_n))
      if (g.contains(w)) out.push_back(std::move(w));
  }
  return out;
}

struct LayerSweepPoint {
  std::string key;  // "layer <l>" or "combined"
  std::vector<std::uint16_t> layers;
  double value = 0.0;
};

using PredictionMetric = std::function<double(const std::vector<Prediction>&)>;

/// Runs the pipeline once per single layer (each with its own index and the
/// provider cut to that layer), then once with the combined index over the
/// provider's full layer set.
inline std::vector<LayerSweepPoint> layer_sweep(std::span<const SubstitutionQuery> queries,
                                                const std::map<std::uint16_t, const SenseIndex*>& per_layer,
                                                const SenseIndex* combined, std::span<const std::uint16_t> layers,
                                                Provider& provider, const GenerationConfig& cfg,
                                                const PredictionMetric& metric, const LemmaTable* lemmas = nullptr) {
  std::vector<LayerSweepPoint> out;
  for (auto layer : layers) {
    auto it = per_layer.find(layer);
    if (it == per_layer.end() || !it->second)
      throw NotFoundError("layer sweep: no index for layer " + std::to_string(layer));
    EmbeddingSpec single{provider.spec().dim, std::max<std::uint32_t>(provider.spec().num_layers, layer), {layer}};
    LayerSelectProvider sliced(provider, single);
    out.push_back({"layer " + std::to_string(layer), {layer}, metric(generate_all(queries, *it->second, sliced, cfg, lemmas))});
  }
  if (combined) {
    out.push_back({"combined", provider.spec().layer_set, metric(generate_all(queries, *combined, provider, cfg, lemmas))});
  }
  return out;
}

struct AnalysisRow {
  std::string analysis;
  std::string key;
  std::string value;
};

inline void write_analysis(std::ostream& out, std::span<const AnalysisRow> rows) {
  for (const auto& r : rows) out << r.analysis << '\t' << r.key << '\t' << r.value << '\n';
}

}  // namespace dlx
