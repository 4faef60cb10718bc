#pragma once

// Gold-standard parsing and lexical-substitution metrics: F (acceptable and
// conceivable gold, strict and lenient), GAP, and the best/oot precision
// scores.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/lemma.hpp"
#include "dlx/provider.hpp"
#include "dlx/random.hpp"
#include "dlx/substitution.hpp"
#include "dlx/text.hpp"

namespace dlx {

enum class GoldLabel { kAcceptable, kConceivable, kUnscored };

// More than five of ten annotators: acceptable; at least one: conceivable.
inline GoldLabel label_for_weight(std::uint32_t weight) {
  if (weight > 5) return GoldLabel::kAcceptable;
  if (weight >= 1) return GoldLabel::kConceivable;
  return GoldLabel::kUnscored;
}

struct GoldSubstitute {
  std::string word;
  std::uint32_t weight = 0;
  GoldLabel label = GoldLabel::kUnscored;

  friend bool operator==(const GoldSubstitute&, const GoldSubstitute&) = default;
};

struct GoldItem {
  std::string instance_id;
  std::string sentence;
  Span target_span;
  std::vector<GoldSubstitute> substitutes;
  std::set<std::string> candidate_pool;  // every word the annotators scored

  bool has_context() const noexcept { return target_span.end > target_span.start; }

  SubstitutionQuery query() const {
    if (!has_context()) throw DataError("gold item '" + instance_id + "' has no sentence context");
    return SubstitutionQuery::make(instance_id, sentence, target_span);
  }
};

inline constexpr std::string_view kGoldHeader = "#dlx-gold v1";

/// Engine-native gold format:
///   #dlx-gold v1
///   ID<TAB>start<TAB>end<TAB>sentence
///   <TAB>word<TAB>weight        (one line per scored substitute)
///   *word                       (candidate pool entry; "*<TAB>word" also accepted)
inline std::vector<GoldItem> parse_gold(std::istream& in, const std::string& source = "gold") {
  std::vector<GoldItem> items;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (!header_seen) {
      if (text::trim(view).empty()) continue;
      if (view != kGoldHeader) throw ParseError(source, lineno, "missing '#dlx-gold v1' header");
      header_seen = true;
      continue;
    }
    if (text::trim(view).empty() || view.starts_with('#')) continue;

    auto body = view;
    if (body.starts_with('\t')) body.remove_prefix(1);
    if (body.starts_with('*')) {
      if (items.empty()) throw ParseError(source, lineno, "pool entry before any item");
      auto word = text::trim(body.substr(1));
      if (word.empty()) throw ParseError(source, lineno, "empty pool entry");
      items.back().candidate_pool.emplace(word);
      continue;
    }
    if (view.starts_with('\t')) {
      if (items.empty()) throw ParseError(source, lineno, "substitute before any item");
      auto f = text::split(body, '\t');
      if (f.size() != 2 || text::trim(f[0]).empty()) throw ParseError(source, lineno, "expected <TAB>word<TAB>weight");
      auto weight = text::parse_number<std::uint32_t>(f[1]);
      if (!weight) throw ParseError(source, lineno, "bad substitute weight");
      auto& item = items.back();
      std::string word(text::trim(f[0]));
      for (const auto& s : item.substitutes)
        if (s.word == word) throw ParseError(source, lineno, "duplicate substitute '" + word + "'");
      item.candidate_pool.insert(word);
      item.substitutes.push_back({std::move(word), *weight, label_for_weight(*weight)});
      continue;
    }
    auto f = text::split(view, '\t');
    if (f.size() < 4) throw ParseError(source, lineno, "expected ID<TAB>start<TAB>end<TAB>sentence");
    GoldItem item;
    item.instance_id = std::string(f[0]);
    if (item.instance_id.empty()) throw ParseError(source, lineno, "empty instance id");
    if (!ids.insert(item.instance_id).second)
      throw ParseError(source, lineno, "duplicate instance id '" + item.instance_id + "'");
    auto start = text::parse_number<std::uint32_t>(f[1]);
    auto end = text::parse_number<std::uint32_t>(f[2]);
    // The sentence is everything after the third tab.
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) pos = view.find('\t', pos) + 1;
    item.sentence = std::string(view.substr(pos));
    if (!start || !end) throw ParseError(source, lineno, "bad span offsets");
    if (*start >= *end || *end > item.sentence.size())
      throw ParseError(source, lineno, "target span [" + std::to_string(*start) + ", " + std::to_string(*end) +
                                           ") out of range for sentence of " +
                                           std::to_string(item.sentence.size()) + " bytes");
    item.target_span = {*start, *end};
    items.push_back(std::move(item));
  }
  if (!header_seen) throw ParseError(source, lineno, "missing '#dlx-gold v1' header");
  return items;
}

inline void write_gold(std::ostream& out, std::span<const GoldItem> items) {
  out << kGoldHeader << '\n';
  for (const auto& item : items) {
    out << item.instance_id << '\t' << item.target_span.start << '\t' << item.target_span.end << '\t'
        << item.sentence << '\n';
    std::set<std::string> labelled;
    for (const auto& s : item.substitutes) {
      out << '\t' << s.word << '\t' << s.weight << '\n';
      labelled.insert(s.word);
    }
    for (const auto& w : item.candidate_pool)
      if (!labelled.contains(w)) out << '*' << w << '\n';
  }
}

/// SemEval-2007 gold lines: `lemma.pos id :: sub weight; sub weight;`.
/// Multiword substitutes are dropped. Items sharing a lemma.pos share a
/// candidate pool (the union of their substitutes), as in the ranking task.
inline std::vector<GoldItem> parse_semeval(std::istream& in, const std::string& source = "semeval") {
  std::vector<GoldItem> items;
  std::unordered_set<std::string> ids;
  std::map<std::string, std::set<std::string>> pools;
  std::vector<std::string> item_lemma;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::trim(text::strip_cr(line));
    if (view.empty()) continue;
    auto sep = view.find("::");
    if (sep == std::string_view::npos) throw ParseError(source, lineno, "missing '::' separator");
    auto head = text::trim(view.substr(0, sep));
    auto head_tokens = text::split_whitespace(head);
    if (head_tokens.size() != 2) throw ParseError(source, lineno, "expected 'lemma.pos id' before '::'");
    GoldItem item;
    item.instance_id = std::string(head_tokens[0].text) + " " + std::string(head_tokens[1].text);
    if (!ids.insert(item.instance_id).second)
      throw ParseError(source, lineno, "duplicate instance id '" + item.instance_id + "'");
    for (auto entry : text::split(view.substr(sep + 2), ';')) {
      entry = text::trim(entry);
      if (entry.empty()) continue;
      auto space = entry.find_last_of(" \t");
      if (space == std::string_view::npos) throw ParseError(source, lineno, "substitute without weight");
      auto weight = text::parse_number<std::uint32_t>(entry.substr(space + 1));
      auto word = text::trim(entry.substr(0, space));
      if (!weight || word.empty()) throw ParseError(source, lineno, "bad substitute entry '" + std::string(entry) + "'");
      if (text::split_whitespace(word).size() > 1) continue;  // multiword expression
      std::string w(word);
      bool merged = false;
      for (auto& s : item.substitutes)
        if (s.word == w) {
          s.weight += *weight;
          s.label = label_for_weight(s.weight);
          merged = true;
        }
      if (!merged) item.substitutes.push_back({w, *weight, label_for_weight(*weight)});
    }
    std::string lemma_pos(head_tokens[0].text);
    for (const auto& s : item.substitutes) pools[lemma_pos].insert(s.word);
    item_lemma.push_back(std::move(lemma_pos));
    items.push_back(std::move(item));
  }
  for (std::size_t i = 0; i < items.size(); ++i) items[i].candidate_pool = pools[item_lemma[i]];
  return items;
}

/// Pool-filter (lenient mode), lemma-fold, dedupe keeping the first
/// occurrence, truncate to n.
inline std::vector<std::string> fold_top_n(std::span<const std::string> raw, const LemmaTable& lemmas,
                                           const std::set<std::string>* pool, std::size_t n) {
  std::unordered_set<std::string> pool_lemmas;
  if (pool)
    for (const auto& w : *pool) pool_lemmas.insert(lemmas.lemma(w));
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& w : raw) {
    if (out.size() >= n) break;
    auto lemma = lemmas.lemma(w);
    if (pool && !pool->contains(w) && !pool_lemmas.contains(lemma)) continue;
    if (seen.insert(lemma).second) out.push_back(std::move(lemma));
  }
  return out;
}

/// Lemma -> weight for substitutes with weight >= min_weight. Forms sharing a
/// lemma keep the larger weight.
inline std::map<std::string, double> gold_weights(const GoldItem& item, const LemmaTable& lemmas,
                                                  std::uint32_t min_weight = 1) {
  std::map<std::string, double> out;
  for (const auto& s : item.substitutes) {
    if (s.weight < min_weight || s.weight == 0) continue;
    auto& w = out[lemmas.lemma(s.word)];
    w = std::max(w, static_cast<double>(s.weight));
  }
  return out;
}

inline std::set<std::string> gold_set(const GoldItem& item, const LemmaTable& lemmas, GoldLabel level) {
  const std::uint32_t min_weight = level == GoldLabel::kAcceptable ? 6 : 1;
  std::set<std::string> out;
  for (const auto& [w, _] : gold_weights(item, lemmas, min_weight)) out.insert(w);
  return out;
}

struct FCounts {
  std::size_t hits = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

inline FCounts f_counts(std::span<const std::string> pred, const std::set<std::string>& gold) {
  FCounts c{0, pred.size(), gold.size()};
  std::unordered_set<std::string> seen;
  for (const auto& w : pred)
    if (gold.contains(w) && seen.insert(w).second) ++c.hits;
  return c;
}

inline double harmonic_f(const FCounts& c) {
  if (c.hits == 0 || c.predicted == 0 || c.gold == 0) return 0.0;
  const double p = static_cast<double>(c.hits) / static_cast<double>(c.predicted);
  const double r = static_cast<double>(c.hits) / static_cast<double>(c.gold);
  return 2.0 * p * r / (p + r);
}

/// Harmonic mean of precision and recall; nullopt for an empty gold set
/// (such items are excluded from corpus averages).
inline std::optional<double> f_score(std::span<const std::string> pred, const std::set<std::string>& gold) {
  if (gold.empty()) return std::nullopt;
  return harmonic_f(f_counts(pred, gold));
}

/// Generalized Average Precision. A word repeated in the prediction is only
/// credited at its first position.
inline double gap(std::span<const std::string> pred, const std::map<std::string, double>& gold) {
  std::vector<double> beta;
  for (const auto& [_, w] : gold)
    if (w > 0.0) beta.push_back(w);
  if (beta.empty()) throw ContractError("gap: empty gold");
  std::sort(beta.begin(), beta.end(), std::greater<>());
  double denom = 0.0, running = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    running += beta[i];
    denom += running / static_cast<double>(i + 1);
  }
  double numer = 0.0, cum = 0.0;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double alpha = 0.0;
    if (auto it = gold.find(pred[i]); it != gold.end() && it->second > 0.0 && seen.insert(pred[i]).second)
      alpha = it->second;
    cum += alpha;
    if (alpha > 0.0) numer += cum / static_cast<double>(i + 1);
  }
  return numer / denom;
}

/// Appends pool words missing from the ranking, in seeded random order.
inline std::vector<std::string> append_unscored(std::vector<std::string> ranked, const std::set<std::string>& pool,
                                                const LemmaTable& lemmas, std::uint64_t seed) {
  std::unordered_set<std::string> present(ranked.begin(), ranked.end());
  std::vector<std::string> extra;
  for (const auto& w : pool) {
    auto l = lemmas.lemma(w);
    if (present.insert(l).second) extra.push_back(std::move(l));
  }
  Rng rng(seed);
  rng.shuffle(extra.begin(), extra.end());
  ranked.insert(ranked.end(), extra.begin(), extra.end());
  return ranked;
}

struct BestOot {
  double best = 0.0;
  double oot = 0.0;
};

/// best: weight of the single top guess over the total gold weight.
/// oot: summed weight of the first ten distinct guesses over the total.
inline BestOot best_oot(std::span<const std::string> pred, const std::map<std::string, double>& gold) {
  double total = 0.0;
  for (const auto& [_, w] : gold) total += w;
  if (total <= 0.0) throw ContractError("best_oot: empty gold");
  auto weight_of = [&](const std::string& w) {
    auto it = gold.find(w);
    return it == gold.end() ? 0.0 : it->second;
  };
  BestOot out;
  if (!pred.empty()) out.best = weight_of(pred[0]) / total;
  std::unordered_set<std::string> seen;
  double covered = 0.0;
  for (std::size_t i = 0; i < pred.size() && seen.size() < 10; ++i)
    if (seen.insert(pred[i]).second) covered += weight_of(pred[i]);
  out.oot = covered / total;
  return out;
}

struct EvalOptions {
  bool strict = true;
  bool lenient = true;
  bool micro = false;
  std::size_t top_n = 10;
  std::optional<std::uint64_t> unscored_append_seed;
};

struct MetricRow {
  std::string metric;
  std::string setting;
  double value = 0.0;
};

struct EvalReport {
  std::vector<MetricRow> rows;

  std::optional<double> get(std::string_view metric, std::string_view setting) const {
    for (const auto& r : rows)
      if (r.metric == metric && r.setting == setting) return r.value;
    return std::nullopt;
  }
};

/// Corpus-level scores. F is the macro mean of per-item F unless
/// opts.micro; items with no predictions count as empty predictions for F
/// and GAP, and are skipped for best/oot.
inline EvalReport evaluate(std::span<const GoldItem> gold, const PredictionTable& predictions,
                           const LemmaTable& lemmas, const EvalOptions& opts = {}) {
  EvalReport report;
  const std::vector<std::string> none;
  auto raw_for = [&](const GoldItem& item) -> const std::vector<std::string>& {
    auto it = predictions.find(item.instance_id);
    return it == predictions.end() ? none : it->second;
  };

  for (bool lenient : {false, true}) {
    if ((lenient && !opts.lenient) || (!lenient && !opts.strict)) continue;
    for (auto level : {GoldLabel::kAcceptable, GoldLabel::kConceivable}) {
      double sum = 0.0;
      std::size_t n = 0;
      FCounts total;
      for (const auto& item : gold) {
        auto g = gold_set(item, lemmas, level);
        if (g.empty()) continue;
        auto pred = fold_top_n(raw_for(item), lemmas, lenient ? &item.candidate_pool : nullptr, opts.top_n);
        auto c = f_counts(pred, g);
        sum += harmonic_f(c);
        total.hits += c.hits;
        total.predicted += c.predicted;
        total.gold += c.gold;
        ++n;
      }
      const double value = opts.micro ? harmonic_f(total) : (n ? sum / static_cast<double>(n) : 0.0);
      std::string setting = lenient ? "lenient" : "strict";
      if (opts.micro) setting += "-micro";
      report.rows.push_back({level == GoldLabel::kAcceptable ? "F_a" : "F_c", setting, value});
    }
  }

  double gap_sum = 0.0, best_sum = 0.0, oot_sum = 0.0;
  std::size_t gap_n = 0, bo_n = 0;
  for (const auto& item : gold) {
    auto weights = gold_weights(item, lemmas);
    if (weights.empty()) continue;
    const auto& raw = raw_for(item);
    auto ranked = fold_top_n(raw, lemmas, nullptr, std::numeric_limits<std::size_t>::max());
    if (opts.unscored_append_seed)
      ranked = append_unscored(std::move(ranked), item.candidate_pool, lemmas,
                               splitmix64(*opts.unscored_append_seed ^ fnv1a(item.instance_id)));
    gap_sum += gap(ranked, weights);
    ++gap_n;
    if (!raw.empty()) {
      auto top = fold_top_n(raw, lemmas, nullptr, opts.top_n);
      auto bo = best_oot(top, weights);
      best_sum += bo.best;
      oot_sum += bo.oot;
      ++bo_n;
    }
  }
  report.rows.push_back({"GAP", "all", gap_n ? gap_sum / static_cast<double>(gap_n) : 0.0});
  report.rows.push_back({"best", "precision", bo_n ? best_sum / static_cast<double>(bo_n) : 0.0});
  report.rows.push_back({"oot", "precision", bo_n ? oot_sum / static_cast<double>(bo_n) : 0.0});
  return report;
}

inline void write_report(std::ostream& out, const EvalReport& report) {
  for (const auto& r : report.rows) out << r.metric << '\t' << r.setting << '\t' << text::format_fixed(r.value, 4) << '\n';
}

}  // namespace dlx
