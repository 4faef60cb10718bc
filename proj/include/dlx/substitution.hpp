#pragma once

// Candidate generation: score every vocabulary word against the target in
// context, drop near-duplicates of the target, and rerank the head of the
// list with candidate-substituted sentences.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/lemma.hpp"
#include "dlx/parallel.hpp"
#include "dlx/provider.hpp"
#include "dlx/random.hpp"
#include "dlx/sense_index.hpp"
#include "dlx/text.hpp"
#include "dlx/vector_core.hpp"

namespace dlx {

struct SubstitutionQuery {
  std::string instance_id;
  std::string sentence;
  Span target_span;
  std::string target_word;  // lowercase form matched against the vocabulary

  static SubstitutionQuery make(std::string instance_id, std::string sentence, Span span) {
    if (span.start >= span.end || span.end > sentence.size())
      throw ContractError("query '" + instance_id + "': target span outside sentence");
    SubstitutionQuery q{std::move(instance_id), std::move(sentence), span, {}};
    q.target_word = text::to_lower(std::string_view(q.sentence).substr(span.start, span.length()));
    return q;
  }
};

struct ScoredCandidate {
  std::string word;
  double score = 0.0;
  std::uint32_t best_cluster = 0;
  double in_context = 0.0;  // cos(f^k(y), f(x,c))
  double global = 0.0;      // cos(f^k(y), f^{j_c}(x)); 0 when the target is out of vocabulary
  bool reranked = false;
  bool rerank_failed = false;
};

enum class ClusterSelection {
  kBest,    // max over the candidate's clusters
  kRandom,  // one seeded uniform draw per candidate (ablation)
};

struct GenerationConfig {
  double lambda = 0.7;
  double heuristic_threshold = 0.5;
  std::size_t rerank_m = 50;
  std::size_t top_n = 10;
  bool rerank_enabled = true;
  bool heuristic_enabled = true;
  // Ablations
  bool single_cluster = false;  // score against mean embeddings only (K = 1)
  ClusterSelection cluster_selection = ClusterSelection::kBest;
  std::uint64_t random_seed = 0;
  unsigned threads = 0;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
    if (!(heuristic_threshold >= 0.0 && heuristic_threshold <= 1.0))
      throw ConfigError("heuristic threshold must be in [0, 1]");
    if (rerank_m < 1) throw ConfigError("rerank M must be >= 1");
    if (top_n < 1) throw ConfigError("top-n must be >= 1");
  }
};

/// Orders by score descending, then word ascending.
inline bool candidate_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.word < b.word;
}

/// The target's per-layer vectors in its own sentence.
inline LayeredEmbedding target_embedding(const SubstitutionQuery& query, Provider& provider) {
  InContextRequest req{query.sentence, query.target_span, std::nullopt};
  auto res = request_in_context(std::span(&req, 1), provider);
  if (!res.front().ok())
    throw ProviderError("target embedding for '" + query.instance_id + "' failed: " + res.front().error);
  return std::move(*res.front().embedding);
}

/// The target's sense cluster closest to its in-context vector; the lowest
/// id wins ties.
inline std::uint32_t retrieve_target_cluster(const SenseIndexEntry& target, const Vec& fxc) {
  std::uint32_t best = 0;
  double best_cos = cosine(target.centroid(0), std::span<const double>(fxc));
  for (std::size_t j = 1; j < target.cluster_count(); ++j) {
    const double c = cosine(target.centroid(j), std::span<const double>(fxc));
    if (c > best_cos) {
      best_cos = c;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return best;
}

/// Scores every vocabulary word:
///   max_k  lambda * cos(f^k(y), f(x,c)) + (1 - lambda) * cos(f^k(y), f^{j_c}(x))
/// With no target entry (out of vocabulary) lambda is forced to 1.
inline std::vector<ScoredCandidate> score_all(const Vec& fxc, const SenseIndexEntry* target, const SenseIndex& index,
                                              const GenerationConfig& cfg) {
  if (fxc.size() != index.dim())
    throw ContractError("target vector dim " + std::to_string(fxc.size()) + " != index dim " +
                        std::to_string(index.dim()));
  if (squared_norm(std::span<const double>(fxc)) == 0.0) throw DomainError("target vector is zero");
  const double lambda = target ? cfg.lambda : 1.0;
  const std::span<const double> query(fxc);

  std::span<const float> target_sense;
  if (target) {
    target_sense = cfg.single_cluster ? target->mean() : target->centroid(retrieve_target_cluster(*target, fxc));
  }

  const auto& entries = index.entries();
  std::vector<ScoredCandidate> out(entries.size());
  parallel_chunks(entries.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& y = entries[i];
      auto score_cluster = [&](std::span<const float> sense, std::uint32_t k) {
        ScoredCandidate c{y.word, 0.0, k, cosine(sense, query), 0.0};
        if (target) c.global = cosine(sense, target_sense);
        c.score = lambda * c.in_context + (1.0 - lambda) * c.global;
        return c;
      };
      if (cfg.single_cluster) {
        out[i] = score_cluster(y.mean(), 0);
      } else if (cfg.cluster_selection == ClusterSelection::kRandom) {
        Rng rng(splitmix64(cfg.random_seed ^ fnv1a(y.word)));
        const auto k = static_cast<std::uint32_t>(rng.below(y.cluster_count()));
        out[i] = score_cluster(y.centroid(k), k);
      } else {
        out[i] = score_cluster(y.centroid(0), 0);
        for (std::size_t k = 1; k < y.cluster_count(); ++k) {
          auto c = score_cluster(y.centroid(k), static_cast<std::uint32_t>(k));
          if (c.score > out[i].score) out[i] = std::move(c);
        }
      }
    }
  });
  std::sort(out.begin(), out.end(), candidate_before);
  return out;
}

/// Drops candidates whose normalised edit distance to the target is below
/// the threshold. Order is preserved.
inline std::vector<ScoredCandidate> heuristic_filter(std::vector<ScoredCandidate> candidates,
                                                     std::string_view target_word, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ContractError("heuristic threshold must be in [0, 1]");
  std::erase_if(candidates, [&](const ScoredCandidate& c) {
    return normalized_edit_distance(target_word, c.word) < threshold;
  });
  return candidates;
}

struct RerankResult {
  std::vector<ScoredCandidate> candidates;
  std::vector<std::string> warnings;
};

/// Rescores candidates by the mean over layers of
/// cos(f^l(y, c), f^l(x, c)), where f^l(y, c) comes from the sentence with
/// the target replaced by y. A candidate whose request fails keeps its old
/// score and is flagged.
inline RerankResult rerank(std::vector<ScoredCandidate> candidates, const SubstitutionQuery& query,
                           const LayeredEmbedding& target, Provider& provider) {
  if (candidates.empty()) throw ContractError("rerank: no candidates");
  std::vector<InContextRequest> requests;
  requests.reserve(candidates.size());
  for (const auto& c : candidates) requests.push_back({query.sentence, query.target_span, c.word});
  auto results = request_in_context(requests, provider);

  RerankResult out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    if (!results[i].ok()) {
      c.rerank_failed = true;
      out.warnings.push_back(query.instance_id + ": rerank of '" + c.word + "' failed: " + results[i].error);
      continue;
    }
    const auto& ey = *results[i].embedding;
    try {
      double total = 0.0;
      for (std::size_t p = 0; p < target.layer_count(); ++p) total += cosine(ey.layer_at(p), target.layer_at(p));
      c.score = total / static_cast<double>(target.layer_count());
      c.reranked = true;
    } catch (const DomainError& e) {
      c.rerank_failed = true;
      out.warnings.push_back(query.instance_id + ": rerank of '" + c.word + "' failed: " + e.what());
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), candidate_before);
  out.candidates = std::move(candidates);
  return out;
}

inline RerankResult rerank(std::vector<ScoredCandidate> candidates, const SubstitutionQuery& query,
                           Provider& provider) {
  return rerank(std::move(candidates), query, target_embedding(query, provider), provider);
}

/// Lemma-folds the ranked list, keeps the first occurrence per lemma and
/// truncates to n. Without a table only exact duplicates are merged.
inline std::vector<ScoredCandidate> fold_candidates(std::vector<ScoredCandidate> ranked, const LemmaTable* lemmas,
                                                    std::size_t n) {
  std::vector<ScoredCandidate> out;
  std::unordered_set<std::string> seen;
  for (auto& c : ranked) {
    if (out.size() >= n) break;
    std::string key = lemmas ? lemmas->lemma(c.word) : c.word;
    if (!seen.insert(key).second) continue;
    c.word = std::move(key);
    out.push_back(std::move(c));
  }
  return out;
}

struct GenerationResult {
  std::vector<ScoredCandidate> candidates;
  bool target_in_vocabulary = false;
  std::vector<std::string> warnings;
};

/// Full pipeline for one query: embed target, score the vocabulary, drop
/// y = x, apply the edit-distance filter, keep the top M, rerank, then fold
/// to the top n distinct (lemmatised) words.
inline GenerationResult generate(const SubstitutionQuery& query, const SenseIndex& index, Provider& provider,
                                 const GenerationConfig& cfg, const LemmaTable* lemmas = nullptr) {
  cfg.validate();
  if (provider.spec().dim != index.dim())
    throw ConfigError("provider dim " + std::to_string(provider.spec().dim) + " != index dim " +
                      std::to_string(index.dim()));
  GenerationResult result;
  const auto emb = target_embedding(query, provider);
  const Vec fxc = sum_layers(emb);
  const SenseIndexEntry* target = index.find(query.target_word);
  result.target_in_vocabulary = target != nullptr;

  GenerationConfig scoring = cfg;
  scoring.random_seed = splitmix64(cfg.random_seed ^ fnv1a(query.instance_id));
  auto ranked = score_all(fxc, target, index, scoring);
  std::erase_if(ranked, [&](const ScoredCandidate& c) { return c.word == query.target_word; });
  if (cfg.heuristic_enabled) ranked = heuristic_filter(std::move(ranked), query.target_word, cfg.heuristic_threshold);
  if (ranked.size() > cfg.rerank_m) ranked.resize(cfg.rerank_m);
  if (cfg.rerank_enabled && !ranked.empty()) {
    auto rr = rerank(std::move(ranked), query, emb, provider);
    ranked = std::move(rr.candidates);
    result.warnings = std::move(rr.warnings);
  }
  result.candidates = fold_candidates(std::move(ranked), lemmas, cfg.top_n);
  return result;
}

/// Ranks a given candidate pool by the in-context rerank score alone.
inline RerankResult rank_candidates(const SubstitutionQuery& query, std::span<const std::string> pool,
                                    Provider& provider) {
  std::vector<ScoredCandidate> candidates;
  std::unordered_set<std::string> seen;
  for (const auto& w : pool) {
    if (w.empty() || text::to_lower(w) == query.target_word || !seen.insert(w).second) continue;
    candidates.push_back({w, 0.0, 0, 0.0, 0.0});
  }
  if (candidates.empty()) return {};
  auto rr = rerank(std::move(candidates), query, provider);
  return rr;
}

struct Prediction {
  std::string instance_id;
  std::vector<ScoredCandidate> candidates;
};

/// TSV: instance_id, rank (from 1), word, score.
inline void write_predictions(std::ostream& out, std::span<const Prediction> predictions) {
  for (const auto& p : predictions)
    for (std::size_t r = 0; r < p.candidates.size(); ++r)
      out << p.instance_id << '\t' << (r + 1) << '\t' << p.candidates[r].word << '\t'
          << text::format_double(p.candidates[r].score) << '\n';
}

struct PredictionRow {
  std::size_t rank = 0;
  std::string word;
  double score = 0.0;
};

/// instance_id -> words ordered by rank.
using PredictionTable = std::map<std::string, std::vector<std::string>>;

inline PredictionTable read_predictions(std::istream& in, const std::string& source = "predictions") {
  std::map<std::string, std::vector<PredictionRow>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty()) continue;
    auto f = text::split(view, '\t');
    if (f.size() != 4) throw ParseError(source, lineno, "expected instance_id<TAB>rank<TAB>word<TAB>score");
    auto rank = text::parse_number<std::size_t>(f[1]);
    auto score = text::parse_number<double>(f[3]);
    if (!rank || *rank < 1 || !score || f[2].empty()) throw ParseError(source, lineno, "bad prediction row");
    rows[std::string(f[0])].push_back({*rank, std::string(f[2]), *score});
  }
  PredictionTable table;
  for (auto& [id, list] : rows) {
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].rank != i + 1) throw ParseError(source, 0, "instance '" + id + "' has non-consecutive ranks");
    auto& words = table[id];
    for (auto& r : list) words.push_back(std::move(r.word));
  }
  return table;
}

/// Runs generate() over every query.
inline std::vector<Prediction> generate_all(std::span<const SubstitutionQuery> queries, const SenseIndex& index,
                                            Provider& provider, const GenerationConfig& cfg,
                                            const LemmaTable* lemmas = nullptr,
                                            std::vector<std::string>* warnings = nullptr) {
  std::vector<Prediction> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    auto res = generate(q, index, provider, cfg, lemmas);
    if (warnings) warnings->insert(warnings->end(), res.warnings.begin(), res.warnings.end());
    out.push_back({q.instance_id, std::move(res.candidates)});
  }
  return out;
}

struct AblationVariant {
  std::string name;
  GenerationConfig config;
};

/// The ablation grid: the base configuration plus lambda = 0, lambda = 1,
/// K = 1, random candidate cluster, no heuristic and no rerank.
inline std::vector<AblationVariant> ablation_variants(const GenerationConfig& base) {
  std::vector<AblationVariant> v;
  v.push_back({"full", base});
  auto lambda0 = base;
  lambda0.lambda = 0.0;
  v.push_back({"lambda0", lambda0});
  auto lambda1 = base;
  lambda1.lambda = 1.0;
  v.push_back({"lambda1", lambda1});
  auto k1 = base;
  k1.single_cluster = true;
  v.push_back({"k1", k1});
  auto random_k = base;
  random_k.cluster_selection = ClusterSelection::kRandom;
  v.push_back({"random_k", random_k});
  auto no_heuristic = base;
  no_heuristic.heuristic_enabled = false;
  v.push_back({"no_heuristic", no_heuristic});
  auto no_rerank = base;
  no_rerank.rerank_enabled = false;
  v.push_back({"no_rerank", no_rerank});
  return v;
}

/// Writes <out_dir>/<variant>.tsv for every ablation variant and returns
/// the paths in variant order.
inline std::vector<std::filesystem::path> ablation_run(std::span<const SubstitutionQuery> queries,
                                                       const SenseIndex& index, Provider& provider,
                                                       const GenerationConfig& base,
                                                       const std::filesystem::path& out_dir,
                                                       const LemmaTable* lemmas = nullptr) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& variant : ablation_variants(base)) {
    auto preds = generate_all(queries, index, provider, variant.config, lemmas);
    auto path = out_dir / (variant.name + ".tsv");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    write_predictions(out, preds);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace dlx
