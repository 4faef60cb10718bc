#pragma once

// Flat key=value run configuration. Blank lines and lines starting with '#'
// are ignored; later keys override earlier ones.

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlx/error.hpp"
#include "dlx/substitution.hpp"
#include "dlx/text.hpp"
#include "dlx/vector_core.hpp"

namespace dlx {

/// "3..22" (inclusive range) or "3,5,7".
inline std::vector<std::uint16_t> parse_layers(std::string_view s) {
  std::vector<std::uint16_t> out;
  s = text::trim(s);
  if (auto dots = s.find(".."); dots != std::string_view::npos) {
    auto a = text::parse_number<std::uint16_t>(s.substr(0, dots));
    auto b = text::parse_number<std::uint16_t>(s.substr(dots + 2));
    if (!a || !b || *a < 1 || *b < *a) throw ConfigError("bad layer range '" + std::string(s) + "'");
    for (std::uint32_t l = *a; l <= *b; ++l) out.push_back(static_cast<std::uint16_t>(l));
    return out;
  }
  for (auto part : text::split(s, ',')) {
    auto v = text::parse_number<std::uint16_t>(part);
    if (!v || *v < 1) throw ConfigError("bad layer list '" + std::string(s) + "'");
    if (!out.empty() && *v <= out.back()) throw ConfigError("layer list must be strictly increasing");
    out.push_back(*v);
  }
  return out;
}

struct RunConfig {
  // Paths
  std::string corpus, vocab, manifest, index, gold, predictions, lemmas, lexicon, frequencies, stub_groups, output;
  std::string gold_format = "dlx";
  std::vector<std::string> batches;

  // Hyperparameters
  std::size_t vocab_size = 30000;
  std::size_t n_contexts = 300;
  std::uint16_t k = 4;
  double lambda = 0.7;
  double threshold = 0.5;
  std::size_t rerank_m = 50;
  std::size_t top_n = 10;
  bool rerank = true;
  bool heuristic = true;
  std::string normalization = "after";  // or "per-layer"

  // Embedding shape
  std::uint32_t dim = 0;  // 0: take it from the index
  std::uint32_t num_layers = 12;
  std::vector<std::uint16_t> layers;  // empty: {3, ..., num_layers - 2}

  // Evaluation
  bool strict = true;
  bool lenient = true;
  bool micro = false;
  std::optional<std::uint64_t> unscored_seed;

  std::string provider = "stub";
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void set(std::string_view key, std::string_view value) {
    const std::string k_(key);
    const std::string v(text::trim(value));
    auto num = [&]<class T>(T& out) {
      auto parsed = text::parse_number<T>(v);
      if (!parsed) throw ConfigError("bad value for '" + k_ + "': " + v);
      out = *parsed;
    };
    auto flag = [&](bool& out) {
      if (v == "true" || v == "1" || v == "yes") out = true;
      else if (v == "false" || v == "0" || v == "no") out = false;
      else throw ConfigError("bad boolean for '" + k_ + "': " + v);
    };
    if (k_ == "corpus") corpus = v;
    else if (k_ == "vocab") vocab = v;
    else if (k_ == "manifest") manifest = v;
    else if (k_ == "index") index = v;
    else if (k_ == "gold") gold = v;
    else if (k_ == "gold_format") gold_format = v;
    else if (k_ == "predictions") predictions = v;
    else if (k_ == "lemmas") lemmas = v;
    else if (k_ == "lexicon") lexicon = v;
    else if (k_ == "frequencies") frequencies = v;
    else if (k_ == "stub_groups") stub_groups = v;
    else if (k_ == "output") output = v;
    else if (k_ == "batches") {
      batches.clear();
      for (auto p : text::split(v, ','))
        if (!text::trim(p).empty()) batches.emplace_back(text::trim(p));
    }
    else if (k_ == "vocab_size") num(vocab_size);
    else if (k_ == "n_contexts") num(n_contexts);
    else if (k_ == "k") num(k);
    else if (k_ == "lambda") num(lambda);
    else if (k_ == "threshold") num(threshold);
    else if (k_ == "rerank_m") num(rerank_m);
    else if (k_ == "top_n") num(top_n);
    else if (k_ == "rerank") flag(rerank);
    else if (k_ == "heuristic") flag(heuristic);
    else if (k_ == "normalization") normalization = v;
    else if (k_ == "dim") num(dim);
    else if (k_ == "num_layers") num(num_layers);
    else if (k_ == "layers") layers = parse_layers(v);
    else if (k_ == "strict") flag(strict);
    else if (k_ == "lenient") flag(lenient);
    else if (k_ == "micro") flag(micro);
    else if (k_ == "unscored_seed") {
      std::uint64_t s = 0;
      num(s);
      unscored_seed = s;
    }
    else if (k_ == "provider") provider = v;
    else if (k_ == "seed") num(seed);
    else if (k_ == "threads") num(threads);
    else throw ConfigError("unknown config key '" + k_ + "'");
  }

  void load(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = text::trim(text::strip_cr(line));
      if (view.empty() || view.front() == '#') continue;
      auto eq = view.find('=');
      if (eq == std::string_view::npos || text::trim(view.substr(0, eq)).empty())
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
      try {
        set(text::trim(view.substr(0, eq)), view.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    load(in, path);
  }

  /// Layer selection at the given width.
  EmbeddingSpec embedding_spec(std::uint32_t width) const {
    try {
      EmbeddingSpec spec = layers.empty()
                               ? EmbeddingSpec::middle_layers(width, num_layers)
                               : EmbeddingSpec{width, std::max<std::uint32_t>(num_layers, layers.back()), layers};
      spec.validate();
      return spec;
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }

  Normalization normalization_mode() const {
    if (normalization == "after") return Normalization::kAfterConcat;
    if (normalization == "per-layer") return Normalization::kPerLayerThenConcat;
    throw ConfigError("normalization must be 'after' or 'per-layer'");
  }

  GenerationConfig generation() const {
    GenerationConfig g;
    g.lambda = lambda;
    g.heuristic_threshold = threshold;
    g.rerank_m = rerank_m;
    g.top_n = top_n;
    g.rerank_enabled = rerank;
    g.heuristic_enabled = heuristic;
    g.threads = threads;
    g.validate();
    return g;
  }
};

}  // namespace dlx
