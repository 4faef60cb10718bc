// dlx: command-line front end for vocabulary building, index construction,
// substitute generation, evaluation and analysis.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "dlx/config.hpp"
#include "dlx/dlx.hpp"

namespace {

using namespace dlx;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitProvider = 4;

constexpr const char* kProviderEnv = "DLX_PROVIDER";

std::atomic<bool> g_stop{false};

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> lambda;
  std::optional<std::uint16_t> k;
  std::optional<std::string> layers;
  std::optional<std::string> provider;
  bool no_rerank = false;
  bool no_heuristic = false;
  bool lenient_only = false;
  bool strict_only = false;
  bool micro = false;
  std::vector<std::string> set;  // free-form key=value overrides
};

std::ifstream open_in(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " path given");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(std::string("cannot open ") + what + ": " + path);
  return in;
}

// Writes to `path`, or stdout when empty or "-".
void with_output(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open output file: " + path);
  fn(out);
  if (!out) throw DataError("write failed: " + path);
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg;
  if (o.config) cfg.load_file(*o.config);
  if (const char* env = std::getenv(kProviderEnv); env && *env) cfg.provider = env;
  for (const auto& kv : o.set) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.k) cfg.k = *o.k;
  if (o.layers) cfg.layers = parse_layers(*o.layers);
  if (o.provider) cfg.provider = *o.provider;
  if (o.no_rerank) cfg.rerank = false;
  if (o.no_heuristic) cfg.heuristic = false;
  if (o.lenient_only && o.strict_only) throw ConfigError("--lenient and --strict are mutually exclusive");
  if (o.lenient_only) cfg.strict = false;
  if (o.strict_only) cfg.lenient = false;
  if (o.micro) cfg.micro = true;
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ConfigError("lambda must be in [0, 1]");
  return cfg;
}

std::unordered_map<std::string, std::string> read_groups(const std::string& path) {
  std::unordered_map<std::string, std::string> groups;
  if (path.empty()) return groups;
  auto in = open_in(path, "stub groups");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty() || view.front() == '#') continue;
    auto f = text::split(view, '\t');
    if (f.size() != 2) throw ParseError(path, lineno, "expected word<TAB>group");
    groups[std::string(f[0])] = std::string(f[1]);
  }
  return groups;
}

// "stub" is the in-process StubProvider; anything else is a socket endpoint.
std::unique_ptr<Provider> make_provider(const RunConfig& cfg, std::uint32_t dim) {
  auto spec = cfg.embedding_spec(dim);
  if (cfg.provider == "stub") return std::make_unique<StubProvider>(spec, read_groups(cfg.stub_groups), StubProvider::Options{});
  return std::make_unique<SocketProvider>(Endpoint::parse(cfg.provider), spec);
}

std::vector<GoldItem> load_gold(const RunConfig& cfg) {
  auto in = open_in(cfg.gold, "gold file");
  if (cfg.gold_format == "dlx") return parse_gold(in, cfg.gold);
  if (cfg.gold_format == "semeval") return parse_semeval(in, cfg.gold);
  throw ConfigError("gold_format must be 'dlx' or 'semeval'");
}

LemmaTable load_lemmas(const RunConfig& cfg) {
  if (cfg.lemmas.empty()) return {};
  auto in = open_in(cfg.lemmas, "lemma table");
  return LemmaTable::read(in, cfg.lemmas);
}

PredictionTable load_predictions(const std::string& path) {
  auto in = open_in(path, "prediction file");
  return read_predictions(in, path);
}

std::vector<SubstitutionQuery> queries_from(const std::vector<GoldItem>& gold) {
  std::vector<SubstitutionQuery> out;
  out.reserve(gold.size());
  for (const auto& item : gold) out.push_back(item.query());
  return out;
}

GenerationConfig generation_config(const RunConfig& cfg) {
  auto g = cfg.generation();
  g.random_seed = derive_seed(cfg.seed, "random-k");
  return g;
}

std::vector<ExchangeBatch> load_batches(const RunConfig& cfg) {
  if (cfg.batches.empty()) throw ConfigError("no batch files given");
  std::vector<ExchangeBatch> out;
  for (const auto& path : cfg.batches) out.push_back(read_batch(path));
  return out;
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

int cmd_build_vocab(const RunConfig& cfg) {
  auto in = open_in(cfg.corpus, "corpus");
  auto vocab = build_vocab(count_tokens(in), cfg.vocab_size);
  if (vocab.short_of_requested)
    warn("only " + std::to_string(vocab.entries.size()) + " tokens passed the filter (requested " +
         std::to_string(cfg.vocab_size) + ")");
  with_output(cfg.output.empty() ? cfg.vocab : cfg.output, [&](std::ostream& out) { write_vocab(out, vocab.entries); });
  return 0;
}

int cmd_make_manifest(const RunConfig& cfg) {
  auto vocab_in = open_in(cfg.vocab, "vocabulary");
  auto vocab = read_vocab(vocab_in, cfg.vocab);
  std::unordered_set<std::string> words;
  for (const auto& e : vocab) words.insert(e.word);
  auto corpus = open_in(cfg.corpus, "corpus");
  auto index = index_sentences(corpus, words);
  const auto seed = derive_seed(cfg.seed, "vocab-sample");
  std::vector<ContextManifest> manifests;
  for (const auto& e : vocab) {
    if (!index.contains(e.word)) {
      warn("vocabulary word not found in corpus: " + e.word);
      continue;
    }
    manifests.push_back(sample_contexts(e.word, index, cfg.n_contexts, seed));
  }
  with_output(cfg.output.empty() ? cfg.manifest : cfg.output,
              [&](std::ostream& out) { write_manifest(out, manifests); });
  return 0;
}

// Stand-in extractor: embeds every manifest row with the StubProvider.
int cmd_stub_extract(const RunConfig& cfg) {
  if (cfg.dim == 0) throw ConfigError("stub-extract needs dim");
  auto manifest_in = open_in(cfg.manifest, "manifest");
  auto rows = read_manifest(manifest_in, cfg.manifest);
  std::unordered_set<std::uint64_t> wanted;
  for (const auto& r : rows) wanted.insert(r.occurrence.sentence_id);
  std::unordered_map<std::uint64_t, std::string> sentences;
  {
    auto corpus = open_in(cfg.corpus, "corpus");
    std::string line;
    for (std::uint64_t id = 0; std::getline(corpus, line); ++id)
      if (wanted.contains(id)) sentences.emplace(id, line);
  }
  StubProvider stub(cfg.embedding_spec(cfg.dim), read_groups(cfg.stub_groups), StubProvider::Options{});
  ExchangeBatch batch{stub.spec(), {}};
  for (const auto& r : rows) {
    auto it = sentences.find(r.occurrence.sentence_id);
    if (it == sentences.end()) {
      warn("sentence " + std::to_string(r.occurrence.sentence_id) + " not in corpus; row skipped");
      continue;
    }
    auto res = stub.embed_one({it->second, {r.occurrence.start, r.occurrence.end}, std::nullopt});
    if (!res.ok()) {
      warn("row for '" + r.word + "' skipped: " + res.error);
      continue;
    }
    auto values = res.embedding->values();
    batch.records.push_back({r.word, r.occurrence.sentence_id, {values.begin(), values.end()}});
  }
  if (cfg.output.empty()) throw ConfigError("stub-extract needs an output path");
  write_batch(batch, cfg.output);
  return 0;
}

int cmd_build_index(const RunConfig& cfg) {
  auto batches = load_batches(cfg);
  IndexBuildOptions opts;
  opts.k = cfg.k;
  opts.seed = derive_seed(cfg.seed, "kmeans");
  opts.normalization = cfg.normalization_mode();
  opts.threads = cfg.threads;
  auto index = build_index_from_batches(batches, opts);
  const auto& out = cfg.output.empty() ? cfg.index : cfg.output;
  if (out.empty()) throw ConfigError("build-index needs an output path");
  save_index(index, out);
  std::cerr << "indexed " << index.size() << " words (dim " << index.dim() << ", K " << index.k() << ")\n";
  return 0;
}

int cmd_substitute(const RunConfig& cfg) {
  auto gold = load_gold(cfg);
  auto index = load_index(cfg.index);
  auto lemmas = load_lemmas(cfg);
  auto provider = make_provider(cfg, cfg.dim ? cfg.dim : index.dim());
  auto queries = queries_from(gold);
  std::vector<std::string> warnings;
  auto preds = generate_all(queries, index, *provider, generation_config(cfg), cfg.lemmas.empty() ? nullptr : &lemmas,
                            &warnings);
  for (const auto& w : warnings) warn(w);
  with_output(cfg.output.empty() ? cfg.predictions : cfg.output,
              [&](std::ostream& out) { write_predictions(out, preds); });
  return 0;
}

int cmd_rank_candidates(const RunConfig& cfg) {
  auto gold = load_gold(cfg);
  std::uint32_t dim = cfg.dim;
  if (dim == 0 && !cfg.index.empty()) dim = load_index(cfg.index).dim();
  if (dim == 0) throw ConfigError("rank-candidates needs dim or an index to take it from");
  auto provider = make_provider(cfg, dim);
  std::vector<Prediction> preds;
  for (const auto& item : gold) {
    std::vector<std::string> pool(item.candidate_pool.begin(), item.candidate_pool.end());
    auto rr = rank_candidates(item.query(), pool, *provider);
    for (const auto& w : rr.warnings) warn(w);
    preds.push_back({item.instance_id, std::move(rr.candidates)});
  }
  with_output(cfg.output.empty() ? cfg.predictions : cfg.output,
              [&](std::ostream& out) { write_predictions(out, preds); });
  return 0;
}

EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions opts;
  opts.strict = cfg.strict;
  opts.lenient = cfg.lenient;
  opts.micro = cfg.micro;
  opts.top_n = cfg.top_n;
  if (cfg.unscored_seed) opts.unscored_append_seed = derive_seed(*cfg.unscored_seed, "unscored-append");
  return opts;
}

int cmd_evaluate(const RunConfig& cfg) {
  auto gold = load_gold(cfg);
  auto preds = load_predictions(cfg.predictions);
  auto lemmas = load_lemmas(cfg);
  auto report = evaluate(gold, preds, lemmas, eval_options(cfg));
  with_output(cfg.output, [&](std::ostream& out) { write_report(out, report); });
  return 0;
}

std::string fmt4(double v) { return text::format_fixed(v, 4); }

int cmd_analyze(const RunConfig& cfg, const std::string& kind) {
  auto gold = load_gold(cfg);
  auto lemmas = load_lemmas(cfg);
  std::vector<AnalysisRow> rows;

  if (kind == "agreement") {
    auto preds = load_predictions(cfg.predictions);
    auto lex_in = open_in(cfg.lexicon, "lexicon");
    auto lexicon = AgreementLexicon::read(lex_in, cfg.lexicon);
    for (const auto& article : configured_articles(lexicon.mode())) {
      std::vector<std::vector<std::string>> predicted, gold_lists;
      for (const auto& item : gold) {
        if (!item.has_context() || preceding_token(item.sentence, item.target_span) != article) continue;
        if (auto it = preds.find(item.instance_id); it != preds.end())
          predicted.push_back(fold_top_n(it->second, lemmas, nullptr, cfg.top_n));
        auto g = gold_set(item, lemmas, GoldLabel::kConceivable);
        gold_lists.emplace_back(g.begin(), g.end());
      }
      auto p = article_agreement(predicted, article, lexicon, cfg.top_n);
      auto g = article_agreement(gold_lists, article, lexicon, static_cast<std::size_t>(-1));
      rows.push_back({"agreement", "pred:" + article, p.fraction() ? fmt4(*p.fraction()) : "NA"});
      rows.push_back({"agreement_usable", "pred:" + article, std::to_string(p.usable)});
      rows.push_back({"agreement", "gold:" + article, g.fraction() ? fmt4(*g.fraction()) : "NA"});
      rows.push_back({"agreement_usable", "gold:" + article, std::to_string(g.usable)});
    }
  } else if (kind == "frequency") {
    auto preds = load_predictions(cfg.predictions);
    auto freq_in = open_in(cfg.frequencies, "frequency table");
    auto table = FrequencyTable::read(freq_in, cfg.frequencies);
    for (auto level : {GoldLabel::kAcceptable, GoldLabel::kConceivable}) {
      const std::string tag = level == GoldLabel::kAcceptable ? "acceptable:" : "conceivable:";
      auto matches = matched_predictions(gold, preds, lemmas, level, cfg.top_n);
      auto c = freq_buckets(matches, table);
      rows.push_back({"frequency", tag + "low", std::to_string(c.low)});
      rows.push_back({"frequency", tag + "med", std::to_string(c.med)});
      rows.push_back({"frequency", tag + "high", std::to_string(c.high)});
      rows.push_back({"frequency", tag + "unknown", std::to_string(c.unknown)});
    }
  } else if (kind == "sweep") {
    auto batches = load_batches(cfg);
    const auto& bspec = batches.front().spec;
    IndexBuildOptions opts;
    opts.k = cfg.k;
    opts.seed = derive_seed(cfg.seed, "kmeans");
    opts.normalization = cfg.normalization_mode();
    opts.threads = cfg.threads;
    // Sweep every layer the batches carry; the combined row uses the configured selection.
    auto combined_spec = cfg.layers.empty() ? bspec : cfg.embedding_spec(bspec.dim);
    std::map<std::uint16_t, SenseIndex> owned;
    std::map<std::uint16_t, const SenseIndex*> per_layer;
    for (auto l : bspec.layer_set) {
      owned.emplace(l, build_index_from_batches(batches, opts, EmbeddingSpec{bspec.dim, bspec.num_layers, {l}}));
      per_layer[l] = &owned.at(l);
    }
    auto combined = build_index_from_batches(batches, opts, combined_spec);
    RunConfig pcfg = cfg;
    pcfg.layers = bspec.layer_set;
    pcfg.num_layers = bspec.num_layers;
    auto provider = make_provider(pcfg, bspec.dim);
    LayerSelectProvider combined_provider(*provider, combined_spec);
    auto metric = [&](const std::vector<Prediction>& preds) {
      PredictionTable table;
      for (const auto& p : preds)
        for (const auto& c : p.candidates) table[p.instance_id].push_back(c.word);
      EvalOptions eo;
      eo.lenient = false;
      eo.top_n = cfg.top_n;
      return evaluate(gold, table, lemmas, eo).get("F_c", "strict").value_or(0.0);
    };
    auto queries = queries_from(gold);
    const auto gen = generation_config(cfg);
    const LemmaTable* lp = cfg.lemmas.empty() ? nullptr : &lemmas;
    auto points = layer_sweep(queries, per_layer, nullptr, bspec.layer_set, *provider, gen, metric, lp);
    points.push_back({"combined", combined_spec.layer_set, metric(generate_all(queries, combined, combined_provider, gen, lp))});
    for (const auto& p : points) rows.push_back({"layer_sweep", p.key, fmt4(p.value)});
  } else {
    throw ConfigError("unknown analysis kind '" + kind + "' (agreement, frequency, sweep)");
  }
  with_output(cfg.output, [&](std::ostream& out) { write_analysis(out, rows); });
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("ablate needs --out-dir");
  auto gold = load_gold(cfg);
  auto index = load_index(cfg.index);
  auto lemmas = load_lemmas(cfg);
  auto provider = make_provider(cfg, cfg.dim ? cfg.dim : index.dim());
  auto queries = queries_from(gold);
  const LemmaTable* lp = cfg.lemmas.empty() ? nullptr : &lemmas;
  auto paths = ablation_run(queries, index, *provider, generation_config(cfg), out_dir, lp);
  auto variants = ablation_variants(generation_config(cfg));
  std::vector<AnalysisRow> rows;
  EvalOptions eo = eval_options(cfg);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto report = evaluate(gold, load_predictions(paths[i].string()), lemmas, eo);
    for (const auto& r : report.rows)
      if (r.metric.starts_with("F_")) rows.push_back({"ablation:" + variants[i].name, r.metric + ":" + r.setting, fmt4(r.value)});
  }
  with_output((std::filesystem::path(out_dir) / "report.tsv").string(),
              [&](std::ostream& out) { write_analysis(out, rows); });
  return 0;
}

int cmd_serve_stub(const RunConfig& cfg, const std::string& endpoint) {
  if (cfg.dim == 0) throw ConfigError("serve-stub needs dim");
  StubProvider stub(cfg.embedding_spec(cfg.dim), read_groups(cfg.stub_groups), StubProvider::Options{});
  ProviderServer server(Endpoint::parse(endpoint.empty() ? cfg.provider : endpoint), stub);
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::cerr << "serving stub embeddings on " << (endpoint.empty() ? cfg.provider : endpoint) << '\n';
  server.serve(g_stop);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dlx: lexical substitution with decontextualised embeddings"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  std::map<std::string, std::string> paths;

  app.add_option("--config", o.config, "key=value configuration file");
  app.add_option("--seed", o.seed, "Master random seed");
  app.add_option("--threads", o.threads, "Worker thread cap (0 = hardware)");
  app.add_option("--lambda", o.lambda, "Weight of in-context similarity");
  app.add_option("--k", o.k, "Sense clusters per word");
  app.add_option("--layers", o.layers, "Layer selection, e.g. 3..10 or 3,5,7");
  app.add_option("--provider", o.provider, "Embedding provider: stub, unix:PATH or tcp:HOST:PORT");
  app.add_flag("--no-rerank", o.no_rerank, "Skip in-context reranking");
  app.add_flag("--no-heuristic", o.no_heuristic, "Keep candidates close in spelling to the target");
  app.add_flag("--lenient", o.lenient_only, "Report lenient F only");
  app.add_flag("--strict", o.strict_only, "Report strict F only");
  app.add_flag("--micro", o.micro, "Micro-average F instead of macro");
  app.add_option("--set", o.set, "Extra configuration key=value (repeatable)");

  auto path_opt = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option("--" + name, paths[key], help);
  };

  auto* build_vocab = app.add_subcommand("build-vocab", "Count corpus tokens and write the substitute vocabulary");
  path_opt(build_vocab, "corpus", "corpus", "Corpus, one sentence per line");
  path_opt(build_vocab, "out", "output", "Vocabulary TSV");
  std::optional<std::size_t> vocab_size;
  build_vocab->add_option("--size", vocab_size, "Vocabulary size");

  auto* make_manifest = app.add_subcommand("make-manifest", "Sample context sentences for each vocabulary word");
  path_opt(make_manifest, "corpus", "corpus", "Corpus, one sentence per line");
  path_opt(make_manifest, "vocab", "vocab", "Vocabulary TSV");
  path_opt(make_manifest, "out", "output", "Manifest TSV");
  std::optional<std::size_t> n_contexts;
  make_manifest->add_option("--n", n_contexts, "Sentences per word");

  auto* stub_extract = app.add_subcommand("stub-extract", "Write a batch file for a manifest using the stub encoder");
  path_opt(stub_extract, "corpus", "corpus", "Corpus");
  path_opt(stub_extract, "manifest", "manifest", "Manifest TSV");
  path_opt(stub_extract, "out", "output", "Batch file");
  path_opt(stub_extract, "stub-groups", "stub_groups", "word<TAB>group TSV shaping the stub vectors");
  std::optional<std::uint32_t> dim;
  stub_extract->add_option("--dim", dim, "Embedding width");

  auto* build_index = app.add_subcommand("build-index", "Cluster occurrence embeddings into a sense index");
  std::vector<std::string> batch_paths;
  build_index->add_option("--batch", batch_paths, "Batch file (repeatable)");
  path_opt(build_index, "out", "output", "Index file");
  std::optional<std::string> normalization;
  build_index->add_option("--normalization", normalization, "after | per-layer");

  auto* substitute = app.add_subcommand("substitute", "Generate substitutes for every gold instance");
  path_opt(substitute, "index", "index", "Index file");
  path_opt(substitute, "gold", "gold", "Gold / query file");
  path_opt(substitute, "lemmas", "lemmas", "Lemma table TSV");
  path_opt(substitute, "out", "output", "Prediction TSV");
  path_opt(substitute, "stub-groups", "stub_groups", "Stub provider groups");
  substitute->add_option("--dim", dim, "Embedding width (default: index dim)");

  auto* rank = app.add_subcommand("rank-candidates", "Rank each instance's candidate pool in context");
  path_opt(rank, "gold", "gold", "Gold file with candidate pools");
  path_opt(rank, "index", "index", "Index (only used for its dim)");
  path_opt(rank, "out", "output", "Prediction TSV");
  path_opt(rank, "stub-groups", "stub_groups", "Stub provider groups");
  rank->add_option("--dim", dim, "Embedding width");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against gold");
  path_opt(evaluate_cmd, "gold", "gold", "Gold file");
  path_opt(evaluate_cmd, "predictions", "predictions", "Prediction TSV");
  path_opt(evaluate_cmd, "lemmas", "lemmas", "Lemma table TSV");
  path_opt(evaluate_cmd, "out", "output", "Metric report TSV (default stdout)");
  std::optional<std::string> gold_format;
  evaluate_cmd->add_option("--gold-format", gold_format, "dlx | semeval");
  std::optional<std::uint64_t> unscored_seed;
  evaluate_cmd->add_option("--append-unscored", unscored_seed, "Append unranked pool words in seeded random order");

  auto* analyze = app.add_subcommand("analyze", "Article agreement, frequency buckets or layer sweep");
  std::string kind;
  analyze->add_option("kind", kind, "agreement | frequency | sweep")->required();
  path_opt(analyze, "gold", "gold", "Gold file");
  path_opt(analyze, "predictions", "predictions", "Prediction TSV");
  path_opt(analyze, "lexicon", "lexicon", "Agreement lexicon TSV");
  path_opt(analyze, "frequencies", "frequencies", "Frequency TSV");
  path_opt(analyze, "lemmas", "lemmas", "Lemma table TSV");
  path_opt(analyze, "out", "output", "Analysis TSV (default stdout)");
  path_opt(analyze, "stub-groups", "stub_groups", "Stub provider groups");
  analyze->add_option("--batch", batch_paths, "Batch file for the layer sweep (repeatable)");
  analyze->add_option("--gold-format", gold_format, "dlx | semeval");

  auto* ablate = app.add_subcommand("ablate", "Write predictions for every ablation variant");
  path_opt(ablate, "index", "index", "Index file");
  path_opt(ablate, "gold", "gold", "Gold file");
  path_opt(ablate, "lemmas", "lemmas", "Lemma table TSV");
  path_opt(ablate, "stub-groups", "stub_groups", "Stub provider groups");
  std::string out_dir;
  ablate->add_option("--out-dir", out_dir, "Directory for <variant>.tsv and report.tsv");

  auto* serve = app.add_subcommand("serve-stub", "Serve stub embeddings over the socket protocol");
  std::string endpoint;
  serve->add_option("--endpoint", endpoint, "unix:PATH or tcp:HOST:PORT");
  path_opt(serve, "stub-groups", "stub_groups", "Stub provider groups");
  serve->add_option("--dim", dim, "Embedding width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    for (const auto& [key, value] : paths)
      if (!value.empty()) o.set.push_back(key + "=" + value);
    if (!batch_paths.empty()) {
      std::string joined;
      for (const auto& b : batch_paths) joined += (joined.empty() ? "" : ",") + b;
      o.set.push_back("batches=" + joined);
    }
    if (vocab_size) o.set.push_back("vocab_size=" + std::to_string(*vocab_size));
    if (n_contexts) o.set.push_back("n_contexts=" + std::to_string(*n_contexts));
    if (dim) o.set.push_back("dim=" + std::to_string(*dim));
    if (normalization) o.set.push_back("normalization=" + *normalization);
    if (gold_format) o.set.push_back("gold_format=" + *gold_format);
    if (unscored_seed) o.set.push_back("unscored_seed=" + std::to_string(*unscored_seed));
    const RunConfig cfg = resolve_config(o);

    if (*build_vocab) return cmd_build_vocab(cfg);
    if (*make_manifest) return cmd_make_manifest(cfg);
    if (*stub_extract) return cmd_stub_extract(cfg);
    if (*build_index) return cmd_build_index(cfg);
    if (*substitute) return cmd_substitute(cfg);
    if (*rank) return cmd_rank_candidates(cfg);
    if (*evaluate_cmd) return cmd_evaluate(cfg);
    if (*analyze) return cmd_analyze(cfg, kind);
    if (*ablate) return cmd_ablate(cfg, out_dir);
    if (*serve) return cmd_serve_stub(cfg, endpoint);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ProviderError& e) {
    std::cerr << "provider error: " << e.what() << '\n';
    return kExitProvider;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}
