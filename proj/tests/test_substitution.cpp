#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dlx/substitution.hpp"
#include "test_support.hpp"

namespace dlx {
namespace {

using testing::make_entry;
using testing::oracle_scores;

// Returns fixed vectors for known (resolved) sentences, stub vectors otherwise.
class MapProvider : public Provider {
 public:
  explicit MapProvider(EmbeddingSpec spec) : spec_(spec), fallback_(spec) {}
  const EmbeddingSpec& spec() const override { return spec_; }
  std::vector<InContextResult> embed(std::span<const InContextRequest> requests) override {
    std::vector<InContextResult> out;
    for (const auto& q : requests) {
      if (auto p = q.problem(); !p.empty()) {
        out.push_back({std::nullopt, p});
        continue;
      }
      auto sentence = q.resolved().first;
      if (failing.contains(sentence)) {
        out.push_back({std::nullopt, "tokeniser failure"});
      } else if (auto it = fixed.find(sentence); it != fixed.end()) {
        out.push_back({LayeredEmbedding(spec_, it->second), {}});
      } else {
        out.push_back(fallback_.embed_one(q));
      }
    }
    return out;
  }
  std::map<std::string, std::vector<float>> fixed;
  std::set<std::string> failing;

 private:
  EmbeddingSpec spec_;
  StubProvider fallback_;
};

GenerationConfig scoring_only(double lambda) {
  GenerationConfig cfg;
  cfg.lambda = lambda;
  cfg.rerank_enabled = false;
  cfg.heuristic_enabled = false;
  return cfg;
}

TEST(RetrieveTargetCluster, Examples) {
  auto single = make_entry("x", {{1, 2, 3}}, {5});
  EXPECT_EQ(retrieve_target_cluster(single, Vec{0, 0, 1}), 0u);
  auto two = make_entry("x", {{1, 0, 0}, {0, 1, 0}}, {1, 1});
  EXPECT_EQ(retrieve_target_cluster(two, Vec{0.9, 0.1, 0}), 0u);
  EXPECT_EQ(retrieve_target_cluster(two, Vec{0.1, 0.9, 0}), 1u);
  EXPECT_EQ(retrieve_target_cluster(two, Vec{1, 1, 0}), 0u);
  auto swapped = make_entry("x", {{0, 1, 0}, {1, 0, 0}}, {1, 1});
  EXPECT_EQ(retrieve_target_cluster(swapped, Vec{0.9, 0.1, 0}), 1u);
  EXPECT_EQ(retrieve_target_cluster(swapped, Vec{1, 1, 0}), 0u);
}

void expect_matches_oracle(const std::vector<ScoredCandidate>& got, const std::vector<testing::OracleScore>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].word, want[i].word) << "rank " << i;
    EXPECT_EQ(got[i].score, want[i].score) << got[i].word;
  }
}

TEST(ScoreAll, HandIndexMatchesBruteForce) {
  SenseIndex index(3, 4);
  index.add(make_entry("bank", {{1, 0, 0}, {0, 1, 0}}, {2, 2}));
  index.add(make_entry("shore", {{0.2f, 0.9f, 0.1f}}, {3}));
  index.add(make_entry("money", {{0.9f, 0.1f, 0.3f}, {-1, 0, 0}, {0, 0, 1}}, {1, 1, 1}));
  index.add(make_entry("tree", {{0, -0.5f, 2}}, {1}));
  const Vec fxc{0.3, 0.8, 0.1};
  for (double lambda : {0.0, 0.3, 0.7, 1.0}) {
    auto got = score_all(fxc, index.find("bank"), index, scoring_only(lambda));
    expect_matches_oracle(got, oracle_scores(fxc, index.find("bank"), index, lambda));
  }
}

TEST(ScoreAll, RandomIndexMatchesBruteForce) {
  auto index = testing::random_index(50, 4, 16, 2024, false);
  Rng rng(5);
  for (double lambda : {0.0, 0.3, 0.7, 1.0}) {
    for (int q = 0; q < 10; ++q) {
      auto fxc = testing::random_vector(rng, 16);
      const auto* target = &index.entries()[rng.below(50)];
      auto cfg = scoring_only(lambda);
      cfg.threads = 1 + unsigned(q % 4);
      expect_matches_oracle(score_all(fxc, target, index, cfg), oracle_scores(fxc, target, index, lambda));
    }
  }
}

TEST(ScoreAll, ComponentsRecomputeTheScore) {
  auto index = testing::random_index(30, 4, 8, 77, false);
  Rng rng(1);
  auto fxc = testing::random_vector(rng, 8);
  const auto* target = &index.entries()[3];
  const auto jc = retrieve_target_cluster(*target, fxc);
  for (const auto& c : score_all(fxc, target, index, scoring_only(0.7))) {
    const auto& y = *index.find(c.word);
    const double in = cosine(y.centroid(c.best_cluster), std::span<const double>(fxc));
    const double gl = cosine(y.centroid(c.best_cluster), target->centroid(jc));
    EXPECT_EQ(c.in_context, in);
    EXPECT_EQ(c.global, gl);
    EXPECT_EQ(c.score, 0.7 * in + (1.0 - 0.7) * gl);
  }
}

TEST(ScoreAll, ReductionToPlainCosine) {
  auto index = testing::random_index(40, 1, 12, 9);
  Rng rng(3);
  for (int q = 0; q < 20; ++q) {
    auto fxc = testing::random_vector(rng, 12);
    const auto* target = &index.entries()[rng.below(40)];
    auto got = score_all(fxc, target, index, scoring_only(1.0));
    std::vector<std::pair<double, std::string>> plain;
    for (const auto& e : index.entries()) plain.push_back({-testing::oracle_cosine(e.mean_embedding, fxc), e.word});
    std::sort(plain.begin(), plain.end());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].word, plain[i].second);
      EXPECT_EQ(got[i].score, -plain[i].first);
    }
  }
}

TEST(ScoreAll, SingleClusterModeUsesMeans) {
  auto index = testing::random_index(20, 4, 8, 4);
  Rng rng(2);
  auto fxc = testing::random_vector(rng, 8);
  const auto* target = &index.entries()[0];
  auto cfg = scoring_only(0.7);
  cfg.single_cluster = true;
  for (const auto& c : score_all(fxc, target, index, cfg)) {
    const auto& y = *index.find(c.word);
    const double want = 0.7 * testing::oracle_cosine(y.mean_embedding, fxc) +
                        (1.0 - 0.7) * testing::oracle_cosine(y.mean_embedding, target->mean_embedding);
    EXPECT_EQ(c.score, want);
    EXPECT_EQ(c.best_cluster, 0u);
  }
}

TEST(ScoreAll, LambdaZeroIgnoresContextWithinBasin) {
  auto index = testing::random_index(40, 4, 8, 31);
  Rng rng(8);
  const auto* target = &index.entries()[5];
  int compared = 0;
  for (int t = 0; t < 50; ++t) {
    auto fxc = testing::random_vector(rng, 8);
    auto moved = fxc;
    for (auto& x : moved) x += 0.05 * rng.normal();
    if (retrieve_target_cluster(*target, fxc) != retrieve_target_cluster(*target, moved)) continue;
    auto a = score_all(fxc, target, index, scoring_only(0.0));
    auto b = score_all(moved, target, index, scoring_only(0.0));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].word, b[i].word);
      EXPECT_EQ(a[i].score, b[i].score);
    }
    ++compared;
  }
  EXPECT_GT(compared, 20);
}

TEST(ScoreAll, OutOfVocabularyTargetForcesLambdaOne) {
  auto index = testing::random_index(20, 4, 8, 12);
  Rng rng(4);
  auto fxc = testing::random_vector(rng, 8);
  auto got = score_all(fxc, nullptr, index, scoring_only(0.2));
  expect_matches_oracle(got, oracle_scores(fxc, nullptr, index, 1.0));
  for (const auto& c : got) EXPECT_EQ(c.score, c.in_context);
}

TEST(ScoreAll, TotalOrder) {
  SenseIndex index(2, 1);
  for (const char* w : {"delta", "alpha", "charlie", "bravo"}) index.add(make_entry(w, {{1, 1}}, {1}));
  index.add(make_entry("zulu", {{1, 0}}, {1}));
  auto got = score_all(Vec{1, 1}, nullptr, index, scoring_only(1.0));
  std::vector<std::string> words;
  for (const auto& c : got) words.push_back(c.word);
  EXPECT_EQ(words, (std::vector<std::string>{"alpha", "bravo", "charlie", "delta", "zulu"}));
  auto big = testing::random_index(100, 4, 8, 6, false);
  Rng rng(9);
  auto ranked = score_all(testing::random_vector(rng, 8), &big.entries()[0], big, scoring_only(0.7));
  for (std::size_t i = 1; i < ranked.size(); ++i) EXPECT_TRUE(candidate_before(ranked[i - 1], ranked[i]));
}

TEST(ScoreAll, Contracts) {
  SenseIndex index(2, 1);
  index.add(make_entry("a", {{1, 0}}, {1}));
  EXPECT_THROW(score_all(Vec{0, 0}, nullptr, index, scoring_only(1.0)), DomainError);
  EXPECT_THROW(score_all(Vec{1, 0, 0}, nullptr, index, scoring_only(1.0)), ContractError);
}

TEST(ScoreAll, RandomClusterIsSeededPerWord) {
  auto index = testing::random_index(30, 4, 8, 13);
  Rng rng(6);
  auto fxc = testing::random_vector(rng, 8);
  auto cfg = scoring_only(0.7);
  cfg.cluster_selection = ClusterSelection::kRandom;
  cfg.random_seed = 99;
  auto a = score_all(fxc, &index.entries()[0], index, cfg);
  auto b = score_all(fxc, &index.entries()[0], index, cfg);
  std::set<std::uint32_t> used;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].word, b[i].word);
    EXPECT_EQ(a[i].best_cluster, b[i].best_cluster);
    used.insert(a[i].best_cluster);
  }
  EXPECT_GT(used.size(), 1u);
  cfg.random_seed = 100;
  auto c = score_all(fxc, &index.entries()[0], index, cfg);
  std::map<std::string, std::uint32_t> ka, kc;
  for (const auto& x : a) ka[x.word] = x.best_cluster;
  for (const auto& x : c) kc[x.word] = x.best_cluster;
  EXPECT_NE(ka, kc);
}

TEST(ScoreAll, RankingInvariantToPositiveRescaling) {
  auto index = testing::random_index(60, 4, 12, 15, false);
  Rng rng(21);
  for (double scale : {3.0, 0.37, 1024.0}) {
    SenseIndex scaled(index.dim(), index.k());
    for (auto e : index.entries()) {
      for (auto& x : e.centroids) x = float(x * scale);
      for (auto& x : e.mean_embedding) x = float(x * scale);
      e.validate(index.dim(), index.k());
      scaled.add(e);
    }
    for (int q = 0; q < 5; ++q) {
      auto fxc = testing::random_vector(rng, 12);
      const std::size_t t = rng.below(60);
      auto a = score_all(fxc, &index.entries()[t], index, scoring_only(0.7));
      auto b = score_all(fxc, &scaled.entries()[t], scaled, scoring_only(0.7));
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].word, b[i].word);
    }
  }
}

std::vector<ScoredCandidate> named(std::vector<std::string> words) {
  std::vector<ScoredCandidate> out;
  double s = 1.0;
  for (auto& w : words) out.push_back({w, s -= 0.01, 0, 0, 0});
  return out;
}

std::vector<std::string> words_of(const std::vector<ScoredCandidate>& cs) {
  std::vector<std::string> out;
  for (const auto& c : cs) out.push_back(c.word);
  return out;
}

TEST(HeuristicFilter, Examples) {
  EXPECT_EQ(words_of(heuristic_filter(named({"payer", "wage"}), "pay", 0.5)), (std::vector<std::string>{"wage"}));
  EXPECT_EQ(words_of(heuristic_filter(named({"terrific"}), "great", 0.5)), (std::vector<std::string>{"terrific"}));
  EXPECT_EQ(words_of(heuristic_filter(named({"pay", "payer", "pays"}), "pay", 0.0)),
            (std::vector<std::string>{"pay", "payer", "pays"}));
}

TEST(HeuristicFilter, PreservesOrderAndMatchesDefinition) {
  Rng rng(30);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> ws;
    for (std::size_t i = 0; i < 1 + rng.below(10); ++i) {
      std::string w(1 + rng.below(6), 'a');
      for (auto& c : w) c = char('a' + rng.below(3));
      ws.push_back(w);
    }
    std::string target(1 + rng.below(6), 'a');
    for (auto& c : target) c = char('a' + rng.below(3));
    const double threshold = double(rng.below(11)) / 10.0;
    auto out = words_of(heuristic_filter(named(ws), target, threshold));
    std::vector<std::string> want;
    for (const auto& w : ws) {
      const double ned = double(testing::reference_levenshtein(w, target)) / double(std::max(w.size(), target.size()));
      if (!(ned < threshold)) want.push_back(w);
    }
    EXPECT_EQ(out, want);
  }
}

const EmbeddingSpec kThree{2, 3, {1, 2, 3}};

TEST(Rerank, HandComputedThreeLayers) {
  MapProvider p(kThree);
  auto query = SubstitutionQuery::make("q1", "we sat on the bank", {14, 18});
  p.fixed["we sat on the bank"] = {1, 0, 0, 1, 1, 1};
  p.fixed["we sat on the shore"] = {1, 0, 1, 0, 1, 0};
  p.fixed["we sat on the money"] = {0, 1, 0, 1, -1, -1};
  auto rr = rerank(named({"money", "shore"}), query, p);
  ASSERT_EQ(rr.candidates.size(), 2u);
  EXPECT_EQ(rr.candidates[0].word, "shore");
  EXPECT_NEAR(rr.candidates[0].score, (1.0 + 0.0 + 0.7071067811865476) / 3.0, 1e-15);
  EXPECT_NEAR(rr.candidates[1].score, (0.0 + 1.0 - 1.0) / 3.0, 1e-15);
  EXPECT_TRUE(rr.candidates[0].reranked);
  EXPECT_TRUE(rr.warnings.empty());
}

TEST(Rerank, TargetAgainstItselfIsOne) {
  StubProvider p(EmbeddingSpec::layer_range(16, 3, 10));
  auto query = SubstitutionQuery::make("q", "the Bank was closed", {4, 8});
  EXPECT_EQ(query.target_word, "bank");
  auto rr = rerank(named({"Bank", "bank"}), query, p);
  for (const auto& c : rr.candidates) EXPECT_EQ(c.score, 1.0) << c.word;
}

TEST(Rerank, SingleLayerEqualsEmbeddingAverage) {
  MapProvider p(EmbeddingSpec{2, 1, {1}});
  auto query = SubstitutionQuery::make("q", "a bank", {2, 6});
  p.fixed["a bank"] = {3, 1};
  p.fixed["a shore"] = {1, 2};
  auto rr = rerank(named({"shore"}), query, p);
  EXPECT_EQ(rr.candidates[0].score, cosine(Vec{1, 2}, Vec{3, 1}));
}

TEST(Rerank, FailedCandidateKeepsScoreAndWarns) {
  MapProvider p(kThree);
  auto query = SubstitutionQuery::make("q", "a bank", {2, 6});
  p.failing.insert("a shore");
  auto input = named({"shore", "river"});
  const double before = input[0].score;
  auto rr = rerank(input, query, p);
  const auto& shore = rr.candidates[0].word == "shore" ? rr.candidates[0] : rr.candidates[1];
  EXPECT_TRUE(shore.rerank_failed);
  EXPECT_FALSE(shore.reranked);
  EXPECT_EQ(shore.score, before);
  ASSERT_EQ(rr.warnings.size(), 1u);
  EXPECT_NE(rr.warnings[0].find("shore"), std::string::npos);
}

// Index and provider where the target sentence embeds to a known vector.
struct Toy {
  MapProvider provider{EmbeddingSpec{3, 2, {1, 2}}};
  SenseIndex index{3, 4};
  SubstitutionQuery query = SubstitutionQuery::make("t1", "you must pay now", {9, 12});
  Toy() {
    provider.fixed["you must pay now"] = {1, 0, 0, 0, 1, 0};  // f(x,c) = (1,1,0)
    index.add(make_entry("pay", {{1, 1, 0.1f}}, {3}));
    index.add(make_entry("payer", {{1, 1, 0.3f}}, {2}));
    index.add(make_entry("b", {{1, 1, 0}, {0, 0, 1}}, {1, 1}));
    index.add(make_entry("remit", {{1, 0.8f, 0.2f}}, {1}));
    index.add(make_entry("wait", {{0, 0.2f, 1}}, {1}));
  }
};

TEST(Generate, ExactMatchRanksFirstAndTargetDropped) {
  Toy toy;
  auto res = generate(toy.query, toy.index, toy.provider, scoring_only(0.7));
  ASSERT_FALSE(res.candidates.empty());
  EXPECT_EQ(res.candidates[0].word, "b");
  EXPECT_TRUE(res.target_in_vocabulary);
  for (const auto& c : res.candidates) EXPECT_NE(c.word, "pay");
}

TEST(Generate, HeuristicDifferential) {
  Toy toy;
  auto cfg = scoring_only(0.7);
  cfg.heuristic_enabled = true;
  auto on = words_of(generate(toy.query, toy.index, toy.provider, cfg).candidates);
  cfg.heuristic_enabled = false;
  auto off = words_of(generate(toy.query, toy.index, toy.provider, cfg).candidates);
  EXPECT_EQ(std::count(on.begin(), on.end(), "payer"), 0);
  EXPECT_EQ(std::count(off.begin(), off.end(), "payer"), 1);
  EXPECT_EQ(std::count(off.begin(), off.end(), "pay"), 0);
}

TEST(Generate, TopMAndTopN) {
  Toy toy;
  auto cfg = scoring_only(0.7);
  cfg.rerank_m = 2;
  EXPECT_EQ(generate(toy.query, toy.index, toy.provider, cfg).candidates.size(), 2u);
  cfg.rerank_m = 50;
  cfg.top_n = 3;
  EXPECT_EQ(generate(toy.query, toy.index, toy.provider, cfg).candidates.size(), 3u);
}

TEST(Generate, LemmaFoldingKeepsDistinctLemmas) {
  auto ranked = named({"paid", "pays", "remit", "paying", "remits"});
  LemmaTable lemmas;
  for (const char* w : {"paid", "pays", "paying"}) lemmas.set(w, "pay");
  lemmas.set("remits", "remit");
  EXPECT_EQ(words_of(fold_candidates(ranked, &lemmas, 10)), (std::vector<std::string>{"pay", "remit"}));
  EXPECT_EQ(words_of(fold_candidates(ranked, nullptr, 2)), (std::vector<std::string>{"paid", "pays"}));
}

TEST(Generate, DeterministicWithStubAndRerank) {
  StubProvider stub(EmbeddingSpec::layer_range(16, 3, 6));
  auto index = testing::random_index(80, 4, 16, 50, false);
  auto query = SubstitutionQuery::make("q9", "a w0003 here", {2, 7});
  GenerationConfig cfg;
  // the generated names all lie within edit distance 0.5 of each other
  cfg.heuristic_enabled = false;
  auto a = generate(query, index, stub, cfg);
  auto b = generate(query, index, stub, cfg);
  ASSERT_EQ(a.candidates.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.candidates[i].word, b.candidates[i].word);
    EXPECT_EQ(a.candidates[i].score, b.candidates[i].score);
    EXPECT_TRUE(a.candidates[i].reranked);
  }
}

TEST(Generate, RejectsBadConfigAndShape) {
  Toy toy;
  auto cfg = scoring_only(1.5);
  EXPECT_THROW(generate(toy.query, toy.index, toy.provider, cfg), ConfigError);
  StubProvider wrong(EmbeddingSpec::layer_range(5, 1, 2));
  EXPECT_THROW(generate(toy.query, toy.index, wrong, scoring_only(0.7)), ConfigError);
}

TEST(Ablation, LambdaOneAndPointSevenDisagree) {
  MapProvider p(EmbeddingSpec{2, 1, {1}});
  auto query = SubstitutionQuery::make("q", "the x", {4, 5});
  p.fixed["the x"] = {1, 0};
  SenseIndex index(2, 4);
  index.add(make_entry("x", {{0, 1}}, {1}));
  index.add(make_entry("a", {{1, 0.1f}}, {1}));
  index.add(make_entry("b", {{0.8f, 0.6f}}, {1}));
  auto top = [&](double lambda) { return words_of(generate(query, index, p, scoring_only(lambda)).candidates); };
  EXPECT_EQ(top(1.0), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(top(0.7), (std::vector<std::string>{"b", "a"}));
}

TEST(Ablation, WritesOneReproducibleFilePerVariant) {
  StubProvider stub(EmbeddingSpec::layer_range(8, 1, 3));
  auto index = testing::random_index(40, 4, 8, 3, false);
  std::vector<SubstitutionQuery> queries{SubstitutionQuery::make("a", "x w0001 y", {2, 7}),
                                         SubstitutionQuery::make("b", "oov word", {0, 3})};
  GenerationConfig cfg;
  cfg.random_seed = 5;
  auto dir = std::filesystem::temp_directory_path() / "dlx_ablation_test";
  std::filesystem::remove_all(dir);
  auto first = ablation_run(queries, index, stub, cfg, dir / "1");
  auto second = ablation_run(queries, index, stub, cfg, dir / "2");
  ASSERT_EQ(first.size(), 7u);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < first.size(); ++i) {
    names.push_back(first[i].stem().string());
    EXPECT_EQ(io::read_file(first[i].string()), io::read_file(second[i].string())) << first[i];
    EXPECT_FALSE(io::read_file(first[i].string()).empty());
  }
  EXPECT_EQ(names, (std::vector<std::string>{"full", "lambda0", "lambda1", "k1", "random_k", "no_heuristic",
                                             "no_rerank"}));
  std::filesystem::remove_all(dir);
}

TEST(Predictions, RoundTrip) {
  std::vector<Prediction> preds{{"i1", named({"a", "b"})}, {"i2", named({"c"})}};
  std::stringstream s;
  write_predictions(s, preds);
  EXPECT_EQ(s.str().substr(0, 9), "i1\t1\ta\t0.");
  auto table = read_predictions(s);
  EXPECT_EQ(table.at("i1"), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(table.at("i2"), (std::vector<std::string>{"c"}));
  std::istringstream gap("i1\t1\ta\t0.5\ni1\t3\tb\t0.4\n");
  EXPECT_THROW(read_predictions(gap), ParseError);
}

TEST(RankCandidates, ScoresPoolOnly) {
  MapProvider p(kThree);
  auto query = SubstitutionQuery::make("q1", "we sat on the bank", {14, 18});
  p.fixed["we sat on the bank"] = {1, 0, 0, 1, 1, 1};
  p.fixed["we sat on the shore"] = {1, 0, 1, 0, 1, 0};
  p.fixed["we sat on the money"] = {0, 1, 0, 1, -1, -1};
  std::vector<std::string> pool{"money", "bank", "shore", "money"};
  auto rr = rank_candidates(query, pool, p);
  EXPECT_EQ(words_of(rr.candidates), (std::vector<std::string>{"shore", "money"}));
}

}  // namespace
}  // namespace dlx
