#include <gtest/gtest.h>

#include <filesystem>

#include "dlx/provider.hpp"
#include "test_support.hpp"

namespace dlx {
namespace {

ExchangeBatch three_records() {
  ExchangeBatch b{EmbeddingSpec::layer_range(2, 3, 4), {}};
  b.records.push_back({"bank", 4, {1, 2, 3, 4}});
  b.records.push_back({"città", 9, {-0.5f, 0.25f, 1e-30f, 3e30f}});
  b.records.push_back({"bank", 12, {0, 0, 0, 1}});
  return b;
}

TEST(BatchFile, RoundTrip) {
  auto b = three_records();
  auto dir = std::filesystem::temp_directory_path() / "dlx_batch_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "b.dlxb").string();
  write_batch(b, path);
  auto back = read_batch(path);
  EXPECT_EQ(back, b);
  EXPECT_EQ(back.spec.layer_set, b.spec.layer_set);
  EXPECT_EQ(serialize_batch(back), io::read_file(path));
  std::filesystem::remove_all(dir);
}

TEST(BatchFile, Layout) {
  ExchangeBatch b{EmbeddingSpec{1, 5, {5}}, {{"a", 7, {1.0f}}}};
  const std::string expect("DLXB\x01\x00\x01\x00\x00\x00\x01\x00\x05\x00\x01\x00\x00\x00"
                           "\x01\x00"
                           "a"
                           "\x07\x00\x00\x00\x00\x00\x00\x00"
                           "\x00\x00\x80\x3f",
                           18 + 3 + 8 + 4);
  EXPECT_EQ(serialize_batch(b), expect);
}

TEST(BatchFile, ShortRecordReportsIndex) {
  // dim 8, one layer, second record carries only 7 floats
  io::Writer w;
  w.put_bytes("DLXB");
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(8);
  w.put<std::uint16_t>(1);
  w.put<std::uint16_t>(3);
  w.put<std::uint32_t>(2);
  for (int rec = 0; rec < 2; ++rec) {
    w.put_string<std::uint16_t>("w");
    w.put<std::uint64_t>(rec);
    for (int i = 0; i < (rec == 0 ? 8 : 7); ++i) w.put<float>(1.0f);
  }
  try {
    parse_batch(w.buffer());
    FAIL() << "short record accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
}

TEST(BatchFile, RejectsCorruption) {
  const auto good = serialize_batch(three_records());
  auto bad = good;
  bad[1] = 'X';
  EXPECT_THROW(parse_batch(bad), FormatError);
  auto version = good;
  version[4] = 2;
  EXPECT_THROW(parse_batch(version), FormatError);
  auto order = good;
  order[12] = 9;  // first layer id 9 > second layer id 4
  EXPECT_THROW(parse_batch(order), FormatError);
  EXPECT_THROW(parse_batch(good + "z"), FormatError);
  auto nan = good;
  // first float of record 0: after header (20) + len (2) + "bank" + id (8)
  const std::size_t at = 20 + 2 + 4 + 8;
  nan[at] = '\x00';
  nan[at + 1] = '\x00';
  nan[at + 2] = '\xc0';
  nan[at + 3] = '\x7f';
  EXPECT_THROW(parse_batch(nan), FormatError);
  EXPECT_THROW(read_batch("/no/such/batch.dlxb"), NotFoundError);
}

TEST(BatchFile, AcceptedBatchesHoldValidEmbeddings) {
  auto b = parse_batch(serialize_batch(three_records()));
  for (std::size_t i = 0; i < b.records.size(); ++i) EXPECT_NO_THROW(b.embedding(i));
}

TEST(InContextRequest, Resolution) {
  InContextRequest q{"I went to the bank today", {14, 18}, std::string("shore")};
  auto [s, span] = q.resolved();
  EXPECT_EQ(s, "I went to the shore today");
  EXPECT_EQ(span, (Span{14, 19}));
  EXPECT_EQ(q.problem(), "");
  EXPECT_NE((InContextRequest{"abc", {1, 9}, {}}).problem(), "");
  EXPECT_NE((InContextRequest{"abc", {2, 2}, {}}).problem(), "");
  EXPECT_NE((InContextRequest{"abc", {0, 1}, std::string()}).problem(), "");
}

TEST(StubProvider, IdentityReplacementBitIdentical) {
  StubProvider p(EmbeddingSpec::layer_range(16, 3, 6));
  std::vector<InContextRequest> reqs{{"the bank was closed", {4, 8}, {}},
                                     {"the bank was closed", {4, 8}, std::string("bank")}};
  auto res = request_in_context(reqs, p);
  ASSERT_TRUE(res[0].ok() && res[1].ok());
  EXPECT_EQ(*res[0].embedding, *res[1].embedding);
}

TEST(StubProvider, FiftyRequestsInOrder) {
  StubProvider p(EmbeddingSpec::layer_range(8, 1, 2));
  std::vector<InContextRequest> reqs;
  for (int i = 0; i < 50; ++i) reqs.push_back({"a word here", {2, 6}, "w" + std::to_string(i)});
  auto res = request_in_context(reqs, p);
  ASSERT_EQ(res.size(), 50u);
  for (int i = 0; i < 50; ++i) {
    auto one = p.embed_one(reqs[i]);
    EXPECT_EQ(*res[i].embedding, *one.embedding);
  }
}

TEST(StubProvider, BadSpanIsolated) {
  StubProvider p(EmbeddingSpec::layer_range(8, 1, 2));
  std::vector<InContextRequest> reqs{{"one two", {0, 3}, {}}, {"one two", {4, 40}, {}}, {"one two", {4, 7}, {}}};
  auto res = request_in_context(reqs, p);
  EXPECT_TRUE(res[0].ok());
  EXPECT_FALSE(res[1].ok());
  EXPECT_FALSE(res[1].error.empty());
  EXPECT_TRUE(res[2].ok());
}

TEST(StubProvider, GroupsAreCloserThanStrangers) {
  StubProvider p(EmbeddingSpec::layer_range(32, 1, 1), {{"big", "size"}, {"large", "size"}}, {});
  auto big = sum_layers(p.base_embedding("big"));
  auto large = sum_layers(p.base_embedding("large"));
  auto cat = sum_layers(p.base_embedding("cat"));
  EXPECT_GT(cosine(big, large), cosine(big, cat) + 0.5);
}

class SmallBatchProvider : public StubProvider {
 public:
  using StubProvider::StubProvider;
  std::size_t batch_limit() const override { return 3; }
  std::vector<InContextResult> embed(std::span<const InContextRequest> requests) override {
    EXPECT_LE(requests.size(), 3u);
    ++calls;
    return StubProvider::embed(requests);
  }
  int calls = 0;
};

TEST(RequestInContext, ChunksToBatchLimit) {
  SmallBatchProvider p(EmbeddingSpec::layer_range(4, 1, 1));
  std::vector<InContextRequest> reqs(10, InContextRequest{"a b", {0, 1}, {}});
  auto res = request_in_context(reqs, p);
  EXPECT_EQ(res.size(), 10u);
  EXPECT_EQ(p.calls, 4);
}

class MiscountingProvider : public StubProvider {
 public:
  using StubProvider::StubProvider;
  std::vector<InContextResult> embed(std::span<const InContextRequest>) override { return {}; }
};

TEST(RequestInContext, CountMismatchIsProviderError) {
  MiscountingProvider p(EmbeddingSpec::layer_range(4, 1, 1));
  std::vector<InContextRequest> reqs{{"a b", {0, 1}, {}}};
  EXPECT_THROW(request_in_context(reqs, p), ProviderError);
}

TEST(LayerSelectProvider, SlicesLayers) {
  StubProvider full(EmbeddingSpec::layer_range(4, 2, 5));
  LayerSelectProvider one(full, EmbeddingSpec{4, 5, {4}});
  InContextRequest q{"x y", {0, 1}, {}};
  const auto direct = full.embed_one(q);
  auto a = direct.embedding->layer(4);
  auto res = request_in_context(std::span(&q, 1), one);
  auto b = res[0].embedding->layer(4);
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  EXPECT_THROW(LayerSelectProvider(full, EmbeddingSpec{4, 9, {9}}), NotFoundError);
}

}  // namespace
}  // namespace dlx
