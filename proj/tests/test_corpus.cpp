#include <gtest/gtest.h>

#include <random>

#include "lowres/corpus.hpp"
#include "support/synthetic.hpp"

namespace lowres {
namespace {

using corpus::Format;
using testing::TempDir;

Document doc(std::string id, std::string text, SourceTag tag = SourceTag::real()) {
  return Document{std::move(id), std::move(tag), std::move(text), nullptr};
}

TEST(Ingest, JsonlKeepsLineOrder) {
  TempDir dir;
  jsonl::write_file(dir / "c.jsonl",
                    "{\"id\":\"b\",\"source\":\"real\",\"text\":\"two\"}\n"
                    "{\"id\":\"a\",\"source\":\"translated_books\",\"text\":\"one\"}\n"
                    "{\"id\":\"c\",\"source\":\"news\",\"text\":\"three\",\"meta\":{\"k\":1}}\n");
  const auto docs = corpus::ingest_documents(dir / "c.jsonl", Format::kJsonl);
  ASSERT_EQ(docs.size(), 3u);
  EXPECT_EQ(docs[0].id, "b");
  EXPECT_EQ(docs[1].source, SourceTag::translated_books());
  EXPECT_EQ(docs[2].source.str(), "other:news");
  EXPECT_EQ(docs[2].meta["k"], 1);
  EXPECT_EQ(docs[2].text, "three");
}

TEST(Ingest, MissingTextNamesLine) {
  TempDir dir;
  jsonl::write_file(dir / "c.jsonl", "{\"id\":1}\n");
  try {
    corpus::ingest_documents(dir / "c.jsonl", Format::kJsonl);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_STREQ(e.what(), "line 1: missing field text");
  }
}

TEST(Ingest, MalformedLineCarriesNumber) {
  TempDir dir;
  jsonl::write_file(dir / "c.jsonl", "{\"id\":\"a\",\"source\":\"real\",\"text\":\"x\"}\n{oops\n");
  try {
    corpus::ingest_documents(dir / "c.jsonl", Format::kJsonl);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, RejectsDuplicateIdsAndBadUtf8) {
  TempDir dir;
  jsonl::write_file(dir / "d.jsonl",
                    "{\"id\":\"a\",\"source\":\"real\",\"text\":\"x\"}\n"
                    "{\"id\":\"a\",\"source\":\"real\",\"text\":\"y\"}\n");
  EXPECT_THROW(corpus::ingest_documents(dir / "d.jsonl", Format::kJsonl), ParseError);
  jsonl::write_file(dir / "e.jsonl", "{\"id\":\"\",\"source\":\"real\",\"text\":\"y\"}\n");
  EXPECT_THROW(corpus::ingest_documents(dir / "e.jsonl", Format::kJsonl), ParseError);
}

TEST(Ingest, UnreadableFileIsIoError) {
  EXPECT_THROW(corpus::ingest_documents("/nonexistent/x.jsonl", Format::kJsonl), IoError);
}

TEST(Ingest, TxtDirectory) {
  TempDir dir;
  std::filesystem::create_directories(dir / "txt");
  jsonl::write_file(dir / "txt/b.txt", "second\n");
  jsonl::write_file(dir / "txt/a.txt", "ሰላም");
  jsonl::write_file(dir / "txt/skip.md", "ignored");
  const auto docs = corpus::ingest_documents(dir / "txt", Format::kTxtDir);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].id, "a.txt");
  EXPECT_EQ(docs[0].text, "ሰላም");
  EXPECT_EQ(docs[1].id, "b.txt");
  EXPECT_EQ(docs[1].text, "second\n");
  EXPECT_EQ(docs[0].source, SourceTag::other("txt"));
}

TEST(Ingest, NfcIsOptIn) {
  TempDir dir;
  // e + combining acute
  jsonl::write_file(dir / "n.jsonl", "{\"id\":\"a\",\"source\":\"real\",\"text\":\"e\\u0301\"}\n");
  EXPECT_EQ(corpus::ingest_documents(dir / "n.jsonl", Format::kJsonl)[0].text, "e\xCC\x81");
  EXPECT_EQ(corpus::ingest_documents(dir / "n.jsonl", Format::kJsonl, {true})[0].text, "\xC3\xA9");
}

TEST(Ingest, EmitRoundtripIsByteExact) {
  TempDir dir;
  std::mt19937_64 rng(7);
  std::vector<Document> docs;
  for (int i = 0; i < 200; ++i) {
    docs.push_back(doc("d" + std::to_string(i), testing::random_utf8(rng, 40),
                       i % 3 ? SourceTag::translated_wikipedia() : SourceTag::other("x y")));
  }
  docs[5].meta = {{"url", "http://example"}};
  corpus::emit_documents(dir / "o.jsonl", docs);
  EXPECT_EQ(corpus::ingest_documents(dir / "o.jsonl", Format::kJsonl), docs);
}

TEST(ScriptStats, Examples) {
  auto s = corpus::script_stats("ሰላም");
  EXPECT_EQ(s.total_chars, 3u);
  EXPECT_EQ(s.ethiopic_chars, 3u);
  EXPECT_DOUBLE_EQ(s.ethiopic_ratio, 1.0);
  EXPECT_DOUBLE_EQ(corpus::script_stats("Hello").ethiopic_ratio, 0.0);
  s = corpus::script_stats("ሰላም hello");
  EXPECT_EQ(s.total_chars, 8u);
  EXPECT_EQ(s.ethiopic_chars, 3u);
  EXPECT_DOUBLE_EQ(s.ethiopic_ratio, 0.375);
  EXPECT_EQ(corpus::script_stats(" \t\n").total_chars, 0u);
  EXPECT_DOUBLE_EQ(corpus::script_stats("").ethiopic_ratio, 0.0);
}

TEST(ScriptStats, BlockEdges) {
  // Supplement, Extended and Extended-A blocks count; neighbours do not.
  const auto s = corpus::script_stats("\u1380\u139F\u2D80\u2DDF\uAB00\uAB2F\u11FF\u13A0\u2DE0");
  EXPECT_EQ(s.total_chars, 9u);
  EXPECT_EQ(s.ethiopic_chars, 6u);
}

TEST(ScriptStats, ConcatenationIsAdditive) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto a = testing::random_utf8(rng, 30);
    const auto b = testing::random_utf8(rng, 30);
    const auto sa = corpus::script_stats(a), sb = corpus::script_stats(b), sab = corpus::script_stats(a + b);
    EXPECT_EQ(sab.total_chars, sa.total_chars + sb.total_chars);
    EXPECT_EQ(sab.ethiopic_chars, sa.ethiopic_chars + sb.ethiopic_chars);
    EXPECT_LE(sab.ethiopic_chars, sab.total_chars);
    EXPECT_GE(sab.ethiopic_ratio, 0.0);
    EXPECT_LE(sab.ethiopic_ratio, 1.0);
  }
}

TEST(CountTokens, Examples) {
  const auto model = tokenizer::TokenizerModel(tokenizer::Vocabulary::byte_fallback(std::vector<std::string>{"▁Hi"}));
  EXPECT_EQ(corpus::count_tokens(doc("a", ""), model), 0u);
  EXPECT_EQ(corpus::count_tokens(doc("a", "Hi"), model), 1u);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto d = doc("x", testing::random_utf8(rng, 50));
    const auto n = corpus::count_tokens(d, model);
    EXPECT_EQ(n, model.encode(d.text).size());
    EXPECT_EQ(n, corpus::count_tokens(d, model));
  }
}

TEST(Dedup, Examples) {
  const std::vector<Document> in = {doc("1", "A"), doc("2", "A"), doc("3", "B")};
  const auto out = corpus::dedup_exact(in);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].id, "1");
  EXPECT_EQ(out[1].id, "3");
  EXPECT_EQ(corpus::dedup_exact(std::vector<Document>{doc("1", "A"), doc("2", "A'")}).size(), 2u);
  EXPECT_TRUE(corpus::dedup_exact(std::vector<Document>{}).empty());
}

TEST(Dedup, IdempotentAndOrderPreserving) {
  std::mt19937_64 rng(5);
  std::vector<Document> in;
  for (int i = 0; i < 300; ++i) in.push_back(doc(std::to_string(i), std::to_string(testing::below(rng, 60))));
  const auto once = corpus::dedup_exact(in);
  EXPECT_EQ(corpus::dedup_exact(once), once);
  for (std::size_t i = 1; i < once.size(); ++i) EXPECT_LT(std::stoi(once[i - 1].id), std::stoi(once[i].id));
}

}  // namespace
}  // namespace lowres
