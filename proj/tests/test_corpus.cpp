#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "corpus.hpp"
#include "support/fixtures.hpp"

using namespace scl;

TEST_CASE("tokenizer separates words and punctuation") {
  TokenizerConfig cfg;
  Tokenized t = tokenize_sentence("She is the author of the Twilight series.", cfg);
  CHECK(t.words.size() == 8);
  CHECK(t.tokens.size() == 9);
  CHECK(t.tokens.back() == ".");
  CHECK(t.words.front() == "She");

  t = tokenize_sentence("don't stop-motion", cfg);
  CHECK(t.words == std::vector<std::string>{"don't", "stop", "motion"});
  CHECK(t.tokens.size() == 4);  // hyphen is its own token

  t = tokenize_sentence("   \t ", cfg);
  CHECK(t.tokens.empty());
}

TEST_CASE("tokenizer keeps multibyte words intact and truncates long input") {
  TokenizerConfig cfg;
  Tokenized t = tokenize_sentence("caf\xC3\xA9 au lait", cfg);
  CHECK(t.words.size() == 3);
  CHECK(t.words[0] == "caf\xC3\xA9");

  cfg.max_len = 4;
  t = tokenize_sentence("one two three four five six", cfg);
  CHECK(t.tokens.size() == 4);
  CHECK(t.words.size() == 4);
}

TEST_CASE("ingest inherits the article label and drops empty sentences") {
  IngestResult r = testing::five_record_fixture();
  REQUIRE(r.records.size() == 5);
  CHECK(r.records[0].label == Label::SL);
  CHECK(r.records[0].words.size() == 8);
  int sl = 0, el = 0;
  for (const auto& rec : r.records) (rec.label == Label::SL ? sl : el)++;
  CHECK(sl == 2);
  CHECK(el == 3);
  // sequential ids
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    CHECK(r.records[i].id == static_cast<std::uint32_t>(i));
  }
}

TEST_CASE("ingest accepts #article headers and blank-line boundaries") {
  const char* sl =
      "#article 7\n"
      "First sentence here.\n"
      "Second sentence here.\n"
      "\n"
      "Unlabeled article sentence.\n";
  IngestResult r = ingest_text(sl, "", IngestConfig{});
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[0].article_id == 7);
  CHECK(r.records[1].article_id == 7);
  CHECK(r.records[2].article_id == 8);  // auto id continues after the explicit one
}

TEST_CASE("ingest reports malformed headers and empty articles") {
  const char* sl =
      "#article seven\n"
      "A sentence.\n"
      "\n"
      "#article 3\n"
      "...\n"
      "\n";
  IngestResult r = ingest_text(sl, "", IngestConfig{});
  REQUIRE(r.records.size() == 1);
  REQUIRE(r.warnings.size() == 2);
  CHECK(r.warnings[0].line_no == 1);
  CHECK(r.warnings[0].message.find("malformed") != std::string::npos);
  CHECK(r.warnings[1].message.find("no non-empty sentences") != std::string::npos);
}

TEST_CASE("unknown class label is fatal") {
  CHECK_THROWS_AS(parse_label("XX"), Error);
  CHECK(parse_label("SL") == Label::SL);
  CHECK(parse_label("EL") == Label::EL);
}

TEST_CASE("build_vocab counts and total_tokens") {
  IngestResult r = ingest_text("a a b\na b\n", "", IngestConfig{});
  REQUIRE(r.records.size() == 2);
  Vocabulary vocab = build_vocab(r.records, 1, 1000);
  CHECK(vocab.total_tokens() == 5);
  CHECK(vocab.count_for("a") == 3);
  CHECK(vocab.count_for("b") == 2);
  CHECK(vocab.raw_type_count() == 2);
  CHECK(vocab.size() == Vocabulary::kNumSpecial + 2);
}

TEST_CASE("cutoff above max frequency leaves only special tokens") {
  IngestResult r = ingest_text("a a b\na b\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 10, 1000);
  CHECK(vocab.size() == Vocabulary::kNumSpecial);
  // all occurrences pool into UNK
  CHECK(vocab.count_for_id(Vocabulary::kUnk) == 5);
  CHECK(vocab.count_for("a") == 5);
}

TEST_CASE("tie at the cap boundary keeps the lexicographically smaller word") {
  // "zz" and "aa" both occur twice; only one content slot is available.
  IngestResult r = ingest_text("zz aa\nzz aa\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 1, Vocabulary::kNumSpecial + 1);
  CHECK(vocab.size() == Vocabulary::kNumSpecial + 1);
  CHECK(vocab.lookup("aa") == Vocabulary::kNumSpecial);
  CHECK(vocab.lookup("zz") == Vocabulary::kUnk);
}

TEST_CASE("cap below the special tokens is a configuration error") {
  IngestResult r = ingest_text("a\n", "", IngestConfig{});
  CHECK_THROWS_AS(build_vocab(r.records, 1, 3), Error);
}

TEST_CASE("encode_records maps unknown words to UNK and stays in range") {
  IngestResult r = ingest_text("a a b\na b cc\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 2, 1000);  // cc dropped by cutoff
  encode_records(r.records, vocab);
  for (const auto& rec : r.records) {
    REQUIRE(rec.token_ids.size() == rec.tokens.size());
    for (auto id : rec.token_ids) {
      CHECK(id >= 0);
      CHECK(id < vocab.size());
    }
  }
  CHECK(r.records[1].token_ids[2] == Vocabulary::kUnk);
}

namespace {

IngestResult article_fixture(int articles, int sentences_per_article) {
  std::string sl, el;
  for (int a = 0; a < articles; ++a) {
    sl += "#article " + std::to_string(a) + "\n";
    el += "#article " + std::to_string(a) + "\n";
    for (int s = 0; s < sentences_per_article; ++s) {
      sl += "simple sentence number " + std::to_string(s) + " of article " +
            std::to_string(a) + "\n";
      el += "everyday sentence number " + std::to_string(s) + " in article " +
            std::to_string(a) + "\n";
    }
  }
  return ingest_text(sl, el, IngestConfig{});
}

}  // namespace

TEST_CASE("split is deterministic and respects ratios") {
  IngestResult r = article_fixture(10, 3);
  CorpusSplit s1 = split_corpus(r.records, {0.8, 0.1, 0.1}, 7);
  CorpusSplit s2 = split_corpus(r.records, {0.8, 0.1, 0.1}, 7);
  CHECK(s1.train == s2.train);
  CHECK(s1.validation == s2.validation);
  CHECK(s1.test == s2.test);
  // 10 articles -> 8/1/1, with 6 sentences per aligned pair
  CHECK(s1.train.size() == 48);
  CHECK(s1.validation.size() == 6);
  CHECK(s1.test.size() == 6);

  CorpusSplit s3 = split_corpus(r.records, {0.8, 0.1, 0.1}, 8);
  CHECK(s1.train != s3.train);  // different seed, different assignment
}

TEST_CASE("split ratios 1/0/0 put everything in train") {
  IngestResult r = article_fixture(5, 2);
  CorpusSplit split = split_corpus(r.records, {1.0, 0.0, 0.0}, 3);
  CHECK(split.train.size() == r.records.size());
  CHECK(split.validation.empty());
  CHECK(split.test.empty());
}

TEST_CASE("negative ratios and bad sums are fatal") {
  IngestResult r = article_fixture(3, 1);
  CHECK_THROWS_AS(split_corpus(r.records, {1.2, -0.1, -0.1}, 1), Error);
  CHECK_THROWS_AS(split_corpus(r.records, {0.5, 0.1, 0.1}, 1), Error);
  CHECK_THROWS_AS(split_corpus(r.records, {0.0, 0.5, 0.5}, 1), Error);
}

TEST_CASE("aligned article pairs land in the same split") {
  IngestResult r = article_fixture(12, 2);
  CorpusSplit split = split_corpus(r.records, {0.5, 0.25, 0.25}, 99);
  auto bucket_of = [&](std::uint32_t id) {
    for (auto x : split.train) if (x == id) return 0;
    for (auto x : split.validation) if (x == id) return 1;
    return 2;
  };
  std::map<std::uint32_t, std::set<int>> buckets_by_article;
  for (const auto& rec : r.records) {
    buckets_by_article[rec.article_id].insert(bucket_of(rec.id));
  }
  for (const auto& [article, buckets] : buckets_by_article) {
    CHECK(buckets.size() == 1);  // both labels, all sentences together
  }
}

TEST_CASE("split is disjoint and exhaustive") {
  IngestResult r = article_fixture(9, 2);
  CorpusSplit split = split_corpus(r.records, {0.6, 0.2, 0.2}, 5);
  std::set<std::uint32_t> seen;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (auto id : *part) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == r.records.size());
}

TEST_CASE("corpus_stats per-class totals") {
  IngestResult r = testing::five_record_fixture();
  CorpusStats stats = corpus_stats(r.records);
  CHECK(stats.sl.sentences == 2);
  CHECK(stats.el.sentences == 3);
  // "She is the author of the Twilight series." = 9 tokens,
  // "Today it rains." = 4 tokens
  CHECK(stats.sl.tokens == 13);

  CorpusStats empty = corpus_stats({});
  CHECK(empty.sl.sentences == 0);
  CHECK(empty.el.tokens == 0);
}

TEST_CASE("ingest, vocabulary and split are a pure function of input and seeds") {
  const char* sl = "alpha beta gamma\nbeta beta\n\nanother simple article\n";
  const char* el = "delta epsilon\nzeta eta theta\n";
  IngestResult a = ingest_text(sl, el, IngestConfig{});
  IngestResult b = ingest_text(sl, el, IngestConfig{});
  REQUIRE(a.records.size() == b.records.size());
  Vocabulary va = build_vocab(a.records, 1, 64);
  Vocabulary vb = build_vocab(b.records, 1, 64);
  encode_records(a.records, va);
  encode_records(b.records, vb);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].token_ids == b.records[i].token_ids);
    CHECK(a.records[i].article_id == b.records[i].article_id);
  }
  CHECK(split_corpus(a.records, {0.8, 0.1, 0.1}, 42).train ==
        split_corpus(b.records, {0.8, 0.1, 0.1}, 42).train);
}

TEST_CASE("record table TSV layout") {
  IngestResult r = testing::five_record_fixture();
  std::ostringstream out;
  write_records_tsv(out, r.records);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "0\t0\tSL\tShe is the author of the Twilight series.");
}
