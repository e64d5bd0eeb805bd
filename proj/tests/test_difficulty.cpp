#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "difficulty.hpp"
#include "support/fixtures.hpp"

using namespace scl;

namespace {

SentenceRecord record_from(const std::string& text, std::uint32_t id = 0) {
  Tokenized t = tokenize_sentence(text, TokenizerConfig{});
  SentenceRecord rec;
  rec.id = id;
  rec.text = text;
  rec.tokens = std::move(t.tokens);
  rec.words = std::move(t.words);
  return rec;
}

}  // namespace

TEST_CASE("syllable heuristic on a fixed word list") {
  const std::map<std::string, int> expected = {
      {"cat", 1},     {"today", 2},  {"Today", 2},   {"she", 1},    {"series", 2},
      {"blue", 1},    {"make", 1},   {"rhythm", 1},  {"Mr", 1},     {"banana", 3},
      {"beautiful", 3}, {"idea", 2}, {"house", 1},   {"the", 1},    {"people", 1},
      {"1492", 1},    {"don't", 1},  {"window", 2},  {"able", 1},   {"queue", 1},
  };
  for (const auto& [word, syllables] : expected) {
    CAPTURE(word);
    CHECK(syllable_count(word) == syllables);
  }
}

TEST_CASE("length is the number of words, punctuation excluded") {
  CHECK(length_score(record_from("She is the author of the Twilight series.")) == 8.0);
  CHECK(length_score(record_from("Today")) == 1.0);

  std::string long_sentence;
  for (int i = 0; i < 200; ++i) long_sentence += "word ";
  CHECK(length_score(record_from(long_sentence)) == 128.0);  // truncation bound

  SentenceRecord empty;
  empty.id = 9;
  CHECK_THROWS_AS(length_score(empty), Error);
}

TEST_CASE("word rarity on the worked two-sentence corpus") {
  IngestResult r = ingest_text("a a b\na b\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 1, 100);
  const double got = rarity_score(r.records[1], vocab);
  const double expected = -0.5 * (std::log(3.0 / 5.0) + std::log(2.0 / 5.0));
  CHECK(got == expected);  // bit-for-bit
  CHECK(got == doctest::Approx(0.7135581778).epsilon(1e-9));
}

TEST_CASE("a corpus of one repeated word has zero rarity") {
  IngestResult r = ingest_text("same\nsame\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 1, 100);
  CHECK(rarity_score(r.records[0], vocab) == 0.0);
}

TEST_CASE("rarity is exactly invariant under sentence repetition") {
  IngestResult r = ingest_text("a a b\na b\na b a b\na b a b a b\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 1, 100);
  const double base = rarity_score(r.records[1], vocab);
  CHECK(rarity_score(r.records[2], vocab) == base);
  CHECK(rarity_score(r.records[3], vocab) == base);
}

TEST_CASE("rarity normalizer variants") {
  IngestResult r = ingest_text("a a b\na b\n", "", IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 1, 100);
  const double tokens = rarity_score(r.records[1], vocab, RarityNormalizer::Tokens);
  const double types = rarity_score(r.records[1], vocab, RarityNormalizer::Types);
  // N = 5 tokens vs N = 2 types
  CHECK(types == doctest::Approx(-0.5 * (std::log(3.0 / 2.0) + std::log(2.0 / 2.0))));
  CHECK(tokens > types);
  CHECK(tokens >= 0.0);
}

TEST_CASE("UNK-mapped words use the pooled out-of-vocabulary count") {
  IngestResult r = ingest_text("aa bb\naa cc\naa dd\n", "", IngestConfig{});
  // cutoff 2 retains only "aa" (3); bb/cc/dd pool into UNK with count 3.
  Vocabulary vocab = build_vocab(r.records, 2, 100);
  CHECK(vocab.count_for("bb") == 3);
  const double got = rarity_score(r.records[0], vocab);
  const double expected = -0.5 * (std::log(3.0 / 6.0) + std::log(3.0 / 6.0));
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("FRE worked examples") {
  // ASL 10, ASW 1.5: five monosyllabic plus five two-syllable words.
  SentenceRecord ten = record_from("cat cat cat cat cat window window window window window");
  CHECK(fre_score(ten) == 206.835 - 1.015 * 10.0 - 84.6 * 1.5);
  CHECK(fre_score(ten) == doctest::Approx(69.785).epsilon(1e-12));

  SentenceRecord one = record_from("cat");
  CHECK(fre_score(one) == doctest::Approx(121.22).epsilon(1e-9));  // above 100 is fine

  std::string forty;
  for (int i = 0; i < 40; ++i) forty += "banana ";
  SentenceRecord neg = record_from(forty);
  CHECK(fre_score(neg) == doctest::Approx(-87.565).epsilon(1e-9));  // negative is fine
}

TEST_CASE("FRE is strictly monotone in length and syllables") {
  std::string words;
  double previous = 1000.0;
  for (int n = 1; n <= 30; ++n) {
    words += "cat ";
    const double fre = fre_score(record_from(words));  // ASW fixed at 1
    CHECK(fre < previous);
    previous = fre;
  }
  // ASL fixed, ASW rising
  CHECK(fre_score(record_from("banana banana")) < fre_score(record_from("window window")));
  CHECK(fre_score(record_from("window window")) < fre_score(record_from("cat cat")));
}

TEST_CASE("random scores are deterministic, uniform-ish and seed-sensitive") {
  CHECK(random_score(123, 7) == random_score(123, 7));
  CHECK(random_score(123, 7) != random_score(123, 8));
  CHECK(random_score(124, 7) != random_score(123, 7));

  double sum = 0.0;
  for (std::uint32_t id = 0; id < 10000; ++id) {
    const double v = random_score(id, 42);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    sum += v;
  }
  CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.04));  // mean within 0.5 +- 0.02
}

TEST_CASE("score_corpus maps records in order and matches per-sentence calls") {
  IngestResult r = testing::five_record_fixture();
  Vocabulary vocab = build_vocab(r.records, 1, 1000);

  auto lengths = score_corpus(r.records, Metric::Length);
  REQUIRE(lengths.size() == r.records.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    CHECK(lengths[i].sentence_id == r.records[i].id);
    CHECK(lengths[i].value == length_score(r.records[i]));
  }

  auto rarity = score_corpus(r.records, Metric::WordRarity, &vocab);
  for (std::size_t i = 0; i < rarity.size(); ++i) {
    CHECK(rarity[i].value == rarity_score(r.records[i], vocab));
  }

  auto random_a = score_corpus(r.records, Metric::Random, nullptr, 5);
  auto random_b = score_corpus(r.records, Metric::Random, nullptr, 5);
  for (std::size_t i = 0; i < random_a.size(); ++i) {
    CHECK(random_a[i].value == random_b[i].value);
  }
}

TEST_CASE("brute-force oracle agreement on a generated corpus") {
  // Independent recomputation with plain counting, no shared code paths.
  std::string sl, el;
  const char* pool[] = {"alpha", "beta",  "gamma", "delta", "window", "banana",
                        "cat",   "house", "queue", "idea",  "today",  "rhythm"};
  Rng rng(1234);
  for (int s = 0; s < 400; ++s) {
    std::string line;
    const int len = 3 + static_cast<int>(rng.bounded(9));
    for (int w = 0; w < len; ++w) {
      line += pool[rng.bounded(12)];
      line += ' ';
    }
    (s % 2 == 0 ? sl : el) += line + "\n";
  }
  IngestResult r = ingest_text(sl, el, IngestConfig{});
  Vocabulary vocab = build_vocab(r.records, 1, 1000);

  std::map<std::string, long> counts;
  long total = 0;
  for (const auto& rec : r.records) {
    for (const auto& tok : rec.tokens) {
      ++counts[tok];
      ++total;
    }
  }

  for (const auto& rec : r.records) {
    double sum = 0.0;
    long syllables = 0;
    for (const auto& word : rec.words) {
      sum += std::log(static_cast<double>(counts[word]) / static_cast<double>(total));
      syllables += syllable_count(word);
    }
    const double oracle_rarity = -sum / static_cast<double>(rec.words.size());
    const double oracle_length = static_cast<double>(rec.words.size());
    const double asw = static_cast<double>(syllables) / oracle_length;
    const double oracle_fre = 206.835 - 1.015 * oracle_length - 84.6 * asw;

    CHECK(rarity_score(rec, vocab) ==
          doctest::Approx(oracle_rarity).epsilon(1e-12));
    CHECK(length_score(rec) == oracle_length);
    CHECK(fre_score(rec) == doctest::Approx(oracle_fre).epsilon(1e-12));
  }
}
