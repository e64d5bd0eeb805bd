#include "difficulty.hpp"

#include <cctype>
#include <cmath>

namespace scl {

const char* metric_name(Metric metric) {
  switch (metric) {
    case Metric::Length: return "length";
    case Metric::WordRarity: return "word_rarity";
    case Metric::FRE: return "fre";
    case Metric::Random: return "random";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  if (name == "length") return Metric::Length;
  if (name == "word_rarity") return Metric::WordRarity;
  if (name == "fre") return Metric::FRE;
  if (name == "random") return Metric::Random;
  fail(ErrorCode::InvalidArgument, "unknown difficulty metric '" + std::string(name) + "'");
}

const char* rarity_normalizer_name(RarityNormalizer n) {
  return n == RarityNormalizer::Tokens ? "tokens" : "types";
}

RarityNormalizer parse_rarity_normalizer(std::string_view name) {
  if (name == "tokens") return RarityNormalizer::Tokens;
  if (name == "types") return RarityNormalizer::Types;
  fail(ErrorCode::Config, "rarity_normalizer must be 'tokens' or 'types', got '" +
                              std::string(name) + "'");
}

namespace {

bool is_vowel(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'y':
      return true;
    default:
      return false;
  }
}

}  // namespace

int syllable_count(std::string_view word) {
  int groups = 0;
  bool in_group = false;
  for (char c : word) {
    if (is_vowel(c)) {
      if (!in_group) ++groups;
      in_group = true;
    } else {
      in_group = false;
    }
  }
  char last = word.empty() ? '\0' : static_cast<char>(std::tolower(static_cast<unsigned char>(word.back())));
  if (last == 'e' && groups > 1) --groups;
  return groups < 1 ? 1 : groups;
}

double length_score(const SentenceRecord& rec) {
  if (rec.words.empty()) {
    fail(ErrorCode::InvalidArgument,
         "sentence " + std::to_string(rec.id) + " has no words; it should have been dropped at ingest");
  }
  return static_cast<double>(rec.words.size());
}

double rarity_score(const SentenceRecord& rec, const Vocabulary& vocab,
                    RarityNormalizer normalizer) {
  if (rec.words.empty()) {
    fail(ErrorCode::InvalidArgument, "sentence " + std::to_string(rec.id) + " has no words");
  }
  const double n = normalizer == RarityNormalizer::Tokens
                       ? static_cast<double>(vocab.total_tokens())
                       : static_cast<double>(vocab.raw_type_count());
  if (n <= 0.0) fail(ErrorCode::Numeric, "rarity normalizer is zero");

  // Summing log(count/N) per distinct word, weighted by its in-sentence
  // frequency, makes rarity exactly invariant under sentence repetition.
  std::vector<std::pair<const std::string*, std::uint32_t>> uniq;
  for (const auto& word : rec.words) {
    bool found = false;
    for (auto& [w, c] : uniq) {
      if (*w == word) {
        ++c;
        found = true;
        break;
      }
    }
    if (!found) uniq.emplace_back(&word, 1);
  }

  const double len = static_cast<double>(rec.words.size());
  double sum = 0.0;
  for (const auto& [word, in_sentence] : uniq) {
    std::uint64_t count = vocab.count_for(*word);
    if (count == 0) {
      fail(ErrorCode::Numeric, "word '" + *word + "' in sentence " + std::to_string(rec.id) +
                                   " has zero corpus count");
    }
    const double weight = static_cast<double>(in_sentence) / len;
    sum += weight * std::log(static_cast<double>(count) / n);
  }
  return -sum;
}

double fre_score(const SentenceRecord& rec) {
  if (rec.words.empty()) {
    fail(ErrorCode::InvalidArgument, "sentence " + std::to_string(rec.id) + " has no words");
  }
  long syllables = 0;
  for (const auto& word : rec.words) syllables += syllable_count(word);
  const double asl = static_cast<double>(rec.words.size());
  const double asw = static_cast<double>(syllables) / asl;
  return 206.835 - 1.015 * asl - 84.6 * asw;
}

double random_score(std::uint32_t sentence_id, std::uint64_t seed) {
  std::uint64_t h = splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ull + sentence_id));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::vector<DifficultyScore> score_corpus(const std::vector<SentenceRecord>& records,
                                          Metric metric, const Vocabulary* vocab,
                                          std::uint64_t seed, RarityNormalizer normalizer) {
  if (metric == Metric::WordRarity && vocab == nullptr) {
    fail(ErrorCode::InvalidArgument, "word rarity scoring requires a vocabulary");
  }
  std::vector<DifficultyScore> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    double value = 0.0;
    try {
      switch (metric) {
        case Metric::Length: value = length_score(rec); break;
        case Metric::WordRarity: value = rarity_score(rec, *vocab, normalizer); break;
        case Metric::FRE: value = fre_score(rec); break;
        case Metric::Random: value = random_score(rec.id, seed); break;
      }
    } catch (const Error& e) {
      fail(e.code(), "scoring sentence " + std::to_string(rec.id) + ": " + e.what());
    }
    out.push_back({rec.id, metric, value});
  }
  return out;
}

}  // namespace scl
