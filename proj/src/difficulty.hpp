#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "corpus.hpp"

namespace scl {

enum class Metric : std::uint8_t { Length, WordRarity, FRE, Random };

const char* metric_name(Metric metric);
Metric parse_metric(std::string_view name);

// Which corpus-wide quantity normalises word counts in the rarity score.
// Tokens: relative frequency count/total_tokens (default, keeps the score
// non-negative). Types: count divided by the number of distinct raw types,
// the literal "size of the vocabulary" reading.
enum class RarityNormalizer : std::uint8_t { Tokens, Types };

const char* rarity_normalizer_name(RarityNormalizer n);
RarityNormalizer parse_rarity_normalizer(std::string_view name);

struct DifficultyScore {
  std::uint32_t sentence_id = 0;
  Metric metric = Metric::Length;
  double value = 0.0;
};

// Heuristic vowel-group syllable count: contiguous a/e/i/o/u/y groups,
// minus one for a trailing silent 'e' unless it is the only group, floored
// at one.
int syllable_count(std::string_view word);

double length_score(const SentenceRecord& rec);
double rarity_score(const SentenceRecord& rec, const Vocabulary& vocab,
                    RarityNormalizer normalizer = RarityNormalizer::Tokens);
double fre_score(const SentenceRecord& rec);
double random_score(std::uint32_t sentence_id, std::uint64_t seed);

// Applies the metric to every record, preserving input order. `vocab` is
// required for WordRarity, `seed` for Random.
std::vector<DifficultyScore> score_corpus(
    const std::vector<SentenceRecord>& records, Metric metric,
    const Vocabulary* vocab = nullptr, std::uint64_t seed = 0,
    RarityNormalizer normalizer = RarityNormalizer::Tokens);

}  // namespace scl
