#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace scl {

enum class Label : std::uint8_t { SL, EL };

const char* label_name(Label label);
Label parse_label(std::string_view name);

struct TokenizerConfig {
  int max_len = 128;  // token stream is truncated to this many tokens
};

// Words are maximal runs of ASCII letters/digits/apostrophes (UTF-8
// continuation bytes count as letters so multibyte words stay intact).
// Any other printable character becomes a single-character punctuation
// token. `tokens` is the full MLM stream, `words` the subsequence used by
// the difficulty heuristics.
struct Tokenized {
  std::vector<std::string> tokens;
  std::vector<std::string> words;
};

Tokenized tokenize_sentence(std::string_view line, const TokenizerConfig& cfg);

struct SentenceRecord {
  std::uint32_t id = 0;
  std::uint32_t article_id = 0;
  Label label = Label::SL;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::string> words;
  std::vector<std::int32_t> token_ids;  // filled by encode_records
};

struct IngestWarning {
  std::string file;
  std::size_t line_no = 0;  // 1-based; 0 when not tied to a line
  std::string message;
};

struct IngestResult {
  std::vector<SentenceRecord> records;
  std::vector<IngestWarning> warnings;
};

struct IngestConfig {
  TokenizerConfig tokenizer;
};

// One file per class, one sentence per line, articles separated by blank
// lines or introduced by "#article <id>" headers. Sentences without any
// word are dropped. Record ids are sequential over (sl file, el file).
IngestResult ingest_corpus(const std::string& sl_path, const std::string& el_path,
                           const IngestConfig& cfg);
IngestResult ingest_text(std::string_view sl_text, std::string_view el_text,
                         const IngestConfig& cfg);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kMask = 1;
  static constexpr std::int32_t kUnk = 2;
  static constexpr std::int32_t kCls = 3;
  static constexpr std::int32_t kSep = 4;
  static constexpr std::int32_t kNumSpecial = 5;

  std::int32_t size() const { return static_cast<std::int32_t>(id_to_token_.size()); }
  std::int32_t lookup(const std::string& token) const;      // kUnk when absent
  const std::string& token(std::int32_t id) const { return id_to_token_[static_cast<std::size_t>(id)]; }
  bool is_special(std::int32_t id) const { return id < kNumSpecial; }

  // Pre-cutoff corpus frequency; out-of-vocabulary words share the pooled
  // UNK count. Zero only for never-seen words.
  std::uint64_t count_for(const std::string& token) const;
  std::uint64_t count_for_id(std::int32_t id) const { return counts_by_id_[static_cast<std::size_t>(id)]; }

  std::uint64_t total_tokens() const { return total_tokens_; }
  std::uint64_t raw_type_count() const { return raw_type_count_; }

  void write_tsv(std::ostream& out) const;

  friend Vocabulary build_vocab(const std::vector<SentenceRecord>& records,
                                std::uint64_t cutoff, std::size_t cap);

 private:
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<std::uint64_t> counts_by_id_;
  std::unordered_map<std::string, std::uint64_t> dropped_counts_;  // OOV types
  std::uint64_t total_tokens_ = 0;
  std::uint64_t raw_type_count_ = 0;
};

// Keeps the `cap - 5` most frequent tokens with frequency >= cutoff; ties at
// the boundary go to the lexicographically smaller token. `cap` includes the
// five special ids.
Vocabulary build_vocab(const std::vector<SentenceRecord>& records,
                       std::uint64_t cutoff, std::size_t cap);

void encode_records(std::vector<SentenceRecord>& records, const Vocabulary& vocab);

struct CorpusSplit {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> validation;
  std::vector<std::uint32_t> test;
  std::uint64_t seed = 0;
};

// Assignment is by article id, so the SL and EL sides of an aligned article
// pair always land in the same split. Ratios must be non-negative and sum
// to 1; the train ratio must be positive.
CorpusSplit split_corpus(const std::vector<SentenceRecord>& records,
                         const std::array<double, 3>& ratios, std::uint64_t seed);

struct ClassStats {
  std::uint64_t tokens = 0;
  std::uint64_t sentences = 0;
};

struct CorpusStats {
  ClassStats sl;
  ClassStats el;
};

CorpusStats corpus_stats(const std::vector<SentenceRecord>& records);

void write_records_tsv(std::ostream& out, const std::vector<SentenceRecord>& records);

}  // namespace scl
