#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace scl {

const char* label_name(Label label) { return label == Label::SL ? "SL" : "EL"; }

Label parse_label(std::string_view name) {
  if (name == "SL") return Label::SL;
  if (name == "EL") return Label::EL;
  fail(ErrorCode::Corpus, "unknown class label '" + std::string(name) + "' (expected SL or EL)");
}

namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c == '\'' || c >= 0x80;
}

bool is_word_token(const std::string& token) {
  return !token.empty() && is_word_char(static_cast<unsigned char>(token.front()));
}

}  // namespace

Tokenized tokenize_sentence(std::string_view line, const TokenizerConfig& cfg) {
  Tokenized out;
  std::size_t i = 0;
  const std::size_t limit = static_cast<std::size_t>(cfg.max_len);
  while (i < line.size() && out.tokens.size() < limit) {
    unsigned char c = static_cast<unsigned char>(line[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < line.size() && is_word_char(static_cast<unsigned char>(line[j]))) ++j;
      out.tokens.emplace_back(line.substr(i, j - i));
      i = j;
    } else {
      out.tokens.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  for (const auto& tok : out.tokens) {
    if (is_word_token(tok)) out.words.push_back(tok);
  }
  return out;
}

namespace {

struct ArticleState {
  bool open = false;
  std::uint32_t id = 0;
  std::size_t emitted = 0;
  std::size_t start_line = 0;
};

void close_article(const ArticleState& art, const std::string& file,
                   std::vector<IngestWarning>& warnings) {
  if (art.open && art.emitted == 0) {
    warnings.push_back({file, art.start_line,
                        "article " + std::to_string(art.id) + " has no non-empty sentences"});
  }
}

void ingest_stream(std::istream& in, const std::string& file, Label label,
                   const IngestConfig& cfg, std::uint32_t& next_record_id,
                   IngestResult& out) {
  std::string line;
  std::size_t line_no = 0;
  std::uint32_t next_auto_article = 0;
  ArticleState art;

  auto begin_article = [&](std::uint32_t id, std::size_t at_line) {
    close_article(art, file, out.warnings);
    art = ArticleState{true, id, 0, at_line};
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view view(line);

    bool blank = view.find_first_not_of(" \t") == std::string_view::npos;
    if (blank) {
      close_article(art, file, out.warnings);
      art = ArticleState{};
      continue;
    }

    if (view.starts_with("#article")) {
      std::string_view rest = view.substr(8);
      std::size_t pos = rest.find_first_not_of(" \t");
      std::uint32_t id = 0;
      bool ok = pos != std::string_view::npos;
      if (ok) {
        rest = rest.substr(pos);
        auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), id);
        ok = ec == std::errc() && ptr == rest.data() + rest.size();
      }
      if (!ok) {
        out.warnings.push_back({file, line_no, "malformed #article header: '" + line + "'"});
        continue;
      }
      begin_article(id, line_no);
      next_auto_article = std::max(next_auto_article, id + 1);
      continue;
    }

    if (!art.open) begin_article(next_auto_article++, line_no);

    Tokenized tok = tokenize_sentence(view, cfg.tokenizer);
    if (tok.words.empty()) continue;  // nothing for the model or the heuristics

    SentenceRecord rec;
    rec.id = next_record_id++;
    rec.article_id = art.id;
    rec.label = label;
    rec.text.assign(line);
    std::replace(rec.text.begin(), rec.text.end(), '\t', ' ');
    rec.tokens = std::move(tok.tokens);
    rec.words = std::move(tok.words);
    out.records.push_back(std::move(rec));
    ++art.emitted;
  }
  close_article(art, file, out.warnings);
}

}  // namespace

IngestResult ingest_corpus(const std::string& sl_path, const std::string& el_path,
                           const IngestConfig& cfg) {
  IngestResult out;
  std::uint32_t next_id = 0;
  for (const auto& [path, label] : {std::pair{sl_path, Label::SL}, std::pair{el_path, Label::EL}}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open corpus file '" + path + "'");
    ingest_stream(in, path, label, cfg, next_id, out);
  }
  return out;
}

IngestResult ingest_text(std::string_view sl_text, std::string_view el_text,
                         const IngestConfig& cfg) {
  IngestResult out;
  std::uint32_t next_id = 0;
  std::istringstream sl(std::string{sl_text});
  ingest_stream(sl, "<sl>", Label::SL, cfg, next_id, out);
  std::istringstream el(std::string{el_text});
  ingest_stream(el, "<el>", Label::EL, cfg, next_id, out);
  return out;
}

std::int32_t Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::count_for(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return counts_by_id_[static_cast<std::size_t>(it->second)];
  auto dropped = dropped_counts_.find(token);
  if (dropped != dropped_counts_.end()) return counts_by_id_[kUnk];
  return 0;
}

void Vocabulary::write_tsv(std::ostream& out) const {
  for (std::int32_t id = 0; id < size(); ++id) {
    out << id << '\t' << id_to_token_[static_cast<std::size_t>(id)] << '\t'
        << counts_by_id_[static_cast<std::size_t>(id)] << '\n';
  }
}

Vocabulary build_vocab(const std::vector<SentenceRecord>& records,
                       std::uint64_t cutoff, std::size_t cap) {
  if (cap < static_cast<std::size_t>(Vocabulary::kNumSpecial)) {
    fail(ErrorCode::Config, "vocabulary cap " + std::to_string(cap) +
                                " is smaller than the number of special tokens");
  }
  if (records.empty()) fail(ErrorCode::Corpus, "cannot build a vocabulary from zero records");

  std::unordered_map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& rec : records) {
    for (const auto& tok : rec.tokens) {
      ++counts[tok];
      ++total;
    }
  }

  std::vector<std::pair<std::string, std::uint64_t>> entries;
  entries.reserve(counts.size());
  for (auto& kv : counts) {
    if (kv.second >= cutoff) entries.emplace_back(kv.first, kv.second);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t keep = std::min(entries.size(), cap - Vocabulary::kNumSpecial);
  entries.resize(keep);

  Vocabulary vocab;
  vocab.total_tokens_ = total;
  vocab.raw_type_count_ = counts.size();
  vocab.id_to_token_ = {"[PAD]", "[MASK]", "[UNK]", "[CLS]", "[SEP]"};
  vocab.counts_by_id_.assign(Vocabulary::kNumSpecial, 0);
  for (auto& [tok, count] : entries) {
    vocab.token_to_id_.emplace(tok, vocab.size());
    vocab.id_to_token_.push_back(tok);
    vocab.counts_by_id_.push_back(count);
  }

  std::uint64_t unk_pool = 0;
  for (auto& kv : counts) {
    if (!vocab.token_to_id_.contains(kv.first)) {
      unk_pool += kv.second;
      vocab.dropped_counts_.emplace(kv.first, kv.second);
    }
  }
  vocab.counts_by_id_[Vocabulary::kUnk] = unk_pool;
  return vocab;
}

void encode_records(std::vector<SentenceRecord>& records, const Vocabulary& vocab) {
  for (auto& rec : records) {
    rec.token_ids.clear();
    rec.token_ids.reserve(rec.tokens.size());
    for (const auto& tok : rec.tokens) rec.token_ids.push_back(vocab.lookup(tok));
  }
}

CorpusSplit split_corpus(const std::vector<SentenceRecord>& records,
                         const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorCode::Config, "split ratios must be non-negative");
  }
  if (!(ratios[0] > 0.0)) fail(ErrorCode::Config, "train split ratio must be positive");
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::Config, "split ratios must sum to 1");

  // Distinct article ids in first-appearance order, then a seeded shuffle.
  std::vector<std::uint32_t> articles;
  std::unordered_map<std::uint32_t, std::size_t> seen;
  for (const auto& rec : records) {
    if (seen.emplace(rec.article_id, articles.size()).second) articles.push_back(rec.article_id);
  }
  Rng rng(mix_seed({seed, fnv1a64("corpus-split")}));
  for (std::size_t i = articles.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(articles[i - 1], articles[j]);
  }

  const std::size_t n = articles.size();
  auto cut = [&](double frac) {
    return std::min(n, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
  };
  const std::size_t n_train = n == 0 ? 0 : std::max<std::size_t>(1, cut(ratios[0]));
  const std::size_t n_trainval = std::max(n_train, cut(ratios[0] + ratios[1]));
  const std::size_t n_val = n_trainval - n_train;

  std::unordered_map<std::uint32_t, int> bucket;  // 0 train, 1 val, 2 test
  for (std::size_t i = 0; i < n; ++i) {
    bucket[articles[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  }

  CorpusSplit split;
  split.seed = seed;
  for (const auto& rec : records) {
    switch (bucket[rec.article_id]) {
      case 0: split.train.push_back(rec.id); break;
      case 1: split.validation.push_back(rec.id); break;
      default: split.test.push_back(rec.id); break;
    }
  }
  return split;
}

CorpusStats corpus_stats(const std::vector<SentenceRecord>& records) {
  CorpusStats stats;
  for (const auto& rec : records) {
    ClassStats& cls = rec.label == Label::SL ? stats.sl : stats.el;
    cls.tokens += rec.tokens.size();
    cls.sentences += 1;
  }
  return stats;
}

void write_records_tsv(std::ostream& out, const std::vector<SentenceRecord>& records) {
  for (const auto& rec : records) {
    out << rec.id << '\t' << rec.article_id << '\t' << label_name(rec.label) << '\t'
        << rec.text << '\n';
  }
}

}  // namespace scl
