#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "difficulty.hpp"
#include "model.hpp"

namespace scl {

struct PerplexityReport {
  double overall = 0.0;
  double sl = 0.0;
  double el = 0.0;
  std::uint64_t overall_count = 0;  // masked positions evaluated
  std::uint64_t sl_count = 0;
  std::uint64_t el_count = 0;
  double overall_nll = 0.0;  // pooled mean NLL, overall = exp(overall_nll)
  double sl_nll = 0.0;
  double el_nll = 0.0;
  std::uint64_t eval_mask_seed = 0;
};

// Pooled perplexity over the masked positions of `ids`, with the fixed
// evaluation mask keyed by (eval_mask_seed, sentence id). Dropout disabled.
std::pair<double, std::uint64_t> perplexity(const MlmModel<float>& model,
                                            const std::vector<SentenceRecord>& records,
                                            const std::vector<std::uint32_t>& ids,
                                            const Vocabulary& vocab,
                                            std::uint64_t eval_mask_seed, int batch_size = 8);

// Overall plus per-class perplexities under one shared mask seed. The class
// NLL sums pool exactly to the overall NLL.
PerplexityReport subset_report(const MlmModel<float>& model,
                               const std::vector<SentenceRecord>& records,
                               const std::vector<std::uint32_t>& ids,
                               const Vocabulary& vocab, std::uint64_t eval_mask_seed,
                               int batch_size = 8);

// Mean masked NLL over `ids`; the quantity early stopping watches.
double mean_masked_nll(const MlmModel<float>& model,
                       const std::vector<SentenceRecord>& records,
                       const std::vector<std::uint32_t>& ids, const Vocabulary& vocab,
                       std::uint64_t eval_mask_seed, int batch_size = 8);

struct OverlapMatrix {
  // overlap[a][b] = |types(a) inters types(b)| / |types(b)| in percent.
  double sl_sl = 100.0, sl_el = 0.0, el_sl = 0.0, el_el = 100.0;
  std::uint64_t sl_types = 0, el_types = 0;
};

// Word-type overlap between the classes over the raw (pre-cutoff) lexicon.
OverlapMatrix vocab_overlap(const std::vector<SentenceRecord>& records);

struct Histogram {
  std::string metric;
  std::string cls;
  std::vector<double> edges;        // bins.size() + 1 shared edges
  std::vector<std::uint64_t> counts;
  bool single_bin_fallback = false;
};

// Equal-width bins over the pooled min..max of both classes; the last bin is
// closed so counts conserve class sizes. Falls back to a single bin when
// fewer than two distinct values exist.
std::vector<Histogram> difficulty_histograms(const std::string& metric,
                                             const std::vector<double>& sl_scores,
                                             const std::vector<double>& el_scores,
                                             int bins);

}  // namespace scl
