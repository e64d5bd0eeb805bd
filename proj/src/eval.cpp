#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace scl {

namespace {

struct PooledNll {
  double sl_sum = 0.0, el_sum = 0.0;
  std::uint64_t sl_count = 0, el_count = 0;
};

// Walks the held-out sentences in id order with fixed per-sentence masks and
// pools per-class NLL sums over all masked positions.
PooledNll pooled_masked_nll(const MlmModel<float>& model,
                            const std::vector<SentenceRecord>& records,
                            const std::vector<std::uint32_t>& ids, const Vocabulary& vocab,
                            std::uint64_t eval_mask_seed, int batch_size) {
  if (ids.empty()) fail(ErrorCode::InvalidArgument, "no sentences to evaluate");
  if (batch_size <= 0) fail(ErrorCode::Config, "batch size must be positive");

  PooledNll pooled;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(ids.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const std::vector<std::int32_t>*> rows;
    std::vector<std::uint32_t> row_ids;
    for (std::size_t i = start; i < stop; ++i) {
      rows.push_back(&records.at(ids[i]).token_ids);
      row_ids.push_back(ids[i]);
    }
    MaskedBatch batch = mask_eval_batch(pad_rows(rows), row_ids, vocab, eval_mask_seed);
    if (batch.masked_count() == 0) continue;
    MaskedLogProbs fwd = model.forward_logprobs(batch);
    for (Eigen::Index i = 0; i < fwd.logprobs.rows(); ++i) {
      const auto [b, l] = fwd.positions[static_cast<std::size_t>(i)];
      const double nll = -fwd.logprobs(i, batch.target_ids(b, l));
      const SentenceRecord& rec = records.at(row_ids[static_cast<std::size_t>(b)]);
      if (rec.label == Label::SL) {
        pooled.sl_sum += nll;
        ++pooled.sl_count;
      } else {
        pooled.el_sum += nll;
        ++pooled.el_count;
      }
    }
  }
  return pooled;
}

}  // namespace

std::pair<double, std::uint64_t> perplexity(const MlmModel<float>& model,
                                            const std::vector<SentenceRecord>& records,
                                            const std::vector<std::uint32_t>& ids,
                                            const Vocabulary& vocab,
                                            std::uint64_t eval_mask_seed, int batch_size) {
  PooledNll pooled = pooled_masked_nll(model, records, ids, vocab, eval_mask_seed, batch_size);
  const std::uint64_t count = pooled.sl_count + pooled.el_count;
  if (count == 0) {
    fail(ErrorCode::InvalidArgument, "evaluation produced zero masked positions");
  }
  const double mean = (pooled.sl_sum + pooled.el_sum) / static_cast<double>(count);
  return {std::exp(mean), count};
}

PerplexityReport subset_report(const MlmModel<float>& model,
                               const std::vector<SentenceRecord>& records,
                               const std::vector<std::uint32_t>& ids, const Vocabulary& vocab,
                               std::uint64_t eval_mask_seed, int batch_size) {
  PooledNll pooled = pooled_masked_nll(model, records, ids, vocab, eval_mask_seed, batch_size);
  if (pooled.sl_count + pooled.el_count == 0) {
    fail(ErrorCode::InvalidArgument, "evaluation produced zero masked positions");
  }
  if (pooled.sl_count == 0) {
    fail(ErrorCode::InvalidArgument, "subset SL has zero masked positions");
  }
  if (pooled.el_count == 0) {
    fail(ErrorCode::InvalidArgument, "subset EL has zero masked positions");
  }
  PerplexityReport report;
  report.eval_mask_seed = eval_mask_seed;
  report.sl_count = pooled.sl_count;
  report.el_count = pooled.el_count;
  report.overall_count = pooled.sl_count + pooled.el_count;
  report.sl_nll = pooled.sl_sum / static_cast<double>(pooled.sl_count);
  report.el_nll = pooled.el_sum / static_cast<double>(pooled.el_count);
  report.overall_nll =
      (pooled.sl_sum + pooled.el_sum) / static_cast<double>(report.overall_count);
  report.sl = std::exp(report.sl_nll);
  report.el = std::exp(report.el_nll);
  report.overall = std::exp(report.overall_nll);
  return report;
}

double mean_masked_nll(const MlmModel<float>& model,
                       const std::vector<SentenceRecord>& records,
                       const std::vector<std::uint32_t>& ids, const Vocabulary& vocab,
                       std::uint64_t eval_mask_seed, int batch_size) {
  PooledNll pooled = pooled_masked_nll(model, records, ids, vocab, eval_mask_seed, batch_size);
  const std::uint64_t count = pooled.sl_count + pooled.el_count;
  if (count == 0) {
    fail(ErrorCode::InvalidArgument, "evaluation produced zero masked positions");
  }
  return (pooled.sl_sum + pooled.el_sum) / static_cast<double>(count);
}

OverlapMatrix vocab_overlap(const std::vector<SentenceRecord>& records) {
  std::set<std::string> sl_types, el_types;
  for (const auto& rec : records) {
    auto& types = rec.label == Label::SL ? sl_types : el_types;
    for (const auto& word : rec.words) types.insert(word);
  }
  if (sl_types.empty() || el_types.empty()) {
    fail(ErrorCode::InvalidArgument,
         std::string("class ") + (sl_types.empty() ? "SL" : "EL") + " has no word types");
  }
  std::uint64_t inter = 0;
  for (const auto& word : sl_types) {
    if (el_types.contains(word)) ++inter;
  }
  OverlapMatrix out;
  out.sl_types = sl_types.size();
  out.el_types = el_types.size();
  out.sl_el = 100.0 * static_cast<double>(inter) / static_cast<double>(el_types.size());
  out.el_sl = 100.0 * static_cast<double>(inter) / static_cast<double>(sl_types.size());
  return out;
}

std::vector<Histogram> difficulty_histograms(const std::string& metric,
                                             const std::vector<double>& sl_scores,
                                             const std::vector<double>& el_scores,
                                             int bins) {
  if (bins <= 0) fail(ErrorCode::Config, "bin count must be positive");
  if (sl_scores.empty() && el_scores.empty()) {
    fail(ErrorCode::InvalidArgument, "no scores to bin");
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::set<double> distinct;
  for (const auto* scores : {&sl_scores, &el_scores}) {
    for (double v : *scores) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      if (distinct.size() < 2) distinct.insert(v);
    }
  }

  const bool fallback = distinct.size() < 2;
  const int n_bins = fallback ? 1 : bins;

  std::vector<double> edges(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) {
    edges[static_cast<std::size_t>(i)] =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
  }
  edges.back() = hi;

  const double width = (hi - lo) / static_cast<double>(n_bins);
  auto bin_of = [&](double v) {
    if (fallback || width <= 0.0) return 0;
    const int idx = static_cast<int>((v - lo) / width);
    return std::clamp(idx, 0, n_bins - 1);
  };

  std::vector<Histogram> out;
  for (const auto& [cls, scores] :
       {std::pair{"SL", &sl_scores}, std::pair{"EL", &el_scores}}) {
    Histogram h;
    h.metric = metric;
    h.cls = cls;
    h.edges = edges;
    h.counts.assign(static_cast<std::size_t>(n_bins), 0);
    h.single_bin_fallback = fallback;
    for (double v : *scores) ++h.counts[static_cast<std::size_t>(bin_of(v))];
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace scl
