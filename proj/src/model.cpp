#include "model.hpp"

#include <algorithm>

namespace scl {

void ModelConfig::validate() const {
  validate_except_vocab();
  if (vocab_size < Vocabulary::kNumSpecial) {
    fail(ErrorCode::Config, "vocab_size must cover the special tokens");
  }
}

void ModelConfig::validate_except_vocab() const {
  if (layers < 0) fail(ErrorCode::Config, "layer count must be non-negative");
  if (hidden <= 0 || heads <= 0 || ffn <= 0) {
    fail(ErrorCode::Config, "hidden, heads and ffn sizes must be positive");
  }
  if (hidden % heads != 0) {
    fail(ErrorCode::Config, "hidden size " + std::to_string(hidden) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (max_len <= 0) fail(ErrorCode::Config, "max_len must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    fail(ErrorCode::Config, "dropout must lie in [0, 1)");
  }
}

std::size_t MaskedBatch::masked_count() const {
  std::size_t n = 0;
  for (int b = 0; b < rows(); ++b) {
    for (int l = 0; l < cols(); ++l) {
      if (mask_positions(b, l) != 0) ++n;
    }
  }
  return n;
}

IntMat pad_rows(const std::vector<const std::vector<std::int32_t>*>& rows) {
  if (rows.empty()) fail(ErrorCode::InvalidArgument, "cannot pad an empty batch");
  std::size_t max_len = 1;
  for (const auto* row : rows) max_len = std::max(max_len, row->size());
  IntMat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(max_len));
  out.setConstant(Vocabulary::kPad);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t l = 0; l < rows[b]->size(); ++l) {
      out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(l)) = (*rows[b])[l];
    }
  }
  return out;
}

namespace {

void mask_row(MaskedBatch& batch, int b, Rng& rng, const Vocabulary& vocab) {
  const int cols = batch.cols();
  const auto n_random = static_cast<std::uint64_t>(vocab.size() - Vocabulary::kNumSpecial);
  for (int l = 0; l < cols; ++l) {
    const std::int32_t id = batch.input_ids(b, l);
    if (vocab.is_special(id)) continue;
    if (rng.next_double() >= 0.15) continue;
    batch.mask_positions(b, l) = 1;
    batch.target_ids(b, l) = id;
    const double split = rng.next_double();
    if (split < 0.8) {
      batch.input_ids(b, l) = Vocabulary::kMask;
    } else if (split < 0.9 && n_random > 0) {
      batch.input_ids(b, l) =
          Vocabulary::kNumSpecial + static_cast<std::int32_t>(rng.bounded(n_random));
    }  // else: keep the original token, but still predict it
  }
}

MaskedBatch init_masked(const IntMat& token_ids) {
  MaskedBatch batch;
  batch.input_ids = token_ids;
  batch.target_ids = IntMat::Constant(token_ids.rows(), token_ids.cols(), -1);
  batch.mask_positions = ByteMat::Zero(token_ids.rows(), token_ids.cols());
  batch.attention_mask = ByteMat::Zero(token_ids.rows(), token_ids.cols());
  for (Eigen::Index b = 0; b < token_ids.rows(); ++b) {
    for (Eigen::Index l = 0; l < token_ids.cols(); ++l) {
      if (token_ids(b, l) != Vocabulary::kPad) batch.attention_mask(b, l) = 1;
    }
  }
  return batch;
}

}  // namespace

MaskedBatch mask_batch(const IntMat& token_ids, const Vocabulary& vocab,
                       std::uint64_t seed, std::uint64_t step) {
  MaskedBatch batch = init_masked(token_ids);
  Rng rng(mix_seed({seed, step, fnv1a64("mlm-mask")}));
  for (int b = 0; b < batch.rows(); ++b) mask_row(batch, b, rng, vocab);
  return batch;
}

MaskedBatch mask_eval_batch(const IntMat& token_ids,
                            const std::vector<std::uint32_t>& sentence_ids,
                            const Vocabulary& vocab, std::uint64_t eval_mask_seed) {
  if (static_cast<Eigen::Index>(sentence_ids.size()) != token_ids.rows()) {
    fail(ErrorCode::InvalidArgument, "one sentence id per batch row required");
  }
  MaskedBatch batch = init_masked(token_ids);
  for (int b = 0; b < batch.rows(); ++b) {
    // Keyed by sentence, not by batch layout, so evaluation masks are stable
    // under re-batching.
    Rng rng(mix_seed({eval_mask_seed, sentence_ids[static_cast<std::size_t>(b)],
                      fnv1a64("mlm-eval-mask")}));
    mask_row(batch, b, rng, vocab);
  }
  return batch;
}

}  // namespace scl
