#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "model.hpp"
#include "model_io.hpp"
#include "support/fixtures.hpp"
#include "support/model_helpers.hpp"

using namespace scl;
using scl::testing::make_vocab;
using scl::testing::random_content_batch;
using scl::testing::zero_all_params;

namespace {

ModelConfig micro_config(int vocab_size, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.ffn = 16;
  cfg.vocab_size = vocab_size;
  cfg.max_len = 16;
  cfg.dropout = 0.0;
  cfg.seed = seed;
  return cfg;
}

MaskedBatch simple_masked_batch(const Vocabulary& vocab, int rows = 2, int cols = 7,
                                std::uint64_t seed = 3) {
  IntMat ids = random_content_batch(rows, cols, vocab.size() - Vocabulary::kNumSpecial, seed);
  // make the last column padding on the final row
  ids(rows - 1, cols - 1) = Vocabulary::kPad;
  MaskedBatch batch = mask_batch(ids, vocab, seed, 0);
  for (std::uint64_t attempt = 1; batch.masked_count() == 0; ++attempt) {
    batch = mask_batch(ids, vocab, mix_seed({seed, attempt}), 0);
  }
  return batch;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = micro_config(20);
  cfg.validate();
  cfg.heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = micro_config(20);
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = micro_config(2);
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("initialization is deterministic per seed") {
  ModelConfig cfg = micro_config(20, 77);
  MlmModel<float> a(cfg), b(cfg);
  bool identical = true;
  auto pa = a.tensor_ptrs();
  auto pb = b.tensor_ptrs();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (*pa[i] != *pb[i]) identical = false;
  }
  CHECK(identical);

  cfg.seed = 78;
  MlmModel<float> c(cfg);
  CHECK(a.tok_emb != c.tok_emb);
}

TEST_CASE("parameter count matches the closed form for the default architecture") {
  ModelConfig cfg;
  cfg.vocab_size = 16389;  // default cap 16384 plus the five special ids
  MlmModel<float> model(cfg);
  const std::size_t v = 16389, h = 128, f = 512, l = 128, layers = 2;
  const std::size_t per_layer = 4 * h * h + 4 * h  // attention projections
                                + 2 * h            // ln1
                                + h * f + f + f * h + h  // ffn
                                + 2 * h;           // ln2
  const std::size_t expected = v * h + l * h + 2 * h + layers * per_layer + v;
  CHECK(model.param_count() == expected);
  // tied output head: the embedding table dominates, no separate decoder matrix
  CHECK(expected < 2 * v * h);
}

TEST_CASE("masking selects roughly 15% with the 80/10/10 replacement split") {
  Vocabulary vocab = make_vocab(200);
  IntMat ids = random_content_batch(10, 100, 200, 5);
  MaskedBatch batch = mask_batch(ids, vocab, 42, 0);

  int selected = 0, to_mask = 0, unchanged = 0, randomized = 0;
  for (int b = 0; b < batch.rows(); ++b) {
    for (int l = 0; l < batch.cols(); ++l) {
      if (batch.mask_positions(b, l) == 0) {
        CHECK(batch.target_ids(b, l) == -1);
        CHECK(batch.input_ids(b, l) == ids(b, l));
        continue;
      }
      ++selected;
      CHECK(batch.target_ids(b, l) == ids(b, l));
      if (batch.input_ids(b, l) == Vocabulary::kMask) {
        ++to_mask;
      } else if (batch.input_ids(b, l) == ids(b, l)) {
        ++unchanged;
      } else {
        ++randomized;
        CHECK(batch.input_ids(b, l) >= Vocabulary::kNumSpecial);
      }
    }
  }
  // 1000 maskable tokens: binomial(1000, 0.15) stays within 150 +- 40
  CHECK(selected >= 110);
  CHECK(selected <= 190);
  CHECK(to_mask > selected / 2);
  CHECK(unchanged < selected / 3);
  CHECK(randomized < selected / 3);
}

TEST_CASE("an all-PAD row receives no masks and masking is deterministic") {
  Vocabulary vocab = make_vocab(50);
  IntMat ids = IntMat::Constant(1, 10, Vocabulary::kPad);
  MaskedBatch batch = mask_batch(ids, vocab, 1, 1);
  CHECK(batch.masked_count() == 0);
  for (int l = 0; l < 10; ++l) CHECK(batch.attention_mask(0, l) == 0);

  IntMat content = random_content_batch(4, 12, 50, 9);
  MaskedBatch a = mask_batch(content, vocab, 7, 3);
  MaskedBatch b = mask_batch(content, vocab, 7, 3);
  CHECK(a.input_ids == b.input_ids);
  CHECK(a.target_ids == b.target_ids);
  MaskedBatch c = mask_batch(content, vocab, 7, 4);
  CHECK(a.input_ids != c.input_ids);  // step participates in the seed
}

TEST_CASE("forward log-probabilities are normalized at every masked position") {
  Vocabulary vocab = make_vocab(15);
  MlmModel<float> model(micro_config(vocab.size(), 11));
  MaskedBatch batch = simple_masked_batch(vocab);
  MaskedLogProbs out = model.forward_logprobs(batch);
  REQUIRE(out.logprobs.rows() > 0);
  for (Eigen::Index i = 0; i < out.logprobs.rows(); ++i) {
    const double total = out.logprobs.row(i).array().exp().sum();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("zero-layer config reduces to the head applied to the embedding stage") {
  Vocabulary vocab = make_vocab(15);
  ModelConfig cfg = micro_config(vocab.size(), 21);
  cfg.layers = 0;
  MlmModel<float> model(cfg);
  MaskedBatch batch = simple_masked_batch(vocab);
  MaskedLogProbs out = model.forward_logprobs(batch);

  int row = 0;
  for (const auto& [b, l] : out.positions) {
    // independent recomputation of embed -> layer norm -> tied head
    Eigen::RowVectorXf e =
        model.tok_emb.row(batch.input_ids(b, l)) + model.pos_emb.row(l);
    const float mean = e.mean();
    const float var = (e.array() - mean).square().sum() / static_cast<float>(e.size());
    Eigen::RowVectorXf xhat = (e.array() - mean) / std::sqrt(var + 1e-12f);
    Eigen::RowVectorXf y = xhat.cwiseProduct(model.emb_ln_g.row(0)) + model.emb_ln_b.row(0);
    Eigen::RowVectorXd logits =
        (y * model.tok_emb.transpose() + model.out_bias.row(0)).cast<double>();
    const double max = logits.maxCoeff();
    const double lse = max + std::log((logits.array() - max).exp().sum());
    for (int j = 0; j < vocab.size(); ++j) {
      CHECK(out.logprobs(row, j) == doctest::Approx(logits(j) - lse).epsilon(1e-6));
    }
    ++row;
  }
}

TEST_CASE("permuting batch rows permutes outputs identically") {
  Vocabulary vocab = make_vocab(15);
  MlmModel<float> model(micro_config(vocab.size(), 31));
  MaskedBatch batch = simple_masked_batch(vocab, 2, 7, 13);

  MaskedBatch swapped = batch;
  swapped.input_ids.row(0) = batch.input_ids.row(1);
  swapped.input_ids.row(1) = batch.input_ids.row(0);
  swapped.target_ids.row(0) = batch.target_ids.row(1);
  swapped.target_ids.row(1) = batch.target_ids.row(0);
  swapped.mask_positions.row(0) = batch.mask_positions.row(1);
  swapped.mask_positions.row(1) = batch.mask_positions.row(0);
  swapped.attention_mask.row(0) = batch.attention_mask.row(1);
  swapped.attention_mask.row(1) = batch.attention_mask.row(0);

  MaskedLogProbs a = model.forward_logprobs(batch);
  MaskedLogProbs b = model.forward_logprobs(swapped);
  REQUIRE(a.logprobs.rows() == b.logprobs.rows());
  for (Eigen::Index i = 0; i < a.logprobs.rows(); ++i) {
    const auto [row, col] = a.positions[static_cast<std::size_t>(i)];
    // the same position lives on the other row after the swap
    const std::pair<int, int> expected{1 - row, col};
    std::size_t j = 0;
    while (b.positions[j] != expected) ++j;
    CHECK((a.logprobs.row(i) - b.logprobs.row(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("token ids outside the vocabulary are rejected") {
  Vocabulary vocab = make_vocab(10);
  MlmModel<float> model(micro_config(vocab.size()));
  MaskedBatch batch = simple_masked_batch(vocab);
  batch.input_ids(0, 0) = vocab.size();  // out of range
  CHECK_THROWS_AS(model.forward_logprobs(batch), Error);
}

TEST_CASE("a uniform debug model has loss ln(vocab) including at full vocabulary size") {
  Vocabulary vocab = make_vocab(15);
  MlmModel<float> model(micro_config(vocab.size()));
  zero_all_params(model);
  MaskedBatch batch = simple_masked_batch(vocab);
  CHECK(model.eval_loss(batch) == std::log(static_cast<double>(vocab.size())));

  Vocabulary big_vocab = make_vocab(16384);
  REQUIRE(big_vocab.size() == 16389);
  MlmModel<float> big_model(micro_config(big_vocab.size()));
  zero_all_params(big_model);
  IntMat ids = random_content_batch(1, 6, 16384, 2);
  MaskedBatch big_batch = mask_batch(ids, big_vocab, 5, 0);
  for (std::uint64_t attempt = 1; big_batch.masked_count() == 0; ++attempt) {
    big_batch = mask_batch(ids, big_vocab, mix_seed({5, attempt}), 0);
  }
  CHECK(big_model.eval_loss(big_batch) == doctest::Approx(std::log(16389.0)).epsilon(1e-12));
  CHECK(std::log(16389.0) == doctest::Approx(9.704).epsilon(1e-4));
}

TEST_CASE("loss requires at least one masked position") {
  Vocabulary vocab = make_vocab(15);
  MlmModel<float> model(micro_config(vocab.size()));
  IntMat ids = random_content_batch(1, 5, 15, 4);
  MaskedBatch batch = mask_batch(ids, vocab, 0, 0);
  batch.mask_positions.setZero();
  CHECK_THROWS_AS(model.loss_and_grads(batch), Error);
  CHECK_THROWS_AS(model.eval_loss(batch), Error);
}

TEST_CASE("doubling the gradient scale doubles every gradient") {
  Vocabulary vocab = make_vocab(15);
  MlmModel<double> model(micro_config(vocab.size(), 8));
  MaskedBatch batch = simple_masked_batch(vocab);
  auto g1 = model.loss_and_grads(batch, nullptr, 1.0);
  auto g2 = model.loss_and_grads(batch, nullptr, 2.0);
  CHECK(g1.loss == g2.loss);  // reported loss is unscaled
  for (std::size_t i = 0; i < g1.grads.tensors.size(); ++i) {
    CHECK(((2.0 * g1.grads.tensors[i]) - g2.grads.tensors[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("finite differences confirm every analytic gradient tensor") {
  Vocabulary vocab = make_vocab(7);
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 4;
  cfg.heads = 2;
  cfg.ffn = 8;
  cfg.vocab_size = vocab.size();
  cfg.max_len = 8;
  cfg.dropout = 0.0;
  cfg.seed = 5;
  MlmModel<double> model(cfg);
  MaskedBatch batch = simple_masked_batch(vocab, 2, 6, 17);

  auto analytic = model.loss_and_grads(batch);
  auto params = model.tensor_ptrs();
  auto names = model.tensor_names();
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat<double>& p = *params[t];
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double original = p(i, j);
        const double h = 1e-5 * std::max(1.0, std::abs(original));
        p(i, j) = original + h;
        const double up = model.eval_loss(batch);
        p(i, j) = original - h;
        const double down = model.eval_loss(batch);
        p(i, j) = original;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.grads.tensors[t](i, j);
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, rel);
        if (rel > 1e-4) {
          CAPTURE(names[t]);
          CAPTURE(i);
          CAPTURE(j);
          CHECK(rel <= 1e-4);
        }
      }
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  Vocabulary vocab = make_vocab(10);
  MlmModel<float> model(micro_config(vocab.size(), 3));
  MlmModel<float> before = model;
  AdamState<float> opt = AdamState<float>::fresh(model);
  ModelGrads<float> zero = model.zero_grads();
  adam_step(model, opt, zero, 1e-4);
  auto pa = model.tensor_ptrs();
  auto pb = before.tensor_ptrs();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  CHECK(opt.step_count == 1);
}

TEST_CASE("adam: first step on a quadratic moves by about the learning rate") {
  Mat<double> p(1, 1), m = Mat<double>::Zero(1, 1), v = Mat<double>::Zero(1, 1), g(1, 1);
  p(0, 0) = 1.0;
  g(0, 0) = p(0, 0);  // gradient of p^2/2
  adam_update_tensor(p, m, v, g, 1, 1e-4, 0.9, 0.999, 1e-8);
  CHECK(std::abs(p(0, 0) - (1.0 - 1e-4)) < 1e-10);
}

TEST_CASE("adam: non-finite gradients fail naming the parameter") {
  Vocabulary vocab = make_vocab(10);
  MlmModel<float> model(micro_config(vocab.size(), 3));
  AdamState<float> opt = AdamState<float>::fresh(model);
  ModelGrads<float> grads = model.zero_grads();
  grads.tensors[0](0, 0) = std::numeric_limits<float>::quiet_NaN();  // tok_emb
  try {
    adam_step(model, opt, grads, 1e-4);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("tok_emb") != std::string::npos);
  }
}

TEST_CASE("a hundred identical training steps are bit-identical across runs") {
  Vocabulary vocab = make_vocab(25);
  auto run = [&]() {
    MlmModel<float> model(micro_config(vocab.size(), 55));
    AdamState<float> opt = AdamState<float>::fresh(model);
    IntMat ids = random_content_batch(4, 9, 25, 6);
    for (std::uint64_t step = 0; step < 100; ++step) {
      MaskedBatch batch = mask_batch(ids, vocab, 600, step);
      for (std::uint64_t attempt = 1; batch.masked_count() == 0; ++attempt) {
        batch = mask_batch(ids, vocab, mix_seed({600, attempt}), step);
      }
      auto lg = model.loss_and_grads(batch);
      adam_step(model, opt, lg.grads, 1e-3);
    }
    return model;
  };
  MlmModel<float> a = run();
  MlmModel<float> b = run();
  auto pa = a.tensor_ptrs();
  auto pb = b.tensor_ptrs();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
}

TEST_CASE("appending PAD columns does not change masked-position log-probabilities") {
  Vocabulary vocab = make_vocab(15);
  MlmModel<float> model(micro_config(vocab.size(), 13));
  MaskedBatch batch = simple_masked_batch(vocab, 2, 7, 19);

  MaskedBatch padded;
  const int extra = 4;
  padded.input_ids = IntMat::Constant(2, 7 + extra, Vocabulary::kPad);
  padded.target_ids = IntMat::Constant(2, 7 + extra, -1);
  padded.mask_positions = ByteMat::Zero(2, 7 + extra);
  padded.attention_mask = ByteMat::Zero(2, 7 + extra);
  padded.input_ids.block(0, 0, 2, 7) = batch.input_ids;
  padded.target_ids.block(0, 0, 2, 7) = batch.target_ids;
  padded.mask_positions.block(0, 0, 2, 7) = batch.mask_positions;
  padded.attention_mask.block(0, 0, 2, 7) = batch.attention_mask;

  MaskedLogProbs a = model.forward_logprobs(batch);
  MaskedLogProbs b = model.forward_logprobs(padded);
  REQUIRE(a.logprobs.rows() == b.logprobs.rows());
  for (Eigen::Index i = 0; i < a.logprobs.rows(); ++i) {
    CHECK((a.logprobs.row(i) - b.logprobs.row(i)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Vocabulary vocab = make_vocab(12);
  MlmModel<float> model(micro_config(vocab.size(), 91));
  const auto path = (std::filesystem::temp_directory_path() / "scl_ckpt_test.bin").string();
  save_checkpoint(path, model, 1234);

  std::uint64_t steps = 0;
  MlmModel<float> loaded = load_checkpoint<float>(path, &steps);
  CHECK(steps == 1234);
  auto pa = model.tensor_ptrs();
  auto pb = loaded.tensor_ptrs();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}
