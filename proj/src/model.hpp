#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "corpus.hpp"

namespace scl {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntMat = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ByteMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int layers = 2;
  int hidden = 128;
  int heads = 2;
  int ffn = 512;
  int vocab_size = 0;
  int max_len = 128;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  void validate_except_vocab() const;  // for configs whose vocab is built later
  int head_dim() const { return hidden / heads; }
};

struct MaskedBatch {
  IntMat input_ids;       // after masking
  IntMat target_ids;      // original ids at masked positions, -1 elsewhere
  ByteMat mask_positions; // 1 where a prediction is required
  ByteMat attention_mask; // 1 at real tokens, 0 at padding

  int rows() const { return static_cast<int>(input_ids.rows()); }
  int cols() const { return static_cast<int>(input_ids.cols()); }
  std::size_t masked_count() const;
};

// Pads variable-length id rows with PAD into a rectangular batch.
IntMat pad_rows(const std::vector<const std::vector<std::int32_t>*>& rows);

// BERT-style dynamic masking: each non-special token is selected with
// probability 0.15; selected tokens become [MASK] 80% of the time, a random
// non-special vocabulary id 10%, and stay unchanged 10%. Deterministic per
// (seed, step).
MaskedBatch mask_batch(const IntMat& token_ids, const Vocabulary& vocab,
                       std::uint64_t seed, std::uint64_t step);

// Evaluation masking keyed per sentence id so the mask does not depend on
// how sentences are batched.
MaskedBatch mask_eval_batch(const IntMat& token_ids,
                            const std::vector<std::uint32_t>& sentence_ids,
                            const Vocabulary& vocab, std::uint64_t eval_mask_seed);

enum class ParamKind : std::uint8_t { Weight, Bias, Gain };

template <typename S>
struct ModelGrads {
  std::vector<Mat<S>> tensors;  // aligned with MlmModel<S>::visit order
};

struct MaskedLogProbs {
  Eigen::MatrixXd logprobs;                 // one row per masked position
  std::vector<std::pair<int, int>> positions;  // (batch row, column), scan order
};

// Tiny transformer encoder with a tied MLM head: learned token + position
// embeddings, post-norm attention/FFN blocks with GELU, logits computed only
// at masked positions against the transposed embedding table plus a bias.
template <typename S>
class MlmModel {
 public:
  struct Layer {
    Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<S> ln1_g, ln1_b;
    Mat<S> ff_w1, ff_b1, ff_w2, ff_b2;
    Mat<S> ln2_g, ln2_b;
  };

  MlmModel() = default;
  explicit MlmModel(const ModelConfig& cfg) { init(cfg); }

  void init(const ModelConfig& cfg);
  const ModelConfig& config() const { return cfg_; }

  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  std::vector<Mat<S>*> tensor_ptrs();
  std::vector<std::string> tensor_names() const;
  std::size_t param_count() const;
  ModelGrads<S> zero_grads() const;

  // Log-probabilities at every masked position, dropout disabled.
  MaskedLogProbs forward_logprobs(const MaskedBatch& batch) const;

  // Mean NLL over masked positions, dropout disabled. Cheaper than
  // loss_and_grads; used for validation.
  double eval_loss(const MaskedBatch& batch) const;

  struct LossGrads {
    double loss = 0.0;
    ModelGrads<S> grads;
  };

  // Mean NLL plus gradients for every parameter. Dropout is active only when
  // a dropout rng is supplied. `grad_scale` multiplies the loss for gradient
  // purposes (the returned loss is unscaled).
  LossGrads loss_and_grads(const MaskedBatch& batch, Rng* dropout_rng = nullptr,
                           double grad_scale = 1.0) const;

  Mat<S> tok_emb, pos_emb;
  Mat<S> emb_ln_g, emb_ln_b;
  std::vector<Layer> layers;
  Mat<S> out_bias;

 private:
  struct LayerCache {
    Mat<S> x_in, q, k, v, ctx;
    std::vector<Mat<S>> probs;  // B*heads attention matrices, L x L
    Mat<S> attn_drop;
    Mat<S> ln1_xhat, x_mid;
    Eigen::Matrix<S, Eigen::Dynamic, 1> ln1_rstd;
    Mat<S> ff_pre, ff_act, ff_drop;
    Mat<S> ln2_xhat, x_out;
    Eigen::Matrix<S, Eigen::Dynamic, 1> ln2_rstd;
  };

  struct Cache {
    Mat<S> emb_sum, emb_xhat, emb_drop, x0;
    Eigen::Matrix<S, Eigen::Dynamic, 1> emb_rstd;
    std::vector<LayerCache> layers;
    std::vector<std::pair<int, int>> masked;
    Mat<S> h_masked;
    Eigen::MatrixXd logprobs;
    std::vector<std::int32_t> targets;
  };

  void check_batch(const MaskedBatch& batch) const;
  void forward(const MaskedBatch& batch, Rng* dropout_rng, Cache& cache) const;

  ModelConfig cfg_;
};

template <typename S>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;   // updates applied to the parameters, ever
  std::uint64_t moment_step = 0;  // bias-correction clock, restarts on reset
  std::vector<Mat<S>> m, v;

  template <typename M>
  static AdamState fresh(const M& model) {
    AdamState state;
    model.visit([&](const std::string&, const Mat<S>& p, ParamKind) {
      state.m.push_back(Mat<S>::Zero(p.rows(), p.cols()));
      state.v.push_back(Mat<S>::Zero(p.rows(), p.cols()));
    });
    return state;
  }

  void reset_moments() {
    for (auto& t : m) t.setZero();
    for (auto& t : v) t.setZero();
    moment_step = 0;
  }
};

// One Adam update with bias correction. Rejects non-finite gradients by
// parameter name and verifies parameters stay finite.
template <typename S>
void adam_step(MlmModel<S>& model, AdamState<S>& opt, const ModelGrads<S>& grads, double lr);

// The elementwise update rule, exposed for direct use on a single tensor.
template <typename S>
void adam_update_tensor(Mat<S>& param, Mat<S>& m, Mat<S>& v, const Mat<S>& grad,
                        std::uint64_t step, double lr, double beta1, double beta2,
                        double epsilon);

// ---------------------------------------------------------------------------
// Implementation
// ---------------------------------------------------------------------------

template <typename S>
void MlmModel<S>::init(const ModelConfig& cfg) {
  cfg.validate();
  cfg_ = cfg;
  const int h = cfg.hidden, f = cfg.ffn, v = cfg.vocab_size, l = cfg.max_len;

  tok_emb.resize(v, h);
  pos_emb.resize(l, h);
  emb_ln_g.resize(1, h);
  emb_ln_b.resize(1, h);
  layers.assign(static_cast<std::size_t>(cfg.layers), Layer{});
  for (Layer& layer : layers) {
    layer.wq.resize(h, h); layer.bq.resize(1, h);
    layer.wk.resize(h, h); layer.bk.resize(1, h);
    layer.wv.resize(h, h); layer.bv.resize(1, h);
    layer.wo.resize(h, h); layer.bo.resize(1, h);
    layer.ln1_g.resize(1, h); layer.ln1_b.resize(1, h);
    layer.ff_w1.resize(h, f); layer.ff_b1.resize(1, f);
    layer.ff_w2.resize(f, h); layer.ff_b2.resize(1, h);
    layer.ln2_g.resize(1, h); layer.ln2_b.resize(1, h);
  }
  out_bias.resize(1, v);

  Rng rng(mix_seed({cfg.seed, fnv1a64("model-init")}));
  visit([&](const std::string&, Mat<S>& p, ParamKind kind) {
    switch (kind) {
      case ParamKind::Weight:
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          for (Eigen::Index j = 0; j < p.cols(); ++j) {
            p(i, j) = static_cast<S>(0.02 * rng.next_normal());
          }
        }
        break;
      case ParamKind::Bias:
        p.setZero();
        break;
      case ParamKind::Gain:
        p.setOnes();
        break;
    }
  });
}

template <typename S>
template <typename F>
void MlmModel<S>::visit(F&& f) {
  f(std::string("tok_emb"), tok_emb, ParamKind::Weight);
  f(std::string("pos_emb"), pos_emb, ParamKind::Weight);
  f(std::string("emb_ln.gain"), emb_ln_g, ParamKind::Gain);
  f(std::string("emb_ln.bias"), emb_ln_b, ParamKind::Bias);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    Layer& l = layers[i];
    f(prefix + "attn.wq", l.wq, ParamKind::Weight);
    f(prefix + "attn.bq", l.bq, ParamKind::Bias);
    f(prefix + "attn.wk", l.wk, ParamKind::Weight);
    f(prefix + "attn.bk", l.bk, ParamKind::Bias);
    f(prefix + "attn.wv", l.wv, ParamKind::Weight);
    f(prefix + "attn.bv", l.bv, ParamKind::Bias);
    f(prefix + "attn.wo", l.wo, ParamKind::Weight);
    f(prefix + "attn.bo", l.bo, ParamKind::Bias);
    f(prefix + "ln1.gain", l.ln1_g, ParamKind::Gain);
    f(prefix + "ln1.bias", l.ln1_b, ParamKind::Bias);
    f(prefix + "ffn.w1", l.ff_w1, ParamKind::Weight);
    f(prefix + "ffn.b1", l.ff_b1, ParamKind::Bias);
    f(prefix + "ffn.w2", l.ff_w2, ParamKind::Weight);
    f(prefix + "ffn.b2", l.ff_b2, ParamKind::Bias);
    f(prefix + "ln2.gain", l.ln2_g, ParamKind::Gain);
    f(prefix + "ln2.bias", l.ln2_b, ParamKind::Bias);
  }
  f(std::string("out_bias"), out_bias, ParamKind::Bias);
}

template <typename S>
template <typename F>
void MlmModel<S>::visit(F&& f) const {
  const_cast<MlmModel<S>*>(this)->visit(
      [&](const std::string& name, Mat<S>& p, ParamKind kind) {
        f(name, static_cast<const Mat<S>&>(p), kind);
      });
}

template <typename S>
std::vector<Mat<S>*> MlmModel<S>::tensor_ptrs() {
  std::vector<Mat<S>*> out;
  visit([&](const std::string&, Mat<S>& p, ParamKind) { out.push_back(&p); });
  return out;
}

template <typename S>
std::vector<std::string> MlmModel<S>::tensor_names() const {
  std::vector<std::string> out;
  visit([&](const std::string& name, const Mat<S>&, ParamKind) { out.push_back(name); });
  return out;
}

template <typename S>
std::size_t MlmModel<S>::param_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<S>& p, ParamKind) {
    n += static_cast<std::size_t>(p.size());
  });
  return n;
}

template <typename S>
ModelGrads<S> MlmModel<S>::zero_grads() const {
  ModelGrads<S> grads;
  visit([&](const std::string&, const Mat<S>& p, ParamKind) {
    grads.tensors.push_back(Mat<S>::Zero(p.rows(), p.cols()));
  });
  return grads;
}

namespace detail {

template <typename S>
void layer_norm_forward(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias,
                        Mat<S>& y, Mat<S>& xhat,
                        Eigen::Matrix<S, Eigen::Dynamic, 1>& rstd) {
  constexpr S eps = static_cast<S>(1e-12);
  const auto n = x.rows();
  const auto h = x.cols();
  y.resize(n, h);
  xhat.resize(n, h);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mean = x.row(i).mean();
    const S var = (x.row(i).array() - mean).square().sum() / static_cast<S>(h);
    const S r = S(1) / std::sqrt(var + eps);
    rstd(i) = r;
    xhat.row(i) = (x.row(i).array() - mean) * r;
    y.row(i) = xhat.row(i).cwiseProduct(gain.row(0)) + bias.row(0);
  }
}

// dy -> dx given the cached normalised activations; accumulates parameter
// gradients into dgain/dbias.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat,
                           const Eigen::Matrix<S, Eigen::Dynamic, 1>& rstd,
                           const Mat<S>& gain, Mat<S>& dgain, Mat<S>& dbias) {
  const auto n = dy.rows();
  const auto h = dy.cols();
  Mat<S> dx(n, h);
  dgain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const S inv_h = S(1) / static_cast<S>(h);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto dyg = (dy.row(i).array() * gain.row(0).array()).eval();
    const S sum_dyg = dyg.sum();
    const S sum_dyg_xhat = (dyg * xhat.row(i).array()).sum();
    dx.row(i) =
        ((dyg - inv_h * sum_dyg - xhat.row(i).array() * (inv_h * sum_dyg_xhat)) * rstd(i))
            .matrix();
  }
  return dx;
}

template <typename S>
S gelu(S x) {
  return static_cast<S>(0.5) * x * (S(1) + std::erf(x * static_cast<S>(0.7071067811865475)));
}

template <typename S>
S gelu_grad(S x) {
  const S phi = std::exp(static_cast<S>(-0.5) * x * x) * static_cast<S>(0.3989422804014327);
  return static_cast<S>(0.5) * (S(1) + std::erf(x * static_cast<S>(0.7071067811865475))) + x * phi;
}

// Inverted dropout factors: 0 with probability p, otherwise 1/(1-p).
template <typename S>
Mat<S> dropout_factors(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<S> factors(rows, cols);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      factors(i, j) = rng.next_double() < p ? S(0) : keep_scale;
    }
  }
  return factors;
}

}  // namespace detail

template <typename S>
void MlmModel<S>::check_batch(const MaskedBatch& batch) const {
  if (batch.rows() == 0 || batch.cols() == 0) {
    fail(ErrorCode::InvalidArgument, "empty batch");
  }
  if (batch.cols() > cfg_.max_len) {
    fail(ErrorCode::InvalidArgument,
         "sequence length " + std::to_string(batch.cols()) + " exceeds max_len " +
             std::to_string(cfg_.max_len));
  }
  for (int b = 0; b < batch.rows(); ++b) {
    for (int l = 0; l < batch.cols(); ++l) {
      const auto id = batch.input_ids(b, l);
      if (id < 0 || id >= cfg_.vocab_size) {
        fail(ErrorCode::InvalidArgument,
             "token id " + std::to_string(id) + " outside vocabulary of size " +
                 std::to_string(cfg_.vocab_size));
      }
      if (batch.mask_positions(b, l) != 0) {
        const auto target = batch.target_ids(b, l);
        if (target < 0 || target >= cfg_.vocab_size) {
          fail(ErrorCode::InvalidArgument,
               "target id " + std::to_string(target) + " outside vocabulary");
        }
      }
    }
  }
}

template <typename S>
void MlmModel<S>::forward(const MaskedBatch& batch, Rng* dropout_rng, Cache& cache) const {
  check_batch(batch);
  const int b_rows = batch.rows();
  const int seq = batch.cols();
  const int n = b_rows * seq;
  const int h = cfg_.hidden;
  const int heads = cfg_.heads;
  const int dh = cfg_.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  const bool use_dropout = dropout_rng != nullptr && cfg_.dropout > 0.0;

  cache.emb_sum.resize(n, h);
  for (int b = 0; b < b_rows; ++b) {
    for (int l = 0; l < seq; ++l) {
      cache.emb_sum.row(b * seq + l) =
          tok_emb.row(batch.input_ids(b, l)) + pos_emb.row(l);
    }
  }

  Mat<S> emb_norm;
  detail::layer_norm_forward(cache.emb_sum, emb_ln_g, emb_ln_b, emb_norm, cache.emb_xhat,
                             cache.emb_rstd);
  if (use_dropout) {
    cache.emb_drop = detail::dropout_factors<S>(n, h, cfg_.dropout, *dropout_rng);
    cache.x0 = emb_norm.cwiseProduct(cache.emb_drop);
  } else {
    cache.emb_drop.resize(0, 0);
    cache.x0 = std::move(emb_norm);
  }

  cache.layers.clear();
  cache.layers.resize(layers.size());
  const Mat<S>* x = &cache.x0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& layer = layers[li];
    LayerCache& lc = cache.layers[li];
    lc.x_in = *x;

    lc.q.noalias() = lc.x_in * layer.wq;
    lc.q.rowwise() += layer.bq.row(0);
    lc.k.noalias() = lc.x_in * layer.wk;
    lc.k.rowwise() += layer.bk.row(0);
    lc.v.noalias() = lc.x_in * layer.wv;
    lc.v.rowwise() += layer.bv.row(0);

    lc.ctx.resize(n, h);
    lc.probs.assign(static_cast<std::size_t>(b_rows) * heads, Mat<S>());
    for (int b = 0; b < b_rows; ++b) {
      const int row0 = b * seq;
      for (int hd = 0; hd < heads; ++hd) {
        auto qb = lc.q.block(row0, hd * dh, seq, dh);
        auto kb = lc.k.block(row0, hd * dh, seq, dh);
        auto vb = lc.v.block(row0, hd * dh, seq, dh);
        Mat<S> scores = qb * kb.transpose() * inv_sqrt_dh;
        for (int j = 0; j < seq; ++j) {
          if (batch.attention_mask(b, j) == 0) {
            scores.col(j).setConstant(static_cast<S>(-1e30));
          }
        }
        Mat<S>& probs = lc.probs[static_cast<std::size_t>(b) * heads + hd];
        probs.resize(seq, seq);
        for (int i = 0; i < seq; ++i) {
          const S max = scores.row(i).maxCoeff();
          probs.row(i) = (scores.row(i).array() - max).exp();
          probs.row(i) /= probs.row(i).sum();
        }
        lc.ctx.block(row0, hd * dh, seq, dh).noalias() = probs * vb;
      }
    }

    Mat<S> attn_out;
    attn_out.noalias() = lc.ctx * layer.wo;
    attn_out.rowwise() += layer.bo.row(0);
    if (use_dropout) {
      lc.attn_drop = detail::dropout_factors<S>(n, h, cfg_.dropout, *dropout_rng);
      attn_out = attn_out.cwiseProduct(lc.attn_drop);
    } else {
      lc.attn_drop.resize(0, 0);
    }

    Mat<S> res1 = lc.x_in + attn_out;
    detail::layer_norm_forward(res1, layer.ln1_g, layer.ln1_b, lc.x_mid, lc.ln1_xhat,
                               lc.ln1_rstd);

    lc.ff_pre.noalias() = lc.x_mid * layer.ff_w1;
    lc.ff_pre.rowwise() += layer.ff_b1.row(0);
    lc.ff_act = lc.ff_pre.unaryExpr([](S v) { return detail::gelu(v); });
    Mat<S> ff_out;
    ff_out.noalias() = lc.ff_act * layer.ff_w2;
    ff_out.rowwise() += layer.ff_b2.row(0);
    if (use_dropout) {
      lc.ff_drop = detail::dropout_factors<S>(n, h, cfg_.dropout, *dropout_rng);
      ff_out = ff_out.cwiseProduct(lc.ff_drop);
    } else {
      lc.ff_drop.resize(0, 0);
    }

    Mat<S> res2 = lc.x_mid + ff_out;
    detail::layer_norm_forward(res2, layer.ln2_g, layer.ln2_b, lc.x_out, lc.ln2_xhat,
                               lc.ln2_rstd);
    x = &lc.x_out;
  }

  cache.masked.clear();
  cache.targets.clear();
  for (int b = 0; b < b_rows; ++b) {
    for (int l = 0; l < seq; ++l) {
      if (batch.mask_positions(b, l) != 0) {
        cache.masked.emplace_back(b, l);
        cache.targets.push_back(batch.target_ids(b, l));
      }
    }
  }
  const auto m = static_cast<Eigen::Index>(cache.masked.size());
  cache.h_masked.resize(m, h);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto [bb, ll] = cache.masked[static_cast<std::size_t>(i)];
    cache.h_masked.row(i) = x->row(bb * seq + ll);
  }

  // Vocabulary softmax in double precision.
  Mat<S> logits;
  logits.noalias() = cache.h_masked * tok_emb.transpose();
  logits.rowwise() += out_bias.row(0);
  cache.logprobs.resize(m, cfg_.vocab_size);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::RowVectorXd row = logits.row(i).template cast<double>();
    const double max = row.maxCoeff();
    const double lse = max + std::log((row.array() - max).exp().sum());
    cache.logprobs.row(i) = row.array() - lse;
  }
}

template <typename S>
MaskedLogProbs MlmModel<S>::forward_logprobs(const MaskedBatch& batch) const {
  Cache cache;
  forward(batch, nullptr, cache);
  return {std::move(cache.logprobs), std::move(cache.masked)};
}

template <typename S>
double MlmModel<S>::eval_loss(const MaskedBatch& batch) const {
  Cache cache;
  forward(batch, nullptr, cache);
  if (cache.masked.empty()) {
    fail(ErrorCode::InvalidArgument, "batch contains no masked positions");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < cache.logprobs.rows(); ++i) {
    sum -= cache.logprobs(i, cache.targets[static_cast<std::size_t>(i)]);
  }
  return sum / static_cast<double>(cache.masked.size());
}

template <typename S>
typename MlmModel<S>::LossGrads MlmModel<S>::loss_and_grads(const MaskedBatch& batch,
                                                            Rng* dropout_rng,
                                                            double grad_scale) const {
  Cache cache;
  forward(batch, dropout_rng, cache);
  const auto m = static_cast<Eigen::Index>(cache.masked.size());
  if (m == 0) {
    fail(ErrorCode::InvalidArgument,
         "batch contains no masked positions; re-mask before computing the loss");
  }

  LossGrads out;
  out.grads = zero_grads();

  // Named access into the flat gradient vector (visit order is fixed).
  std::size_t idx = 0;
  Mat<S>*g_tok = nullptr, *g_pos = nullptr, *g_emb_g = nullptr, *g_emb_b = nullptr,
       *g_out_bias = nullptr;
  struct LayerGrads {
    Mat<S>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo, *ln1_g, *ln1_b, *w1, *b1, *w2, *b2, *ln2_g,
        *ln2_b;
  };
  std::vector<LayerGrads> lg(layers.size());
  {
    std::vector<Mat<S>*> flat;
    for (auto& t : out.grads.tensors) flat.push_back(&t);
    g_tok = flat[idx++];
    g_pos = flat[idx++];
    g_emb_g = flat[idx++];
    g_emb_b = flat[idx++];
    for (std::size_t i = 0; i < layers.size(); ++i) {
      lg[i] = {flat[idx + 0], flat[idx + 1], flat[idx + 2],  flat[idx + 3],
               flat[idx + 4], flat[idx + 5], flat[idx + 6],  flat[idx + 7],
               flat[idx + 8], flat[idx + 9], flat[idx + 10], flat[idx + 11],
               flat[idx + 12], flat[idx + 13], flat[idx + 14], flat[idx + 15]};
      idx += 16;
    }
    g_out_bias = flat[idx++];
  }

  const int b_rows = batch.rows();
  const int seq = batch.cols();
  const int n = b_rows * seq;
  const int h = cfg_.hidden;
  const int heads = cfg_.heads;
  const int dh = cfg_.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

  double loss = 0.0;
  Mat<S> dlogits(m, cfg_.vocab_size);
  const double scale = grad_scale / static_cast<double>(m);
  Eigen::RowVectorXd probs_row;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto target = cache.targets[static_cast<std::size_t>(i)];
    loss -= cache.logprobs(i, target);
    probs_row = cache.logprobs.row(i).array().exp();
    probs_row(target) -= 1.0;
    dlogits.row(i) = (probs_row * scale).template cast<S>();
  }
  out.loss = loss / static_cast<double>(m);

  // Head: logits = h_masked * tok_emb^T + out_bias
  Mat<S> d_h_masked;
  d_h_masked.noalias() = dlogits * tok_emb;
  g_tok->noalias() += dlogits.transpose() * cache.h_masked;
  g_out_bias->row(0) += dlogits.colwise().sum();

  Mat<S> dx = Mat<S>::Zero(n, h);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto [bb, ll] = cache.masked[static_cast<std::size_t>(i)];
    dx.row(bb * seq + ll) += d_h_masked.row(i);
  }

  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& layer = layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerGrads& g = lg[li];

    // LN2
    Mat<S> dres2 = detail::layer_norm_backward(dx, lc.ln2_xhat, lc.ln2_rstd, layer.ln2_g,
                                               *g.ln2_g, *g.ln2_b);
    Mat<S> dx_mid = dres2;
    Mat<S> dff_out = std::move(dres2);
    if (lc.ff_drop.size() > 0) dff_out = dff_out.cwiseProduct(lc.ff_drop);

    // FFN
    Mat<S> dff_act;
    dff_act.noalias() = dff_out * layer.ff_w2.transpose();
    g.w2->noalias() += lc.ff_act.transpose() * dff_out;
    g.b2->row(0) += dff_out.colwise().sum();
    Mat<S> dff_pre =
        dff_act.binaryExpr(lc.ff_pre, [](S dy, S x) { return dy * detail::gelu_grad(x); });
    dx_mid.noalias() += dff_pre * layer.ff_w1.transpose();
    g.w1->noalias() += lc.x_mid.transpose() * dff_pre;
    g.b1->row(0) += dff_pre.colwise().sum();

    // LN1
    Mat<S> dres1 = detail::layer_norm_backward(dx_mid, lc.ln1_xhat, lc.ln1_rstd, layer.ln1_g,
                                               *g.ln1_g, *g.ln1_b);
    Mat<S> dx_in = dres1;
    Mat<S> dattn_out = std::move(dres1);
    if (lc.attn_drop.size() > 0) dattn_out = dattn_out.cwiseProduct(lc.attn_drop);

    // Output projection
    Mat<S> dctx;
    dctx.noalias() = dattn_out * layer.wo.transpose();
    g.wo->noalias() += lc.ctx.transpose() * dattn_out;
    g.bo->row(0) += dattn_out.colwise().sum();

    // Attention
    Mat<S> dq = Mat<S>::Zero(n, h), dk = Mat<S>::Zero(n, h), dv = Mat<S>::Zero(n, h);
    for (int b = 0; b < b_rows; ++b) {
      const int row0 = b * seq;
      for (int hd = 0; hd < heads; ++hd) {
        const Mat<S>& probs = lc.probs[static_cast<std::size_t>(b) * heads + hd];
        auto qb = lc.q.block(row0, hd * dh, seq, dh);
        auto kb = lc.k.block(row0, hd * dh, seq, dh);
        auto vb = lc.v.block(row0, hd * dh, seq, dh);
        auto dctx_b = dctx.block(row0, hd * dh, seq, dh);

        Mat<S> dprobs;
        dprobs.noalias() = dctx_b * vb.transpose();
        dv.block(row0, hd * dh, seq, dh).noalias() += probs.transpose() * dctx_b;

        Mat<S> dscores(seq, seq);
        for (int i = 0; i < seq; ++i) {
          const S dot = dprobs.row(i).cwiseProduct(probs.row(i)).sum();
          dscores.row(i) =
              (probs.row(i).array() * (dprobs.row(i).array() - dot)).matrix() * inv_sqrt_dh;
        }
        dq.block(row0, hd * dh, seq, dh).noalias() += dscores * kb;
        dk.block(row0, hd * dh, seq, dh).noalias() += dscores.transpose() * qb;
      }
    }

    dx_in.noalias() += dq * layer.wq.transpose();
    g.wq->noalias() += lc.x_in.transpose() * dq;
    g.bq->row(0) += dq.colwise().sum();
    dx_in.noalias() += dk * layer.wk.transpose();
    g.wk->noalias() += lc.x_in.transpose() * dk;
    g.bk->row(0) += dk.colwise().sum();
    dx_in.noalias() += dv * layer.wv.transpose();
    g.wv->noalias() += lc.x_in.transpose() * dv;
    g.bv->row(0) += dv.colwise().sum();

    dx = std::move(dx_in);
  }

  // Embedding stage
  if (cache.emb_drop.size() > 0) dx = dx.cwiseProduct(cache.emb_drop);
  Mat<S> demb_sum =
      detail::layer_norm_backward(dx, cache.emb_xhat, cache.emb_rstd, emb_ln_g, *g_emb_g,
                                  *g_emb_b);
  for (int b = 0; b < b_rows; ++b) {
    for (int l = 0; l < seq; ++l) {
      g_tok->row(batch.input_ids(b, l)) += demb_sum.row(b * seq + l);
      g_pos->row(l) += demb_sum.row(b * seq + l);
    }
  }

  return out;
}

template <typename S>
void adam_update_tensor(Mat<S>& param, Mat<S>& m, Mat<S>& v, const Mat<S>& grad,
                        std::uint64_t step, double lr, double beta1, double beta2,
                        double epsilon) {
  const S b1 = static_cast<S>(beta1);
  const S b2 = static_cast<S>(beta2);
  m = b1 * m + (S(1) - b1) * grad;
  v = (b2 * v.array() + (S(1) - b2) * grad.array().square()).matrix();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  const S inv_bc1 = static_cast<S>(1.0 / bc1);
  const S inv_bc2 = static_cast<S>(1.0 / bc2);
  param.array() -= static_cast<S>(lr) * (m.array() * inv_bc1) /
                   ((v.array() * inv_bc2).sqrt() + static_cast<S>(epsilon));
}

template <typename S>
void adam_step(MlmModel<S>& model, AdamState<S>& opt, const ModelGrads<S>& grads, double lr) {
  auto params = model.tensor_ptrs();
  if (params.size() != grads.tensors.size() || params.size() != opt.m.size()) {
    fail(ErrorCode::InvalidArgument, "gradient/optimizer tensors do not match the model");
  }
  const auto names = model.tensor_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads.tensors[i].rows() ||
        params[i]->cols() != grads.tensors[i].cols()) {
      fail(ErrorCode::InvalidArgument, "gradient shape mismatch for " + names[i]);
    }
    if (!grads.tensors[i].allFinite()) {
      fail(ErrorCode::Numeric, "non-finite gradient for parameter " + names[i]);
    }
  }
  ++opt.step_count;
  ++opt.moment_step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update_tensor(*params[i], opt.m[i], opt.v[i], grads.tensors[i], opt.moment_step, lr,
                       opt.beta1, opt.beta2, opt.epsilon);
    if (!params[i]->allFinite()) {
      fail(ErrorCode::Numeric, "parameter " + names[i] + " became non-finite after update");
    }
  }
}

}  // namespace scl
