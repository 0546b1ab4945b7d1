#include "sparsing/transformer.hpp"

#include <cmath>
#include <limits>

namespace sparsing {
namespace {

constexpr double kRmsEps = 1e-5;

template <typename Scalar>
Vec<Scalar> inverse_rms(const Mat<Scalar>& x) {
  const Scalar d = static_cast<Scalar>(x.rows());
  return ((x.array().square().colwise().sum() / d + Scalar(kRmsEps)).rsqrt()).transpose();
}

template <typename Scalar>
Mat<Scalar> rms_apply(const Mat<Scalar>& x, const Vec<Scalar>& inv, const Vec<Scalar>& gain) {
  return (x.array().rowwise() * inv.transpose().array()).colwise() * gain.array();
}

// Returns dx; accumulates d(gain).
template <typename Scalar>
Mat<Scalar> rms_backward(const Mat<Scalar>& x, const Vec<Scalar>& inv, const Vec<Scalar>& gain,
                         const Mat<Scalar>& dy, Vec<Scalar>& dgain) {
  const Scalar d = static_cast<Scalar>(x.rows());
  const Mat<Scalar> gd = dy.array().colwise() * gain.array();
  dgain += ((dy.array() * x.array()).rowwise() * inv.transpose().array()).rowwise().sum().matrix();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> dot = (gd.array() * x.array()).colwise().sum();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> inv_t = inv.transpose().array();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> coef = dot * inv_t.cube() / d;
  return (gd.array().rowwise() * inv_t - x.array().rowwise() * coef).matrix();
}

template <typename Scalar>
void check_batch(const ModelConfig& cfg, const TokenBatch& batch) {
  if (batch.batch_size <= 0 || batch.seq_len <= 0) throw DataError("empty token batch");
  if (batch.seq_len > cfg.max_seq_len) {
    throw DataError("sequence length " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
  }
  if (batch.tokens.size() != static_cast<std::size_t>(batch.batch_size) * batch.seq_len) {
    throw DimensionError("token batch size does not match its shape");
  }
  for (TokenId t : batch.tokens) {
    if (static_cast<int>(t) >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

}  // namespace

template <typename Scalar>
Mat<Scalar> forward_batch(const Weights<Scalar>& w, const ModelConfig& cfg, const TokenBatch& batch,
                          const ForwardOptions<Scalar>& opts, ForwardCache<Scalar>* cache) {
  check_batch<Scalar>(cfg, batch);
  const int T = batch.seq_len;
  const int B = batch.batch_size;
  const Eigen::Index N = static_cast<Eigen::Index>(B) * T;
  const int hd = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  const bool masked = opts.mask != nullptr && !opts.mask->is_dense();

  Mat<Scalar> x(cfg.d_h, N);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const Eigen::Index c = static_cast<Eigen::Index>(b) * T + t;
      x.col(c) = w.tok_emb.col(batch.tokens[static_cast<std::size_t>(c)]) + w.pos_emb.col(t);
    }
  }
  if (cache) cache->layers.resize(w.layers.size());

  Mat<Scalar> scores(T, T);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& L = w.layers[l];
    const Vec<Scalar> inv1 = inverse_rms(x);
    const Mat<Scalar> a = rms_apply(x, inv1, L.attn_norm);
    const Mat<Scalar> q = L.wq * a;
    const Mat<Scalar> k = L.wk * a;
    const Mat<Scalar> v = L.wv * a;
    Mat<Scalar> attn(cfg.d_h, N);
    std::vector<Mat<Scalar>> probs;
    if (cache) probs.reserve(static_cast<std::size_t>(B * cfg.n_heads));
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < cfg.n_heads; ++h) {
        const auto qh = q.block(h * hd, b * T, hd, T);
        const auto kh = k.block(h * hd, b * T, hd, T);
        const auto vh = v.block(h * hd, b * T, hd, T);
        scores.noalias() = (kh.transpose() * qh) * scale;
        for (int t = 0; t < T; ++t) {
          auto col = scores.col(t);
          const Scalar mx = col.head(t + 1).maxCoeff();
          col.head(t + 1) = (col.head(t + 1).array() - mx).exp();
          col.head(t + 1) /= col.head(t + 1).sum();
          col.tail(T - t - 1).setZero();
        }
        attn.block(h * hd, b * T, hd, T).noalias() = vh * scores;
        if (cache) probs.push_back(scores);
      }
    }
    Mat<Scalar> x_mid = x;
    x_mid.noalias() += L.wo * attn;

    const Vec<Scalar> inv2 = inverse_rms(x_mid);
    const Mat<Scalar> bn = rms_apply(x_mid, inv2, L.ffn_norm);
    const Mat<Scalar> gate_pre = L.ffn.w_gate * bn;
    const Mat<Scalar> s = activate_array(gate_pre.array(), cfg.activation).matrix();
    const Mat<Scalar> u = L.ffn.w_in * bn;
    Mat<Scalar> coeff = s.cwiseProduct(u);

    Mat<Scalar> x_next = x_mid;
    if (masked || opts.observer) {
      ActiveMask active;
      if (masked) {
        const Vec<Scalar> out_norms = out_column_norms(L.ffn);
        active = select_active(*opts.mask, static_cast<int>(l), cfg.activation, s, coeff,
                               out_norms);
      } else {
        active = ActiveMask::Constant(coeff.rows(), coeff.cols(), true);
      }
      if (opts.observer) opts.observer->on_ffn(static_cast<int>(l), batch.tokens, bn, s, coeff, active);
      if (masked) coeff = active.select(coeff, Mat<Scalar>::Zero(coeff.rows(), coeff.cols()));
    }
    x_next.noalias() += L.ffn.w_out * coeff;

    if (cache) {
      auto& lc = cache->layers[l];
      lc.x = std::move(x);
      lc.inv_rms1 = inv1;
      lc.a = a;
      lc.q = q;
      lc.k = k;
      lc.v = v;
      lc.probs = std::move(probs);
      lc.attn = std::move(attn);
      lc.x_mid = std::move(x_mid);
      lc.inv_rms2 = inv2;
      lc.b = bn;
      lc.gate_pre = gate_pre;
      lc.s = s;
      lc.u = u;
    }
    x = std::move(x_next);
  }

  const Vec<Scalar> inv_f = inverse_rms(x);
  const Mat<Scalar> hf = rms_apply(x, inv_f, w.final_norm);
  Mat<Scalar> logits = w.lm_head * hf;
  if (cache) {
    cache->x_final = std::move(x);
    cache->inv_rms_f = inv_f;
    cache->normed_final = hf;
    cache->logits = logits;
  }
  return logits;
}

template <typename Scalar>
Mat<Scalar> transformer_forward(const Weights<Scalar>& w, const ModelConfig& cfg,
                                std::span<const TokenId> tokens,
                                const ForwardOptions<Scalar>& opts) {
  TokenBatch batch;
  batch.tokens.assign(tokens.begin(), tokens.end());
  batch.batch_size = 1;
  batch.seq_len = static_cast<int>(tokens.size());
  return forward_batch(w, cfg, batch, opts);
}

namespace {

// Softmax cross-entropy over predicted positions; fills d(logits) when requested.
template <typename Scalar>
Scalar cross_entropy(const Mat<Scalar>& logits, const TokenBatch& batch, Mat<Scalar>* dlogits) {
  const int T = batch.seq_len;
  const int B = batch.batch_size;
  if (T < 2) throw DataError("sequences need at least two tokens to score");
  const Scalar count = static_cast<Scalar>(B) * static_cast<Scalar>(T - 1);
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  Scalar total = 0;
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t + 1 < T; ++t) {
      const Eigen::Index c = static_cast<Eigen::Index>(b) * T + t;
      const int target = batch.tokens[static_cast<std::size_t>(c + 1)];
      const auto col = logits.col(c);
      const Scalar mx = col.maxCoeff();
      const Vec<Scalar> e = (col.array() - mx).exp();
      const Scalar z = e.sum();
      total += std::log(z) + mx - col(target);
      if (dlogits) {
        dlogits->col(c) = e / (z * count);
        (*dlogits)(target, c) -= Scalar(1) / count;
      }
    }
  }
  return total / count;
}

}  // namespace

template <typename Scalar>
Scalar batch_loss(const Weights<Scalar>& w, const ModelConfig& cfg, const TokenBatch& batch) {
  return cross_entropy<Scalar>(forward_batch(w, cfg, batch), batch, nullptr);
}

template <typename Scalar>
Scalar loss_and_gradient(const Weights<Scalar>& w, const ModelConfig& cfg, const TokenBatch& batch,
                         Weights<Scalar>* grad) {
  ForwardCache<Scalar> cache;
  const Mat<Scalar> logits = forward_batch(w, cfg, batch, {}, &cache);
  Mat<Scalar> dlogits;
  const Scalar loss = cross_entropy<Scalar>(logits, batch, grad ? &dlogits : nullptr);
  if (!grad) return loss;

  *grad = Weights<Scalar>::zeros(cfg);
  Weights<Scalar>& g = *grad;
  const int T = batch.seq_len;
  const int B = batch.batch_size;
  const int hd = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  g.lm_head.noalias() = dlogits * cache.normed_final.transpose();
  const Mat<Scalar> dhf = w.lm_head.transpose() * dlogits;
  Mat<Scalar> dx = rms_backward(cache.x_final, cache.inv_rms_f, w.final_norm, dhf, g.final_norm);

  for (std::size_t li = w.layers.size(); li-- > 0;) {
    const auto& L = w.layers[li];
    const auto& c = cache.layers[li];
    auto& G = g.layers[li];

    // FFN
    const Mat<Scalar> coeff = c.s.cwiseProduct(c.u);
    G.ffn.w_out.noalias() = dx * coeff.transpose();
    const Mat<Scalar> dcoeff = L.ffn.w_out.transpose() * dx;
    const Mat<Scalar> du = dcoeff.cwiseProduct(c.s);
    const Mat<Scalar> dgate =
        dcoeff.cwiseProduct(c.u).cwiseProduct(c.gate_pre.unaryExpr(
            [act = cfg.activation](Scalar v) { return activate_grad(v, act); }));
    G.ffn.w_gate.noalias() = dgate * c.b.transpose();
    G.ffn.w_in.noalias() = du * c.b.transpose();
    Mat<Scalar> db = L.ffn.w_gate.transpose() * dgate;
    db.noalias() += L.ffn.w_in.transpose() * du;
    Mat<Scalar> dmid = dx + rms_backward(c.x_mid, c.inv_rms2, L.ffn_norm, db, G.ffn_norm);

    // Attention
    G.wo.noalias() = dmid * c.attn.transpose();
    const Mat<Scalar> dattn = L.wo.transpose() * dmid;
    Mat<Scalar> dq(cfg.d_h, dattn.cols()), dk(cfg.d_h, dattn.cols()), dv(cfg.d_h, dattn.cols());
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < cfg.n_heads; ++h) {
        const Mat<Scalar>& P = c.probs[static_cast<std::size_t>(b * cfg.n_heads + h)];
        const auto doh = dattn.block(h * hd, b * T, hd, T);
        const auto qh = c.q.block(h * hd, b * T, hd, T);
        const auto kh = c.k.block(h * hd, b * T, hd, T);
        const auto vh = c.v.block(h * hd, b * T, hd, T);
        dv.block(h * hd, b * T, hd, T).noalias() = doh * P.transpose();
        const Mat<Scalar> dP = vh.transpose() * doh;
        const Eigen::Array<Scalar, 1, Eigen::Dynamic> colsum =
            (P.array() * dP.array()).colwise().sum();
        const Mat<Scalar> dS = (P.array() * (dP.array().rowwise() - colsum)).matrix() * scale;
        dq.block(h * hd, b * T, hd, T).noalias() = kh * dS;
        dk.block(h * hd, b * T, hd, T).noalias() = qh * dS.transpose();
      }
    }
    G.wq.noalias() = dq * c.a.transpose();
    G.wk.noalias() = dk * c.a.transpose();
    G.wv.noalias() = dv * c.a.transpose();
    Mat<Scalar> da = L.wq.transpose() * dq;
    da.noalias() += L.wk.transpose() * dk;
    da.noalias() += L.wv.transpose() * dv;
    dx = dmid + rms_backward(c.x, c.inv_rms1, L.attn_norm, da, G.attn_norm);
  }

  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * T + t;
      g.tok_emb.col(batch.tokens[static_cast<std::size_t>(col)]) += dx.col(col);
      g.pos_emb.col(t) += dx.col(col);
    }
  }
  return loss;
}

#define SPARSING_INSTANTIATE(S)                                                                  \
  template Mat<S> forward_batch<S>(const Weights<S>&, const ModelConfig&, const TokenBatch&,     \
                                   const ForwardOptions<S>&, ForwardCache<S>*);                  \
  template Mat<S> transformer_forward<S>(const Weights<S>&, const ModelConfig&,                  \
                                         std::span<const TokenId>, const ForwardOptions<S>&);    \
  template S loss_and_gradient<S>(const Weights<S>&, const ModelConfig&, const TokenBatch&,      \
                                  Weights<S>*);                                                  \
  template S batch_loss<S>(const Weights<S>&, const ModelConfig&, const TokenBatch&);

SPARSING_INSTANTIATE(float)
SPARSING_INSTANTIATE(double)

#undef SPARSING_INSTANTIATE

}  // namespace sparsing
