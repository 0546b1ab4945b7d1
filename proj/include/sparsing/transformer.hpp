#pragma once

#include <span>
#include <vector>

#include "sparsing/mask.hpp"
#include "sparsing/model.hpp"

namespace sparsing {

// Receives the FFN stage of every layer during a forward pass, layers in order.
// Column c of every matrix belongs to tokens[c]. `input` is the normalized FFN
// input (d_h x N), `s` the activations and `coeff` the dense neuron coefficients
// s .* (W_in x) (both d_f x N); `active` marks the neurons kept by the mask.
template <typename Scalar>
class FfnObserver {
 public:
  virtual ~FfnObserver() = default;
  virtual void on_ffn(int layer, std::span<const TokenId> tokens, const Mat<Scalar>& input,
                      const Mat<Scalar>& s, const Mat<Scalar>& coeff,
                      const ActiveMask& active) = 0;
};

template <typename Scalar>
struct ForwardOptions {
  const MaskConfig* mask = nullptr;
  FfnObserver<Scalar>* observer = nullptr;
};

// A batch of equal-length token sequences, stored back to back.
struct TokenBatch {
  std::vector<TokenId> tokens;
  int batch_size = 0;
  int seq_len = 0;

  std::span<const TokenId> sequence(int b) const {
    return std::span<const TokenId>(tokens).subspan(static_cast<std::size_t>(b) * seq_len,
                                                    static_cast<std::size_t>(seq_len));
  }
};

// Activations saved for the backward pass.
template <typename Scalar>
struct LayerCache {
  Mat<Scalar> x;        // residual stream entering the layer
  Vec<Scalar> inv_rms1;
  Mat<Scalar> a;        // normalized attention input
  Mat<Scalar> q, k, v;
  std::vector<Mat<Scalar>> probs;  // (batch, head) -> T x T, probs(j, t) = p(t attends j)
  Mat<Scalar> attn;     // concatenated heads before W_o
  Mat<Scalar> x_mid;    // residual after attention
  Vec<Scalar> inv_rms2;
  Mat<Scalar> b;        // normalized FFN input
  Mat<Scalar> gate_pre, s, u;
};

template <typename Scalar>
struct ForwardCache {
  std::vector<LayerCache<Scalar>> layers;
  Mat<Scalar> x_final;
  Vec<Scalar> inv_rms_f;
  Mat<Scalar> normed_final;
  Mat<Scalar> logits;  // vocab x N
};

// Logits (vocab x N) for a batch; column b*seq_len + t belongs to sequence b, position t.
template <typename Scalar>
Mat<Scalar> forward_batch(const Weights<Scalar>& w, const ModelConfig& cfg, const TokenBatch& batch,
                          const ForwardOptions<Scalar>& opts = {},
                          ForwardCache<Scalar>* cache = nullptr);

// Logits (vocab x T) for a single sequence.
template <typename Scalar>
Mat<Scalar> transformer_forward(const Weights<Scalar>& w, const ModelConfig& cfg,
                                std::span<const TokenId> tokens,
                                const ForwardOptions<Scalar>& opts = {});

// Mean next-token cross-entropy over every position except the last of each sequence,
// and its gradient with respect to all weights. Dense FFN only.
template <typename Scalar>
Scalar loss_and_gradient(const Weights<Scalar>& w, const ModelConfig& cfg, const TokenBatch& batch,
                         Weights<Scalar>* grad);

// Loss only, same definition as loss_and_gradient.
template <typename Scalar>
Scalar batch_loss(const Weights<Scalar>& w, const ModelConfig& cfg, const TokenBatch& batch);

}  // namespace sparsing
