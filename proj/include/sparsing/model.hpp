#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsing/ffn.hpp"
#include "sparsing/types.hpp"

namespace sparsing {

struct ModelConfig {
  int d_h = 64;
  int d_f = 160;
  int n_layers = 2;
  int n_heads = 4;
  int vocab_size = 256;
  int max_seq_len = 64;
  Activation activation = Activation::ReLU;
  std::uint64_t seed = 0;

  // d_f = round(2.5 d_h)
  static int default_d_f(int d_h);

  void validate() const;
  double width_depth_ratio() const { return static_cast<double>(d_h) / n_layers; }
  int head_dim() const { return d_h / n_heads; }

  // Attention, FFN and norm parameters; embeddings and LM head excluded.
  std::int64_t non_embedding_params() const;
  std::int64_t total_params() const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct LayerWeights {
  Vec<Scalar> attn_norm;  // d_h
  Mat<Scalar> wq, wk, wv, wo;  // d_h x d_h
  Vec<Scalar> ffn_norm;  // d_h
  FfnWeights<Scalar> ffn;
};

template <typename Scalar>
struct Weights {
  Mat<Scalar> tok_emb;  // d_h x vocab, one column per token id
  Mat<Scalar> pos_emb;  // d_h x max_seq_len
  std::vector<LayerWeights<Scalar>> layers;
  Vec<Scalar> final_norm;  // d_h
  Mat<Scalar> lm_head;     // vocab x d_h

  static Weights zeros(const ModelConfig& cfg);

  // Normal(0, 1/fan_in) matrices, unit norm gains, unit-variance embeddings.
  static Weights initialize(const ModelConfig& cfg);

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    visit(*this, fn);
  }

  template <typename Other>
  Weights<Other> cast() const;

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn(std::string("tok_emb"), self.tok_emb);
    fn(std::string("pos_emb"), self.pos_emb);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      auto& L = self.layers[l];
      fn(p + "attn_norm", L.attn_norm);
      fn(p + "wq", L.wq);
      fn(p + "wk", L.wk);
      fn(p + "wv", L.wv);
      fn(p + "wo", L.wo);
      fn(p + "ffn_norm", L.ffn_norm);
      fn(p + "w_gate", L.ffn.w_gate);
      fn(p + "w_in", L.ffn.w_in);
      fn(p + "w_out", L.ffn.w_out);
    }
    fn(std::string("final_norm"), self.final_norm);
    fn(std::string("lm_head"), self.lm_head);
  }
};

template <typename Scalar>
template <typename Other>
Weights<Other> Weights<Scalar>::cast() const {
  Weights<Other> out;
  out.tok_emb = tok_emb.template cast<Other>();
  out.pos_emb = pos_emb.template cast<Other>();
  out.final_norm = final_norm.template cast<Other>();
  out.lm_head = lm_head.template cast<Other>();
  out.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    auto& d = out.layers[l];
    d.attn_norm = s.attn_norm.template cast<Other>();
    d.wq = s.wq.template cast<Other>();
    d.wk = s.wk.template cast<Other>();
    d.wv = s.wv.template cast<Other>();
    d.wo = s.wo.template cast<Other>();
    d.ffn_norm = s.ffn_norm.template cast<Other>();
    d.ffn.w_gate = s.ffn.w_gate.template cast<Other>();
    d.ffn.w_in = s.ffn.w_in.template cast<Other>();
    d.ffn.w_out = s.ffn.w_out.template cast<Other>();
  }
  return out;
}

extern template struct Weights<float>;
extern template struct Weights<double>;

}  // namespace sparsing
