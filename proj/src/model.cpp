#include "sparsing/model.hpp"

#include <cmath>
#include <random>

namespace sparsing {

std::string_view to_string(Activation act) {
  return act == Activation::ReLU ? "relu" : "silu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu" || name == "ReLU") return Activation::ReLU;
  if (name == "silu" || name == "SiLU") return Activation::SiLU;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or silu)");
}

int ModelConfig::default_d_f(int d_h) {
  return static_cast<int>(std::lround(2.5 * d_h));
}

void ModelConfig::validate() const {
  if (d_h <= 0 || d_f <= 0 || n_layers <= 0 || n_heads <= 0 || vocab_size <= 0 ||
      max_seq_len <= 1) {
    throw ConfigError("model dimensions must be positive (max_seq_len at least 2)");
  }
  if (d_h % n_heads != 0) {
    throw ConfigError("d_h (" + std::to_string(d_h) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (vocab_size > 256) throw ConfigError("byte-level vocabulary holds at most 256 tokens");
}

std::int64_t ModelConfig::non_embedding_params() const {
  const std::int64_t h = d_h;
  const std::int64_t f = d_f;
  return n_layers * (4 * h * h + 3 * h * f + 2 * h) + h;
}

std::int64_t ModelConfig::total_params() const {
  const std::int64_t h = d_h;
  return non_embedding_params() + h * vocab_size + h * max_seq_len + vocab_size * h;
}

template <typename Scalar>
Weights<Scalar> Weights<Scalar>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Weights w;
  w.tok_emb = Mat<Scalar>::Zero(cfg.d_h, cfg.vocab_size);
  w.pos_emb = Mat<Scalar>::Zero(cfg.d_h, cfg.max_seq_len);
  w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& L : w.layers) {
    L.attn_norm = Vec<Scalar>::Zero(cfg.d_h);
    L.wq = Mat<Scalar>::Zero(cfg.d_h, cfg.d_h);
    L.wk = Mat<Scalar>::Zero(cfg.d_h, cfg.d_h);
    L.wv = Mat<Scalar>::Zero(cfg.d_h, cfg.d_h);
    L.wo = Mat<Scalar>::Zero(cfg.d_h, cfg.d_h);
    L.ffn_norm = Vec<Scalar>::Zero(cfg.d_h);
    L.ffn.w_gate = Mat<Scalar>::Zero(cfg.d_f, cfg.d_h);
    L.ffn.w_in = Mat<Scalar>::Zero(cfg.d_f, cfg.d_h);
    L.ffn.w_out = Mat<Scalar>::Zero(cfg.d_h, cfg.d_f);
  }
  w.final_norm = Vec<Scalar>::Zero(cfg.d_h);
  w.lm_head = Mat<Scalar>::Zero(cfg.vocab_size, cfg.d_h);
  return w;
}

template <typename Scalar>
Weights<Scalar> Weights<Scalar>::initialize(const ModelConfig& cfg) {
  Weights w = zeros(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](auto& m, double stddev) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        m(i, j) = static_cast<Scalar>(normal(rng) * stddev);
      }
    }
  };
  w.for_each_tensor([&](const std::string& name, auto& t) {
    const bool is_norm = name.ends_with("norm");
    if (is_norm) {
      t.setOnes();
    } else if (name == "tok_emb" || name == "pos_emb") {
      fill(t, name == "tok_emb" ? 1.0 : 0.1);
    } else {
      fill(t, 1.0 / std::sqrt(static_cast<double>(t.cols())));
    }
  });
  return w;
}

template struct Weights<float>;
template struct Weights<double>;

}  // namespace sparsing
