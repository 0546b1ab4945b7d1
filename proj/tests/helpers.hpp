#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "sparsing/checkpoint.hpp"
#include "sparsing/ffn.hpp"

namespace testing {

template <typename Scalar>
sparsing::FfnWeights<Scalar> random_ffn(int d_h, int d_f, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  auto fill = [&](sparsing::Mat<Scalar>& m, int r, int c) {
    m.resize(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
  };
  sparsing::FfnWeights<Scalar> w;
  fill(w.w_gate, d_f, d_h);
  fill(w.w_in, d_f, d_h);
  fill(w.w_out, d_h, d_f);
  return w;
}

template <typename Scalar>
sparsing::Vec<Scalar> random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  sparsing::Vec<Scalar> v(n);
  for (int i = 0; i < n; ++i) v(i) = static_cast<Scalar>(d(rng));
  return v;
}

inline sparsing::ModelConfig tiny_config(sparsing::Activation act = sparsing::Activation::ReLU,
                                         std::uint64_t seed = 3) {
  sparsing::ModelConfig c;
  c.d_h = 16;
  c.d_f = 40;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_seq_len = 32;
  c.activation = act;
  c.seed = seed;
  return c;
}

inline sparsing::Checkpoint tiny_checkpoint(sparsing::Activation act = sparsing::Activation::ReLU,
                                            std::uint64_t seed = 3) {
  sparsing::Checkpoint c;
  c.config = tiny_config(act, seed);
  c.weights = sparsing::Weights<float>::initialize(c.config);
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sparsing_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
