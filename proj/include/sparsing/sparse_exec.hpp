#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "sparsing/ffn.hpp"

namespace sparsing {

enum class ExecMode {
  GateThreshold,  // skip neuron i when |s_i| < eps: its W_in row and W_out column are never read
  NormThreshold,  // skip neuron i when ||n_i|| < eps: only its W_out column is skipped
};

std::string_view to_string(ExecMode m);
ExecMode parse_exec_mode(std::string_view name);

// FFN weights laid out for neuron skipping: W_gate and W_in row-major so a neuron's
// input weights are contiguous, W_out column-major for the same reason on the output side.
struct SparseFfnKernel {
  RowMat<float> w_gate;  // d_f x d_h
  RowMat<float> w_in;    // d_f x d_h
  MatF w_out;            // d_h x d_f
  VecF out_norms;
  Activation act = Activation::ReLU;

  static SparseFfnKernel from(const FfnWeights<float>& w, Activation act);
  Eigen::Index d_h() const { return w_gate.cols(); }
  Eigen::Index d_f() const { return w_gate.rows(); }
};

// Multiply-adds actually executed, split by matrix.
struct MacCounter {
  std::int64_t gate = 0;
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t total() const { return gate + in + out; }
};

struct SparseFfnResult {
  VecF y;
  int active_count = 0;
};

// GateThreshold uses FAT semantics (eps = 0 skips exactly the zero activations),
// NormThreshold uses the CETT norm rule. eps = +inf skips everything.
SparseFfnResult sparse_ffn(const VecF& x, const SparseFfnKernel& k, double eps, ExecMode mode,
                           MacCounter* macs = nullptr);

// Dense reference on the same storage.
VecF dense_ffn(const VecF& x, const SparseFfnKernel& k);

struct FlopCount {
  double dense = 0.0;
  double sparse = 0.0;
  double ratio() const { return sparse / dense; }
};

// Multiply-add cost model for one token at activation ratio r.
FlopCount flop_count(std::int64_t d_h, std::int64_t d_f, double r, ExecMode mode);

// |s| threshold that skips the same fraction of neurons on the sample as the norm
// threshold `norm_eps` does. `s` and `norms` are d_f x N over calibration tokens.
double transfer_threshold(const MatF& s, const MatF& norms, double norm_eps);

struct BenchConfig {
  int d_h = 1024;
  int d_f = 2560;
  std::vector<double> sparsity{0.0, 0.5, 0.9};
  ExecMode mode = ExecMode::GateThreshold;
  Activation act = Activation::SiLU;
  int tokens = 64;
  int repeats = 5;
  int warmup = 2;
  std::uint64_t seed = 7;
};

struct BenchReport {
  int d_h = 0;
  int d_f = 0;
  double sparsity = 0.0;
  double activation_ratio = 1.0;  // realized mean over timed tokens
  ExecMode mode = ExecMode::GateThreshold;
  int tokens = 0;
  int threads = 1;
  double ns_per_token_dense = 0.0;
  double ns_per_token_sparse = 0.0;
  double speedup = 0.0;
  double flops_dense = 0.0;
  double flops_sparse = 0.0;
  double max_rel_error = 0.0;
};

// Single-threaded decode-style benchmark. Each token gets its own threshold, chosen
// before timing, so that exactly round((1 - sparsity) * d_f) neurons stay active.
std::vector<BenchReport> bench(const BenchConfig& cfg);

std::string bench_csv(const std::vector<BenchReport>& reports);
std::string bench_json(const std::vector<BenchReport>& reports);

}  // namespace sparsing
