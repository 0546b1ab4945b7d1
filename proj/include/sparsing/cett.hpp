#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sparsing/ffn.hpp"
#include "sparsing/recognize.hpp"

namespace sparsing {

// Tokens whose dense FFN output norm falls below this are left out of CETT averages.
inline constexpr double kCettDenominatorFloor = 1e-8;

// ||sum_{i in D} n_i|| / ||FFN(x)||, or nullopt when ||FFN(x)|| is below the floor.
template <typename Scalar>
std::optional<double> compute_cett(const Vec<Scalar>& x, const FfnWeights<Scalar>& w,
                                   Activation act, std::span<const int> weak) {
  const Vec<double> h = neuron_coefficients(x, w, act).template cast<double>();
  const Mat<double> w_out = w.w_out.template cast<double>();
  const double denom = (w_out * h).norm();
  if (denom < kCettDenominatorFloor) return std::nullopt;
  Vec<double> tail = Vec<double>::Zero(h.size());
  for (int i : weak) {
    if (i < 0 || i >= h.size()) throw RangeError("weak neuron index out of range");
    tail(i) = h(i);
  }
  return (w_out * tail).norm() / denom;
}

template <typename Scalar>
std::optional<double> compute_cett(const Vec<Scalar>& x, const FfnWeights<Scalar>& w,
                                   Activation act, const WeakSet& weak) {
  return compute_cett(x, w, act, std::span<const int>(weak.indices));
}

// Dense FFN quantities of one layer over a calibration sample of N tokens.
class LayerSample {
 public:
  // coeff: d_f x N neuron coefficients s .* (W_in x); w_out: d_h x d_f.
  LayerSample(MatF coeff, MatF w_out);

  Eigen::Index tokens() const { return coeff_.cols(); }
  Eigen::Index neurons() const { return coeff_.rows(); }
  const MatF& norms() const { return norms_; }  // ||n_i|| per (neuron, token)
  double max_norm() const { return max_norm_; }
  std::size_t skipped_tokens() const { return skipped_; }

  struct CettStats {
    double mean = 0.0;        // over tokens above the denominator floor
    double max_token = 0.0;   // largest per-token CETT (can exceed 1 under cancellation)
    double weak_fraction = 0.0;
  };

  // CETT with D = {i : ||n_i|| < eps} for every token.
  CettStats cett_at(double eps) const;

 private:
  MatF coeff_;
  MatD coeff_d_;
  MatD w_out_d_;
  MatF norms_;
  Eigen::ArrayXd denom_;
  std::vector<Eigen::Index> valid_;
  double max_norm_ = 0.0;
  std::size_t skipped_ = 0;
};

struct ThresholdCalibration {
  double eps = 0.0;
  double mean_cett = 0.0;
  double max_token_cett = 0.0;
  int iterations = 0;
};

struct CalibrationOptions {
  double cett_tolerance = 1e-3;  // stop when |mean CETT - target| is within this
  double bracket_floor = 1e-9;
  int max_iterations = 40;
};

// Binary search for the per-layer threshold eps whose mean CETT meets `target`.
// Returns eps = 0 for target 0 and an eps above every observed norm for target >= 1.
ThresholdCalibration calibrate_layer_threshold(const LayerSample& sample, double target,
                                               const CalibrationOptions& opts = {});

}  // namespace sparsing
