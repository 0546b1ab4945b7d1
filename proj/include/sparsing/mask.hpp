#pragma once

#include <string>
#include <vector>

#include "sparsing/recognize.hpp"
#include "sparsing/types.hpp"

namespace sparsing {

// How the FFN stage of a forward pass decides which neurons to skip.
//   TopK:     param = k
//   FAT:      param = global |s| threshold
//   ZeroReLU: no parameter
//   CETT:     param = target CETT (informational), layer_thresholds = per-layer ||n_i|| cutoffs
struct MaskConfig {
  Method method = Method::Dense;
  double param = 0.0;
  std::vector<double> layer_thresholds;

  static MaskConfig dense() { return {}; }
  static MaskConfig zero_relu() { return {Method::ZeroReLU, 0.0, {}}; }
  static MaskConfig top_k(int k) { return {Method::TopK, static_cast<double>(k), {}}; }
  static MaskConfig fat(double eps) { return {Method::FAT, eps, {}}; }
  static MaskConfig cett(double target, std::vector<double> thresholds) {
    return {Method::CETT, target, std::move(thresholds)};
  }

  bool is_dense() const { return method == Method::Dense; }
  std::string describe() const;
};

// Active (kept) neurons for a block of tokens at one layer.
// `s` holds activation values and `coeff` the neuron coefficients s_i * (W_in_i x),
// both d_f x N; `out_norms` holds ||W_out[:, i]||.
template <typename Scalar>
ActiveMask select_active(const MaskConfig& cfg, int layer, Activation act, const Mat<Scalar>& s,
                         const Mat<Scalar>& coeff, const Vec<Scalar>& out_norms) {
  const Eigen::Index d_f = s.rows();
  const Eigen::Index n = s.cols();
  ActiveMask active = ActiveMask::Constant(d_f, n, true);
  switch (cfg.method) {
    case Method::Dense:
      break;
    case Method::ZeroReLU:
      if (act != Activation::ReLU) {
        throw ConfigError("zero-threshold recognition requires a ReLU model");
      }
      active = s.array() != Scalar(0);
      break;
    case Method::FAT: {
      if (!(cfg.param >= 0.0)) throw RangeError("FAT threshold must be non-negative");
      if (cfg.param == 0.0) {
        active = s.array() != Scalar(0);
      } else {
        active = s.array().abs().template cast<double>() >= cfg.param;
      }
      break;
    }
    case Method::TopK: {
      const auto k = static_cast<Eigen::Index>(cfg.param);
      for (Eigen::Index t = 0; t < n; ++t) {
        const WeakSet w = recognize_topk(s.col(t), k);
        for (int i : w.indices) active(i, t) = false;
      }
      break;
    }
    case Method::CETT: {
      if (layer < 0 || static_cast<std::size_t>(layer) >= cfg.layer_thresholds.size()) {
        throw ConfigError("CETT mask has no threshold for layer " + std::to_string(layer));
      }
      const double eps = cfg.layer_thresholds[static_cast<std::size_t>(layer)];
      if (!(eps >= 0.0)) throw RangeError("CETT threshold must be non-negative");
      const auto norms =
          (coeff.array().abs().colwise() * out_norms.array()).template cast<double>();
      active = norms >= eps;
      break;
    }
  }
  return active;
}

}  // namespace sparsing
