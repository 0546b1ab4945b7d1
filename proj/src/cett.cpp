#include "sparsing/cett.hpp"

#include <cmath>
#include <limits>

namespace sparsing {

LayerSample::LayerSample(MatF coeff, MatF w_out) : coeff_(std::move(coeff)) {
  if (w_out.cols() != coeff_.rows()) throw DimensionError("calibration sample shape mismatch");
  if (coeff_.cols() == 0) throw DataError("calibration sample is empty");
  // Same float expression the forward-pass mask uses, so thresholds transfer exactly.
  const VecF out_norms = w_out.colwise().norm().transpose();
  norms_ = (coeff_.array().abs().colwise() * out_norms.array()).matrix();
  max_norm_ = norms_.maxCoeff();
  coeff_d_ = coeff_.cast<double>();
  w_out_d_ = w_out.cast<double>();
  const MatD dense = w_out_d_ * coeff_d_;
  denom_ = dense.colwise().norm().transpose().array();
  for (Eigen::Index t = 0; t < coeff_.cols(); ++t) {
    if (denom_(t) >= kCettDenominatorFloor) {
      valid_.push_back(t);
    } else {
      ++skipped_;
    }
  }
}

LayerSample::CettStats LayerSample::cett_at(double eps) const {
  CettStats st;
  if (valid_.empty()) return st;
  const auto weak = (norms_.array().cast<double>() < eps);
  const MatD tail_coeff = weak.select(coeff_d_, MatD::Zero(coeff_d_.rows(), coeff_d_.cols()));
  const MatD tail = w_out_d_ * tail_coeff;
  double sum = 0.0;
  for (Eigen::Index t : valid_) {
    const double c = tail.col(t).norm() / denom_(t);
    sum += c;
    st.max_token = std::max(st.max_token, c);
  }
  st.mean = sum / static_cast<double>(valid_.size());
  st.weak_fraction = static_cast<double>(weak.count()) / static_cast<double>(weak.size());
  return st;
}

ThresholdCalibration calibrate_layer_threshold(const LayerSample& sample, double target,
                                               const CalibrationOptions& opts) {
  if (!(target >= 0.0 && target <= 1.0)) throw RangeError("target CETT must lie in [0, 1]");
  ThresholdCalibration out;
  if (target == 0.0) return out;
  const double top = std::nextafter(sample.max_norm(), std::numeric_limits<double>::infinity());
  if (target == 1.0) {
    out.eps = top;
    const auto st = sample.cett_at(top);
    out.mean_cett = st.mean;
    out.max_token_cett = st.max_token;
    return out;
  }

  // Invariant: mean CETT at lo is below target, at hi reaches it.
  double lo = 0.0;
  double hi = top;
  LayerSample::CettStats hi_stats = sample.cett_at(hi);
  while (out.iterations < opts.max_iterations && hi - lo > opts.bracket_floor) {
    const double mid = 0.5 * (lo + hi);
    const auto st = sample.cett_at(mid);
    ++out.iterations;
    if (st.mean < target) {
      lo = mid;
    } else {
      hi = mid;
      hi_stats = st;
    }
    if (std::abs(st.mean - target) <= opts.cett_tolerance) {
      out.eps = mid;
      out.mean_cett = st.mean;
      out.max_token_cett = st.max_token;
      return out;
    }
  }
  out.eps = hi;
  out.mean_cett = hi_stats.mean;
  out.max_token_cett = hi_stats.max_token;
  return out;
}

}  // namespace sparsing
