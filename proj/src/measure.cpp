#include "sparsing/measure.hpp"

#include <algorithm>
#include <cmath>

namespace sparsing {

ActivationCounter::ActivationCounter(const Checkpoint& ckpt)
    : ckpt_(&ckpt),
      d_f_(ckpt.config.d_f),
      layer_active_(static_cast<std::size_t>(ckpt.config.n_layers), 0),
      neuron_active_(decltype(neuron_active_)::Zero(ckpt.config.n_layers, ckpt.config.d_f)),
      cett_sum_(static_cast<std::size_t>(ckpt.config.n_layers), 0.0),
      cett_count_(static_cast<std::size_t>(ckpt.config.n_layers), 0),
      cett_skipped_(static_cast<std::size_t>(ckpt.config.n_layers), 0),
      cett_above_one_(static_cast<std::size_t>(ckpt.config.n_layers), 0) {}

void ActivationCounter::on_ffn(int layer, std::span<const TokenId> tokens, const MatF& /*input*/,
                               const MatF& /*s*/, const MatF& coeff, const ActiveMask& active) {
  if (layer < 0 || layer >= layers()) throw RangeError("observer layer out of range");
  if (active.rows() != d_f_ || active.cols() != coeff.cols() ||
      static_cast<Eigen::Index>(tokens.size()) != coeff.cols()) {
    throw DimensionError("observer block shape mismatch");
  }
  const auto l = static_cast<std::size_t>(layer);
  const Eigen::Index n = coeff.cols();
  if (layer == 0) {
    tokens_ += n;
    pending_ = Eigen::ArrayXd::Zero(n);
  }
  layer_active_[l] += active.count();
  neuron_active_.row(layer) += active.cast<std::int64_t>().rowwise().sum().transpose().matrix();

  const MatD w_out = ckpt_->weights.layers[l].ffn.w_out.cast<double>();
  const MatD c = coeff.cast<double>();
  const MatD dense = w_out * c;
  const MatD tail = w_out * active.select(MatD::Zero(c.rows(), c.cols()), c);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double denom = dense.col(t).norm();
    if (denom < kCettDenominatorFloor) {
      ++cett_skipped_[l];
      continue;
    }
    const double v = tail.col(t).norm() / denom;
    cett_sum_[l] += v;
    ++cett_count_[l];
    if (v > 1.0) ++cett_above_one_[l];
  }

  if (pending_.size() != n) throw DimensionError("observer called out of layer order");
  pending_ += active.cast<double>().colwise().sum().transpose() / static_cast<double>(d_f_);
  if (layer == layers() - 1) {
    for (Eigen::Index t = 0; t < n; ++t) {
      const auto id = static_cast<std::size_t>(tokens[static_cast<std::size_t>(t)]);
      ++token_count_[id];
      token_ratio_sum_[id] += pending_(t) / static_cast<double>(layers());
    }
  }
}

void ActivationCounter::merge(const ActivationCounter& other) {
  if (other.layers() != layers() || other.d_f_ != d_f_) {
    throw DimensionError("cannot merge counters of different models");
  }
  tokens_ += other.tokens_;
  neuron_active_ += other.neuron_active_;
  for (std::size_t l = 0; l < layer_active_.size(); ++l) {
    layer_active_[l] += other.layer_active_[l];
    cett_sum_[l] += other.cett_sum_[l];
    cett_count_[l] += other.cett_count_[l];
    cett_skipped_[l] += other.cett_skipped_[l];
    cett_above_one_[l] += other.cett_above_one_[l];
  }
  for (std::size_t i = 0; i < token_count_.size(); ++i) {
    token_count_[i] += other.token_count_[i];
    token_ratio_sum_[i] += other.token_ratio_sum_[i];
  }
}

double ActivationCounter::layer_activation_ratio(int layer) const {
  if (tokens_ == 0) throw DataError("no tokens observed");
  return static_cast<double>(layer_active_.at(static_cast<std::size_t>(layer))) /
         (static_cast<double>(tokens_) * d_f_);
}

double ActivationCounter::aggregate_activation_ratio() const {
  double sum = 0.0;
  for (int l = 0; l < layers(); ++l) sum += layer_activation_ratio(l);
  return sum / layers();
}

Eigen::MatrixXd ActivationCounter::neuron_frequencies() const {
  if (tokens_ == 0) throw DataError("no tokens observed");
  return neuron_active_.cast<double>() / static_cast<double>(tokens_);
}

double ActivationCounter::layer_mean_cett(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  if (cett_count_.at(l) == 0) return 0.0;
  return cett_sum_[l] / static_cast<double>(cett_count_[l]);
}

namespace {

class CoeffCollector : public FfnObserver<float> {
 public:
  explicit CoeffCollector(int layers) : blocks_(static_cast<std::size_t>(layers)) {}

  void on_ffn(int layer, std::span<const TokenId>, const MatF&, const MatF&, const MatF& coeff,
              const ActiveMask&) override {
    blocks_[static_cast<std::size_t>(layer)].push_back(coeff);
  }

  MatF concat(int layer) const {
    const auto& bl = blocks_[static_cast<std::size_t>(layer)];
    Eigen::Index cols = 0;
    for (const auto& b : bl) cols += b.cols();
    MatF out(bl.empty() ? 0 : bl.front().rows(), cols);
    Eigen::Index at = 0;
    for (const auto& b : bl) {
      out.middleCols(at, b.cols()) = b;
      at += b.cols();
    }
    return out;
  }

 private:
  std::vector<std::vector<MatF>> blocks_;
};

std::span<const TokenId> calibration_slice(std::span<const TokenId> data, int calib_tokens) {
  const auto n = std::min<std::size_t>(data.size(), static_cast<std::size_t>(std::max(2, calib_tokens)));
  return data.first(n);
}

}  // namespace

CalibrationSet build_calibration_set(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                                     const EvalOptions& eval) {
  CoeffCollector collect(ckpt.config.n_layers);
  EvalOptions o = eval;
  o.observer = &collect;
  evaluate_ppl(ckpt, tokens, nullptr, o);
  CalibrationSet set;
  for (int l = 0; l < ckpt.config.n_layers; ++l) {
    set.layers.emplace_back(collect.concat(l), ckpt.weights.layers[static_cast<std::size_t>(l)].ffn.w_out);
  }
  return set;
}

CettCalibration calibrate_cett(const CalibrationSet& set, double target,
                               const CalibrationOptions& opts) {
  CettCalibration out;
  std::vector<double> eps;
  for (const auto& layer : set.layers) {
    out.layers.push_back(calibrate_layer_threshold(layer, target, opts));
    eps.push_back(out.layers.back().eps);
  }
  out.mask = MaskConfig::cett(target, std::move(eps));
  return out;
}

SparsityReport measure_with_mask(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                 const MaskConfig& mask, const EvalOptions& eval,
                                 ActivationCounter* counter) {
  ActivationCounter local(ckpt);
  ActivationCounter& cnt = counter ? *counter : local;

  SparsityReport rep;
  rep.method = mask.method;
  rep.param = mask.param;
  rep.per_layer_threshold = mask.layer_thresholds;

  EvalOptions dense_opts = eval;
  dense_opts.observer = nullptr;
  rep.ppl_dense = evaluate_ppl(ckpt, dataset, nullptr, dense_opts).ppl;

  EvalOptions sparse_opts = eval;
  sparse_opts.observer = &cnt;
  const PplResult sparse = evaluate_ppl(ckpt, dataset, &mask, sparse_opts);
  rep.ppl_sparse = sparse.ppl;
  rep.predicted_tokens = sparse.token_count;

  rep.tokens = cnt.tokens();
  for (int l = 0; l < cnt.layers(); ++l) {
    rep.per_layer_activation_ratio.push_back(cnt.layer_activation_ratio(l));
    rep.per_layer_mean_cett.push_back(cnt.layer_mean_cett(l));
    rep.cett_skipped_tokens += cnt.cett_skipped(l);
    rep.cett_above_one += cnt.cett_above_one(l);
  }
  rep.aggregate_activation_ratio = cnt.aggregate_activation_ratio();
  return rep;
}

MaskConfig make_mask(const Checkpoint& ckpt, std::span<const TokenId> dataset, Method method,
                     double param, const MeasureOptions& opts) {
  switch (method) {
    case Method::Dense:
      return MaskConfig::dense();
    case Method::ZeroReLU:
      if (ckpt.config.activation != Activation::ReLU) {
        throw ConfigError("zero-threshold recognition requires a ReLU model");
      }
      return MaskConfig::zero_relu();
    case Method::TopK: {
      const long k = std::lround(param);
      if (!(param >= 0.0) || k > ckpt.config.d_f) throw RangeError("top-k: k out of range");
      return MaskConfig::top_k(static_cast<int>(k));
    }
    case Method::FAT:
      if (!(param >= 0.0)) throw RangeError("FAT threshold must be non-negative");
      return MaskConfig::fat(param);
    case Method::CETT: {
      const auto set = build_calibration_set(ckpt, calibration_slice(dataset, opts.calib_tokens),
                                             opts.eval);
      return calibrate_cett(set, param, opts.calibration).mask;
    }
  }
  throw ConfigError("unknown recognition method");
}

SparsityReport measure_activation_ratio(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                        Method method, double param, const MeasureOptions& opts) {
  return measure_with_mask(ckpt, dataset, make_mask(ckpt, dataset, method, param, opts), opts.eval);
}

CheckpointLossOracle::CheckpointLossOracle(std::vector<const Checkpoint*> ckpts,
                                           std::span<const TokenId> valid, MeasureOptions opts)
    : ckpts_(std::move(ckpts)),
      valid_(valid),
      opts_(std::move(opts)),
      calib_(ckpts_.size()),
      dense_(ckpts_.size(), 0.0),
      dense_ready_(ckpts_.size(), false) {
  opts_.eval.observer = nullptr;
}

double CheckpointLossOracle::dense_loss(std::size_t i) {
  if (!dense_ready_.at(i)) {
    dense_[i] = evaluate_ppl(*ckpts_[i], valid_, nullptr, opts_.eval).mean_nll;
    dense_ready_[i] = true;
  }
  return dense_[i];
}

const CalibrationSet& CheckpointLossOracle::calibration(std::size_t i) {
  if (!calib_.at(i)) {
    calib_[i] = std::make_unique<CalibrationSet>(build_calibration_set(
        *ckpts_[i], calibration_slice(valid_, opts_.calib_tokens), opts_.eval));
  }
  return *calib_[i];
}

double CheckpointLossOracle::sparse_loss(std::size_t i, double cett) {
  const CettCalibration cal = calibrate_cett(calibration(i), cett, opts_.calibration);
  for (std::size_t l = 0; l < cal.layers.size(); ++l) {
    if (cal.layers[l].max_token_cett > 1.0) {
      notes_.push_back("checkpoint " + std::to_string(ckpts_[i]->tokens_seen) + " layer " +
                       std::to_string(l) + " target " + std::to_string(cett) +
                       ": per-token CETT above 1 (" + std::to_string(cal.layers[l].max_token_cett) +
                       ")");
    }
  }
  return evaluate_ppl(*ckpts_[i], valid_, &cal.mask, opts_.eval).mean_nll;
}

CettPplResult measure_cett_ppl(const Checkpoint& ckpt, std::span<const TokenId> valid,
                               double p_percent, double eps, const MeasureOptions& opts) {
  CheckpointLossOracle oracle({&ckpt}, valid, opts);
  CettPplResult out;
  out.search = search_cett_hyperparameter(oracle, p_percent, eps);
  const CettCalibration cal = calibrate_cett(oracle.calibration(0), out.search.applied_cett, opts.calibration);
  out.report = measure_with_mask(ckpt, valid, cal.mask, opts.eval);
  return out;
}

StabilizedSeries stabilized_series(const std::vector<Checkpoint>& ckpts,
                                   std::uint64_t warmup_tokens, std::span<const TokenId> valid,
                                   double p_percent, double eps, const MeasureOptions& opts) {
  std::vector<unsigned long long> seen;
  std::vector<const Checkpoint*> ptrs;
  for (const auto& c : ckpts) {
    seen.push_back(c.tokens_seen);
    ptrs.push_back(&c);
  }
  for (std::size_t i = 1; i < seen.size(); ++i) {
    if (seen[i] <= seen[i - 1]) throw DataError("checkpoints are not in run order");
  }

  StabilizedSeries out;
  out.plan = plan_stabilization(seen, warmup_tokens);
  CheckpointLossOracle oracle(ptrs, valid, opts);
  SubsetOracle joint(oracle, out.plan.search);
  out.search = search_cett_hyperparameter(joint, p_percent, eps);

  for (std::size_t idx : out.plan.series) {
    const CettCalibration cal =
        calibrate_cett(oracle.calibration(idx), out.search.applied_cett, opts.calibration);
    SparsityReport rep = measure_with_mask(ckpts[idx], valid, cal.mask, opts.eval);
    SparsityPoint pt;
    pt.tokens_seen = ckpts[idx].tokens_seen;
    pt.activation_ratio = rep.aggregate_activation_ratio;
    pt.cett = out.search.applied_cett;
    pt.ppl_dense = rep.ppl_dense;
    pt.ppl_sparse = rep.ppl_sparse;
    out.points.push_back(pt);
    out.reports.push_back(std::move(rep));
  }
  return out;
}

}  // namespace sparsing
