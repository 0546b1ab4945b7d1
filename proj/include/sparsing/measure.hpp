#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sparsing/cett.hpp"
#include "sparsing/lawfit.hpp"
#include "sparsing/ppl.hpp"
#include "sparsing/search.hpp"

namespace sparsing {

// Streaming activation counts gathered from the FFN stage of masked forward passes.
// Counts are plain sums, so counters of disjoint shards merge by addition.
class ActivationCounter : public FfnObserver<float> {
 public:
  explicit ActivationCounter(const Checkpoint& ckpt);

  void on_ffn(int layer, std::span<const TokenId> tokens, const MatF& input, const MatF& s,
              const MatF& coeff, const ActiveMask& active) override;

  void merge(const ActivationCounter& other);

  int layers() const { return static_cast<int>(layer_active_.size()); }
  int d_f() const { return d_f_; }
  std::int64_t tokens() const { return tokens_; }  // token positions seen per layer

  // active / (tokens * d_f) for one layer
  double layer_activation_ratio(int layer) const;
  // Mean of the per-layer ratios.
  double aggregate_activation_ratio() const;
  // Fraction of tokens on which neuron (layer, i) was active; n_layers x d_f.
  Eigen::MatrixXd neuron_frequencies() const;
  // Mean realized CETT per layer over tokens above the denominator floor.
  double layer_mean_cett(int layer) const;
  std::int64_t cett_skipped(int layer) const { return cett_skipped_[static_cast<std::size_t>(layer)]; }
  std::int64_t cett_above_one(int layer) const {
    return cett_above_one_[static_cast<std::size_t>(layer)];
  }

  // Per token id: occurrences and summed per-occurrence activation ratio (layer-averaged).
  const std::array<std::int64_t, 256>& token_occurrences() const { return token_count_; }
  const std::array<double, 256>& token_ratio_sums() const { return token_ratio_sum_; }

 private:
  const Checkpoint* ckpt_;
  int d_f_ = 0;
  std::int64_t tokens_ = 0;
  std::vector<std::int64_t> layer_active_;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> neuron_active_;
  std::vector<double> cett_sum_;
  std::vector<std::int64_t> cett_count_, cett_skipped_, cett_above_one_;
  Eigen::ArrayXd pending_;  // per-column active fraction summed over layers so far
  std::array<std::int64_t, 256> token_count_{};
  std::array<double, 256> token_ratio_sum_{};
};

struct SparsityReport {
  Method method = Method::Dense;
  double param = 0.0;
  std::vector<double> per_layer_activation_ratio;
  double aggregate_activation_ratio = 1.0;
  std::vector<double> per_layer_threshold;  // CETT only
  std::vector<double> per_layer_mean_cett;  // realized on the evaluation tokens
  double ppl_dense = 0.0;
  double ppl_sparse = 0.0;
  std::int64_t tokens = 0;            // token positions through the FFNs
  std::int64_t predicted_tokens = 0;  // positions scored for PPL
  std::int64_t cett_skipped_tokens = 0;
  std::int64_t cett_above_one = 0;

  double sparsity_ratio() const { return 1.0 - aggregate_activation_ratio; }
};

struct MeasureOptions {
  int calib_tokens = 4096;  // taken from the front of the validation stream
  CalibrationOptions calibration;
  EvalOptions eval;
};

// Dense FFN quantities for every layer over a calibration stream.
struct CalibrationSet {
  std::vector<LayerSample> layers;
};

CalibrationSet build_calibration_set(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                                     const EvalOptions& eval = {});

struct CettCalibration {
  MaskConfig mask;
  std::vector<ThresholdCalibration> layers;
};

// Per-layer thresholds for a shared target CETT.
CettCalibration calibrate_cett(const CalibrationSet& set, double target,
                               const CalibrationOptions& opts = {});

// Masked evaluation of an explicit mask: PPL dense and sparse plus activation counts.
SparsityReport measure_with_mask(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                 const MaskConfig& mask, const EvalOptions& eval = {},
                                 ActivationCounter* counter = nullptr);

// Builds the mask for (method, param) and measures it. For CETT `param` is the target
// CETT and the thresholds are calibrated on the first calib_tokens of `dataset`.
SparsityReport measure_activation_ratio(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                        Method method, double param,
                                        const MeasureOptions& opts = {});

MaskConfig make_mask(const Checkpoint& ckpt, std::span<const TokenId> dataset, Method method,
                     double param, const MeasureOptions& opts = {});

// Dense and CETT-masked validation losses of a list of checkpoints.
class CheckpointLossOracle : public LossOracle {
 public:
  CheckpointLossOracle(std::vector<const Checkpoint*> ckpts, std::span<const TokenId> valid,
                       MeasureOptions opts = {});

  std::size_t checkpoint_count() const override { return ckpts_.size(); }
  double dense_loss(std::size_t i) override;
  double sparse_loss(std::size_t i, double cett) override;

  const CalibrationSet& calibration(std::size_t i);
  // Probes at which some token's realized CETT exceeded 1 during calibration.
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::vector<const Checkpoint*> ckpts_;
  std::span<const TokenId> valid_;
  MeasureOptions opts_;
  std::vector<std::unique_ptr<CalibrationSet>> calib_;
  std::vector<double> dense_;
  std::vector<bool> dense_ready_;
  std::vector<std::string> notes_;
};

struct CettPplResult {
  CettSearchResult search;
  SparsityReport report;
};

// CETT-PPL-p% for one checkpoint.
CettPplResult measure_cett_ppl(const Checkpoint& ckpt, std::span<const TokenId> valid,
                               double p_percent, double eps = 1e-4,
                               const MeasureOptions& opts = {});

struct StabilizedSeries {
  StabilizationPlan plan;
  CettSearchResult search;
  std::vector<SparsityPoint> points;  // one per post-warmup checkpoint
  std::vector<SparsityReport> reports;
};

// Joint CETT-PPL-p% search on the last five post-warmup checkpoints, then the shared
// CETT value applied to every post-warmup checkpoint. `ckpts` follow run order.
StabilizedSeries stabilized_series(const std::vector<Checkpoint>& ckpts,
                                   std::uint64_t warmup_tokens, std::span<const TokenId> valid,
                                   double p_percent, double eps = 1e-4,
                                   const MeasureOptions& opts = {});

}  // namespace sparsing
