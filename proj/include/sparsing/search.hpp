#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sparsing {

// Validation losses of a list of checkpoints, dense and under a CETT target.
class LossOracle {
 public:
  virtual ~LossOracle() = default;
  virtual std::size_t checkpoint_count() const = 0;
  virtual double dense_loss(std::size_t ckpt) = 0;
  virtual double sparse_loss(std::size_t ckpt, double cett) = 0;
};

struct SearchProbe {
  double l = 0.0;
  double r = 0.0;
  double mid = 0.0;
  double mean_ppl_ratio = 0.0;
};

struct CettSearchResult {
  double cett = 0.0;          // (l + r) / 2 of the final bracket
  double applied_cett = 0.0;  // cett, or 0 when no probe stayed within the tolerance
  double mean_ppl_ratio = 1.0;  // evaluated at the returned cett
  int iterations = 0;
  double eps = 0.0;
  double final_l = 0.0;
  double final_r = 1.0;
  std::vector<SearchProbe> trace;
  bool monotone = true;  // mean PPL ratio non-decreasing in the probed CETT values
  std::vector<std::string> warnings;
};

// Bisection over [0, 1] for the CETT value whose mean PPL ratio across the
// checkpoints, mean_j exp(loss_sparse_j - loss_dense_j), just reaches 1 + p/100.
// Dense losses are computed once per checkpoint.
CettSearchResult search_cett_hyperparameter(LossOracle& oracle, double p_percent,
                                            double eps = 1e-4);

// Subset of an oracle's checkpoints.
class SubsetOracle : public LossOracle {
 public:
  SubsetOracle(LossOracle& base, std::vector<std::size_t> indices)
      : base_(base), indices_(std::move(indices)) {}
  std::size_t checkpoint_count() const override { return indices_.size(); }
  double dense_loss(std::size_t i) override { return base_.dense_loss(indices_.at(i)); }
  double sparse_loss(std::size_t i, double cett) override {
    return base_.sparse_loss(indices_.at(i), cett);
  }

 private:
  LossOracle& base_;
  std::vector<std::size_t> indices_;
};

// Which checkpoints of a run enter the stabilized series and the joint search.
struct StabilizationPlan {
  std::vector<std::size_t> series;  // post-warmup checkpoints, in run order
  std::vector<std::size_t> search;  // last five of `series` (or all, on fallback)
  bool fell_back = false;           // fewer than five post-warmup checkpoints
};

inline constexpr std::size_t kStabilizationWindow = 5;

// Drops checkpoints with tokens_seen = 0 or inside the warmup stage.
StabilizationPlan plan_stabilization(const std::vector<unsigned long long>& tokens_seen,
                                     unsigned long long warmup_tokens);

}  // namespace sparsing
