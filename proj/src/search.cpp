#include "sparsing/search.hpp"

#include <algorithm>
#include <cmath>

#include "sparsing/types.hpp"

namespace sparsing {

namespace {

double mean_ppl_ratio(LossOracle& oracle, const std::vector<double>& dense, double cett) {
  double sum = 0.0;
  for (std::size_t i = 0; i < oracle.checkpoint_count(); ++i) {
    sum += std::exp(oracle.sparse_loss(i, cett) - dense[i]);
  }
  return sum / static_cast<double>(oracle.checkpoint_count());
}

}  // namespace

CettSearchResult search_cett_hyperparameter(LossOracle& oracle, double p_percent, double eps) {
  if (oracle.checkpoint_count() == 0) throw ConfigError("CETT search needs at least one checkpoint");
  if (!(p_percent >= 0.0)) throw RangeError("PPL tolerance p must be non-negative");
  if (!(eps > 0.0)) throw RangeError("bracket tolerance eps must be positive");

  std::vector<double> dense(oracle.checkpoint_count());
  for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = oracle.dense_loss(i);

  CettSearchResult res;
  res.eps = eps;
  const double limit = 1.0 + p_percent / 100.0;
  double l = 0.0;
  double r = 1.0;
  while (r - l > eps) {
    const double mid = (l + r) / 2.0;
    const double ratio = mean_ppl_ratio(oracle, dense, mid);
    res.trace.push_back({l, r, mid, ratio});
    if (ratio < limit) {
      l = mid;
    } else {
      r = mid;
    }
  }
  res.cett = (l + r) / 2.0;
  res.final_l = l;
  res.final_r = r;
  res.iterations = static_cast<int>(res.trace.size());
  // l never moved: every probe broke the tolerance, so the answer is 0 at this resolution.
  res.applied_cett = l == 0.0 ? 0.0 : res.cett;
  res.mean_ppl_ratio = mean_ppl_ratio(oracle, dense, res.applied_cett);

  std::vector<SearchProbe> sorted = res.trace;
  std::sort(sorted.begin(), sorted.end(),
            [](const SearchProbe& a, const SearchProbe& b) { return a.mid < b.mid; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].mean_ppl_ratio < sorted[i - 1].mean_ppl_ratio) {
      res.monotone = false;
      res.warnings.push_back("PPL ratio decreased from CETT " + std::to_string(sorted[i - 1].mid) +
                             " to " + std::to_string(sorted[i].mid));
    }
  }
  return res;
}

StabilizationPlan plan_stabilization(const std::vector<unsigned long long>& tokens_seen,
                                     unsigned long long warmup_tokens) {
  StabilizationPlan plan;
  for (std::size_t i = 0; i < tokens_seen.size(); ++i) {
    if (tokens_seen[i] > 0 && tokens_seen[i] >= warmup_tokens) plan.series.push_back(i);
  }
  if (plan.series.empty()) throw ConfigError("run has no post-warmup checkpoints");
  if (plan.series.size() < kStabilizationWindow) {
    plan.fell_back = true;
    plan.search = plan.series;
  } else {
    plan.search.assign(plan.series.end() - static_cast<std::ptrdiff_t>(kStabilizationWindow),
                       plan.series.end());
  }
  return plan;
}

}  // namespace sparsing
