#include "sparsing/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "sparsing/io.hpp"

namespace sparsing {

ActivationStats stats_from_counter(const ActivationCounter& counter, const MaskConfig& mask,
                                   int min_occurrences) {
  if (counter.tokens() == 0) throw DataError("no tokens observed");
  if (min_occurrences < 1) throw RangeError("occurrence floor must be at least 1");
  ActivationStats st;
  st.method = mask.method;
  st.param = mask.param;
  st.n_layers = counter.layers();
  st.d_f = counter.d_f();
  st.tokens = counter.tokens();
  st.per_neuron_frequency = counter.neuron_frequencies();
  st.token_counts = counter.token_occurrences();
  st.min_occurrences = min_occurrences;
  st.aggregate_activation_ratio = counter.aggregate_activation_ratio();
  const auto& sums = counter.token_ratio_sums();
  for (std::size_t id = 0; id < st.token_counts.size(); ++id) {
    const std::int64_t n = st.token_counts[id];
    if (n == 0) continue;
    if (n < min_occurrences) {
      ++st.omitted_tokens;
      continue;
    }
    st.per_token_mean_ratio[static_cast<int>(id)] = sums[id] / static_cast<double>(n);
  }
  return st;
}

ActivationStats collect_activation_stats(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                         const MaskConfig& mask, const EvalOptions& eval,
                                         int min_occurrences) {
  if (dataset.size() < 2) throw DataError("analytics dataset is empty");
  ActivationCounter counter(ckpt);
  EvalOptions o = eval;
  o.observer = &counter;
  evaluate_ppl(ckpt, dataset, &mask, o);
  return stats_from_counter(counter, mask, min_occurrences);
}

Histogram make_histogram(std::span<const double> values, int bins, double lo, double hi) {
  if (bins < 1) throw RangeError("histogram needs at least one bin");
  if (!(hi > lo)) throw RangeError("histogram range is empty");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) throw RangeError("histogram value outside [lo, hi]");
    auto b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::min(b, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::vector<int> histogram_layers(int n_layers) {
  if (n_layers < 1) throw RangeError("model has no layers");
  std::vector<int> out{0, (n_layers + 1) / 2 - 1, n_layers - 1};
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FrequencyHistograms frequency_histogram(const ActivationStats& stats, int bins) {
  FrequencyHistograms out;
  const Eigen::MatrixXd& f = stats.per_neuron_frequency;
  for (int l : histogram_layers(stats.n_layers)) {
    const Eigen::VectorXd row = f.row(l).transpose();
    Histogram h = make_histogram(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), bins);
    h.layer = l;
    h.label = l == 0 ? "first" : (l == stats.n_layers - 1 ? "last" : "middle");
    if (l == 0 && stats.n_layers > 1 && l == (stats.n_layers + 1) / 2 - 1) h.label = "first/middle";
    out.layers.push_back(std::move(h));
  }
  std::vector<double> all(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) all[static_cast<std::size_t>(i)] = f.data()[i];
  out.aggregate = make_histogram(all, bins);
  out.aggregate.label = "all";
  return out;
}

FrequencyHistograms frequency_histogram(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                        const MaskConfig& mask, int bins, const EvalOptions& eval) {
  return frequency_histogram(collect_activation_stats(ckpt, dataset, mask, eval), bins);
}

TokenTable token_activation_table(const ActivationStats& stats) {
  TokenTable t;
  t.min_occurrences = stats.min_occurrences;
  t.omitted_tokens = stats.omitted_tokens;
  for (const auto& [id, ratio] : stats.per_token_mean_ratio) {
    t.rows.push_back({id, ratio, stats.token_counts[static_cast<std::size_t>(id)]});
  }
  return t;
}

TokenTable token_activation_table(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                  const MaskConfig& mask, const EvalOptions& eval,
                                  int min_occurrences) {
  return token_activation_table(collect_activation_stats(ckpt, dataset, mask, eval, min_occurrences));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw DimensionError("pearson needs equal non-empty inputs");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

Comparison pairwise_compare(const std::map<int, double>& a, const std::map<int, double>& b) {
  Comparison c;
  std::vector<double> xa, xb;
  double abs_sum = 0.0;
  for (const auto& [id, va] : a) {
    const auto it = b.find(id);
    if (it == b.end()) continue;
    c.pairs.push_back({id, va, it->second});
    xa.push_back(va);
    xb.push_back(it->second);
    abs_sum += std::abs(va - it->second);
  }
  if (c.pairs.empty()) throw DataError("the two token tables share no token");
  c.mean_abs_diff = abs_sum / static_cast<double>(c.pairs.size());
  c.pearson_r = pearson(xa, xb);
  return c;
}

Comparison pairwise_compare(const ActivationStats& a, const ActivationStats& b) {
  return pairwise_compare(a.per_token_mean_ratio, b.per_token_mean_ratio);
}

double log_specialization_count(const GroupingSpec& spec) {
  if (spec.d_f < 1) throw RangeError("d_f must be positive");
  if (spec.group_sizes.empty()) throw RangeError("need at least one group");
  const auto n = static_cast<double>(spec.d_f);
  double total = 0.0;
  for (std::int64_t t : spec.group_sizes) {
    if (t < 1 || t > spec.d_f) {
      throw RangeError("group size " + std::to_string(t) + " outside [1, " + std::to_string(spec.d_f) + "]");
    }
    const auto k = static_cast<double>(t);
    total += std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  }
  return total;
}

std::string histogram_csv(const FrequencyHistograms& h) {
  io::CsvWriter w({"view", "layer", "bin_lo", "bin_hi", "count"});
  auto emit = [&w](const Histogram& hist) {
    const auto bins = static_cast<double>(hist.counts.size());
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
      const double lo = hist.lo + (hist.hi - hist.lo) * static_cast<double>(i) / bins;
      const double hi = hist.lo + (hist.hi - hist.lo) * static_cast<double>(i + 1) / bins;
      w.add(hist.label, hist.layer, lo, hi, hist.counts[i]);
    }
  };
  for (const auto& l : h.layers) emit(l);
  emit(h.aggregate);
  return w.str();
}

std::string token_table_csv(const TokenTable& t) {
  io::CsvWriter w({"token", "mean_activation_ratio", "occurrences"});
  for (const auto& r : t.rows) w.add(r.token, r.mean_ratio, r.occurrences);
  return w.str();
}

std::string comparison_csv(const Comparison& c) {
  io::CsvWriter w({"token", "ratio_a", "ratio_b"});
  for (const auto& p : c.pairs) w.add(p.token, p.a, p.b);
  return w.str();
}

std::string comparison_json(const Comparison& c) {
  nlohmann::json j;
  j["pairs"] = c.pairs.size();
  j["pearson_r"] = std::isfinite(c.pearson_r) ? nlohmann::json(c.pearson_r) : nlohmann::json(nullptr);
  j["mean_abs_diff"] = c.mean_abs_diff;
  return j.dump(2) + "\n";
}

}  // namespace sparsing
