#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sparsing/measure.hpp"

namespace sparsing {

inline constexpr int kDefaultMinOccurrences = 8;

// Activation pattern of one (checkpoint, dataset, mask) triple.
struct ActivationStats {
  Method method = Method::Dense;
  double param = 0.0;
  int n_layers = 0;
  int d_f = 0;
  std::int64_t tokens = 0;
  Eigen::MatrixXd per_neuron_frequency;            // n_layers x d_f, each in [0, 1]
  std::array<std::int64_t, 256> token_counts{};    // occurrences of every token id
  std::map<int, double> per_token_mean_ratio;      // ids with at least min_occurrences
  int min_occurrences = kDefaultMinOccurrences;
  int omitted_tokens = 0;  // ids seen, but fewer than min_occurrences times
  double aggregate_activation_ratio = 0.0;
};

ActivationStats stats_from_counter(const ActivationCounter& counter, const MaskConfig& mask,
                                   int min_occurrences = kDefaultMinOccurrences);

// Runs the masked forward pass over `dataset` and gathers the statistics.
ActivationStats collect_activation_stats(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                         const MaskConfig& mask, const EvalOptions& eval = {},
                                         int min_occurrences = kDefaultMinOccurrences);

struct Histogram {
  std::string label;
  int layer = -1;  // -1: all layers pooled
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;  // equal-width bins, last bin closed on the right
};

// Histogram of arbitrary values in [lo, hi].
Histogram make_histogram(std::span<const double> values, int bins, double lo = 0.0,
                         double hi = 1.0);

// Layers shown individually: first, ceil(L/2) (1-based) and last, duplicates removed.
std::vector<int> histogram_layers(int n_layers);

struct FrequencyHistograms {
  std::vector<Histogram> layers;
  Histogram aggregate;
};

FrequencyHistograms frequency_histogram(const ActivationStats& stats, int bins);
FrequencyHistograms frequency_histogram(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                        const MaskConfig& mask, int bins,
                                        const EvalOptions& eval = {});

struct TokenRatio {
  int token = 0;
  double mean_ratio = 0.0;
  std::int64_t occurrences = 0;
};

struct TokenTable {
  std::vector<TokenRatio> rows;  // by token id
  int min_occurrences = kDefaultMinOccurrences;
  int omitted_tokens = 0;
};

TokenTable token_activation_table(const ActivationStats& stats);
TokenTable token_activation_table(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                                  const MaskConfig& mask, const EvalOptions& eval = {},
                                  int min_occurrences = kDefaultMinOccurrences);

struct ComparisonPair {
  int token = 0;
  double a = 0.0;
  double b = 0.0;
};

struct Comparison {
  std::vector<ComparisonPair> pairs;
  double pearson_r = 0.0;  // NaN when either side has zero variance
  double mean_abs_diff = 0.0;
};

// Joins two per-token ratio maps on token id.
Comparison pairwise_compare(const std::map<int, double>& a, const std::map<int, double>& b);
Comparison pairwise_compare(const ActivationStats& a, const ActivationStats& b);

double pearson(std::span<const double> x, std::span<const double> y);

// Neuron groups of sizes t_1..t_G drawn from d_f neurons; groups may overlap.
struct GroupingSpec {
  std::int64_t d_f = 0;
  std::vector<std::int64_t> group_sizes;
};

// ln prod_i C(d_f, t_i) via log-gamma.
double log_specialization_count(const GroupingSpec& spec);

std::string histogram_csv(const FrequencyHistograms& h);
std::string token_table_csv(const TokenTable& t);
std::string comparison_csv(const Comparison& c);
std::string comparison_json(const Comparison& c);

}  // namespace sparsing
