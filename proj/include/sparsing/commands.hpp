#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "sparsing/analytics.hpp"
#include "sparsing/lawfit.hpp"
#include "sparsing/measure.hpp"
#include "sparsing/sparse_exec.hpp"
#include "sparsing/train.hpp"

namespace sparsing {

std::string_view code_version();

// Flags every subcommand accepts.
struct CommonArgs {
  std::filesystem::path config;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  int threads = 1;
};

struct TrainArgs {
  CommonArgs common;
  TrainConfig train;
  std::size_t synthetic_bytes = 3'000'000;  // used when train.corpus_path is empty
  int synthetic_topic = -1;
};

struct MeasureArgs {
  CommonArgs common;
  std::filesystem::path run;         // a train output directory: stabilized series
  std::filesystem::path checkpoint;  // or a single checkpoint
  std::filesystem::path corpus;      // defaults to the run's corpus
  double valid_fraction = 0.05;
  std::string method = "cett";
  double param = std::numeric_limits<double>::quiet_NaN();  // CETT: NaN searches with p
  double p = 1.0;
  double eps = 1e-4;
  int calib_tokens = 4096;
  std::size_t max_eval_tokens = 0;  // 0 uses the whole validation slice
};

struct FitArgs {
  CommonArgs common;
  std::filesystem::path points;
  std::string family = "relu";
  double normalization = 1e6;
  int curve_samples = 100;
  // Coefficient CSV: samples are generated from every row and fitted back.
  std::filesystem::path roundtrip;
  double roundtrip_lo = 2.0;  // normalized D range of the generated samples
  double roundtrip_hi = 1000.0;
  int roundtrip_points = 20;
};

struct BenchArgs {
  CommonArgs common;
  BenchConfig bench;
};

struct AnalyzeArgs {
  CommonArgs common;
  std::filesystem::path checkpoint;
  std::filesystem::path compare_checkpoint;  // optional second model for the token scatter
  std::vector<std::filesystem::path> corpora;
  double valid_fraction = 0.05;
  std::string method = "cett";
  double param = std::numeric_limits<double>::quiet_NaN();
  double p = 1.0;
  int calib_tokens = 4096;
  int bins = 20;
  int min_occurrences = kDefaultMinOccurrences;
  std::size_t max_eval_tokens = 0;
  std::int64_t groups_d_f = 0;  // with group_sizes: print ln T
  std::vector<std::int64_t> group_sizes;
};

struct SweepArgs {
  TrainArgs base;
  std::vector<double> ratios;
  std::uint64_t budget = 0;  // non-embedding parameters; 0 uses the base model's count
  double p = 1.0;
  double eps = 1e-4;
  int calib_tokens = 4096;
  std::size_t max_eval_tokens = 0;
};

struct SweepPlanEntry {
  double requested_ratio = 0.0;
  bool feasible = false;
  ModelConfig model;
  std::uint64_t params = 0;
  double budget_error = 0.0;  // relative
  std::string diagnostic;
};

// (d_h, n_layers) per width-depth ratio at a fixed non-embedding budget, sorted by ratio.
std::vector<SweepPlanEntry> plan_sweep(const ModelConfig& base, std::vector<double> ratios,
                                       std::uint64_t budget, double tolerance = 0.05);

// Each returns the process exit status; outputs go under common.out_dir.
int cmd_train(const TrainArgs& args, std::ostream& log);
int cmd_measure(const MeasureArgs& args, std::ostream& log);
int cmd_fit(const FitArgs& args, std::ostream& log);
int cmd_bench(const BenchArgs& args, std::ostream& log);
int cmd_analyze(const AnalyzeArgs& args, std::ostream& log);
int cmd_sweep(const SweepArgs& args, std::ostream& log);

// Validation slice of a corpus, optionally truncated.
TokenStream validation_stream(const std::filesystem::path& corpus, double valid_fraction,
                              std::size_t max_tokens = 0);

}  // namespace sparsing
