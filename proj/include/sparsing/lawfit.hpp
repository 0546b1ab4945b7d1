#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace sparsing {

// One measurement of a training run: activation ratio after `tokens_seen` tokens.
// The trailing fields are carried through CSV files and ignored by the fitter.
struct SparsityPoint {
  std::uint64_t tokens_seen = 0;
  double activation_ratio = 0.0;
  double cett = std::numeric_limits<double>::quiet_NaN();
  double ppl_dense = std::numeric_limits<double>::quiet_NaN();
  double ppl_sparse = std::numeric_limits<double>::quiet_NaN();
};

enum class LawFamily {
  ReluLogspacePower,  // A(D) = exp(-c D^alpha + b) + A0, decreasing
  SiluPower,          // A(D) = -c / D^alpha + A0, increasing
};

std::string_view to_string(LawFamily f);
LawFamily parse_law_family(std::string_view name);

struct LawFitResult {
  LawFamily family = LawFamily::ReluLogspacePower;
  double alpha = 1.0;
  double b = 0.0;  // ReLU family only
  double c = 1.0;
  double a0 = 0.0;
  double rss = 0.0;
  double normalization = 1e6;  // D enters the law as tokens / normalization
  int iterations = 0;
  bool converged = false;
  int starts = 0;
  double d_min = 0.0;  // fitted range, raw tokens
  double d_max = 0.0;
};

// A(D) at raw token count D.
double eval_law(const LawFitResult& fit, double tokens);

// dA/dD with respect to raw tokens.
double law_derivative(const LawFitResult& fit, double tokens);

struct FitOptions {
  double normalization = 1e6;
  int max_iterations = 2000;
  double lambda0 = 1e-3;
};

// Levenberg-Marquardt least squares in activation-ratio space, multi-start, lowest RSS kept.
// Needs at least 6 points for the ReLU family and 5 for the SiLU family.
LawFitResult fit_law(std::span<const SparsityPoint> points, LawFamily family,
                     const FitOptions& opts = {});

struct TokensForTarget {
  enum class Status {
    Reachable,
    BeyondLimit,          // on the far side of the asymptote A0
    UnreachableDownward,  // increasing law already above the target at the smallest fitted D
  };
  Status status = Status::Reachable;
  double tokens = 0.0;
};

// Closed-form inversion of the fitted law.
TokensForTarget tokens_for_target(const LawFitResult& fit, double target_ratio);

struct CurveSample {
  double tokens = 0.0;
  double activation_ratio = 0.0;
  double derivative = 0.0;
};

// Log-spaced samples of the fitted curve and its derivative for plotting.
std::vector<CurveSample> sample_curve(const LawFitResult& fit, double d_min, double d_max, int n);

// CSV with columns tokens_seen, activation_ratio and optionally cett, ppl_dense, ppl_sparse.
std::string points_csv(std::span<const SparsityPoint> points);
std::vector<SparsityPoint> read_points_csv(const std::filesystem::path& path);
std::vector<SparsityPoint> parse_points_csv(std::string_view text);

// Coefficient table, one row per labelled fit: label, family, alpha, b, c, A0, rss, ...
struct LabelledFit {
  std::string label;
  LawFitResult fit;
};
std::string coefficients_csv(std::span<const LabelledFit> fits);
std::vector<LabelledFit> parse_coefficients_csv(std::string_view text);

std::string curve_csv(std::span<const CurveSample> samples);

}  // namespace sparsing
