#include "sparsing/lawfit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "sparsing/io.hpp"
#include "sparsing/types.hpp"

namespace sparsing {

std::string_view to_string(LawFamily f) {
  return f == LawFamily::ReluLogspacePower ? "relu" : "silu";
}

LawFamily parse_law_family(std::string_view name) {
  if (name == "relu" || name == "ReluLogspacePower") return LawFamily::ReluLogspacePower;
  if (name == "silu" || name == "SiluPower") return LawFamily::SiluPower;
  throw ConfigError("unknown law family '" + std::string(name) + "' (expected relu or silu)");
}

namespace {

double normalized(const LawFitResult& fit, double tokens) {
  if (!(tokens > 0.0)) throw RangeError("token count must be positive");
  if (!(fit.normalization > 0.0)) throw RangeError("normalization must be positive");
  return tokens / fit.normalization;
}

// Internal parameter vector: ReLU [log a, b, log c, log A0], SiLU [log a, log c, log A0].
using Params = Eigen::VectorXd;

int param_count(LawFamily f) { return f == LawFamily::ReluLogspacePower ? 4 : 3; }

LawFitResult unpack(LawFamily f, const Params& p, double norm) {
  LawFitResult r;
  r.family = f;
  r.normalization = norm;
  r.alpha = std::exp(p(0));
  if (f == LawFamily::ReluLogspacePower) {
    r.b = p(1);
    r.c = std::exp(p(2));
    r.a0 = std::exp(p(3));
  } else {
    r.c = std::exp(p(1));
    r.a0 = std::exp(p(2));
  }
  return r;
}

struct Problem {
  LawFamily family;
  Eigen::ArrayXd x;  // normalized tokens
  Eigen::ArrayXd logx;
  Eigen::ArrayXd y;

  Eigen::ArrayXd residual(const Params& p) const {
    const double alpha = std::exp(p(0));
    if (family == LawFamily::ReluLogspacePower) {
      const double c = std::exp(p(2));
      return (-c * (alpha * logx).exp() + p(1)).exp() + std::exp(p(3)) - y;
    }
    const double c = std::exp(p(1));
    return -c * (-alpha * logx).exp() + std::exp(p(2)) - y;
  }

  Eigen::MatrixXd jacobian(const Params& p) const {
    const double alpha = std::exp(p(0));
    Eigen::MatrixXd j(x.size(), param_count(family));
    if (family == LawFamily::ReluLogspacePower) {
      const double c = std::exp(p(2));
      const Eigen::ArrayXd pw = (alpha * logx).exp();
      const Eigen::ArrayXd e = (-c * pw + p(1)).exp();
      j.col(0) = (-e * c * pw * logx * alpha).matrix();
      j.col(1) = e.matrix();
      j.col(2) = (-e * c * pw).matrix();
      j.col(3).setConstant(std::exp(p(3)));
    } else {
      const double c = std::exp(p(1));
      const Eigen::ArrayXd q = (-alpha * logx).exp();
      j.col(0) = (c * q * logx * alpha).matrix();
      j.col(1) = (-c * q).matrix();
      j.col(2).setConstant(std::exp(p(2)));
    }
    return j;
  }
};

struct LmOutcome {
  Params p;
  double rss = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

LmOutcome levenberg_marquardt(const Problem& prob, Params p, const FitOptions& opts) {
  LmOutcome out;
  Eigen::ArrayXd r = prob.residual(p);
  double rss = r.matrix().squaredNorm();
  if (!std::isfinite(rss)) return out;
  double lambda = opts.lambda0;
  int it = 0;
  bool converged = false;
  while (it < opts.max_iterations) {
    ++it;
    const Eigen::MatrixXd j = prob.jacobian(p);
    const Eigen::MatrixXd h = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r.matrix();
    if (g.lpNorm<Eigen::Infinity>() < 1e-300) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd damped = h;
      damped.diagonal() += lambda * (h.diagonal().array() + 1e-30).matrix();
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      const Params trial = p + step;
      const Eigen::ArrayXd rt = prob.residual(trial);
      const double rss_t = rt.matrix().squaredNorm();
      if (step.allFinite() && std::isfinite(rss_t) && rss_t < rss) {
        const bool small_change = rss - rss_t <= 1e-14 * rss;
        const bool small_step = step.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + p.lpNorm<Eigen::Infinity>());
        p = trial;
        r = rt;
        rss = rss_t;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (small_change || small_step || rss < 1e-30) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    // No descent direction left at any damping: a stationary point to working precision.
    if (!accepted) converged = true;
    if (converged) break;
  }
  out.p = p;
  out.rss = rss;
  out.iterations = it;
  out.converged = converged;
  return out;
}

// Least-squares line z = intercept + slope * u.
std::pair<double, double> line_fit(const Eigen::ArrayXd& u, const Eigen::ArrayXd& z) {
  const double mu = u.mean();
  const double mz = z.mean();
  const double suu = ((u - mu) * (u - mu)).sum();
  const double slope = suu > 0.0 ? ((u - mu) * (z - mz)).sum() / suu : 0.0;
  return {mz - slope * mu, slope};
}

std::vector<Params> initial_grid(const Problem& prob) {
  std::vector<Params> starts;
  const double ymin = prob.y.minCoeff();
  const double ymax = prob.y.maxCoeff();
  const double alphas[] = {0.3, 1.0};
  if (prob.family == LawFamily::ReluLogspacePower) {
    for (double a0 : {0.5 * ymin, 0.9 * ymin}) {
      const Eigen::ArrayXd z = (prob.y - a0).log();
      for (double alpha : alphas) {
        const auto [b, slope] = line_fit((alpha * prob.logx).exp(), z);
        const double c = std::max(-slope, 1e-6);
        Params p(4);
        p << std::log(alpha), b, std::log(c), std::log(a0);
        starts.push_back(p);
      }
    }
  } else {
    for (double a0 : {1.05 * ymax, 1.5 * ymax}) {
      const Eigen::ArrayXd z = (a0 - prob.y).log();
      for (double alpha : alphas) {
        // z = log c - alpha log x with alpha held at the grid value
        const double logc = (z + alpha * prob.logx).mean();
        Params p(3);
        p << std::log(alpha), logc, std::log(a0);
        starts.push_back(p);
      }
    }
  }
  return starts;
}

}  // namespace

double eval_law(const LawFitResult& fit, double tokens) {
  const double x = normalized(fit, tokens);
  if (fit.family == LawFamily::ReluLogspacePower) {
    return std::exp(-fit.c * std::pow(x, fit.alpha) + fit.b) + fit.a0;
  }
  return -fit.c * std::pow(x, -fit.alpha) + fit.a0;
}

double law_derivative(const LawFitResult& fit, double tokens) {
  const double x = normalized(fit, tokens);
  double d = 0.0;
  if (fit.family == LawFamily::ReluLogspacePower) {
    d = -fit.c * fit.alpha * std::pow(x, fit.alpha - 1.0) *
        std::exp(-fit.c * std::pow(x, fit.alpha) + fit.b);
  } else {
    d = fit.c * fit.alpha * std::pow(x, -fit.alpha - 1.0);
  }
  return d / fit.normalization;
}

LawFitResult fit_law(std::span<const SparsityPoint> points, LawFamily family,
                     const FitOptions& opts) {
  const std::size_t need = family == LawFamily::ReluLogspacePower ? 6 : 5;
  if (points.size() < need) {
    throw DataError("law fit needs at least " + std::to_string(need) + " points, got " +
                    std::to_string(points.size()));
  }
  if (!(opts.normalization > 0.0)) throw RangeError("normalization must be positive");

  Problem prob{family, {}, {}, {}};
  const auto n = static_cast<Eigen::Index>(points.size());
  prob.x.resize(n);
  prob.y.resize(n);
  double d_min = std::numeric_limits<double>::infinity();
  double d_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pt = points[static_cast<std::size_t>(i)];
    if (pt.tokens_seen == 0) throw DataError("fitted points need tokens_seen > 0");
    if (!(pt.activation_ratio > 0.0 && pt.activation_ratio <= 1.0)) {
      throw DataError("activation ratios must lie in (0, 1]");
    }
    const auto d = static_cast<double>(pt.tokens_seen);
    d_min = std::min(d_min, d);
    d_max = std::max(d_max, d);
    prob.x(i) = d / opts.normalization;
    prob.y(i) = pt.activation_ratio;
  }
  prob.logx = prob.x.log();

  LmOutcome best;
  int starts = 0;
  int total_iterations = 0;
  for (const Params& p0 : initial_grid(prob)) {
    if (!p0.allFinite()) continue;
    ++starts;
    LmOutcome o = levenberg_marquardt(prob, p0, opts);
    total_iterations += o.iterations;
    if (o.rss < best.rss || (best.p.size() == 0 && o.p.size() > 0)) best = std::move(o);
  }

  LawFitResult res;
  if (best.p.size() == 0) {
    res.family = family;
    res.normalization = opts.normalization;
    res.rss = std::numeric_limits<double>::infinity();
  } else {
    res = unpack(family, best.p, opts.normalization);
    res.rss = best.rss;
    res.converged = best.converged;
  }
  res.iterations = total_iterations;
  res.starts = starts;
  res.d_min = d_min;
  res.d_max = d_max;
  return res;
}

TokensForTarget tokens_for_target(const LawFitResult& fit, double target_ratio) {
  using S = TokensForTarget::Status;
  TokensForTarget out;
  if (fit.family == LawFamily::ReluLogspacePower) {
    if (target_ratio <= fit.a0) return {S::BeyondLimit, std::numeric_limits<double>::infinity()};
    const double z = fit.b - std::log(target_ratio - fit.a0);
    // z <= 0: the curve starts at or below the target.
    if (z <= 0.0) return {S::Reachable, 0.0};
    if (!(fit.c > 0.0)) return {S::BeyondLimit, std::numeric_limits<double>::infinity()};
    out.tokens = std::pow(z / fit.c, 1.0 / fit.alpha) * fit.normalization;
    return out;
  }
  if (target_ratio >= fit.a0) return {S::BeyondLimit, std::numeric_limits<double>::infinity()};
  if (!(fit.c > 0.0)) return {S::UnreachableDownward, 0.0};
  out.tokens = std::pow(fit.c / (fit.a0 - target_ratio), 1.0 / fit.alpha) * fit.normalization;
  if (fit.d_min > 0.0 && out.tokens < fit.d_min) out.status = S::UnreachableDownward;
  return out;
}

std::vector<CurveSample> sample_curve(const LawFitResult& fit, double d_min, double d_max, int n) {
  if (!(d_min > 0.0 && d_max >= d_min) || n < 1) throw RangeError("bad curve sample range");
  std::vector<CurveSample> out;
  const double l0 = std::log(d_min);
  const double l1 = std::log(d_max);
  for (int i = 0; i < n; ++i) {
    const double d = n == 1 ? d_min : std::exp(l0 + (l1 - l0) * i / (n - 1));
    out.push_back({d, eval_law(fit, d), law_derivative(fit, d)});
  }
  return out;
}

namespace {

double parse_double(const std::string& s) {
  if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_count(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec == std::errc() && res.ptr == s.data() + s.size()) return v;
  const double d = parse_double(s);  // tolerate 1e+06 style counts
  if (!(d >= 0.0)) throw DataError("bad token count '" + s + "'");
  return static_cast<std::uint64_t>(std::llround(d));
}

std::optional<std::size_t> find_column(const io::CsvTable& t, std::string_view name) {
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace

std::string points_csv(std::span<const SparsityPoint> points) {
  io::CsvWriter w({"tokens_seen", "activation_ratio", "cett", "ppl_dense", "ppl_sparse"});
  for (const auto& p : points) w.add(p.tokens_seen, p.activation_ratio, p.cett, p.ppl_dense, p.ppl_sparse);
  return w.str();
}

std::vector<SparsityPoint> parse_points_csv(std::string_view text) {
  const io::CsvTable t = io::parse_csv(text);
  const std::size_t ct = t.column("tokens_seen");
  const std::size_t ca = t.column("activation_ratio");
  const auto cc = find_column(t, "cett");
  const auto cd = find_column(t, "ppl_dense");
  const auto cs = find_column(t, "ppl_sparse");
  std::vector<SparsityPoint> out;
  for (const auto& row : t.rows) {
    SparsityPoint p;
    p.tokens_seen = parse_count(row.at(ct));
    p.activation_ratio = parse_double(row.at(ca));
    if (cc) p.cett = parse_double(row.at(*cc));
    if (cd) p.ppl_dense = parse_double(row.at(*cd));
    if (cs) p.ppl_sparse = parse_double(row.at(*cs));
    out.push_back(p);
  }
  return out;
}

std::vector<SparsityPoint> read_points_csv(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  return parse_points_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string coefficients_csv(std::span<const LabelledFit> fits) {
  io::CsvWriter w({"label", "family", "alpha", "b", "c", "A0", "rss", "normalization",
                   "iterations", "converged"});
  for (const auto& f : fits) {
    const auto& r = f.fit;
    w.add(f.label, to_string(r.family), r.alpha,
          r.family == LawFamily::ReluLogspacePower ? io::format_double(r.b) : std::string("-"),
          r.c, r.a0, r.rss, r.normalization, r.iterations, r.converged ? "true" : "false");
  }
  return w.str();
}

std::vector<LabelledFit> parse_coefficients_csv(std::string_view text) {
  const io::CsvTable t = io::parse_csv(text);
  const std::size_t cl = t.column("label");
  const std::size_t cf = t.column("family");
  const std::size_t ca = t.column("alpha");
  const std::size_t cb = t.column("b");
  const std::size_t cc = t.column("c");
  const std::size_t c0 = t.column("A0");
  const auto cn = find_column(t, "normalization");
  std::vector<LabelledFit> out;
  for (const auto& row : t.rows) {
    LabelledFit f;
    f.label = row.at(cl);
    f.fit.family = parse_law_family(row.at(cf));
    f.fit.alpha = parse_double(row.at(ca));
    f.fit.b = row.at(cb) == "-" ? 0.0 : parse_double(row.at(cb));
    f.fit.c = parse_double(row.at(cc));
    f.fit.a0 = parse_double(row.at(c0));
    if (cn) f.fit.normalization = parse_double(row.at(*cn));
    f.fit.converged = true;
    out.push_back(f);
  }
  return out;
}

std::string curve_csv(std::span<const CurveSample> samples) {
  io::CsvWriter w({"tokens", "activation_ratio", "derivative"});
  for (const auto& s : samples) w.add(s.tokens, s.activation_ratio, s.derivative);
  return w.str();
}

}  // namespace sparsing
