#include "sparsing/sparse_exec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include <json.hpp>

#include "sparsing/io.hpp"

namespace sparsing {

std::string_view to_string(ExecMode m) {
  return m == ExecMode::GateThreshold ? "gate" : "norm";
}

ExecMode parse_exec_mode(std::string_view name) {
  if (name == "gate") return ExecMode::GateThreshold;
  if (name == "norm") return ExecMode::NormThreshold;
  throw ConfigError("unknown execution mode '" + std::string(name) + "' (expected gate or norm)");
}

SparseFfnKernel SparseFfnKernel::from(const FfnWeights<float>& w, Activation act) {
  w.validate();
  SparseFfnKernel k;
  k.w_gate = w.w_gate;
  k.w_in = w.w_in;
  k.w_out = w.w_out;
  k.out_norms = w.w_out.colwise().norm().transpose();
  k.act = act;
  return k;
}

namespace {

void check_kernel_input(const VecF& x, const SparseFfnKernel& k) {
  if (k.w_in.rows() != k.d_f() || k.w_in.cols() != k.d_h() || k.w_out.rows() != k.d_h() ||
      k.w_out.cols() != k.d_f() || k.out_norms.size() != k.d_f()) {
    throw DimensionError("sparse FFN kernel shapes are inconsistent");
  }
  if (x.size() != k.d_h()) throw DimensionError("input length does not match d_h");
}

}  // namespace

SparseFfnResult sparse_ffn(const VecF& x, const SparseFfnKernel& k, double eps, ExecMode mode,
                           MacCounter* macs) {
  check_kernel_input(x, k);
  if (!(eps >= 0.0)) throw RangeError("threshold must be non-negative");
  const Eigen::Index d_h = k.d_h();
  const Eigen::Index d_f = k.d_f();
  SparseFfnResult res;
  res.y = VecF::Zero(d_h);
  const VecF g = k.w_gate * x;
  if (macs) macs->gate += d_h * d_f;

  // Active neurons and their coefficients first, then the output columns four at a time
  // so y is read and written once per group.
  std::vector<Eigen::Index> idx;
  std::vector<float> coef;
  idx.reserve(static_cast<std::size_t>(d_f));
  coef.reserve(static_cast<std::size_t>(d_f));
  if (mode == ExecMode::GateThreshold) {
    for (Eigen::Index i = 0; i < d_f; ++i) {
      const float s = activate(g(i), k.act);
      const bool weak = eps == 0.0 ? s == 0.0f : std::abs(static_cast<double>(s)) < eps;
      if (weak) continue;
      idx.push_back(i);
      coef.push_back(s * k.w_in.row(i).dot(x));
    }
    if (macs) macs->in += d_h * static_cast<std::int64_t>(idx.size());
  } else {
    const VecF u = k.w_in * x;
    if (macs) macs->in += d_h * d_f;
    for (Eigen::Index i = 0; i < d_f; ++i) {
      const float c = activate(g(i), k.act) * u(i);
      if (static_cast<double>(std::abs(c) * k.out_norms(i)) < eps) continue;
      idx.push_back(i);
      coef.push_back(c);
    }
  }
  const std::size_t n = idx.size();
  if (n == static_cast<std::size_t>(d_f)) {
    // nothing skipped: one matrix-vector product over the same columns
    res.y.noalias() = k.w_out * Eigen::Map<const VecF>(coef.data(), d_f);
  } else {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      res.y.noalias() += coef[j] * k.w_out.col(idx[j]) + coef[j + 1] * k.w_out.col(idx[j + 1]) +
                         coef[j + 2] * k.w_out.col(idx[j + 2]) + coef[j + 3] * k.w_out.col(idx[j + 3]);
    }
    for (; j < n; ++j) res.y.noalias() += coef[j] * k.w_out.col(idx[j]);
  }
  res.active_count = static_cast<int>(n);
  if (macs) macs->out += d_h * static_cast<std::int64_t>(n);
  return res;
}

VecF dense_ffn(const VecF& x, const SparseFfnKernel& k) {
  check_kernel_input(x, k);
  const VecF h = (activate_array((k.w_gate * x).array(), k.act) * (k.w_in * x).array()).matrix();
  return k.w_out * h;
}

FlopCount flop_count(std::int64_t d_h, std::int64_t d_f, double r, ExecMode mode) {
  if (!(r >= 0.0 && r <= 1.0)) throw RangeError("activation ratio must lie in [0, 1]");
  if (d_h <= 0 || d_f <= 0) throw RangeError("dimensions must be positive");
  const double base = static_cast<double>(d_h) * static_cast<double>(d_f);
  FlopCount f;
  f.dense = 3.0 * base;
  f.sparse = mode == ExecMode::GateThreshold ? base * (1.0 + 2.0 * r) : base * (2.0 + r);
  return f;
}

double transfer_threshold(const MatF& s, const MatF& norms, double norm_eps) {
  if (s.rows() != norms.rows() || s.cols() != norms.cols() || s.size() == 0) {
    throw DimensionError("calibration matrices must be non-empty and equally shaped");
  }
  const auto weak = static_cast<std::size_t>((norms.array().cast<double>() < norm_eps).count());
  if (weak == 0) return 0.0;
  std::vector<float> mag(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(s(i));
  std::sort(mag.begin(), mag.end());
  if (weak >= mag.size()) return std::nextafter(static_cast<double>(mag.back()), INFINITY);
  // Everything strictly below the (weak)-th smallest magnitude is skipped.
  return static_cast<double>(mag[weak]);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Threshold under which exactly `keep` neurons survive, given per-neuron scores.
double exact_count_threshold(const VecF& score, Eigen::Index keep) {
  if (keep <= 0) return std::numeric_limits<double>::infinity();
  std::vector<float> v(score.data(), score.data() + score.size());
  std::nth_element(v.begin(), v.begin() + (keep - 1), v.end(), std::greater<>());
  return static_cast<double>(v[static_cast<std::size_t>(keep - 1)]);
}

template <typename F>
double time_ns(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

}  // namespace

std::vector<BenchReport> bench(const BenchConfig& cfg) {
  if (cfg.d_h <= 0 || cfg.d_f <= 0 || cfg.tokens <= 0 || cfg.repeats <= 0) {
    throw ConfigError("bench dimensions, tokens and repeats must be positive");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto fill = [&](auto& m, float scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * scale;
  };
  FfnWeights<float> w;
  w.w_gate.resize(cfg.d_f, cfg.d_h);
  w.w_in.resize(cfg.d_f, cfg.d_h);
  w.w_out.resize(cfg.d_h, cfg.d_f);
  fill(w.w_gate, 1.0f / std::sqrt(static_cast<float>(cfg.d_h)));
  fill(w.w_in, 1.0f / std::sqrt(static_cast<float>(cfg.d_h)));
  fill(w.w_out, 1.0f / std::sqrt(static_cast<float>(cfg.d_f)));
  const SparseFfnKernel k = SparseFfnKernel::from(w, cfg.act);
  MatF xs(cfg.d_h, cfg.tokens);
  fill(xs, 1.0f);
  std::vector<VecF> inputs;
  for (int t = 0; t < cfg.tokens; ++t) inputs.emplace_back(xs.col(t));

  volatile float sink = 0.0f;
  auto run_dense = [&] {
    for (const auto& x : inputs) sink = sink + dense_ffn(x, k)(0);
  };
  for (int i = 0; i < cfg.warmup; ++i) run_dense();

  // Per-token scores in double for the reference.
  const MatD wg = w.w_gate.cast<double>();
  const MatD wi = w.w_in.cast<double>();
  const MatD wo = w.w_out.cast<double>();

  std::vector<BenchReport> out;
  for (double sparsity : cfg.sparsity) {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw RangeError("sparsity must lie in [0, 1]");
    const auto keep = static_cast<Eigen::Index>(std::lround((1.0 - sparsity) * cfg.d_f));

    std::vector<double> eps(inputs.size());
    double max_err = 0.0;
    std::int64_t active = 0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const VecF g = k.w_gate * inputs[t];
      VecF s(g.size());
      for (Eigen::Index i = 0; i < g.size(); ++i) s(i) = activate(g(i), cfg.act);  // as in the kernel
      VecF score;
      if (cfg.mode == ExecMode::GateThreshold) {
        score = s.cwiseAbs();
      } else {
        score = (s.array() * (k.w_in * inputs[t]).array()).abs() * k.out_norms.array();
      }
      eps[t] = exact_count_threshold(score, keep);
      const SparseFfnResult r = sparse_ffn(inputs[t], k, eps[t], cfg.mode);
      active += r.active_count;

      // Reference: dense output minus the skipped neurons' contributions, in double.
      const VecD xd = inputs[t].cast<double>();
      const VecD sd = activate_array((wg * xd).array(), cfg.act).matrix();
      const VecD hd = (sd.array() * (wi * xd).array()).matrix();
      VecD tail = VecD::Zero(hd.size());
      for (Eigen::Index i = 0; i < hd.size(); ++i) {
        const double sc = static_cast<double>(score(i));
        const bool weak = cfg.mode == ExecMode::GateThreshold && eps[t] == 0.0 ? s(i) == 0.0f
                                                                              : sc < eps[t];
        if (weak) tail(i) = hd(i);
      }
      const VecD ref = wo * hd - wo * tail;
      const double rn = ref.norm();
      const double diff = (r.y.cast<double>() - ref).norm();
      max_err = std::max(max_err, rn > 0.0 ? diff / rn : diff);
    }

    auto run_sparse = [&] {
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        sink = sink + sparse_ffn(inputs[t], k, eps[t], cfg.mode).y(0);
      }
    };
    for (int i = 0; i < cfg.warmup; ++i) run_sparse();
    // dense and sparse passes alternate so drift in machine load hits both
    std::vector<double> dense_ns, sparse_ns;
    for (int i = 0; i < cfg.repeats; ++i) {
      dense_ns.push_back(time_ns(run_dense));
      sparse_ns.push_back(time_ns(run_sparse));
    }

    BenchReport rep;
    rep.d_h = cfg.d_h;
    rep.d_f = cfg.d_f;
    rep.sparsity = sparsity;
    rep.activation_ratio =
        static_cast<double>(active) / (static_cast<double>(cfg.tokens) * cfg.d_f);
    rep.mode = cfg.mode;
    rep.tokens = cfg.tokens;
    rep.threads = 1;
    rep.ns_per_token_dense = median(dense_ns) / cfg.tokens;
    rep.ns_per_token_sparse = median(sparse_ns) / cfg.tokens;
    rep.speedup = rep.ns_per_token_dense / rep.ns_per_token_sparse;
    const FlopCount f = flop_count(cfg.d_h, cfg.d_f, rep.activation_ratio, cfg.mode);
    rep.flops_dense = f.dense;
    rep.flops_sparse = f.sparse;
    rep.max_rel_error = max_err;
    out.push_back(rep);
  }
  return out;
}

std::string bench_csv(const std::vector<BenchReport>& reports) {
  io::CsvWriter w({"d_h", "d_f", "sparsity", "activation_ratio", "mode", "tokens", "threads",
                   "ns_per_token_dense", "ns_per_token_sparse", "speedup", "flops_dense",
                   "flops_sparse", "max_rel_error"});
  for (const auto& r : reports) {
    w.add(r.d_h, r.d_f, r.sparsity, r.activation_ratio, to_string(r.mode), r.tokens, r.threads,
          r.ns_per_token_dense, r.ns_per_token_sparse, r.speedup, r.flops_dense, r.flops_sparse,
          r.max_rel_error);
  }
  return w.str();
}

std::string bench_json(const std::vector<BenchReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"d_h", r.d_h},
                   {"d_f", r.d_f},
                   {"sparsity", r.sparsity},
                   {"activation_ratio", r.activation_ratio},
                   {"mode", std::string(to_string(r.mode))},
                   {"tokens", r.tokens},
                   {"threads", r.threads},
                   {"ns_per_token_dense", r.ns_per_token_dense},
                   {"ns_per_token_sparse", r.ns_per_token_sparse},
                   {"speedup", r.speedup},
                   {"flops_dense", r.flops_dense},
                   {"flops_sparse", r.flops_sparse},
                   {"max_rel_error", r.max_rel_error}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace sparsing
