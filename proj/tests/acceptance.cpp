// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "sparsing/analytics.hpp"
#include "sparsing/cett.hpp"
#include "sparsing/io.hpp"
#include "sparsing/lawfit.hpp"
#include "sparsing/measure.hpp"
#include "sparsing/search.hpp"
#include "sparsing/sparse_exec.hpp"
#include "sparsing/train.hpp"

using namespace sparsing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return io::format_double(v); }

std::mt19937_64& rng() {
  static std::mt19937_64 r(20240601);
  return r;
}

MatD gaussian(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng());
  return m;
}

// ---- 1 ----------------------------------------------------------------------

Outcome ffn_decomposition() {
  const auto t0 = std::chrono::steady_clock::now();
  std::uniform_int_distribution<int> dim(1, 64);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0, worst_complement = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const int d_h = dim(rng());
    const int d_f = dim(rng());
    const Activation act = coin(rng()) ? Activation::ReLU : Activation::SiLU;
    FfnWeights<float> w{gaussian(d_f, d_h).cast<float>(), gaussian(d_f, d_h).cast<float>(),
                        gaussian(d_h, d_f).cast<float>()};
    const VecF x = gaussian(d_h, 1).cast<float>();
    const VecF y = ffn_forward(x, w, act);
    VecD sum = VecD::Zero(d_h);
    for (int i = 0; i < d_f; ++i) sum += neuron_output(i, x, w, act).cast<double>();
    if (y.norm() > 0) worst = std::max(worst, (y.cast<double>() - sum).norm() / y.cast<double>().norm());

    std::vector<int> weak;
    for (int i = 0; i < d_f; ++i) if (coin(rng())) weak.push_back(i);
    const VecD kept = ffn_forward_masked(x, w, act, weak).cast<double>();
    const VecD tail = ffn_tail(x, w, act, weak).cast<double>();
    if (y.norm() > 0) {
      worst_complement = std::max(worst_complement, (kept + tail - y.cast<double>()).norm() / y.cast<double>().norm());
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && worst_complement < 1e-5 && secs < 10.0,
          "max decomposition error " + fmt(worst) + ", complement " + fmt(worst_complement) + ", " +
              fmt(secs) + " s"};
}

// ---- 2 ----------------------------------------------------------------------

Outcome cett_golden() {
  const auto t0 = std::chrono::steady_clock::now();
  const FfnWeights<double> w{gaussian(30, 12), gaussian(30, 12), gaussian(12, 30)};
  const VecD x = gaussian(12, 1);
  std::vector<int> all(30);
  std::iota(all.begin(), all.end(), 0);
  const double none = *compute_cett(x, w, Activation::SiLU, std::span<const int>());
  const double full = *compute_cett(x, w, Activation::SiLU, all);

  FfnWeights<double> two;
  two.w_gate = (MatD(2, 2) << 1, 0, 1, 0).finished();
  two.w_in = two.w_gate;
  two.w_out = (MatD(2, 2) << 3, 0, 0, 4).finished();
  const VecD e0 = (VecD(2) << 1, 0).finished();
  const double golden = *compute_cett(e0, two, Activation::ReLU, std::vector<int>{0});

  const VecD n = neuron_norms(x, w, Activation::SiLU, out_column_norms(w));
  bool nested = true;
  WeakSet prev = recognize_cett(n, 0.0);
  for (int i = 1; i <= 50; ++i) {
    const WeakSet cur = recognize_cett(n, n.maxCoeff() * 1.1 * i / 50.0);
    nested = nested && std::includes(cur.indices.begin(), cur.indices.end(), prev.indices.begin(), prev.indices.end());
    prev = cur;
  }
  const double secs = seconds_since(t0);
  const bool ok = none == 0.0 && std::abs(full - 1.0) < 1e-12 && std::abs(golden - 0.6) < 1e-12 && nested &&
                  secs < 5.0;
  return {ok, "D empty " + fmt(none) + ", D all " + fmt(full) + ", two-neuron " + fmt(golden) +
                  ", nesting " + (nested ? "holds" : "broken") + ", " + fmt(secs) + " s"};
}

// ---- 3 ----------------------------------------------------------------------

class LinearStub : public LossOracle {
 public:
  std::size_t checkpoint_count() const override { return 1; }
  double dense_loss(std::size_t) override { return 2.0; }
  double sparse_loss(std::size_t, double c) override { return 2.0 + std::log(1.0 + 0.05 * c); }
};

Outcome algorithm_contract() {
  LinearStub stub;
  const auto p1 = search_cett_hyperparameter(stub, 1.0, 1e-4);
  const auto p0 = search_cett_hyperparameter(stub, 0.0, 1e-4);

  // Hand-simulated bisection with eps = 0.1: probes 0.5, 0.25, 0.125, 0.1875.
  const auto tr = search_cett_hyperparameter(stub, 1.0, 0.1);
  const std::vector<std::array<double, 3>> want{{0.0, 1.0, 0.5}, {0.0, 0.5, 0.25}, {0.0, 0.25, 0.125}, {0.125, 0.25, 0.1875}};
  bool trace_ok = tr.trace.size() == want.size() && tr.cett == 0.21875;
  for (std::size_t i = 0; trace_ok && i < want.size(); ++i) {
    const auto& p = tr.trace[i];
    trace_ok = p.l == want[i][0] && p.r == want[i][1] && p.mid == want[i][2] &&
               std::abs(p.mean_ppl_ratio - (1.0 + 0.05 * p.mid)) < 1e-12;
  }
  const bool ok = std::abs(p1.cett - 0.2) <= 1e-4 && p0.cett < 1e-4 && trace_ok;
  return {ok, "p=1 -> " + fmt(p1.cett) + ", p=0 -> " + fmt(p0.cett) + ", trace " + (trace_ok ? "matches" : "differs")};
}

// ---- trained models for 4, 5, 7 and 10 ----------------------------------------

struct Trained {
  TrainConfig cfg;
  TrainResult run;
  TokenStream valid;
};

constexpr std::size_t kEvalTokens = 16384;

const TokenStream& corpus() {
  static const TokenStream c = [] {
    SyntheticCorpusOptions o;
    o.bytes = 3'000'000;
    o.seed = 1;
    return generate_synthetic_corpus(o);
  }();
  return c;
}

Trained train_model(Activation act) {
  Trained t;
  t.cfg.model.d_h = 64;
  t.cfg.model.d_f = ModelConfig::default_d_f(64);
  t.cfg.model.n_layers = 2;
  t.cfg.model.n_heads = 4;
  t.cfg.model.max_seq_len = 64;
  t.cfg.model.activation = act;
  t.cfg.model.seed = 1;
  t.cfg.total_tokens = 2'000'000;
  const auto t0 = std::chrono::steady_clock::now();
  t.run = train(t.cfg, corpus());
  std::fprintf(stderr, "trained %s model in %.1f s, final loss %.4f\n", std::string(to_string(act)).c_str(),
               seconds_since(t0), t.run.manifest.losses.back().loss);
  t.valid = split_corpus(corpus(), t.cfg.valid_fraction).valid;
  if (t.valid.size() > kEvalTokens) t.valid.resize(kEvalTokens);
  return t;
}

Trained& relu_model() {
  static Trained t = train_model(Activation::ReLU);
  return t;
}

Trained& silu_model() {
  static Trained t = train_model(Activation::SiLU);
  return t;
}

MeasureOptions measure_opts() {
  MeasureOptions o;
  o.calib_tokens = 4096;
  return o;
}

// ---- 4 ----------------------------------------------------------------------

Outcome monotonicity() {
  const auto& m = relu_model();
  const Checkpoint& ck = m.run.checkpoints.back();
  std::vector<double> ppl, sparsity;
  std::ostringstream series;
  for (int i = 0; i <= 10; ++i) {
    const double c = 0.05 * i;
    const auto rep = measure_activation_ratio(ck, m.valid, Method::CETT, c, measure_opts());
    ppl.push_back(rep.ppl_sparse);
    sparsity.push_back(rep.sparsity_ratio());
    series << (i ? "; " : "") << fmt(c) << ":" << fmt(rep.ppl_sparse) << "/" << fmt(rep.sparsity_ratio());
  }
  bool ok = true;
  for (std::size_t i = 1; i < ppl.size(); ++i) {
    ok = ok && ppl[i] >= ppl[i - 1] - 1e-6 && sparsity[i] >= sparsity[i - 1];
  }
  return {ok, "CETT:ppl/sparsity " + series.str()};
}

// ---- 5 ----------------------------------------------------------------------

// Parameter of a threshold family whose activation ratio is closest to `target` without
// exceeding it by more than the matching tolerance. The ratio falls as the parameter rises.
constexpr double kMatchTol = 5e-3;

std::pair<double, SparsityReport> match_ratio(const Checkpoint& ck, const TokenStream& valid, Method method,
                                              double target, double lo, double hi) {
  SparsityReport best;
  best.aggregate_activation_ratio = -1.0;
  double best_p = hi;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto rep = measure_activation_ratio(ck, valid, method, mid, measure_opts());
    const double r = rep.aggregate_activation_ratio;
    if (r <= target + kMatchTol && r > best.aggregate_activation_ratio) {
      best = rep;
      best_p = mid;
    }
    if (std::abs(r - target) < 1e-3) break;
    (r > target ? lo : hi) = mid;
  }
  return {best_p, best};
}

struct TradeOff {
  bool pass = false;
  bool matched = false;  // both threshold rules within the tolerance of the target
  std::string text;
};

// CETT against top-k and FAT near `target`. CETT may keep fewer neurons than either rival
// but never more, so a missed match only makes the comparison harder for CETT.
TradeOff compare_at(const Checkpoint& ck, const TokenStream& valid, double target) {
  const int k = static_cast<int>(std::lround(target * ck.config.d_f));
  const auto topk = measure_activation_ratio(ck, valid, Method::TopK, k, measure_opts());
  const auto [fat_eps, fat] = match_ratio(ck, valid, Method::FAT, target, 0.0, 10.0);
  const auto [cett_c, cett] = match_ratio(ck, valid, Method::CETT, target, 0.0, 1.0);
  const double rc = cett.aggregate_activation_ratio;
  const bool no_denser = rc >= 0.0 && rc <= topk.aggregate_activation_ratio + kMatchTol &&
                         rc <= fat.aggregate_activation_ratio + kMatchTol;
  const bool ok = no_denser && cett.ppl_sparse <= topk.ppl_sparse * 1.02 && cett.ppl_sparse <= fat.ppl_sparse * 1.02;
  std::string t = "target " + fmt(target) + ": CETT " + fmt(cett_c) + " ratio " + fmt(rc) + " ppl " +
                  fmt(cett.ppl_sparse) + ", top-k " + std::to_string(k) + " ratio " +
                  fmt(topk.aggregate_activation_ratio) + " ppl " + fmt(topk.ppl_sparse) + ", FAT " + fmt(fat_eps) +
                  " ratio " + fmt(fat.aggregate_activation_ratio) + " ppl " + fmt(fat.ppl_sparse);
  const bool matched = std::abs(rc - target) <= kMatchTol &&
                       std::abs(fat.aggregate_activation_ratio - target) <= kMatchTol;
  return {ok, matched, t};
}

Outcome method_tradeoff() {
  const auto& m = relu_model();
  const Checkpoint& ck = m.run.checkpoints.back();
  const auto zeros = measure_activation_ratio(ck, m.valid, Method::FAT, 0.0, measure_opts());
  const auto half = compare_at(ck, m.valid, 0.5);
  // Below the zero floor every method can hit the target, so this one is matched exactly.
  const auto quarter = compare_at(ck, m.valid, 0.25);
  return {half.pass && quarter.pass && quarter.matched,
          "dense ppl " + fmt(zeros.ppl_dense) + ", ratio with exact zeros skipped " +
              fmt(zeros.aggregate_activation_ratio) + "; " + half.text + (half.matched ? "" : " (not attainable, CETT sparser)") +
              "; " + quarter.text + (quarter.matched ? "" : " (match missed)")};
}

// ---- 6 ----------------------------------------------------------------------

Outcome law_round_trips() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bytes = io::read_bytes(fs::path(SPARSING_DATA_DIR) / "reference_coefficients.csv");
  const auto rows = parse_coefficients_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  double worst = 0.0, worst_deriv = 0.0;
  std::string worst_label;
  for (const auto& ref : rows) {
    std::vector<SparsityPoint> pts;
    for (int i = 0; i < 20; ++i) {
      const double x = 2.0 * std::pow(500.0, i / 19.0);
      const auto d = static_cast<std::uint64_t>(std::llround(x * ref.fit.normalization));
      pts.push_back({d, eval_law(ref.fit, static_cast<double>(d))});
    }
    FitOptions o;
    o.normalization = ref.fit.normalization;
    const auto f = fit_law(pts, ref.fit.family, o);
    std::vector<std::pair<double, double>> pairs{{f.alpha, ref.fit.alpha}, {f.c, ref.fit.c}, {f.a0, ref.fit.a0}};
    if (ref.fit.family == LawFamily::ReluLogspacePower) pairs.emplace_back(f.b, ref.fit.b);
    for (const auto& [got, want] : pairs) {
      const double rel = std::abs(got / want - 1.0);
      if (rel > worst) {
        worst = rel;
        worst_label = ref.label;
      }
    }
    for (const auto& p : pts) {
      const double d = static_cast<double>(p.tokens_seen);
      const double h = d * 1e-5;
      const double fd = (eval_law(f, d + h) - eval_law(f, d - h)) / (2 * h);
      worst_deriv = std::max(worst_deriv, std::abs(law_derivative(f, d) - fd) / std::abs(fd));
    }
  }
  const double secs = seconds_since(t0);
  return {rows.size() == 11 && worst < 0.01 && worst_deriv < 1e-6 && secs < 30.0,
          std::to_string(rows.size()) + " rows, worst coefficient error " + fmt(worst) + " (" + worst_label +
              "), worst derivative error " + fmt(worst_deriv) + ", " + fmt(secs) + " s"};
}

// ---- 7 ----------------------------------------------------------------------

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

struct SeriesResult {
  double rho = 0.0;
  std::size_t n = 0;
  std::string text;
  double cett = 0.0;
};

SeriesResult series_trend(const Trained& m, const fs::path& out, const std::string& tag) {
  const auto s = stabilized_series(m.run.checkpoints, m.cfg.resolved_warmup(), m.valid, 1.0, 1e-4, measure_opts());
  std::vector<double> x, y;
  SeriesResult r;
  std::ostringstream txt;
  for (const auto& p : s.points) {
    x.push_back(static_cast<double>(p.tokens_seen));
    y.push_back(p.activation_ratio);
    txt << (x.size() > 1 ? " " : "") << fmt(p.activation_ratio);
  }
  io::write_atomic(out / ("series_" + tag + ".csv"), points_csv(s.points));
  r.rho = spearman(x, y);
  r.n = x.size();
  r.text = txt.str();
  r.cett = s.search.applied_cett;
  return r;
}

Outcome training_trend(const fs::path& out) {
  const auto relu = series_trend(relu_model(), out, "relu");
  const auto silu = series_trend(silu_model(), out, "silu");
  const bool ok = relu.n >= 10 && silu.n >= 10 && relu.rho <= -0.5 && silu.rho >= 0.5;
  return {ok, "ReLU rho " + fmt(relu.rho) + " over " + std::to_string(relu.n) + " checkpoints (CETT " + fmt(relu.cett) +
                  ") [" + relu.text + "]; SiLU rho " + fmt(silu.rho) + " over " + std::to_string(silu.n) +
                  " checkpoints (CETT " + fmt(silu.cett) + ") [" + silu.text + "]"};
}

// ---- 8 ----------------------------------------------------------------------

Outcome specialization() {
  // subset counts by enumeration, C[n][t]
  std::vector<std::vector<double>> count(13, std::vector<double>(13, 0.0));
  for (int n = 1; n <= 12; ++n) {
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) count[n][__builtin_popcount(mask)] += 1.0;
  }
  double worst = 0.0;
  int cases = 0;
  for (int n = 1; n <= 12; ++n) {
    for (int a = 1; a <= n; ++a) {
      for (int b = 0; b <= n; ++b) {
        for (int c = 0; c <= (b ? n : 0); ++c) {
          std::vector<std::int64_t> g{a};
          double want = std::log(count[n][a]);
          if (b) {
            g.push_back(b);
            want += std::log(count[n][b]);
          }
          if (c) {
            g.push_back(c);
            want += std::log(count[n][c]);
          }
          const double got = log_specialization_count({n, g});
          worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
          ++cases;
        }
      }
    }
  }
  bool superlinear = true;
  for (double ratio : {0.1, 0.3, 0.5}) {
    for (std::int64_t d : {100, 200, 400}) {
      const auto t1 = static_cast<std::int64_t>(std::llround(ratio * d));
      const auto t2 = static_cast<std::int64_t>(std::llround(ratio * 2 * d));
      superlinear = superlinear &&
                    log_specialization_count({2 * d, {t2, t2, t2}}) > 2.0 * log_specialization_count({d, {t1, t1, t1}});
    }
  }
  return {worst < 1e-10 && superlinear, std::to_string(cases) + " groupings, worst relative error " + fmt(worst) +
                                            ", super-linear " + (superlinear ? "yes" : "no")};
}

// ---- 9 ----------------------------------------------------------------------

Outcome sparse_execution() {
  const auto t0 = std::chrono::steady_clock::now();
  BenchConfig cfg;
  cfg.d_h = 1024;
  cfg.d_f = 2560;
  cfg.sparsity = {0.9};
  cfg.mode = ExecMode::GateThreshold;
  const auto rep = bench(cfg).front();

  // Executed multiply-adds at exactly 256 active neurons.
  std::mt19937_64 g(5);
  std::normal_distribution<float> n(0.0f, 1.0f / 32.0f);
  FfnWeights<float> w;
  w.w_gate = MatF::NullaryExpr(2560, 1024, [&] { return n(g); });
  w.w_in = MatF::NullaryExpr(2560, 1024, [&] { return n(g); });
  w.w_out = MatF::NullaryExpr(1024, 2560, [&] { return n(g); });
  const auto k = SparseFfnKernel::from(w, Activation::SiLU);
  const VecF x = VecF::NullaryExpr(1024, [&] { return n(g) * 32.0f; });
  std::vector<float> s(2560);
  const VecF pre = k.w_gate * x;
  for (int i = 0; i < 2560; ++i) s[i] = std::abs(activate(pre(i), Activation::SiLU));
  std::nth_element(s.begin(), s.begin() + 255, s.end(), std::greater<>());
  MacCounter macs;
  const auto r = sparse_ffn(x, k, s[255], ExecMode::GateThreshold, &macs);
  const double mac_ratio = static_cast<double>(macs.total()) / (3.0 * 1024 * 2560);

  const double secs = seconds_since(t0);
  const double flop_ratio = rep.flops_sparse / rep.flops_dense;
  const bool ok = rep.threads == 1 && rep.max_rel_error < 1e-5 && std::abs(flop_ratio - 0.4) < 1e-15 &&
                  r.active_count == 256 && mac_ratio == 0.4 && rep.speedup >= 1.5 && secs < 120.0;
  return {ok, "activation ratio " + fmt(rep.activation_ratio) + ", max error " + fmt(rep.max_rel_error) +
                  ", FLOP ratio " + fmt(flop_ratio) + ", counted MAC ratio " + fmt(mac_ratio) + ", speedup " +
                  fmt(rep.speedup) + "x (" + fmt(rep.ns_per_token_dense) + " vs " + fmt(rep.ns_per_token_sparse) +
                  " ns/token), " + fmt(secs) + " s"};
}

// ---- 10 ---------------------------------------------------------------------

Outcome analytics_consistency() {
  const auto& m = relu_model();
  const Checkpoint& ck = m.run.checkpoints.back();
  const MaskConfig mask = make_mask(ck, m.valid, Method::CETT, 0.2, measure_opts());
  const auto st = collect_activation_stats(ck, m.valid, mask);
  const auto rep = measure_with_mask(ck, m.valid, mask);
  const double diff = std::abs(st.per_neuron_frequency.mean() - rep.aggregate_activation_ratio);
  const auto self = pairwise_compare(st, st);
  bool on_diagonal = true;
  for (const auto& p : self.pairs) on_diagonal = on_diagonal && p.a == p.b;
  return {diff < 1e-9 && on_diagonal && std::abs(self.pearson_r - 1.0) < 1e-12,
          "frequency mean vs activation ratio differ by " + fmt(diff) + ", " + std::to_string(self.pairs.size()) +
              " tokens on y=x, pearson r " + fmt(self.pearson_r)};
}

// ---- 11 ---------------------------------------------------------------------

Outcome gradient_check() {
  double worst = 0.0;
  std::string worst_name;
  int coords = 0;
  for (Activation act : {Activation::SiLU, Activation::ReLU}) {
    ModelConfig cfg;
    cfg.d_h = 8;
    cfg.d_f = 20;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_seq_len = 8;
    cfg.activation = act;
    cfg.seed = 99;
    Weights<double> w = Weights<float>::initialize(cfg).cast<double>();
    std::uniform_real_distribution<double> gain(0.7, 1.3);
    for (auto& L : w.layers) {
      for (int i = 0; i < 8; ++i) {
        L.attn_norm(i) = gain(rng());
        L.ffn_norm(i) = gain(rng());
      }
    }
    for (int i = 0; i < 8; ++i) w.final_norm(i) = gain(rng());
    TokenBatch batch;
    batch.batch_size = 2;
    batch.seq_len = 7;
    for (int i = 0; i < 14; ++i) batch.tokens.push_back(static_cast<TokenId>(rng()() % 256));

    Weights<double> grad = Weights<double>::zeros(cfg);
    loss_and_gradient(w, cfg, batch, &grad);
    std::vector<const double*> gptr;
    grad.for_each_tensor([&](const std::string&, const auto& t) { gptr.push_back(t.data()); });

    std::size_t idx = 0;
    w.for_each_tensor([&](const std::string& name, auto& t) {
      const double* g = gptr[idx++];
      std::vector<Eigen::Index> pick;
      if (name == "tok_emb") {
        for (int s = 0; s < 10; ++s) pick.push_back(batch.tokens[s] * cfg.d_h + (s * 3) % cfg.d_h);
      } else if (name == "pos_emb") {
        for (int s = 0; s < 10; ++s) pick.push_back((s % batch.seq_len) * cfg.d_h + (s * 5) % cfg.d_h);
      } else {
        std::uniform_int_distribution<Eigen::Index> u(0, t.size() - 1);
        for (int s = 0; s < 10; ++s) pick.push_back(u(rng()));
      }
      double diff2 = 0.0, ref2 = 0.0;
      for (Eigen::Index c : pick) {
        const double keep = t.data()[c];
        t.data()[c] = keep + 1e-3;
        const double up = batch_loss(w, cfg, batch);
        t.data()[c] = keep - 1e-3;
        const double down = batch_loss(w, cfg, batch);
        t.data()[c] = keep;
        const double fd = (up - down) / 2e-3;
        diff2 += (g[c] - fd) * (g[c] - fd);
        ref2 += fd * fd;
        ++coords;
      }
      const double rel = ref2 > 0 ? std::sqrt(diff2 / ref2) : INFINITY;
      if (rel > worst) {
        worst = rel;
        worst_name = std::string(to_string(act)) + " " + name;
      }
    });
  }
  return {worst < 1e-2, std::to_string(coords) + " coordinates in SiLU and ReLU models, worst per-tensor relative error " +
                            fmt(worst) + " (" + worst_name + ")"};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const fs::path out = "acceptance_out";
  fs::create_directories(out);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"FFN decomposition", ffn_decomposition},
      {"CETT golden cases", cett_golden},
      {"CETT search contract", algorithm_contract},
      {"CETT monotonicity on a trained ReLU model", monotonicity},
      {"method trade-off at activation ratio 0.5", method_tradeoff},
      {"sparsity-law round trips", law_round_trips},
      {"activation-ratio trend over training", [&] { return training_trend(out); }},
      {"specialization count", specialization},
      {"sparse execution", sparse_execution},
      {"analytics consistency", analytics_consistency},
      {"gradient correctness", gradient_check},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
