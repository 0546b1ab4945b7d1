#include "sparsing/commands.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "sparsing/io.hpp"

#ifndef SPARSING_VERSION
#define SPARSING_VERSION "unknown"
#endif

namespace sparsing {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view code_version() { return SPARSING_VERSION; }

namespace {

void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

void write_record(const CommonArgs& c, std::string_view command, json config) {
  json j;
  j["command"] = command;
  j["version"] = code_version();
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  if (!c.config.empty()) j["config_file"] = c.config.string();
  j["config"] = std::move(config);
  write_json(c.out_dir / "run_record.json", j);
}

json model_json(const ModelConfig& m) {
  return {{"d_h", m.d_h},         {"d_f", m.d_f},
          {"n_layers", m.n_layers}, {"n_heads", m.n_heads},
          {"vocab_size", m.vocab_size}, {"max_seq_len", m.max_seq_len},
          {"activation", std::string(to_string(m.activation))}, {"seed", m.seed}};
}

json search_json(const CettSearchResult& s) {
  json probes = json::array();
  for (const auto& p : s.trace) {
    probes.push_back({{"l", p.l}, {"r", p.r}, {"mid", p.mid}, {"mean_ppl_ratio", p.mean_ppl_ratio}});
  }
  return {{"cett", s.cett},
          {"applied_cett", s.applied_cett},
          {"mean_ppl_ratio", s.mean_ppl_ratio},
          {"iterations", s.iterations},
          {"eps", s.eps},
          {"bracket", {s.final_l, s.final_r}},
          {"monotone", s.monotone},
          {"warnings", s.warnings},
          {"trace", probes}};
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ";";
    out += io::format_double(v[i]);
  }
  return out;
}

std::string reports_csv(const std::vector<std::uint64_t>& tokens_seen,
                        const std::vector<SparsityReport>& reports) {
  io::CsvWriter w({"tokens_seen", "method", "param", "activation_ratio", "ppl_dense", "ppl_sparse",
                   "layer_activation_ratios", "layer_thresholds", "layer_mean_cett",
                   "cett_skipped_tokens", "cett_above_one"});
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    w.add(tokens_seen[i], to_string(r.method), r.param, r.aggregate_activation_ratio, r.ppl_dense,
          r.ppl_sparse, join(r.per_layer_activation_ratio), join(r.per_layer_threshold),
          join(r.per_layer_mean_cett), r.cett_skipped_tokens, r.cett_above_one);
  }
  return w.str();
}

MeasureOptions measure_options(int calib_tokens, int threads) {
  MeasureOptions o;
  o.calib_tokens = calib_tokens;
  o.eval.threads = threads;
  return o;
}

json read_json(const fs::path& path) {
  const auto bytes = io::read_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  }
}

std::vector<Checkpoint> load_run(const fs::path& dir, RunManifest& manifest) {
  manifest = RunManifest::load(dir);
  std::vector<Checkpoint> out;
  for (const auto& rec : manifest.checkpoints) out.push_back(load_checkpoint(rec.path));
  return out;
}

// Corpus and validation fraction recorded by `train`.
std::pair<fs::path, double> run_corpus(const fs::path& dir) {
  const json j = read_json(dir / "run_record.json");
  const json& c = j.at("config");
  return {fs::path(c.at("corpus").get<std::string>()), c.at("valid_fraction").get<double>()};
}

// Fixed (method, param) applied to every post-warmup checkpoint of a run.
StabilizedSeries fixed_method_series(const std::vector<Checkpoint>& ckpts, std::uint64_t warmup,
                                     std::span<const TokenId> valid, Method method, double param,
                                     const MeasureOptions& opts) {
  std::vector<unsigned long long> seen;
  for (const auto& c : ckpts) seen.push_back(c.tokens_seen);
  StabilizedSeries out;
  out.plan = plan_stabilization(seen, warmup);
  for (std::size_t idx : out.plan.series) {
    SparsityReport rep = measure_activation_ratio(ckpts[idx], valid, method, param, opts);
    out.points.push_back({ckpts[idx].tokens_seen, rep.aggregate_activation_ratio,
                          std::numeric_limits<double>::quiet_NaN(), rep.ppl_dense, rep.ppl_sparse});
    out.reports.push_back(std::move(rep));
  }
  return out;
}

// CETT-PPL-p% mask of one checkpoint.
MaskConfig searched_cett_mask(const Checkpoint& ckpt, std::span<const TokenId> valid, double p,
                              double eps, const MeasureOptions& opts, CettSearchResult* search) {
  CheckpointLossOracle oracle({&ckpt}, valid, opts);
  const CettSearchResult res = search_cett_hyperparameter(oracle, p, eps);
  if (search) *search = res;
  return calibrate_cett(oracle.calibration(0), res.applied_cett, opts.calibration).mask;
}

std::string label_of(const fs::path& p) { return p.stem().string(); }

}  // namespace

TokenStream validation_stream(const fs::path& corpus, double valid_fraction, std::size_t max_tokens) {
  const TokenStream all = load_tokens(corpus);
  TokenStream valid = split_corpus(all, valid_fraction).valid;
  if (max_tokens > 0 && valid.size() > max_tokens) valid.resize(max_tokens);
  return valid;
}

int cmd_train(const TrainArgs& args, std::ostream& log) {
  TrainConfig cfg = args.train;
  cfg.model.seed = args.common.seed;
  cfg.out_dir = args.common.out_dir;
  fs::create_directories(cfg.out_dir);
  if (cfg.corpus_path.empty()) {
    SyntheticCorpusOptions so;
    so.bytes = args.synthetic_bytes;
    so.seed = args.common.seed;
    so.topic = args.synthetic_topic;
    const TokenStream corpus = generate_synthetic_corpus(so);
    cfg.corpus_path = cfg.out_dir / "corpus.txt";
    io::write_atomic(cfg.corpus_path, corpus);
    log << "generated synthetic corpus: " << corpus.size() << " bytes\n";
  }
  cfg.validate();
  const TokenStream corpus = load_tokens(cfg.corpus_path);
  const TrainResult res = train(cfg, corpus, [&log](const Checkpoint& c) {
    log << "checkpoint step " << c.step << " tokens " << c.tokens_seen << "\n";
  });

  json conf = model_json(cfg.model);
  conf["canonical"] = cfg.canonical();
  conf["config_hash"] = cfg.hash();
  conf["corpus"] = fs::absolute(cfg.corpus_path).string();
  conf["valid_fraction"] = cfg.valid_fraction;
  conf["total_tokens"] = cfg.total_tokens;
  conf["warmup_tokens"] = cfg.resolved_warmup();
  write_record(args.common, "train", conf);
  if (!res.manifest.losses.empty()) {
    log << "final training loss " << res.manifest.losses.back().loss << "\n";
  }
  log << "wrote " << res.manifest.checkpoints.size() << " checkpoints to " << cfg.out_dir.string()
      << "\n";
  return 0;
}

int cmd_measure(const MeasureArgs& args, std::ostream& log) {
  const Method method = parse_method(args.method);
  const MeasureOptions opts = measure_options(args.calib_tokens, args.common.threads);
  const fs::path& out = args.common.out_dir;
  fs::create_directories(out);
  json conf = {{"method", args.method}, {"p", args.p}, {"eps", args.eps},
               {"calib_tokens", args.calib_tokens}, {"max_eval_tokens", args.max_eval_tokens}};
  if (!std::isnan(args.param)) conf["param"] = args.param;

  if (!args.run.empty()) {
    auto [corpus, vf] = run_corpus(args.run);
    if (!args.corpus.empty()) {
      corpus = args.corpus;
      vf = args.valid_fraction;
    }
    const TokenStream valid = validation_stream(corpus, vf, args.max_eval_tokens);
    RunManifest manifest;
    const std::vector<Checkpoint> ckpts = load_run(args.run, manifest);
    StabilizedSeries series;
    json summary;
    if (method == Method::CETT && std::isnan(args.param)) {
      series = stabilized_series(ckpts, manifest.warmup_tokens, valid, args.p, args.eps, opts);
      summary["search"] = search_json(series.search);
    } else {
      series = fixed_method_series(ckpts, manifest.warmup_tokens, valid, method,
                                   std::isnan(args.param) ? 0.0 : args.param, opts);
    }
    std::vector<std::uint64_t> seen;
    for (const auto& p : series.points) seen.push_back(p.tokens_seen);
    io::write_atomic(out / "series.csv", points_csv(series.points));
    io::write_atomic(out / "reports.csv", reports_csv(seen, series.reports));
    summary["run"] = fs::absolute(args.run).string();
    summary["series_checkpoints"] = series.plan.series.size();
    summary["search_checkpoints"] = series.plan.search.size();
    summary["fell_back"] = series.plan.fell_back;
    summary["warmup_tokens"] = manifest.warmup_tokens;
    summary["valid_tokens"] = valid.size();
    write_json(out / "summary.json", summary);
    conf["run"] = fs::absolute(args.run).string();
    write_record(args.common, "measure", conf);
    for (const auto& p : series.points) {
      log << p.tokens_seen << " tokens: activation ratio " << p.activation_ratio << "\n";
    }
    if (series.plan.fell_back) log << "fewer than five post-warmup checkpoints, searched on all\n";
    return 0;
  }

  if (args.checkpoint.empty()) throw ConfigError("measure needs --run or --checkpoint");
  if (args.corpus.empty()) throw ConfigError("measure --checkpoint needs --corpus");
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const TokenStream valid = validation_stream(args.corpus, args.valid_fraction, args.max_eval_tokens);
  json summary;
  SparsityReport rep;
  if (method == Method::CETT && std::isnan(args.param)) {
    const CettPplResult r = measure_cett_ppl(ckpt, valid, args.p, args.eps, opts);
    summary["search"] = search_json(r.search);
    rep = r.report;
  } else {
    rep = measure_activation_ratio(ckpt, valid, method, std::isnan(args.param) ? 0.0 : args.param, opts);
  }
  io::write_atomic(out / "report.csv", reports_csv({ckpt.tokens_seen}, {rep}));
  summary["checkpoint"] = fs::absolute(args.checkpoint).string();
  summary["activation_ratio"] = rep.aggregate_activation_ratio;
  summary["sparsity_ratio"] = rep.sparsity_ratio();
  summary["ppl_dense"] = rep.ppl_dense;
  summary["ppl_sparse"] = rep.ppl_sparse;
  summary["valid_tokens"] = valid.size();
  write_json(out / "summary.json", summary);
  conf["checkpoint"] = fs::absolute(args.checkpoint).string();
  conf["corpus"] = fs::absolute(args.corpus).string();
  write_record(args.common, "measure", conf);
  log << "activation ratio " << rep.aggregate_activation_ratio << ", ppl " << rep.ppl_dense
      << " dense, " << rep.ppl_sparse << " sparse\n";
  return 0;
}

int cmd_fit(const FitArgs& args, std::ostream& log) {
  const fs::path& out = args.common.out_dir;
  fs::create_directories(out);
  json conf = {{"family", args.family}, {"normalization", args.normalization},
               {"curve_samples", args.curve_samples}};

  if (!args.roundtrip.empty()) {
    const auto bytes = io::read_bytes(args.roundtrip);
    const auto reference = parse_coefficients_csv(
        std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    std::vector<LabelledFit> fitted;
    io::CsvWriter cmp({"label", "coefficient", "reference", "fitted", "rel_error"});
    double worst = 0.0;
    for (const auto& ref : reference) {
      std::vector<SparsityPoint> pts;
      const int n = args.roundtrip_points;
      for (int i = 0; i < n; ++i) {
        const double x = args.roundtrip_lo *
                         std::pow(args.roundtrip_hi / args.roundtrip_lo, static_cast<double>(i) / (n - 1));
        const auto d = static_cast<std::uint64_t>(std::llround(x * ref.fit.normalization));
        pts.push_back({d, eval_law(ref.fit, static_cast<double>(d))});
      }
      FitOptions fo;
      fo.normalization = ref.fit.normalization;
      const LawFitResult f = fit_law(pts, ref.fit.family, fo);
      fitted.push_back({ref.label, f});
      auto row = [&](const char* name, double want, double got) {
        const double rel = std::abs(got - want) / std::abs(want);
        worst = std::max(worst, rel);
        cmp.add(ref.label, name, want, got, rel);
      };
      row("alpha", ref.fit.alpha, f.alpha);
      if (ref.fit.family == LawFamily::ReluLogspacePower) row("b", ref.fit.b, f.b);
      row("c", ref.fit.c, f.c);
      row("A0", ref.fit.a0, f.a0);
    }
    io::write_atomic(out / "coefficients.csv", coefficients_csv(fitted));
    io::write_atomic(out / "roundtrip.csv", cmp.str());
    conf["roundtrip"] = fs::absolute(args.roundtrip).string();
    conf["roundtrip_range"] = {args.roundtrip_lo, args.roundtrip_hi};
    conf["roundtrip_points"] = args.roundtrip_points;
    write_record(args.common, "fit", conf);
    log << "round trip over " << reference.size() << " rows, worst relative error " << worst << "\n";
    return 0;
  }

  if (args.points.empty()) throw ConfigError("fit needs --points or --roundtrip");
  std::vector<SparsityPoint> pts = read_points_csv(args.points);
  std::erase_if(pts, [](const SparsityPoint& p) { return p.tokens_seen == 0; });
  std::sort(pts.begin(), pts.end(),
            [](const SparsityPoint& a, const SparsityPoint& b) { return a.tokens_seen < b.tokens_seen; });
  FitOptions fo;
  fo.normalization = args.normalization;
  const LawFitResult f = fit_law(pts, parse_law_family(args.family), fo);
  const std::vector<LabelledFit> one{{args.points.stem().string(), f}};
  io::write_atomic(out / "coefficients.csv", coefficients_csv(one));
  io::write_atomic(out / "curve.csv", curve_csv(sample_curve(f, f.d_min, f.d_max, args.curve_samples)));
  conf["points"] = fs::absolute(args.points).string();
  write_record(args.common, "fit", conf);
  log << "alpha " << f.alpha << " b " << f.b << " c " << f.c << " A0 " << f.a0 << " rss " << f.rss
      << (f.converged ? "" : " (not converged)") << "\n";
  return f.converged ? 0 : 3;
}

int cmd_bench(const BenchArgs& args, std::ostream& log) {
  const fs::path& out = args.common.out_dir;
  fs::create_directories(out);
  BenchConfig cfg = args.bench;
  cfg.seed = args.common.seed;
  const auto reports = bench(cfg);
  io::write_atomic(out / "bench.csv", bench_csv(reports));
  io::write_atomic(out / "bench.json", bench_json(reports));
  write_record(args.common, "bench",
               {{"d_h", cfg.d_h}, {"d_f", cfg.d_f}, {"sparsity", cfg.sparsity},
                {"mode", std::string(to_string(cfg.mode))},
                {"activation", std::string(to_string(cfg.act))}, {"tokens", cfg.tokens},
                {"repeats", cfg.repeats}, {"warmup", cfg.warmup}, {"threads", 1}});
  for (const auto& r : reports) {
    log << "sparsity " << r.sparsity << ": " << r.ns_per_token_dense << " ns dense, "
        << r.ns_per_token_sparse << " ns sparse, speedup " << r.speedup << "\n";
  }
  return 0;
}

int cmd_analyze(const AnalyzeArgs& args, std::ostream& log) {
  const fs::path& out = args.common.out_dir;
  fs::create_directories(out);
  json conf = {{"method", args.method}, {"p", args.p}, {"bins", args.bins},
               {"min_occurrences", args.min_occurrences}};
  json summary;

  if (!args.group_sizes.empty()) {
    GroupingSpec g{args.groups_d_f, args.group_sizes};
    const double lt = log_specialization_count(g);
    summary["specialization"] = {{"d_f", g.d_f}, {"group_sizes", g.group_sizes}, {"ln_T", lt}};
    conf["groups"] = {{"d_f", g.d_f}, {"sizes", g.group_sizes}};
    log << "ln T = " << lt << "\n";
  }

  if (!args.checkpoint.empty()) {
    if (args.corpora.empty()) throw ConfigError("analyze needs at least one --corpus");
    const MeasureOptions opts = measure_options(args.calib_tokens, args.common.threads);
    const Method method = parse_method(args.method);
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const TokenStream first = validation_stream(args.corpora.front(), args.valid_fraction, args.max_eval_tokens);

    auto mask_for = [&](const Checkpoint& c) {
      if (method == Method::CETT && std::isnan(args.param)) {
        return searched_cett_mask(c, first, args.p, 1e-4, opts, nullptr);
      }
      return make_mask(c, first, method, std::isnan(args.param) ? 0.0 : args.param, opts);
    };
    const MaskConfig mask = mask_for(ckpt);
    summary["mask"] = mask.describe();

    json per_corpus = json::array();
    ActivationStats first_stats;
    for (std::size_t i = 0; i < args.corpora.size(); ++i) {
      const TokenStream data =
          i == 0 ? first : validation_stream(args.corpora[i], args.valid_fraction, args.max_eval_tokens);
      EvalOptions eo;
      const ActivationStats st = collect_activation_stats(ckpt, data, mask, eo, args.min_occurrences);
      const std::string label = label_of(args.corpora[i]);
      io::write_atomic(out / ("histogram_" + label + ".csv"), histogram_csv(frequency_histogram(st, args.bins)));
      const TokenTable table = token_activation_table(st);
      io::write_atomic(out / ("tokens_" + label + ".csv"), token_table_csv(table));
      per_corpus.push_back({{"label", label},
                            {"tokens", st.tokens},
                            {"aggregate_activation_ratio", st.aggregate_activation_ratio},
                            {"reported_tokens", table.rows.size()},
                            {"omitted_tokens", table.omitted_tokens},
                            {"min_occurrences", table.min_occurrences}});
      if (i == 0) first_stats = st;
    }
    summary["corpora"] = per_corpus;

    if (!args.compare_checkpoint.empty()) {
      const Checkpoint other = load_checkpoint(args.compare_checkpoint);
      const MaskConfig other_mask = mask_for(other);
      const ActivationStats st = collect_activation_stats(other, first, other_mask, {}, args.min_occurrences);
      const Comparison cmp = pairwise_compare(first_stats, st);
      io::write_atomic(out / "pairs.csv", comparison_csv(cmp));
      io::write_atomic(out / "comparison.json", comparison_json(cmp));
      summary["comparison"] = {{"pairs", cmp.pairs.size()},
                               {"pearson_r", std::isfinite(cmp.pearson_r) ? json(cmp.pearson_r) : json(nullptr)},
                               {"mean_abs_diff", cmp.mean_abs_diff}};
      conf["compare_checkpoint"] = fs::absolute(args.compare_checkpoint).string();
      log << "token scatter: pearson r " << cmp.pearson_r << ", mean |diff| " << cmp.mean_abs_diff << "\n";
    }
    conf["checkpoint"] = fs::absolute(args.checkpoint).string();
    std::vector<std::string> names;
    for (const auto& c : args.corpora) names.push_back(fs::absolute(c).string());
    conf["corpora"] = names;
  } else if (args.group_sizes.empty()) {
    throw ConfigError("analyze needs --checkpoint or --groups");
  }
  write_json(out / "summary.json", summary);
  write_record(args.common, "analyze", conf);
  return 0;
}

std::vector<SweepPlanEntry> plan_sweep(const ModelConfig& base, std::vector<double> ratios,
                                       std::uint64_t budget, double tolerance) {
  std::sort(ratios.begin(), ratios.end());
  ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());
  if (budget == 0) budget = static_cast<std::uint64_t>(base.non_embedding_params());
  const auto target = static_cast<double>(budget);
  const int heads = base.n_heads;
  std::vector<SweepPlanEntry> out;
  for (double ratio : ratios) {
    SweepPlanEntry e;
    e.requested_ratio = ratio;
    if (!(ratio > 0.0)) {
      e.diagnostic = "ratio must be positive";
      out.push_back(e);
      continue;
    }
    // params ~ L * (4 + 3 * 2.5) * d_h^2 with d_h = ratio * L
    const double l_cont = std::cbrt(target / (11.5 * ratio * ratio));
    double best = std::numeric_limits<double>::infinity();
    for (int l : {static_cast<int>(std::floor(l_cont)), static_cast<int>(std::ceil(l_cont))}) {
      if (l < 1) continue;
      const double h_cont = ratio * l;
      const int lo = std::max(heads, static_cast<int>(std::floor(h_cont / heads)) * heads);
      for (int h : {lo, lo + heads}) {
        ModelConfig m = base;
        m.d_h = h;
        m.d_f = ModelConfig::default_d_f(h);
        m.n_layers = l;
        const auto params = static_cast<double>(m.non_embedding_params());
        const double err = std::abs(params - target) / target;
        const double ratio_err = std::abs(static_cast<double>(h) / l - ratio);
        const double score = err + 1e-6 * ratio_err;
        if (score < best) {
          best = score;
          e.model = m;
          e.params = static_cast<std::uint64_t>(params);
          e.budget_error = err;
        }
      }
    }
    e.feasible = std::isfinite(best) && e.budget_error <= tolerance;
    if (!e.feasible) {
      e.diagnostic = "no (d_h, n_layers) within " + io::format_double(tolerance * 100) +
                     "% of the budget";
    }
    out.push_back(e);
  }
  return out;
}

int cmd_sweep(const SweepArgs& args, std::ostream& log) {
  const fs::path out = args.base.common.out_dir;
  fs::create_directories(out);
  const auto plan = plan_sweep(args.base.train.model, args.ratios, args.budget);

  TrainArgs base = args.base;
  if (base.train.corpus_path.empty()) {
    SyntheticCorpusOptions so;
    so.bytes = base.synthetic_bytes;
    so.seed = base.common.seed;
    so.topic = base.synthetic_topic;
    base.train.corpus_path = out / "corpus.txt";
    io::write_atomic(base.train.corpus_path, generate_synthetic_corpus(so));
  }

  io::CsvWriter csv({"ratio", "d_h", "n_layers", "non_embedding_params", "budget_error", "status",
                     "limit_activation_ratio", "limit_source", "final_activation_ratio",
                     "final_valid_loss"});
  for (const auto& e : plan) {
    if (!e.feasible) {
      log << "ratio " << e.requested_ratio << " skipped: " << e.diagnostic << "\n";
      csv.add(e.requested_ratio, 0, 0, 0, 0.0, "skipped", std::numeric_limits<double>::quiet_NaN(),
              "-", std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const fs::path dir = out / ("ratio_" + io::format_double(e.requested_ratio));
    TrainArgs t = base;
    t.train.model = e.model;
    t.common.out_dir = dir / "run";
    log << "ratio " << e.requested_ratio << ": d_h " << e.model.d_h << ", layers "
        << e.model.n_layers << "\n";
    cmd_train(t, log);

    MeasureArgs m;
    m.common = base.common;
    m.common.out_dir = dir / "measure";
    m.run = t.common.out_dir;
    m.p = args.p;
    m.eps = args.eps;
    m.calib_tokens = args.calib_tokens;
    m.max_eval_tokens = args.max_eval_tokens;
    cmd_measure(m, log);

    const auto pts = read_points_csv(m.common.out_dir / "series.csv");
    const LawFamily fam = e.model.activation == Activation::ReLU ? LawFamily::ReluLogspacePower
                                                                 : LawFamily::SiluPower;
    double limit = pts.back().activation_ratio;
    std::string source = "last";
    const std::size_t need = fam == LawFamily::ReluLogspacePower ? 6 : 5;
    if (pts.size() >= need) {
      const LawFitResult f = fit_law(pts, fam);
      if (f.converged && f.a0 < 1.0) {
        limit = f.a0;
        source = "fit";
        io::write_atomic(dir / "coefficients.csv",
                         coefficients_csv(std::vector<LabelledFit>{{"ratio", f}}));
      }
    }
    const double final_loss = std::log(pts.back().ppl_dense);
    csv.add(e.requested_ratio, e.model.d_h, e.model.n_layers, e.params, e.budget_error, "ok", limit,
            source, pts.back().activation_ratio, final_loss);
  }
  io::write_atomic(out / "sweep.csv", csv.str());
  std::vector<double> sorted;
  for (const auto& e : plan) sorted.push_back(e.requested_ratio);
  write_record(args.base.common, "sweep",
               {{"ratios", sorted}, {"budget", args.budget}, {"p", args.p},
                {"base_model", model_json(args.base.train.model)},
                {"total_tokens", args.base.train.total_tokens}});
  return 0;
}

}  // namespace sparsing
