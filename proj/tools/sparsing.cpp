// Command-line front end: train, measure, fit, bench, analyze, sweep.

#include <iostream>

#include <CLI11.hpp>

#include "sparsing/commands.hpp"

using namespace sparsing;

namespace {

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->set_config("--config", "", "INI or TOML file; keys may sit in a section named after the subcommand");
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "Evaluation threads")->check(CLI::PositiveNumber)->capture_default_str();
}

void add_model(CLI::App* sub, TrainArgs& a, std::string& act) {
  auto& m = a.train.model;
  sub->add_option("--d-h", m.d_h, "Hidden size")->capture_default_str();
  sub->add_option("--d-f", m.d_f, "FFN intermediate size (default 2.5 x d_h)");
  sub->add_option("--layers", m.n_layers, "Transformer layers")->capture_default_str();
  sub->add_option("--heads", m.n_heads, "Attention heads")->capture_default_str();
  sub->add_option("--max-seq-len", m.max_seq_len, "Position table size")->capture_default_str();
  sub->add_option("--activation", act, "relu or silu")->check(CLI::IsMember({"relu", "silu"}))->capture_default_str();
  auto& t = a.train;
  sub->add_option("--corpus", t.corpus_path, "Byte-level training corpus (synthetic when omitted)");
  sub->add_option("--synthetic-bytes", a.synthetic_bytes, "Size of the generated corpus")->capture_default_str();
  sub->add_option("--tokens", t.total_tokens, "Training tokens")->capture_default_str();
  sub->add_option("--batch", t.batch_size, "Sequences per step")->capture_default_str();
  sub->add_option("--seq-len", t.seq_len, "Training sequence length")->capture_default_str();
  sub->add_option("--lr", t.peak_lr, "Peak learning rate")->capture_default_str();
  sub->add_option("--warmup", t.warmup_tokens, "Warmup tokens (default 5% of --tokens)");
  sub->add_option("--decay", t.decay_tokens, "Linear decay tail in tokens")->capture_default_str();
  sub->add_option("--checkpoint-every", t.checkpoint_every_tokens, "Tokens between checkpoints (default tokens / 20)");
  sub->add_option("--valid-fraction", t.valid_fraction, "Trailing corpus fraction held out")->capture_default_str();
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Activation sparsity toolkit for small decoder-only language models"};
  app.require_subcommand(1);

  TrainArgs train;
  std::string train_act = "relu";
  auto* t = app.add_subcommand("train", "Train a model and write checkpoints");
  add_common(t, train.common);
  add_model(t, train, train_act);

  MeasureArgs measure;
  auto* m = app.add_subcommand("measure", "Activation ratio and PPL under a sparsity mask");
  add_common(m, measure.common);
  m->add_option("--run", measure.run, "Train output directory (stabilized series)");
  m->add_option("--checkpoint", measure.checkpoint, "Single checkpoint");
  m->add_option("--corpus", measure.corpus, "Corpus (default: the run's corpus)");
  m->add_option("--valid-fraction", measure.valid_fraction, "Held-out fraction")->capture_default_str();
  m->add_option("--method", measure.method, "dense, zero, topk, fat or cett")
      ->check(CLI::IsMember({"dense", "zero", "topk", "fat", "cett"}))->capture_default_str();
  m->add_option("--param", measure.param, "k, FAT threshold or CETT target; CETT without it searches with --p");
  m->add_option("--p", measure.p, "PPL tolerance in percent")->check(CLI::NonNegativeNumber)->capture_default_str();
  m->add_option("--eps", measure.eps, "Bisection bracket tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  m->add_option("--calib-tokens", measure.calib_tokens, "Calibration tokens")->capture_default_str();
  m->add_option("--max-eval-tokens", measure.max_eval_tokens, "Truncate the validation slice (0 keeps all)");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a sparsity-data law");
  add_common(f, fit.common);
  f->add_option("--points", fit.points, "CSV with tokens_seen and activation_ratio columns");
  f->add_option("--family", fit.family, "relu or silu")->check(CLI::IsMember({"relu", "silu"}))->capture_default_str();
  f->add_option("--normalization", fit.normalization, "Tokens per unit of D")->capture_default_str();
  f->add_option("--curve-samples", fit.curve_samples, "Points in curve.csv")->capture_default_str();
  f->add_option("--roundtrip", fit.roundtrip, "Coefficient CSV to regenerate and refit");
  f->add_option("--roundtrip-lo", fit.roundtrip_lo, "Smallest normalized D")->capture_default_str();
  f->add_option("--roundtrip-hi", fit.roundtrip_hi, "Largest normalized D")->capture_default_str();
  f->add_option("--roundtrip-points", fit.roundtrip_points, "Samples per row")->capture_default_str();

  BenchArgs bench;
  std::string bench_mode = "gate";
  std::string bench_act = "silu";
  auto* b = app.add_subcommand("bench", "Dense versus sparse FFN wall-clock benchmark");
  add_common(b, bench.common);
  b->add_option("--d-h", bench.bench.d_h, "Hidden size")->capture_default_str();
  b->add_option("--d-f", bench.bench.d_f, "FFN size")->capture_default_str();
  b->add_option("--sparsity", bench.bench.sparsity, "Sparsity grid")->delimiter(',')->capture_default_str();
  b->add_option("--mode", bench_mode, "gate or norm")->check(CLI::IsMember({"gate", "norm"}))->capture_default_str();
  b->add_option("--activation", bench_act, "relu or silu")->check(CLI::IsMember({"relu", "silu"}))->capture_default_str();
  b->add_option("--tokens", bench.bench.tokens, "Tokens per timed pass")->capture_default_str();
  b->add_option("--repeats", bench.bench.repeats, "Timed passes (median reported)")->capture_default_str();
  b->add_option("--warmup", bench.bench.warmup, "Untimed passes")->capture_default_str();

  AnalyzeArgs analyze;
  auto* a = app.add_subcommand("analyze", "Activation frequency, token tables and specialization count");
  add_common(a, analyze.common);
  a->add_option("--checkpoint", analyze.checkpoint, "Checkpoint to analyze");
  a->add_option("--compare-checkpoint", analyze.compare_checkpoint, "Second checkpoint for the token scatter");
  a->add_option("--corpus", analyze.corpora, "Corpus, repeatable; labelled by file stem");
  a->add_option("--valid-fraction", analyze.valid_fraction, "Held-out fraction")->capture_default_str();
  a->add_option("--method", analyze.method, "Mask defining activated neurons")
      ->check(CLI::IsMember({"dense", "zero", "topk", "fat", "cett"}))->capture_default_str();
  a->add_option("--param", analyze.param, "Method parameter; CETT without it uses CETT-PPL-p%");
  a->add_option("--p", analyze.p, "PPL tolerance in percent")->capture_default_str();
  a->add_option("--calib-tokens", analyze.calib_tokens, "Calibration tokens")->capture_default_str();
  a->add_option("--bins", analyze.bins, "Histogram bins")->capture_default_str();
  a->add_option("--min-occurrences", analyze.min_occurrences, "Token occurrence floor")->capture_default_str();
  a->add_option("--max-eval-tokens", analyze.max_eval_tokens, "Truncate each corpus slice (0 keeps all)");
  a->add_option("--groups-d-f", analyze.groups_d_f, "Neuron count for the specialization count");
  a->add_option("--groups", analyze.group_sizes, "Group sizes t_i")->delimiter(',');

  SweepArgs sweep;
  std::string sweep_act = "relu";
  auto* s = app.add_subcommand("sweep", "Width-depth ratio sweep at a constant parameter budget");
  add_common(s, sweep.base.common);
  add_model(s, sweep.base, sweep_act);
  s->add_option("--ratios", sweep.ratios, "Width-depth ratios d_h / n_layers")->delimiter(',')->required();
  s->add_option("--budget", sweep.budget, "Non-embedding parameters (default: the base model's)");
  s->add_option("--p", sweep.p, "PPL tolerance in percent")->capture_default_str();
  s->add_option("--calib-tokens", sweep.calib_tokens, "Calibration tokens")->capture_default_str();
  s->add_option("--max-eval-tokens", sweep.max_eval_tokens, "Truncate the validation slice (0 keeps all)");

  CLI11_PARSE(app, argc, argv);

  auto fix_model = [](TrainArgs& args, const std::string& act, CLI::App* sub) {
    args.train.model.activation = parse_activation(act);
    if (sub->count("--d-f") == 0) args.train.model.d_f = ModelConfig::default_d_f(args.train.model.d_h);
  };

  return guarded([&]() -> int {
    if (t->parsed()) {
      fix_model(train, train_act, t);
      return cmd_train(train, std::cout);
    }
    if (m->parsed()) return cmd_measure(measure, std::cout);
    if (f->parsed()) return cmd_fit(fit, std::cout);
    if (b->parsed()) {
      bench.bench.mode = parse_exec_mode(bench_mode);
      bench.bench.act = parse_activation(bench_act);
      return cmd_bench(bench, std::cout);
    }
    if (a->parsed()) return cmd_analyze(analyze, std::cout);
    if (s->parsed()) {
      fix_model(sweep.base, sweep_act, s);
      return cmd_sweep(sweep, std::cout);
    }
    return 2;
  });
}
