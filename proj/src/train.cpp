#include "sparsing/train.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sparsing/io.hpp"

namespace sparsing {

std::uint64_t TrainConfig::resolved_warmup() const {
  if (warmup_tokens >= 0) return static_cast<std::uint64_t>(warmup_tokens);
  return total_tokens / 20;
}

std::uint64_t TrainConfig::resolved_checkpoint_every() const {
  if (checkpoint_every_tokens > 0) return checkpoint_every_tokens;
  return std::max<std::uint64_t>(1, total_tokens / 20);
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (seq_len < 2 || seq_len > model.max_seq_len) {
    throw ConfigError("seq_len must lie in [2, max_seq_len]");
  }
  if (total_tokens > 0 && resolved_warmup() >= total_tokens) {
    throw ConfigError("warmup_tokens must be smaller than total_tokens");
  }
  if (decay_tokens > total_tokens) throw ConfigError("decay_tokens exceeds total_tokens");
  if (!(valid_fraction > 0.0 && valid_fraction <= 0.5)) {
    throw ConfigError("valid_fraction must lie in (0, 0.5]");
  }
  if (!(peak_lr >= 0.0)) throw ConfigError("peak_lr must be non-negative");
}

std::string TrainConfig::canonical() const {
  std::ostringstream s;
  s << "d_h=" << model.d_h << ";d_f=" << model.d_f << ";n_layers=" << model.n_layers
    << ";n_heads=" << model.n_heads << ";vocab=" << model.vocab_size
    << ";max_seq_len=" << model.max_seq_len << ";activation=" << to_string(model.activation)
    << ";seed=" << model.seed << ";batch_size=" << batch_size << ";seq_len=" << seq_len
    << ";total_tokens=" << total_tokens << ";peak_lr=" << io::format_double(peak_lr)
    << ";warmup=" << resolved_warmup() << ";decay=" << decay_tokens
    << ";beta1=" << io::format_double(beta1) << ";beta2=" << io::format_double(beta2)
    << ";wd=" << io::format_double(weight_decay) << ";clip=" << io::format_double(grad_clip)
    << ";ckpt_every=" << resolved_checkpoint_every()
    << ";valid_fraction=" << io::format_double(valid_fraction);
  return s.str();
}

std::string TrainConfig::hash() const {
  // FNV-1a 64
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double lr_at(std::uint64_t tokens_seen, const TrainConfig& cfg) {
  const auto t = static_cast<double>(tokens_seen);
  const auto warmup = static_cast<double>(cfg.resolved_warmup());
  if (t < warmup) return cfg.peak_lr * t / warmup;
  if (cfg.decay_tokens > 0) {
    const auto total = static_cast<double>(cfg.total_tokens);
    const auto decay = static_cast<double>(cfg.decay_tokens);
    const double start = total - decay;
    if (t > start) return cfg.peak_lr * std::max(0.0, total - t) / decay;
  }
  return cfg.peak_lr;
}

StepStats backward_step(const TokenBatch& batch, const TrainConfig& cfg, double lr,
                        Weights<float>& weights, AdamState& state) {
  if (batch.batch_size != cfg.batch_size || batch.seq_len != cfg.seq_len) {
    throw DimensionError("batch shape does not match the training configuration");
  }
  Weights<float> grad;
  StepStats st;
  st.loss = loss_and_gradient(weights, cfg.model, batch, &grad);
  if (!std::isfinite(st.loss)) {
    throw NumericError("non-finite training loss at optimizer step " + std::to_string(state.t));
  }

  double sq = 0.0;
  grad.for_each_tensor([&](const std::string&, const auto& g) { sq += g.template cast<double>().squaredNorm(); });
  st.grad_norm = std::sqrt(sq);
  if (!std::isfinite(st.grad_norm)) throw NumericError("non-finite gradient");
  const double clip = (cfg.grad_clip > 0.0 && st.grad_norm > cfg.grad_clip)
                          ? cfg.grad_clip / st.grad_norm
                          : 1.0;

  if (state.m.layers.empty()) {
    state.m = Weights<float>::zeros(cfg.model);
    state.v = Weights<float>::zeros(cfg.model);
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(cfg.adam_eps);
  const auto fclip = static_cast<float>(clip);

  // Visit the four structures in lockstep by collecting tensor pointers.
  std::vector<Eigen::Map<Eigen::ArrayXf>> p, g, m, v;
  std::vector<bool> decays;
  auto collect = [](Weights<float>& w, std::vector<Eigen::Map<Eigen::ArrayXf>>& out) {
    w.for_each_tensor([&](const std::string&, auto& t) { out.emplace_back(t.data(), t.size()); });
  };
  collect(weights, p);
  collect(grad, g);
  collect(state.m, m);
  collect(state.v, v);
  weights.for_each_tensor(
      [&](const std::string& name, const auto&) { decays.push_back(!name.ends_with("norm")); });

  for (std::size_t i = 0; i < p.size(); ++i) {
    const Eigen::ArrayXf gi = g[i] * fclip;
    m[i] = b1 * m[i] + (1.0f - b1) * gi;
    v[i] = b2 * v[i] + (1.0f - b2) * gi.square();
    if (decays[i]) p[i] *= 1.0f - static_cast<float>(lr * cfg.weight_decay);
    p[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
  }
  return st;
}

namespace {

TokenBatch sample_batch(std::span<const TokenId> train, const TrainConfig& cfg,
                        std::mt19937_64& rng) {
  TokenBatch b;
  b.batch_size = cfg.batch_size;
  b.seq_len = cfg.seq_len;
  b.tokens.reserve(cfg.tokens_per_step());
  const std::size_t span_len = static_cast<std::size_t>(cfg.seq_len);
  if (train.size() < span_len) throw DataError("training slice shorter than one sequence");
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - span_len);
  for (int i = 0; i < cfg.batch_size; ++i) {
    const std::size_t off = pick(rng);
    b.tokens.insert(b.tokens.end(), train.begin() + static_cast<std::ptrdiff_t>(off),
                    train.begin() + static_cast<std::ptrdiff_t>(off + span_len));
  }
  return b;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const TokenId> corpus,
                  const CheckpointCallback& on_checkpoint) {
  cfg.validate();
  if (corpus.empty()) throw DataError("training corpus is empty");
  const CorpusSplit split = split_corpus(corpus, cfg.valid_fraction);

  TrainResult result;
  auto& manifest = result.manifest;
  manifest.config_hash = cfg.hash();
  manifest.warmup_tokens = cfg.resolved_warmup();
  manifest.activation = cfg.model.activation;

  Checkpoint ckpt;
  ckpt.config = cfg.model;
  ckpt.weights = Weights<float>::initialize(cfg.model);

  auto emit = [&] {
    CheckpointRecord rec;
    rec.tokens_seen = ckpt.tokens_seen;
    rec.step = ckpt.step;
    if (!cfg.out_dir.empty()) {
      char name[40];
      std::snprintf(name, sizeof(name), "ckpt_%06llu.splw",
                    static_cast<unsigned long long>(ckpt.step));
      rec.path = cfg.out_dir / name;
      save_checkpoint(ckpt, rec.path);
    }
    manifest.checkpoints.push_back(rec);
    if (cfg.out_dir.empty()) result.checkpoints.push_back(ckpt);
    if (on_checkpoint) on_checkpoint(ckpt);
  };
  emit();

  const std::uint64_t per_step = cfg.tokens_per_step();
  const std::uint64_t steps = cfg.total_tokens / per_step;
  const std::uint64_t every = cfg.resolved_checkpoint_every();
  std::uint64_t next_ckpt = every;
  std::mt19937_64 rng(cfg.model.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState state;

  for (std::uint64_t s = 0; s < steps; ++s) {
    const TokenBatch batch = sample_batch(split.train, cfg, rng);
    const double lr = lr_at(ckpt.tokens_seen, cfg);
    const StepStats st = backward_step(batch, cfg, lr, ckpt.weights, state);
    ckpt.tokens_seen += per_step;
    ckpt.step = s + 1;
    manifest.losses.push_back({ckpt.step, ckpt.tokens_seen, st.loss, lr});
    const bool last = s + 1 == steps;
    if (ckpt.tokens_seen >= next_ckpt || last) {
      emit();
      while (next_ckpt <= ckpt.tokens_seen) next_ckpt += every;
    }
  }

  const std::size_t n = manifest.losses.size();
  if (n >= 10) {
    const std::size_t tenth = n / 10;
    double first = 0.0, lastm = 0.0;
    for (std::size_t i = 0; i < tenth; ++i) {
      first += manifest.losses[i].loss;
      lastm += manifest.losses[n - 1 - i].loss;
    }
    manifest.loss_decreased = lastm < first;
  }
  if (!cfg.out_dir.empty()) manifest.save(cfg.out_dir);
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  const TokenStream corpus = load_tokens(cfg.corpus_path);
  return train(cfg, corpus);
}

void RunManifest::save(const std::filesystem::path& dir) const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["warmup_tokens"] = warmup_tokens;
  j["activation"] = std::string(to_string(activation));
  j["loss_decreased"] = loss_decreased;
  j["checkpoints"] = nlohmann::json::array();
  for (const auto& c : checkpoints) {
    j["checkpoints"].push_back(
        {{"path", c.path.filename().string()}, {"tokens_seen", c.tokens_seen}, {"step", c.step}});
  }
  j["loss_csv"] = "loss.csv";
  io::write_atomic(dir / "manifest.json", j.dump(2) + "\n");

  io::CsvWriter csv({"step", "tokens_seen", "loss", "lr"});
  for (const auto& l : losses) csv.add(l.step, l.tokens_seen, l.loss, l.lr);
  csv.save(dir / "loss.csv");
}

RunManifest RunManifest::load(const std::filesystem::path& dir) {
  const auto bytes = io::read_bytes(dir / "manifest.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed run manifest: " + std::string(e.what()));
  }
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.warmup_tokens = j.at("warmup_tokens").get<std::uint64_t>();
  m.activation = parse_activation(j.at("activation").get<std::string>());
  m.loss_decreased = j.value("loss_decreased", false);
  for (const auto& c : j.at("checkpoints")) {
    m.checkpoints.push_back({dir / c.at("path").get<std::string>(),
                             c.at("tokens_seen").get<std::uint64_t>(),
                             c.at("step").get<std::uint64_t>()});
  }
  const auto loss_path = dir / j.value("loss_csv", std::string("loss.csv"));
  if (std::filesystem::exists(loss_path)) {
    const auto table = io::read_csv(loss_path);
    const auto cs = table.column("step"), ct = table.column("tokens_seen"),
               cl = table.column("loss"), cr = table.column("lr");
    for (const auto& row : table.rows) {
      m.losses.push_back({std::stoull(row[cs]), std::stoull(row[ct]), std::stod(row[cl]),
                          std::stod(row[cr])});
    }
  }
  return m;
}

}  // namespace sparsing
