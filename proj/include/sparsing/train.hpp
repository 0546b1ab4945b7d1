#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sparsing/checkpoint.hpp"
#include "sparsing/data.hpp"

namespace sparsing {

struct TrainConfig {
  ModelConfig model;
  int batch_size = 16;
  int seq_len = 64;
  std::uint64_t total_tokens = 2'000'000;
  double peak_lr = 3e-3;
  // Negative means 5% of total_tokens.
  std::int64_t warmup_tokens = -1;
  // Linear decay to zero over the final `decay_tokens`; 0 keeps the plateau to the end.
  std::uint64_t decay_tokens = 0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  // 0 means total_tokens / 20.
  std::uint64_t checkpoint_every_tokens = 0;
  std::filesystem::path corpus_path;
  double valid_fraction = 0.05;
  std::filesystem::path out_dir;  // empty keeps checkpoints in memory only
  int log_every_steps = 10;

  std::uint64_t resolved_warmup() const;
  std::uint64_t resolved_checkpoint_every() const;
  std::uint64_t tokens_per_step() const {
    return static_cast<std::uint64_t>(batch_size) * static_cast<std::uint64_t>(seq_len);
  }
  void validate() const;
  // Canonical key=value rendering; the config hash is computed over it.
  std::string canonical() const;
  std::string hash() const;
};

// Piecewise-linear schedule: linear warmup from 0, plateau at peak_lr, optional linear decay tail.
double lr_at(std::uint64_t tokens_seen, const TrainConfig& cfg);

struct CheckpointRecord {
  std::filesystem::path path;
  std::uint64_t tokens_seen = 0;
  std::uint64_t step = 0;
};

struct LossRecord {
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct RunManifest {
  std::vector<CheckpointRecord> checkpoints;  // tokens_seen strictly increasing
  std::vector<LossRecord> losses;
  std::string config_hash;
  std::uint64_t warmup_tokens = 0;
  Activation activation = Activation::ReLU;
  bool loss_decreased = false;  // mean loss over the last 10% of steps below the first 10%

  void save(const std::filesystem::path& dir) const;  // manifest.json + loss.csv
  static RunManifest load(const std::filesystem::path& dir);
};

struct TrainResult {
  RunManifest manifest;
  std::vector<Checkpoint> checkpoints;  // same order as manifest.checkpoints
};

using CheckpointCallback = std::function<void(const Checkpoint&)>;

// AdamW with decoupled weight decay on every non-norm tensor.
struct AdamState {
  Weights<float> m, v;
  std::uint64_t t = 0;
};

struct StepStats {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// One optimizer step on `batch` at learning rate `lr`; returns pre-update loss.
StepStats backward_step(const TokenBatch& batch, const TrainConfig& cfg, double lr,
                        Weights<float>& weights, AdamState& state);

// Deterministic given cfg.model.seed; throws NumericError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, std::span<const TokenId> corpus,
                  const CheckpointCallback& on_checkpoint = {});
TrainResult train(const TrainConfig& cfg);

}  // namespace sparsing
