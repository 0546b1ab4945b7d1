#pragma once

#include <cstdint>
#include <span>

#include "sparsing/checkpoint.hpp"
#include "sparsing/data.hpp"

namespace sparsing {

struct PplResult {
  double ppl = 0.0;
  double mean_nll = 0.0;
  std::int64_t token_count = 0;  // predicted tokens
};

struct EvalOptions {
  int window = 0;  // 0 uses the model's max_seq_len
  int threads = 1;
  int windows_per_batch = 16;
  FfnObserver<float>* observer = nullptr;  // forces single-threaded evaluation
};

// Teacher-forced perplexity over non-overlapping windows. Every prediction counts
// equally (flat mean NLL over all predicted tokens); accumulation is in double.
PplResult evaluate_ppl(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                       const MaskConfig* mask = nullptr, const EvalOptions& opts = {});

// Summed next-token NLL of one logits block (vocab x T) against its tokens.
double sequence_nll(const MatF& logits, std::span<const TokenId> tokens);

}  // namespace sparsing
