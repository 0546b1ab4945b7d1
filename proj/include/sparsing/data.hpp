#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sparsing/transformer.hpp"

namespace sparsing {

using TokenStream = std::vector<TokenId>;

// Raw byte file as a byte-level token stream.
TokenStream load_tokens(const std::filesystem::path& path);

// Training and validation slices of one corpus. The validation slice is the
// trailing `valid_fraction` of the bytes, so the two byte ranges never overlap.
struct CorpusSplit {
  TokenStream train;
  TokenStream valid;
  std::size_t valid_begin = 0;  // byte offset of the validation slice
};

CorpusSplit split_corpus(std::span<const TokenId> corpus, double valid_fraction);

// Non-overlapping windows of `window` tokens covering `stream`; a trailing
// remainder of at least two tokens forms a final shorter window.
std::vector<std::span<const TokenId>> eval_windows(std::span<const TokenId> stream, int window);

// Deterministic English-like text: a fixed lexicon of invented words arranged by a
// small grammar with topic-dependent vocabulary. `topic_bias` in [0, 1] controls how
// strongly sentences draw from one topic's vocabulary; different `topic` values give
// corpora with distinct word statistics.
struct SyntheticCorpusOptions {
  std::size_t bytes = 1 << 20;
  std::uint64_t seed = 1;
  int topic = -1;  // -1 mixes all topics
  double topic_bias = 0.7;
};

TokenStream generate_synthetic_corpus(const SyntheticCorpusOptions& opts);

}  // namespace sparsing
