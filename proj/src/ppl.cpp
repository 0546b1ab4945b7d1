#include "sparsing/ppl.hpp"

#include <cmath>
#include <thread>

namespace sparsing {

double sequence_nll(const MatF& logits, std::span<const TokenId> tokens) {
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    const auto col = logits.col(static_cast<Eigen::Index>(t)).cast<double>();
    const double mx = col.maxCoeff();
    const double lse = std::log((col.array() - mx).exp().sum()) + mx;
    total += lse - col(tokens[t + 1]);
  }
  return total;
}

namespace {

// Groups equal-length windows into batches.
std::vector<TokenBatch> make_batches(const std::vector<std::span<const TokenId>>& windows,
                                     int per_batch) {
  std::vector<TokenBatch> out;
  std::size_t i = 0;
  while (i < windows.size()) {
    TokenBatch b;
    b.seq_len = static_cast<int>(windows[i].size());
    while (i < windows.size() && b.batch_size < per_batch &&
           static_cast<int>(windows[i].size()) == b.seq_len) {
      b.tokens.insert(b.tokens.end(), windows[i].begin(), windows[i].end());
      ++b.batch_size;
      ++i;
    }
    out.push_back(std::move(b));
  }
  return out;
}

double batch_nll(const Checkpoint& ckpt, const TokenBatch& batch, const ForwardOptions<float>& fo) {
  const MatF logits = forward_batch(ckpt.weights, ckpt.config, batch, fo);
  double total = 0.0;
  for (int b = 0; b < batch.batch_size; ++b) {
    total += sequence_nll(logits.middleCols(static_cast<Eigen::Index>(b) * batch.seq_len,
                                            batch.seq_len),
                          batch.sequence(b));
  }
  return total;
}

}  // namespace

PplResult evaluate_ppl(const Checkpoint& ckpt, std::span<const TokenId> dataset,
                       const MaskConfig* mask, const EvalOptions& opts) {
  if (dataset.size() < 2) throw DataError("evaluation dataset is empty");
  const int window = opts.window > 0 ? opts.window : ckpt.config.max_seq_len;
  const auto batches = make_batches(eval_windows(dataset, window), std::max(1, opts.windows_per_batch));

  ForwardOptions<float> fo;
  fo.mask = mask;
  fo.observer = opts.observer;

  // Per-batch sums reduced in order, so the result does not depend on thread count.
  std::vector<double> nll(batches.size(), 0.0);
  const int threads = opts.observer ? 1 : std::max(1, opts.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < batches.size(); ++i) nll[i] = batch_nll(ckpt, batches[i], fo);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < batches.size();
             i += static_cast<std::size_t>(threads)) {
          nll[i] = batch_nll(ckpt, batches[i], fo);
        }
      });
    }
  }

  PplResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    total += nll[i];
    r.token_count += static_cast<std::int64_t>(batches[i].batch_size) * (batches[i].seq_len - 1);
  }
  r.mean_nll = total / static_cast<double>(r.token_count);
  r.ppl = std::exp(r.mean_nll);
  if (!std::isfinite(r.ppl)) throw NumericError("non-finite perplexity");
  return r;
}

}  // namespace sparsing
