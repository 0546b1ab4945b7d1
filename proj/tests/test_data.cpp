#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "sparsing/data.hpp"
#include "sparsing/io.hpp"
#include "sparsing/ppl.hpp"

using namespace sparsing;

TEST_CASE("corpus split keeps the validation tail disjoint") {
  TokenStream corpus(1000);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i] = static_cast<TokenId>(i % 251);
  const auto s = split_corpus(corpus, 0.1);
  CHECK(s.train.size() + s.valid.size() == corpus.size());
  CHECK(s.valid_begin == s.train.size());
  CHECK(s.valid.front() == corpus[s.valid_begin]);
  CHECK(s.valid.size() == 100);
  CHECK_THROWS(split_corpus(corpus, 0.0));
  CHECK_THROWS(split_corpus(corpus, 1.0));
}

TEST_CASE("evaluation windows") {
  TokenStream s(70, 1);
  auto w = eval_windows(s, 32);
  REQUIRE(w.size() == 3);
  CHECK(w[0].size() == 32);
  CHECK(w[2].size() == 6);
  s.resize(65);
  w = eval_windows(s, 32);
  CHECK(w.size() == 2);  // a lone trailing token predicts nothing
}

TEST_CASE("synthetic corpus is deterministic and topic dependent") {
  SyntheticCorpusOptions o;
  o.bytes = 20000;
  const auto a = generate_synthetic_corpus(o);
  const auto b = generate_synthetic_corpus(o);
  CHECK(a == b);
  CHECK(a.size() == 20000);
  o.topic = 0;
  const auto t0 = generate_synthetic_corpus(o);
  o.topic = 1;
  const auto t1 = generate_synthetic_corpus(o);
  CHECK(t0 != t1);
  for (TokenId c : a) CHECK((c == '\n' || (c >= 32 && c < 127)));
}

TEST_CASE("load_tokens reads raw bytes") {
  testing::TempDir dir("tokens");
  io::write_atomic(dir.path() / "c.txt", std::string("ab\xff"));
  const auto t = load_tokens(dir.path() / "c.txt");
  CHECK(t == TokenStream{'a', 'b', 0xff});
  CHECK_THROWS(load_tokens(dir.path() / "none.txt"));
}

TEST_CASE("uniform logits give perplexity 256") {
  auto ck = testing::tiny_checkpoint();
  ck.weights.lm_head.setZero();
  TokenStream data(200);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<TokenId>(i * 7);
  const auto r = evaluate_ppl(ck, data);
  CHECK(r.ppl == doctest::Approx(256.0).epsilon(1e-6));
  CHECK(r.token_count == 200 - 7);  // windows of 32: six full and one of 8
}

TEST_CASE("perplexity matches a brute-force softmax") {
  const auto ck = testing::tiny_checkpoint(Activation::SiLU);
  std::mt19937_64 rng(2);
  TokenStream data(32);
  for (auto& t : data) t = static_cast<TokenId>(rng() % 256);
  const MatF logits = transformer_forward(ck.weights, ck.config, std::span<const TokenId>(data));
  double nll = 0.0;
  for (int t = 0; t < 31; ++t) {
    double z = 0.0;
    for (int v = 0; v < 256; ++v) z += std::exp(static_cast<double>(logits(v, t)));
    nll += std::log(z) - logits(data[t + 1], t);
  }
  const auto r = evaluate_ppl(ck, data);
  CHECK(r.token_count == 31);
  CHECK(r.mean_nll == doctest::Approx(nll / 31).epsilon(1e-9));
  CHECK(r.ppl == doctest::Approx(std::exp(nll / 31)).epsilon(1e-9));
}

TEST_CASE("threaded evaluation matches single-threaded") {
  const auto ck = testing::tiny_checkpoint();
  SyntheticCorpusOptions o;
  o.bytes = 5000;
  const auto data = generate_synthetic_corpus(o);
  EvalOptions one;
  EvalOptions many;
  many.threads = 3;
  many.windows_per_batch = 4;
  CHECK(evaluate_ppl(ck, data, nullptr, one).mean_nll ==
        doctest::Approx(evaluate_ppl(ck, data, nullptr, many).mean_nll).epsilon(1e-9));
}

TEST_CASE("empty evaluation set") {
  const auto ck = testing::tiny_checkpoint();
  CHECK_THROWS_AS(evaluate_ppl(ck, TokenStream{1}), DataError);
}
