#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "sparsing/analytics.hpp"

using namespace sparsing;

namespace {

TokenStream text(std::size_t n, int topic = -1) {
  SyntheticCorpusOptions o;
  o.bytes = n;
  o.topic = topic;
  return generate_synthetic_corpus(o);
}

// Forwards to the counter and tallies |s| >= eps per (layer, neuron) and per token id.
class FatTally : public FfnObserver<float> {
 public:
  FatTally(int layers, int d_f, double eps) : eps_(eps), hits(Eigen::MatrixXd::Zero(layers, d_f)) {}
  void on_ffn(int layer, std::span<const TokenId> tokens, const MatF&, const MatF& s, const MatF&,
              const ActiveMask&) override {
    for (Eigen::Index t = 0; t < s.cols(); ++t) {
      int on = 0;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        if (std::abs(static_cast<double>(s(i, t))) >= eps_) {
          hits(layer, i) += 1.0;
          ++on;
        }
      }
      per_token[tokens[t]].push_back(static_cast<double>(on) / static_cast<double>(s.rows()));
    }
  }
  double eps_;
  Eigen::MatrixXd hits;
  std::map<int, std::vector<double>> per_token;  // per layer call, in order
};

// ln prod C(n, t_i) by counting subsets of {0..n-1} of size t_i, one group at a time.
double enumerated_log_count(int n, const std::vector<int>& sizes) {
  double total = 0.0;
  for (int t : sizes) {
    std::int64_t count = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) count += __builtin_popcount(mask) == t;
    total += std::log(static_cast<double>(count));
  }
  return total;
}

}  // namespace

TEST_CASE("every neuron active or none active") {
  const auto ck = testing::tiny_checkpoint(Activation::SiLU);
  const TokenStream data = text(300);
  const auto all = collect_activation_stats(ck, data, MaskConfig::dense());
  CHECK((all.per_neuron_frequency.array() == 1.0).all());
  const auto h = frequency_histogram(all, 10);
  CHECK(h.aggregate.counts.back() == 2 * 40);
  CHECK(std::count(h.aggregate.counts.begin(), h.aggregate.counts.end(), 0) == 9);

  const auto none = collect_activation_stats(ck, data, MaskConfig::top_k(0));
  CHECK((none.per_neuron_frequency.array() == 0.0).all());
  CHECK(frequency_histogram(none, 10).aggregate.counts.front() == 80);
  CHECK_THROWS_AS(collect_activation_stats(ck, TokenStream{}, MaskConfig::dense()), DataError);
}

TEST_CASE("frequencies and token ratios match an independent tally") {
  const auto ck = testing::tiny_checkpoint(Activation::SiLU);
  const TokenStream data = text(8);
  const double eps = 0.05;
  FatTally tally(2, 40, eps);
  EvalOptions o;
  o.observer = &tally;
  const MaskConfig mask = MaskConfig::fat(eps);
  evaluate_ppl(ck, data, &mask, o);
  const auto st = collect_activation_stats(ck, data, mask, {}, 1);
  CHECK(st.tokens == 8);
  CHECK(st.per_neuron_frequency == tally.hits / 8.0);
  std::int64_t total = 0;
  for (auto c : st.token_counts) total += c;
  CHECK(total == 8);
  for (const auto& [id, calls] : tally.per_token) {
    // two layer calls per occurrence
    double sum = 0.0;
    for (double v : calls) sum += v;
    const double want = sum / static_cast<double>(calls.size());
    CHECK(st.per_token_mean_ratio.at(id) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("occurrence floor") {
  const auto ck = testing::tiny_checkpoint();
  TokenStream data(64, 'a');
  data[10] = 'b';
  const auto st = collect_activation_stats(ck, data, MaskConfig::top_k(10));
  CHECK(st.per_token_mean_ratio.size() == 1);
  CHECK(st.per_token_mean_ratio.at('a') == doctest::Approx(0.25));
  CHECK(st.omitted_tokens == 1);
  const auto table = token_activation_table(st);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0].occurrences == 63);
  CHECK(token_table_csv(table).rfind("token,mean_activation_ratio,occurrences\n", 0) == 0);
}

TEST_CASE("mean neuron frequency equals the aggregate activation ratio") {
  const auto ck = testing::tiny_checkpoint(Activation::ReLU);
  const TokenStream data = text(3000);
  for (const MaskConfig& m : {MaskConfig::zero_relu(), MaskConfig::fat(0.1), MaskConfig::top_k(7)}) {
    const auto st = collect_activation_stats(ck, data, m);
    const auto rep = measure_with_mask(ck, data, m);
    CHECK(std::abs(st.per_neuron_frequency.mean() - rep.aggregate_activation_ratio) < 1e-9);
  }
}

TEST_CASE("histogram binning") {
  const std::vector<double> v{0.0, 0.05, 0.1, 0.5, 0.99, 1.0};
  const auto h = make_histogram(v, 10);
  CHECK(h.counts == std::vector<std::int64_t>{2, 1, 0, 0, 0, 1, 0, 0, 0, 2});
  CHECK_THROWS_AS(make_histogram(std::vector<double>{1.5}, 10), RangeError);
  CHECK(histogram_layers(1) == std::vector<int>{0});
  CHECK(histogram_layers(2) == std::vector<int>{0, 1});
  CHECK(histogram_layers(5) == std::vector<int>{0, 2, 4});
  CHECK(histogram_layers(6) == std::vector<int>{0, 2, 5});
}

TEST_CASE("pairwise comparison") {
  std::map<int, double> a, shifted, shuffled;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.8);
  std::vector<double> vals;
  for (int i = 0; i < 1000; ++i) vals.push_back(u(rng));
  for (int i = 0; i < 1000; ++i) {
    a[i] = vals[i];
    shifted[i] = vals[i] + 0.1;
  }
  auto perm = vals;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < 1000; ++i) shuffled[i] = perm[i];

  const auto self = pairwise_compare(a, a);
  CHECK(self.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(self.mean_abs_diff == 0.0);
  const auto sh = pairwise_compare(a, shifted);
  CHECK(sh.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sh.mean_abs_diff == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(std::abs(pairwise_compare(a, shuffled).pearson_r) < 0.2);

  std::map<int, double> b{{5, 0.3}, {2000, 0.1}};
  CHECK(pairwise_compare(a, b).pairs.size() == 1);
  CHECK(std::isnan(pairwise_compare(a, b).pearson_r));
  CHECK_THROWS_AS(pairwise_compare(a, std::map<int, double>{{-1, 0.1}}), DataError);
  CHECK(comparison_json(pairwise_compare(a, b)).find("null") != std::string::npos);
}

TEST_CASE("comparison across datasets on a model") {
  const auto ck = testing::tiny_checkpoint(Activation::ReLU);
  const auto x = collect_activation_stats(ck, text(4000, 0), MaskConfig::zero_relu());
  const auto y = collect_activation_stats(ck, text(4000, 1), MaskConfig::zero_relu());
  const auto self = pairwise_compare(x, x);
  CHECK(self.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& p : self.pairs) CHECK(p.a == p.b);
  const auto cross = pairwise_compare(x, y);
  CHECK(!cross.pairs.empty());
  CHECK(comparison_csv(cross).rfind("token,ratio_a,ratio_b\n", 0) == 0);
}

TEST_CASE("specialization count against enumeration") {
  for (int n = 1; n <= 12; ++n) {
    for (int t1 = 1; t1 <= n; ++t1) {
      CHECK(log_specialization_count({n, {t1}}) == doctest::Approx(enumerated_log_count(n, {t1})).epsilon(1e-12));
      for (int t2 = 1; t2 <= n; t2 += 2) {
        const int t3 = (t1 + t2) % n + 1;
        CHECK(log_specialization_count({n, {t1, t2, t3}}) ==
              doctest::Approx(enumerated_log_count(n, {t1, t2, t3})).epsilon(1e-12));
      }
    }
  }
  CHECK(std::exp(log_specialization_count({5, {2, 3}})) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK_THROWS_AS(log_specialization_count({5, {6}}), RangeError);
  CHECK_THROWS_AS(log_specialization_count({5, {}}), RangeError);
}

TEST_CASE("specialization count grows faster than linearly") {
  for (double ratio : {0.1, 0.25, 0.5}) {
    for (std::int64_t d : {100, 200, 400}) {
      const auto t = static_cast<std::int64_t>(std::llround(ratio * d));
      const auto t2 = static_cast<std::int64_t>(std::llround(ratio * 2 * d));
      const double small = log_specialization_count({d, {t, t}});
      const double big = log_specialization_count({2 * d, {t2, t2}});
      CHECK(big > 2.0 * small);
    }
  }
}
