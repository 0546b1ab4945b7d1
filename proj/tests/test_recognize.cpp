#include <doctest.h>

#include <algorithm>
#include <limits>

#include "helpers.hpp"
#include "sparsing/mask.hpp"
#include "sparsing/recognize.hpp"

using namespace sparsing;

namespace {

const VecD kS = (VecD(4) << 0.5, -0.9, 0.1, 0.0).finished();

std::vector<int> ids(std::initializer_list<int> v) { return v; }

bool subset(const WeakSet& a, const WeakSet& b) {
  return std::includes(b.indices.begin(), b.indices.end(), a.indices.begin(), a.indices.end());
}

}  // namespace

TEST_CASE("zero rule") {
  const VecD s = (VecD(4) << 0.5, 0.0, 0.1, 0.0).finished();
  CHECK(recognize_zero(s, Activation::ReLU).indices == ids({1, 3}));
  CHECK(recognize_zero(VecD::Constant(5, 0.2), Activation::ReLU).indices.empty());
  CHECK_THROWS_AS(recognize_zero(s, Activation::SiLU), ConfigError);
}

TEST_CASE("top-k") {
  CHECK(recognize_topk(kS, 2).indices == ids({2, 3}));
  CHECK(recognize_topk(kS, 4).indices.empty());
  CHECK(recognize_topk(kS, 0).indices == ids({0, 1, 2, 3}));
  CHECK_THROWS_AS(recognize_topk(kS, 5), RangeError);
  // ties keep the lower index
  CHECK(recognize_topk(VecD::Constant(3, 1.0), 1).indices == ids({1, 2}));
}

TEST_CASE("FAT threshold") {
  CHECK(recognize_fat(kS, 0.2).indices == ids({2, 3}));
  CHECK(recognize_fat(kS, std::numeric_limits<double>::infinity()).indices == ids({0, 1, 2, 3}));
  CHECK_THROWS_AS(recognize_fat(kS, -1.0), RangeError);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const VecD s = testing::random_vec<double>(30, rng).cwiseMax(0.0);
    CHECK(recognize_fat(s, 0.0).indices == recognize_zero(s, Activation::ReLU).indices);
  }
}

TEST_CASE("CETT norm threshold") {
  const VecD n = (VecD(2) << 3.0, 4.0).finished();
  CHECK(recognize_cett(n, 3.5).indices == ids({0}));
  CHECK(recognize_cett(VecD::Constant(3, 0.0), 0.0).indices.empty());
}

TEST_CASE("weak sets nest as the threshold grows") {
  std::mt19937_64 rng(6);
  const VecD s = testing::random_vec<double>(200, rng);
  const VecD n = s.cwiseAbs() * 2.0;
  WeakSet prev_fat = recognize_fat(s, 0.0);
  WeakSet prev_cett = recognize_cett(n, 0.0);
  for (int i = 1; i <= 50; ++i) {
    const double eps = 3.0 * i / 50.0;
    const WeakSet fat = recognize_fat(s, eps);
    const WeakSet cett = recognize_cett(n, eps);
    CHECK(subset(prev_fat, fat));
    CHECK(subset(prev_cett, cett));
    prev_fat = fat;
    prev_cett = cett;
  }
  for (int k = 200; k > 0; --k) {
    CHECK(subset(recognize_topk(s, k), recognize_topk(s, k - 1)));
  }
}

TEST_CASE("a random ReLU layer zeroes about half of its neurons") {
  std::mt19937_64 rng(8);
  const auto w = testing::random_ffn<double>(64, 2048, rng);
  const VecD x = testing::random_vec<double>(64, rng);
  const VecD s = gate_activations(x, w, Activation::ReLU);
  const double frac = static_cast<double>(recognize_zero(s, Activation::ReLU).size()) / 2048.0;
  CHECK(std::abs(frac - 0.5) < 0.05);
}

TEST_CASE("mask selection matches the per-token recognizers") {
  const MatF s = MatF::Random(12, 7);
  const MatF coeff = MatF::Random(12, 7);
  const VecF out_norms = VecF::Random(12).cwiseAbs();
  const MaskConfig top = MaskConfig::top_k(5);
  const ActiveMask a = select_active(top, 0, Activation::SiLU, s, coeff, out_norms);
  const MaskConfig cett = MaskConfig::cett(0.3, {0.2});
  const ActiveMask b = select_active(cett, 0, Activation::SiLU, s, coeff, out_norms);
  for (int t = 0; t < 7; ++t) {
    const WeakSet wt = recognize_topk(s.col(t), 5);
    const VecF n = coeff.col(t).cwiseAbs().cwiseProduct(out_norms);
    const WeakSet wc = recognize_cett(n, 0.2);
    for (int i = 0; i < 12; ++i) {
      CHECK(a(i, t) == !wt.contains(i));
      CHECK(b(i, t) == !wc.contains(i));
    }
  }
  CHECK_THROWS_AS(select_active(MaskConfig::cett(0.3, {0.2}), 1, Activation::SiLU, s, coeff, out_norms),
                  ConfigError);
  CHECK_THROWS_AS(select_active(MaskConfig::zero_relu(), 0, Activation::SiLU, s, coeff, out_norms),
                  ConfigError);
}

TEST_CASE("method names") {
  for (Method m : {Method::Dense, Method::ZeroReLU, Method::TopK, Method::FAT, Method::CETT}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS(parse_method("bogus"));
}
