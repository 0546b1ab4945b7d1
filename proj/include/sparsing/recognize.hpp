#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string_view>
#include <vector>

#include "sparsing/types.hpp"

namespace sparsing {

// Weak-neuron recognition rules.
enum class Method { Dense, ZeroReLU, TopK, FAT, CETT };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

// Index set D of weakly-contributed neurons for one token at one layer.
struct WeakSet {
  int layer = 0;
  int token_position = 0;
  std::vector<int> indices;  // sorted, unique, within [0, d_f)
  Method method = Method::Dense;
  double param = 0.0;

  std::size_t size() const { return indices.size(); }
  bool contains(int i) const { return std::binary_search(indices.begin(), indices.end(), i); }
};

namespace detail {

template <typename Derived, typename Pred>
std::vector<int> collect_indices(const Eigen::MatrixBase<Derived>& v, Pred pred) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (pred(static_cast<double>(v(i)))) out.push_back(static_cast<int>(i));
  }
  return out;
}

inline void check_threshold(double eps) {
  if (!(eps >= 0.0)) throw RangeError("threshold must be non-negative");
}

}  // namespace detail

// D = {i : s_i = 0}. Only meaningful for ReLU.
template <typename Derived>
WeakSet recognize_zero(const Eigen::MatrixBase<Derived>& s, Activation act) {
  if (act != Activation::ReLU) {
    throw ConfigError("zero-threshold recognition requires a ReLU model");
  }
  WeakSet w;
  w.method = Method::ZeroReLU;
  w.indices = detail::collect_indices(s, [](double v) { return v == 0.0; });
  return w;
}

// Keeps the k largest |s_i| (lower index wins ties); everything else is weak.
template <typename Derived>
WeakSet recognize_topk(const Eigen::MatrixBase<Derived>& s, Eigen::Index k) {
  const Eigen::Index n = s.size();
  if (k < 0 || k > n) throw RangeError("top-k: k out of range");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto before = [&s](int a, int b) {
    const double va = std::abs(static_cast<double>(s(a)));
    const double vb = std::abs(static_cast<double>(s(b)));
    return va > vb || (va == vb && a < b);
  };
  std::nth_element(order.begin(), order.begin() + k, order.end(), before);
  WeakSet w;
  w.method = Method::TopK;
  w.param = static_cast<double>(k);
  w.indices.assign(order.begin() + k, order.end());
  std::sort(w.indices.begin(), w.indices.end());
  return w;
}

// D = {i : |s_i| < eps}
template <typename Derived>
WeakSet recognize_fat(const Eigen::MatrixBase<Derived>& s, double eps) {
  detail::check_threshold(eps);
  WeakSet w;
  w.method = Method::FAT;
  w.param = eps;
  if (eps == 0.0) {
    w.indices = detail::collect_indices(s, [](double v) { return v == 0.0; });
  } else {
    w.indices = detail::collect_indices(s, [eps](double v) { return std::abs(v) < eps; });
  }
  return w;
}

// D = {i : ||n_i|| < eps}
template <typename Derived>
WeakSet recognize_cett(const Eigen::MatrixBase<Derived>& n_norms, double eps) {
  detail::check_threshold(eps);
  WeakSet w;
  w.method = Method::CETT;
  w.param = eps;
  w.indices = detail::collect_indices(n_norms, [eps](double v) { return v < eps; });
  return w;
}

}  // namespace sparsing
