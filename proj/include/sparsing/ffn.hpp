#pragma once

#include <span>
#include <string>
#include <vector>

#include "sparsing/types.hpp"

namespace sparsing {

// Gated feed-forward block: W_out (sigma(W_gate x) .* (W_in x)).
// Neuron i owns row i of W_gate and W_in and column i of W_out.
template <typename Scalar>
struct FfnWeights {
  Mat<Scalar> w_gate;  // d_f x d_h
  Mat<Scalar> w_in;    // d_f x d_h
  Mat<Scalar> w_out;   // d_h x d_f

  Eigen::Index d_h() const { return w_gate.cols(); }
  Eigen::Index d_f() const { return w_gate.rows(); }

  void validate() const {
    if (w_in.rows() != d_f() || w_in.cols() != d_h() || w_out.rows() != d_h() ||
        w_out.cols() != d_f()) {
      throw DimensionError("FFN weight shapes are inconsistent");
    }
  }
};

// Per-neuron quantities for one token.
struct NeuronRecord {
  double s = 0.0;         // activation value sigma(W_gate_i x)
  double inner = 0.0;     // W_in_i x
  double out_norm = 0.0;  // ||W_out[:, i]||
  double n_norm = 0.0;    // ||n_i|| = |s| |inner| out_norm
};

namespace detail {

template <typename Scalar, typename Derived>
void check_input(const FfnWeights<Scalar>& w, const Eigen::MatrixBase<Derived>& x) {
  w.validate();
  if (x.rows() != w.d_h()) {
    throw DimensionError("input has " + std::to_string(x.rows()) + " rows, FFN expects " +
                         std::to_string(w.d_h()));
  }
}

}  // namespace detail

template <typename Scalar>
Vec<Scalar> gate_activations(const Vec<Scalar>& x, const FfnWeights<Scalar>& w, Activation act) {
  detail::check_input(w, x);
  return activate_array((w.w_gate * x).array(), act).matrix();
}

// Coefficients h_i = s_i * (W_in_i x); FFN(x) = W_out h.
template <typename Scalar>
Vec<Scalar> neuron_coefficients(const Vec<Scalar>& x, const FfnWeights<Scalar>& w,
                                Activation act) {
  detail::check_input(w, x);
  return (activate_array((w.w_gate * x).array(), act) * (w.w_in * x).array()).matrix();
}

template <typename Scalar>
Vec<Scalar> ffn_forward(const Vec<Scalar>& x, const FfnWeights<Scalar>& w, Activation act) {
  return w.w_out * neuron_coefficients(x, w, act);
}

template <typename Scalar>
Vec<Scalar> neuron_output(Eigen::Index i, const Vec<Scalar>& x, const FfnWeights<Scalar>& w,
                          Activation act) {
  detail::check_input(w, x);
  if (i < 0 || i >= w.d_f()) throw RangeError("neuron index out of range");
  const Scalar s = activate(Scalar(w.w_gate.row(i).dot(x)), act);
  const Scalar inner = w.w_in.row(i).dot(x);
  return w.w_out.col(i) * (s * inner);
}

// Sum of n_i over neurons not in `weak`.
template <typename Scalar>
Vec<Scalar> ffn_forward_masked(const Vec<Scalar>& x, const FfnWeights<Scalar>& w, Activation act,
                               std::span<const int> weak) {
  Vec<Scalar> h = neuron_coefficients(x, w, act);
  for (int i : weak) {
    if (i < 0 || i >= w.d_f()) throw RangeError("weak neuron index out of range");
    h(i) = Scalar(0);
  }
  return w.w_out * h;
}

// Sum of n_i over neurons in `weak` (the truncated tail).
template <typename Scalar>
Vec<Scalar> ffn_tail(const Vec<Scalar>& x, const FfnWeights<Scalar>& w, Activation act,
                     std::span<const int> weak) {
  const Vec<Scalar> h = neuron_coefficients(x, w, act);
  Vec<Scalar> kept = Vec<Scalar>::Zero(h.size());
  for (int i : weak) {
    if (i < 0 || i >= w.d_f()) throw RangeError("weak neuron index out of range");
    kept(i) = h(i);
  }
  return w.w_out * kept;
}

template <typename Scalar>
Vec<Scalar> out_column_norms(const FfnWeights<Scalar>& w) {
  return w.w_out.colwise().norm().transpose();
}

// ||n_i|| for every neuron via |h_i| * ||W_out[:, i]||.
template <typename Scalar>
Vec<Scalar> neuron_norms(const Vec<Scalar>& x, const FfnWeights<Scalar>& w, Activation act,
                         const Vec<Scalar>& out_norms) {
  return (neuron_coefficients(x, w, act).array().abs() * out_norms.array()).matrix();
}

template <typename Scalar>
std::vector<NeuronRecord> neuron_records(const Vec<Scalar>& x, const FfnWeights<Scalar>& w,
                                         Activation act) {
  detail::check_input(w, x);
  const Vec<Scalar> pre = w.w_gate * x;
  const Vec<Scalar> inner = w.w_in * x;
  const Vec<Scalar> norms = out_column_norms(w);
  std::vector<NeuronRecord> out(static_cast<std::size_t>(w.d_f()));
  for (Eigen::Index i = 0; i < w.d_f(); ++i) {
    auto& r = out[static_cast<std::size_t>(i)];
    r.s = activate(pre(i), act);
    r.inner = inner(i);
    r.out_norm = norms(i);
    r.n_norm = std::abs(r.s) * std::abs(r.inner) * r.out_norm;
  }
  return out;
}

}  // namespace sparsing
