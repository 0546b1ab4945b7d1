#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sparsing {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecF = Vec<float>;
using MatF = Mat<float>;
using VecD = Vec<double>;
using MatD = Mat<double>;

// Column-per-token boolean mask, d_f rows.
using ActiveMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

using TokenId = std::uint8_t;

enum class Activation : std::uint32_t { ReLU = 0, SiLU = 1 };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

// Base of all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// sigma(0) == 0 for both activations.
template <typename Scalar>
inline Scalar activate(Scalar x, Activation act) {
  if (act == Activation::ReLU) return x > Scalar(0) ? x : Scalar(0);
  return x * sigmoid(x);
}

template <typename Scalar>
inline Scalar activate_grad(Scalar x, Activation act) {
  if (act == Activation::ReLU) return x > Scalar(0) ? Scalar(1) : Scalar(0);
  const Scalar sg = sigmoid(x);
  return sg * (Scalar(1) + x * (Scalar(1) - sg));
}

template <typename Derived>
auto activate_array(const Eigen::ArrayBase<Derived>& x, Activation act) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([act](Scalar v) { return activate(v, act); });
}

// Norm-wise relative difference ||a - b|| / ||b|| (absolute when b is zero).
template <typename A, typename B>
double relative_error(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double diff = (a.template cast<double>() - b.template cast<double>()).norm();
  const double ref = b.template cast<double>().norm();
  return ref > 0.0 ? diff / ref : diff;
}

}  // namespace sparsing
