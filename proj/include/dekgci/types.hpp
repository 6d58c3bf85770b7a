#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace dekgci {

using Scalar = double;
using Index = Eigen::Index;

// Embedding tables are row-per-node, so rows stay contiguous.
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using VecRef = Eigen::Ref<const Vec>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the 1-based line number.
struct ParseError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct TrainingDiverged : Error {
  using Error::Error;
};

inline Scalar leaky_relu(Scalar x, Scalar slope) { return x >= Scalar(0) ? x : slope * x; }

// Derivative convention at 0: slope. Never reaches a parameter on the
// paths where the preactivation is exactly zero (empty neighbor sums).
inline Scalar leaky_relu_grad(Scalar activated, Scalar slope) {
  return activated > Scalar(0) ? Scalar(1) : slope;
}

template <class Derived>
auto leaky_relu(const Eigen::ArrayBase<Derived>& x, Scalar slope) {
  return (x >= Scalar(0)).select(x, slope * x);
}

inline Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace dekgci
