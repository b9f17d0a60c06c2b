#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rfl {

using Index = Eigen::Index;

template <class T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// 64-bit reals throughout; equivalence tests run at 1e-9..1e-12 tolerances.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = VectorX<int>;

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed run configuration or query (e.g. disconnected join graph).
struct ConfigError : Error {
  using Error::Error;
};

/// Schema violation: missing column, key type mismatch, shape mismatch.
struct SchemaError : Error {
  using Error::Error;
};

/// Unparseable input data (cites row/column where possible).
struct ParseError : Error {
  using Error::Error;
};

/// Protocol violation between server and clients (missing/short message).
struct ProtocolError : Error {
  using Error::Error;
};

/// Numerical failure (solver divergence, non-convergence).
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace rfl
