#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace msfv {

using Index = std::ptrdiff_t;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, Index>;
using Triplet = Eigen::Triplet<double, Index>;

/// Model parameter outside the admissible set (non-finite entries, sigma <= 0).
class InvalidModel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A sparse or dense Cholesky factorization could not be computed.
class FactorizationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A basis-derivative operator was requested at a model other than the one
/// the basis was assembled from.
class StaleBasis : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The Galerkin-reduced operator could not be factored even after shifting.
class ReducedSingular : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msfv
