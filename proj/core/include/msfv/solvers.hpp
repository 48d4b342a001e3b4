#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/SparseCholesky>

#include "msfv/types.hpp"

namespace msfv {

/// Sparse Cholesky factorization of an SPD matrix (AMD ordering).
class DirectSolver {
 public:
  explicit DirectSolver(const SparseMatrix& a);

  Index size() const { return n_; }
  /// Nonzeros in the Cholesky factor.
  Index factor_nonzeros() const { return factor_nnz_; }
  /// Solves column by column; safe to call concurrently.
  Matrix solve(const Matrix& b) const;
  Vector solve(const Vector& b) const;

 private:
  Index n_ = 0;
  Index factor_nnz_ = 0;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<Index>>>
      llt_;
};

DirectSolver direct_factorize(const SparseMatrix& a);
Matrix direct_solve(const DirectSolver& factor, const Matrix& b);

struct IterativeResult {
  Matrix solution;
  int iterations = 0;
  /// Largest per-column relative residual ||A x - b|| / ||b||.
  double relative_residual = 0.0;
  bool converged = false;
  bool breakdown = false;
  /// Largest per-column relative residual, one entry per iteration
  /// (entry 0 is the initial residual).
  std::vector<double> history;
};

/// Raised when block CG meets a singular search-direction Gram matrix. The
/// current iterate is attached.
class SolverBreakdown : public std::runtime_error {
 public:
  SolverBreakdown(const std::string& what, IterativeResult partial)
      : std::runtime_error(what), result_(std::move(partial)) {}
  const IterativeResult& result() const { return result_; }

 private:
  IterativeResult result_;
};

using BlockOperator = std::function<Matrix(const Matrix&)>;

/// Block conjugate gradients for an SPD operator and several right-hand
/// sides, starting from zero. Converged columns are removed from the active
/// block. Stops when every column satisfies ||A x - b||/||b|| <= tol or after
/// `maxit` iterations.
IterativeResult block_cg(const BlockOperator& a, const Matrix& b, double tol, int maxit);
IterativeResult block_cg(const SparseMatrix& a, const Matrix& b, double tol, int maxit);

enum class SolverKind { Direct, BlockCG };

struct SolverOptions {
  SolverKind kind = SolverKind::Direct;
  double tolerance = 1e-6;
  int max_iterations = 100;
};

/// Fine-mesh solver for one assembled operator: either a factorization or
/// block CG against the operator.
class FineSolver {
 public:
  FineSolver(const SparseMatrix& a, const SolverOptions& options);

  Matrix solve(const Matrix& b) const;
  SolverKind kind() const { return options_.kind; }

 private:
  SolverOptions options_;
  std::shared_ptr<const SparseMatrix> matrix_;
  std::shared_ptr<const DirectSolver> direct_;
};

}  // namespace msfv
