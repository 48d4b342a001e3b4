#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "msfv/basis.hpp"
#include "msfv/diffusion.hpp"
#include "msfv/mesh.hpp"
#include "msfv/solvers.hpp"
#include "msfv/types.hpp"

namespace msfv {

/// Sources, receivers and observations. P and Q are pinned (num_nodes-1 rows).
struct Survey {
  SparseMatrix receivers;  // P, N' x N_r
  SparseMatrix sources;    // Q, N' x N_s
  Matrix observed;         // N_r x N_s, may be empty before simulation
  double noise_level = 0.0;

  Index num_receivers() const { return receivers.cols(); }
  Index num_sources() const { return sources.cols(); }
  /// Throws std::invalid_argument if shapes disagree with `free_nodes`.
  void validate(Index free_nodes) const;
};

/// Matrix-free Jacobian of the predicted data (N_r x N_s) with respect to m.
class SensitivityOp {
 public:
  virtual ~SensitivityOp() = default;
  virtual Matrix apply(const Vector& dm) const = 0;
  virtual Vector apply_transpose(const Matrix& w) const = 0;
  virtual Index num_params() const = 0;
};

struct FullState {
  Vector model;
  std::shared_ptr<const DiffusionOperator> op;
  std::shared_ptr<const FineSolver> solver;
  Matrix fields;  // U = A^{-1} Q, pinned
  Matrix data;    // P' U
};

FullState forward_full(const TensorMesh& mesh, const Vector& m, const Survey& survey,
                       const SolverOptions& solver = {});

/// Solver for the Galerkin operator S' A S: dense Cholesky up to
/// kDenseReducedLimit unknowns, sparse above.
class ReducedOperator {
 public:
  static constexpr Index kDenseReducedLimit = 5000;

  ReducedOperator(const SparseMatrix& s, const SparseMatrix& a);

  Matrix solve(const Matrix& b) const;
  Index size() const { return n_; }
  /// Diagonal shift added because the plain factorization was unusable.
  double shift() const { return shift_; }
  bool shifted() const { return shift_ != 0.0; }
  /// Dense copy of S' A S (without shift); for inspection and tests.
  Matrix dense() const;

 private:
  Index n_ = 0;
  double shift_ = 0.0;
  SparseMatrix sparse_;
  std::optional<Eigen::LLT<Matrix>> dense_factor_;
  std::optional<DirectSolver> sparse_factor_;
};

struct ReducedState {
  Vector model;
  std::shared_ptr<const MultiscaleBasis> basis;
  std::shared_ptr<const DiffusionOperator> op;
  std::shared_ptr<const ReducedOperator> reduced;
  Matrix coefficients;  // T = A_k^{-1} S' Q, k x N_s
  Matrix data;          // P' S T
};

/// Reduced forward problem with the given basis. The basis may have been
/// assembled at `m` (adaptive) or at a reference model (fixed).
ReducedState forward_reduced(const TensorMesh& mesh, const Vector& m, const Survey& survey,
                             std::shared_ptr<const MultiscaleBasis> basis);

/// J = -P' A^{-1} grad_m(A u) for every source.
std::unique_ptr<SensitivityOp> sensitivity_full(const TensorMesh& mesh, const FullState& state,
                                                const Survey& survey);

/// Frozen-basis Jacobian -P' S A_k^{-1} S' G.
std::unique_ptr<SensitivityOp> sensitivity_fixed(const TensorMesh& mesh,
                                                 const ReducedState& state, const Survey& survey);

/// Jacobian of the adaptive reduced forward map, including the derivatives
/// Y_k and X_k of the basis. The basis must have been assembled at
/// state.model (StaleBasis otherwise).
std::unique_ptr<SensitivityOp> sensitivity_adaptive(const TensorMesh& mesh,
                                                    const ReducedState& state,
                                                    const Survey& survey,
                                                    WorkerPool& pool = WorkerPool::serial());

/// Forward map plus Jacobian at one model.
struct Linearization {
  Matrix data;
  std::shared_ptr<const SensitivityOp> jacobian;
  bool basis_rebuilt = false;
  bool reduced_shifted = false;
};

/// Forward map abstraction driven by the Gauss-Newton loop.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual Index num_params() const = 0;
  virtual Matrix predict(const Vector& m) = 0;
  virtual Linearization linearize(const Vector& m) = 0;
};

/// Fine-mesh forward map (direct or block-CG solves).
class FullForwardModel : public ForwardModel {
 public:
  FullForwardModel(TensorMesh mesh, std::shared_ptr<const Survey> survey, SolverOptions solver);
  Index num_params() const override { return mesh_.num_cells(); }
  Matrix predict(const Vector& m) override;
  Linearization linearize(const Vector& m) override;

 private:
  const FullState& state_at(const Vector& m);
  TensorMesh mesh_;
  std::shared_ptr<const Survey> survey_;
  SolverOptions solver_;
  std::optional<FullState> cache_;
};

/// Reduced forward map with a basis frozen at construction.
class FixedBasisForwardModel : public ForwardModel {
 public:
  FixedBasisForwardModel(TensorMesh mesh, std::shared_ptr<const Survey> survey,
                         std::shared_ptr<const MultiscaleBasis> basis);
  Index num_params() const override { return mesh_.num_cells(); }
  Matrix predict(const Vector& m) override;
  Linearization linearize(const Vector& m) override;

 private:
  const ReducedState& state_at(const Vector& m);
  TensorMesh mesh_;
  std::shared_ptr<const Survey> survey_;
  std::shared_ptr<const MultiscaleBasis> basis_;
  std::optional<ReducedState> cache_;
};

/// Reduced forward map whose basis is reassembled at every model.
class AdaptiveBasisForwardModel : public ForwardModel {
 public:
  AdaptiveBasisForwardModel(std::shared_ptr<const CoarsePartition> partition,
                            std::shared_ptr<const Survey> survey,
                            std::shared_ptr<const BoundaryConditionSet> conditions,
                            WorkerPool& pool = WorkerPool::serial());
  Index num_params() const override { return partition_->mesh().num_cells(); }
  Matrix predict(const Vector& m) override;
  Linearization linearize(const Vector& m) override;
  /// Number of basis assemblies so far.
  Index rebuilds() const { return rebuilds_; }

 private:
  const ReducedState& state_at(const Vector& m, bool& rebuilt);
  std::shared_ptr<const CoarsePartition> partition_;
  std::shared_ptr<const Survey> survey_;
  std::shared_ptr<const BoundaryConditionSet> conditions_;
  WorkerPool* pool_;
  std::optional<ReducedState> cache_;
  Index rebuilds_ = 0;
};

}  // namespace msfv
