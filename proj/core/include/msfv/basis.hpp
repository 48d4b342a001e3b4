#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "msfv/mesh.hpp"
#include "msfv/types.hpp"
#include "msfv/worker_pool.hpp"

namespace msfv {

enum class Family { Lagrange, Source, Skeleton, LocalPca };

std::string_view to_string(Family f);

/// Which boundary-condition families make up the basis.
struct BasisSpec {
  bool lagrange = true;
  bool source = false;
  bool skeleton = false;
  bool local_pca = false;
  /// Maximum number of principal boundary traces kept per block.
  Index pca_rank = 1;
  /// If positive, the exact number of local-PCA functions, spread over the
  /// blocks as evenly as possible (block order breaks ties). Each block still
  /// keeps at most `pca_rank`.
  Index pca_total = 0;
  /// Reference model for the skeleton and local-PCA fields. Empty means the
  /// model handed to build_boundary_conditions.
  Vector reference_model;

  void validate() const;
};

/// Data prescribed to one basis function on one block.
struct BlockCondition {
  Index block = 0;
  Vector dirichlet;  // on the block boundary, in template boundary order
  Vector forcing;    // on the block interior, or empty for zero forcing
};

struct BasisFunctionData {
  Family family = Family::Lagrange;
  Index label = 0;  // coarse node, source, or block the function came from
  std::vector<BlockCondition> blocks;  // ascending block index
};

/// Boundary values and interior forcing for every basis function. A block
/// absent from a function's list keeps that function at zero inside it.
struct BoundaryConditionSet {
  std::vector<BasisFunctionData> functions;

  Index size() const { return static_cast<Index>(functions.size()); }
  void append(BoundaryConditionSet other);
};

/// One function per coarse node: the trilinear hat of that node on every
/// block boundary, zero forcing. A hat that vanishes once the pinned node is
/// zeroed (single-cell blocks) is dropped.
BoundaryConditionSet generate_bc_lagrange(const CoarsePartition& partition);

/// One function per source: the source restricted to each block interior,
/// zero on the skeleton. Sources with no interior support are dropped.
/// `sources` is pinned (num_nodes-1 rows).
BoundaryConditionSet generate_bc_source(const CoarsePartition& partition,
                                        const SparseMatrix& sources);

/// Full nodal fields (num_nodes rows, pinned entry 0) A(m_ref)^{-1} Q.
Matrix reference_fields(const TensorMesh& mesh, const Vector& m_ref, const SparseMatrix& sources);

/// One function per reference field: its trace on the skeleton, zero forcing.
BoundaryConditionSet generate_bc_skeleton(const CoarsePartition& partition, const Matrix& fields);
BoundaryConditionSet generate_bc_skeleton(const CoarsePartition& partition, const Vector& m_ref,
                                          const SparseMatrix& sources);

/// Per block: the normalized mean boundary trace of the reference fields
/// followed by the leading principal directions of the centered traces,
/// orthonormalized. Directions with singular value below 1e-10 of the largest
/// are dropped. Each function lives on a single block.
BoundaryConditionSet generate_bc_local_pca(const CoarsePartition& partition, const Matrix& fields,
                                           Index rank, Index total = 0);
BoundaryConditionSet generate_bc_local_pca(const CoarsePartition& partition, const Vector& m_ref,
                                           const SparseMatrix& sources, Index rank,
                                           Index total = 0);

/// All enabled families in the order lagrange, source, skeleton, local_pca.
BoundaryConditionSet build_boundary_conditions(const BasisSpec& spec,
                                               const CoarsePartition& partition,
                                               const SparseMatrix& sources);

/// Interior values x_I = A_II(m)^{-1} (q_I - A_IB x_B) of one block.
Vector solve_local_block(const CoarsePartition& partition, const Vector& m, Index block,
                         const Vector& dirichlet, const Vector& forcing = Vector());

class BasisDirectionalDerivative;
class BasisTransposeDerivative;

/// Model-dependent multiscale basis S_k(m), with the per-block interior
/// factorizations needed for its derivatives.
class MultiscaleBasis {
 public:
  static MultiscaleBasis assemble(std::shared_ptr<const BoundaryConditionSet> conditions,
                                  std::shared_ptr<const CoarsePartition> partition,
                                  const Vector& m, WorkerPool& pool = WorkerPool::serial());
  /// Builds the boundary conditions from `spec` and then the basis at `m`.
  static MultiscaleBasis assemble(const BasisSpec& spec, const CoarsePartition& partition,
                                  const Vector& m, const SparseMatrix& sources,
                                  WorkerPool& pool = WorkerPool::serial());

  /// Pinned rows (num_nodes-1) by k columns.
  const SparseMatrix& matrix() const { return s_; }
  Index size() const { return s_.cols(); }
  Family family(Index column) const { return conditions_->functions[column].family; }
  std::vector<Family> families() const;
  Index count(Family f) const;
  const Vector& model() const { return m_; }
  const CoarsePartition& partition() const { return *partition_; }
  const std::shared_ptr<const CoarsePartition>& shared_partition() const { return partition_; }
  const std::shared_ptr<const BoundaryConditionSet>& conditions() const { return conditions_; }

  /// Y_k(v, m) = d(S_k(m) v)/dm. Throws StaleBasis if m differs from model().
  BasisDirectionalDerivative Y(const Vector& v, const Vector& m,
                               WorkerPool& pool = WorkerPool::serial()) const;
  /// X_k(w, m) = d(S_k(m)' w)/dm for a pinned nodal vector w.
  BasisTransposeDerivative X(const Vector& w, const Vector& m,
                             WorkerPool& pool = WorkerPool::serial()) const;

  struct Block;

 private:
  friend class BasisDirectionalDerivative;
  friend class BasisTransposeDerivative;

  void check_model(const Vector& m) const;

  std::shared_ptr<const CoarsePartition> partition_;
  std::shared_ptr<const BoundaryConditionSet> conditions_;
  Vector m_;
  Vector sigma_prime_;
  SparseMatrix s_;
  std::shared_ptr<const std::vector<Block>> blocks_;
};

/// Linear map dm -> Y_k(v, m) dm (pinned nodal output) and its adjoint.
class BasisDirectionalDerivative {
 public:
  Vector apply(const Vector& dm) const;
  Vector apply_transpose(const Vector& w) const;
  Index rows() const;
  Index cols() const;

 private:
  friend class MultiscaleBasis;
  BasisDirectionalDerivative(const MultiscaleBasis& basis, WorkerPool& pool)
      : basis_(&basis), pool_(&pool) {}
  const MultiscaleBasis* basis_;
  WorkerPool* pool_;
  std::vector<Vector> edge_grad_;  // per block: G x on the block's edges
};

/// Linear map dm -> X_k(w, m) dm (length k) and its adjoint.
class BasisTransposeDerivative {
 public:
  Vector apply(const Vector& dm) const;
  Vector apply_transpose(const Vector& y) const;
  Index rows() const;
  Index cols() const;

 private:
  friend class MultiscaleBasis;
  BasisTransposeDerivative(const MultiscaleBasis& basis, WorkerPool& pool)
      : basis_(&basis), pool_(&pool) {}
  const MultiscaleBasis* basis_;
  WorkerPool* pool_;
  std::vector<Vector> edge_grad_;  // per block: G z with z = A_II^{-1} w_I
};

/// Number of local-PCA functions assigned to each block.
std::vector<Index> pca_quota(Index num_blocks, Index rank, Index total);

}  // namespace msfv
