#pragma once

#include "msfv/mesh.hpp"
#include "msfv/types.hpp"

namespace msfv {

/// Node whose potential is fixed to zero. Its row and column are removed
/// from the assembled operator, so "pinned" vectors have num_nodes()-1
/// entries and are indexed by node-1.
inline constexpr Index kPinnedNode = 0;

/// Conductivity map sigma(m) = exp(m).
Vector sigma_map(const Vector& m);
/// Elementwise derivative of sigma_map.
Vector sigma_deriv(const Vector& m);

/// Full nodal vector (pinned entry 0) from a pinned vector.
Vector unpin(const Vector& pinned);
Matrix unpin(const Matrix& pinned);
/// Drops the pinned entry of a full nodal vector.
Vector pin(const Vector& full);

/// Edge-by-node difference operator with entries +-1/h.
SparseMatrix assemble_nodal_gradient(const TensorMesh& mesh);

/// Edge-by-cell matrix with entry V/4 for each of the (up to 4) cells around
/// an edge. Multiplying sigma by it yields the edge weights of the operator.
SparseMatrix assemble_edge_cell_weights(const TensorMesh& mesh);

/// Discrete diffusion operator A(m) = G' diag(C sigma(m)) G with homogeneous
/// Neumann boundary and the pinned node eliminated.
class DiffusionOperator {
 public:
  DiffusionOperator(const TensorMesh& mesh, const Vector& m);

  /// Pinned, symmetric positive definite operator.
  const SparseMatrix& matrix() const { return pinned_; }
  /// Unpinned operator with the constant vector in its null space.
  const SparseMatrix& unpinned() const { return full_; }
  const Vector& edge_weights() const { return weights_; }
  const Vector& sigma() const { return sigma_; }
  Index size() const { return pinned_.rows(); }
  static constexpr Index pinned_node() { return kPinnedNode; }

 private:
  SparseMatrix full_;
  SparseMatrix pinned_;
  Vector weights_;
  Vector sigma_;
};

DiffusionOperator assemble_operator(const TensorMesh& mesh, const Vector& m);

/// Jacobian of m -> A(m) u for fixed nodal field u, restricted to the
/// pinned rows: G' diag(G u) C diag(sigma'(m)).
class GradAu {
 public:
  /// `u` may be pinned (num_nodes-1, pinned value taken as 0) or a full nodal
  /// vector used as given.
  GradAu(const TensorMesh& mesh, const Vector& m, const Vector& u);

  Index rows() const { return num_nodes_ - 1; }
  Index cols() const { return sigma_prime_.size(); }

  /// Pinned nodal vector for a model perturbation.
  Vector apply(const Vector& dm) const;
  /// Cell vector for a pinned nodal vector.
  Vector apply_transpose(const Vector& w) const;
  /// Explicit sparse matrix, for small-mesh checks.
  SparseMatrix to_sparse() const;

 private:
  TensorMesh mesh_;
  Index num_nodes_ = 0;
  Vector sigma_prime_;
  Vector edge_grad_;  // G u on every edge
};

GradAu grad_A_u(const TensorMesh& mesh, const Vector& m, const Vector& u);

/// Cell-to-face difference operator sqrt(V) * (m_right - m_left) / h over all
/// interior cell faces. Used as the regularization operator L.
SparseMatrix assemble_cell_gradient(const TensorMesh& mesh);

}  // namespace msfv
