#include "msfv/diffusion.hpp"

#include <cmath>
#include <vector>

namespace msfv {

namespace {

// Calls f(edge, axis, node_lo, node_hi, cells, ncells) for every nodal edge in
// global edge order. `cells` holds the ids of the cells around the edge.
template <class F>
void for_each_edge(const TensorMesh& mesh, F&& f) {
  const std::array<Index, 3> n = mesh.cell_counts();
  Index edge = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int p = (axis + 1) % 3;
    const int q = (axis + 2) % 3;
    std::array<Index, 3> hi{n[0] + 1, n[1] + 1, n[2] + 1};
    hi[axis] = n[axis];
    const Index stride = mesh.node_stride(axis);
    for (Index k = 0; k < hi[2]; ++k) {
      for (Index j = 0; j < hi[1]; ++j) {
        for (Index i = 0; i < hi[0]; ++i, ++edge) {
          const std::array<Index, 3> lo{i, j, k};
          const Index a = mesh.node_index(i, j, k);
          std::array<Index, 4> cells{};
          int nc = 0;
          for (Index dq = -1; dq <= 0; ++dq) {
            for (Index dp = -1; dp <= 0; ++dp) {
              std::array<Index, 3> c = lo;
              c[p] += dp;
              c[q] += dq;
              if (c[p] < 0 || c[p] >= n[p] || c[q] < 0 || c[q] >= n[q]) continue;
              cells[nc++] = mesh.cell_index(c[0], c[1], c[2]);
            }
          }
          f(edge, axis, a, a + stride, cells, nc);
        }
      }
    }
  }
}

void check_model(const TensorMesh& mesh, const Vector& m) {
  if (m.size() != mesh.num_cells()) {
    throw std::invalid_argument("model length does not match mesh cell count");
  }
  if (!m.allFinite()) throw InvalidModel("model has non-finite entries");
}

}  // namespace

Vector sigma_map(const Vector& m) { return m.array().exp().matrix(); }

Vector sigma_deriv(const Vector& m) { return m.array().exp().matrix(); }

Vector unpin(const Vector& pinned) {
  Vector full(pinned.size() + 1);
  full[kPinnedNode] = 0.0;
  full.tail(pinned.size()) = pinned;
  return full;
}

Matrix unpin(const Matrix& pinned) {
  Matrix full(pinned.rows() + 1, pinned.cols());
  full.row(kPinnedNode).setZero();
  full.bottomRows(pinned.rows()) = pinned;
  return full;
}

Vector pin(const Vector& full) { return full.tail(full.size() - 1); }

SparseMatrix assemble_nodal_gradient(const TensorMesh& mesh) {
  std::vector<Triplet> trip;
  trip.reserve(2 * mesh.num_edges());
  for_each_edge(mesh, [&](Index e, int axis, Index a, Index b, const auto&, int) {
    const double inv_h = 1.0 / mesh.width(axis);
    trip.emplace_back(e, a, -inv_h);
    trip.emplace_back(e, b, inv_h);
  });
  SparseMatrix g(mesh.num_edges(), mesh.num_nodes());
  g.setFromTriplets(trip.begin(), trip.end());
  return g;
}

SparseMatrix assemble_edge_cell_weights(const TensorMesh& mesh) {
  const double quarter = 0.25 * mesh.cell_volume();
  std::vector<Triplet> trip;
  trip.reserve(4 * mesh.num_edges());
  for_each_edge(mesh, [&](Index e, int, Index, Index, const auto& cells, int nc) {
    for (int c = 0; c < nc; ++c) trip.emplace_back(e, cells[c], quarter);
  });
  SparseMatrix w(mesh.num_edges(), mesh.num_cells());
  w.setFromTriplets(trip.begin(), trip.end());
  return w;
}

DiffusionOperator::DiffusionOperator(const TensorMesh& mesh, const Vector& m) {
  check_model(mesh, m);
  sigma_ = sigma_map(m);
  if ((sigma_.array() <= 0.0).any() || !sigma_.allFinite()) {
    throw InvalidModel("conductivity must be positive and finite");
  }
  const double quarter = 0.25 * mesh.cell_volume();
  weights_.resize(mesh.num_edges());

  const Index nn = mesh.num_nodes();
  std::vector<Triplet> full;
  std::vector<Triplet> pinned;
  full.reserve(4 * mesh.num_edges());
  pinned.reserve(4 * mesh.num_edges());
  for_each_edge(mesh, [&](Index e, int axis, Index a, Index b, const auto& cells, int nc) {
    double s = 0.0;
    for (int c = 0; c < nc; ++c) s += sigma_[cells[c]];
    weights_[e] = quarter * s;
    const double h = mesh.width(axis);
    const double coef = weights_[e] / (h * h);
    full.emplace_back(a, a, coef);
    full.emplace_back(b, b, coef);
    full.emplace_back(a, b, -coef);
    full.emplace_back(b, a, -coef);
    const bool pa = a == kPinnedNode;
    const bool pb = b == kPinnedNode;
    if (!pa) pinned.emplace_back(a - 1, a - 1, coef);
    if (!pb) pinned.emplace_back(b - 1, b - 1, coef);
    if (!pa && !pb) {
      pinned.emplace_back(a - 1, b - 1, -coef);
      pinned.emplace_back(b - 1, a - 1, -coef);
    }
  });
  full_.resize(nn, nn);
  full_.setFromTriplets(full.begin(), full.end());
  pinned_.resize(nn - 1, nn - 1);
  pinned_.setFromTriplets(pinned.begin(), pinned.end());
}

DiffusionOperator assemble_operator(const TensorMesh& mesh, const Vector& m) {
  return DiffusionOperator(mesh, m);
}

GradAu::GradAu(const TensorMesh& mesh, const Vector& m, const Vector& u)
    : mesh_(mesh), num_nodes_(mesh.num_nodes()) {
  check_model(mesh, m);
  Vector full;
  if (u.size() == num_nodes_ - 1) {
    full = unpin(u);
  } else if (u.size() == num_nodes_) {
    full = u;
  } else {
    throw std::invalid_argument("grad_A_u: field length does not match mesh");
  }
  sigma_prime_ = sigma_deriv(m);
  edge_grad_.resize(mesh.num_edges());
  for_each_edge(mesh, [&](Index e, int axis, Index a, Index b, const auto&, int) {
    edge_grad_[e] = (full[b] - full[a]) / mesh.width(axis);
  });
}

Vector GradAu::apply(const Vector& dm) const {
  if (dm.size() != cols()) {
    throw std::invalid_argument("grad_A_u: perturbation length mismatch");
  }
  const double quarter = 0.25 * mesh_.cell_volume();
  Vector full = Vector::Zero(num_nodes_);
  for_each_edge(mesh_, [&](Index e, int axis, Index a, Index b, const auto& cells, int nc) {
    double dw = 0.0;
    for (int c = 0; c < nc; ++c) dw += sigma_prime_[cells[c]] * dm[cells[c]];
    const double flux = quarter * dw * edge_grad_[e] / mesh_.width(axis);
    full[a] -= flux;
    full[b] += flux;
  });
  return pin(full);
}

Vector GradAu::apply_transpose(const Vector& w) const {
  if (w.size() != rows()) {
    throw std::invalid_argument("grad_A_u: adjoint input length mismatch");
  }
  const double quarter = 0.25 * mesh_.cell_volume();
  const Vector full = unpin(w);
  Vector out = Vector::Zero(cols());
  for_each_edge(mesh_, [&](Index e, int axis, Index a, Index b, const auto& cells, int nc) {
    const double g = quarter * edge_grad_[e] * (full[b] - full[a]) / mesh_.width(axis);
    for (int c = 0; c < nc; ++c) out[cells[c]] += g;
  });
  return out.cwiseProduct(sigma_prime_);
}

SparseMatrix GradAu::to_sparse() const {
  std::vector<Triplet> trip;
  const double quarter = 0.25 * mesh_.cell_volume();
  for_each_edge(mesh_, [&](Index e, int axis, Index a, Index b, const auto& cells, int nc) {
    const double g = quarter * edge_grad_[e] / mesh_.width(axis);
    for (int c = 0; c < nc; ++c) {
      const double v = g * sigma_prime_[cells[c]];
      if (a != kPinnedNode) trip.emplace_back(a - 1, cells[c], -v);
      if (b != kPinnedNode) trip.emplace_back(b - 1, cells[c], v);
    }
  });
  SparseMatrix j(rows(), cols());
  j.setFromTriplets(trip.begin(), trip.end());
  return j;
}

GradAu grad_A_u(const TensorMesh& mesh, const Vector& m, const Vector& u) {
  return GradAu(mesh, m, u);
}

SparseMatrix assemble_cell_gradient(const TensorMesh& mesh) {
  const std::array<Index, 3> n = mesh.cell_counts();
  const double sv = std::sqrt(mesh.cell_volume());
  std::vector<Triplet> trip;
  Index row = 0;
  for (int axis = 0; axis < 3; ++axis) {
    std::array<Index, 3> hi = n;
    hi[axis] = n[axis] - 1;
    const double s = sv / mesh.width(axis);
    for (Index k = 0; k < hi[2]; ++k) {
      for (Index j = 0; j < hi[1]; ++j) {
        for (Index i = 0; i < hi[0]; ++i, ++row) {
          std::array<Index, 3> up{i, j, k};
          up[axis] += 1;
          trip.emplace_back(row, mesh.cell_index(i, j, k), -s);
          trip.emplace_back(row, mesh.cell_index(up[0], up[1], up[2]), s);
        }
      }
    }
  }
  SparseMatrix l(row, mesh.num_cells());
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

}  // namespace msfv
