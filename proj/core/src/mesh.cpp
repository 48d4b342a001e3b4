#include "msfv/mesh.hpp"

#include <cmath>
#include <string>

namespace msfv {

TensorMesh::TensorMesh(Index n1, Index n2, Index n3, double h1, double h2, double h3)
    : n_{n1, n2, n3}, h_{h1, h2, h3} {
  for (int d = 0; d < 3; ++d) {
    if (n_[d] < 1) {
      throw std::invalid_argument("mesh: cell count along axis " + std::to_string(d) +
                                  " must be >= 1");
    }
    if (!(h_[d] > 0.0) || !std::isfinite(h_[d])) {
      throw std::invalid_argument("mesh: cell width along axis " + std::to_string(d) +
                                  " must be positive");
    }
  }
}

GridIndex TensorMesh::node_triple(Index idx) const {
  const Index s1 = n_[0] + 1;
  const Index s2 = n_[1] + 1;
  return {idx % s1, (idx / s1) % s2, idx / (s1 * s2)};
}

GridIndex TensorMesh::cell_triple(Index idx) const {
  return {idx % n_[0], (idx / n_[0]) % n_[1], idx / (n_[0] * n_[1])};
}

Index TensorMesh::num_edges(int axis) const {
  Index count = 1;
  for (int d = 0; d < 3; ++d) count *= (d == axis) ? n_[d] : n_[d] + 1;
  return count;
}

Index TensorMesh::edge_index(int axis, Index i, Index j, Index k) const {
  Index offset = 0;
  for (int d = 0; d < axis; ++d) offset += num_edges(d);
  const Index e1 = axis == 0 ? n_[0] : n_[0] + 1;
  const Index e2 = axis == 1 ? n_[1] : n_[1] + 1;
  return offset + i + e1 * (j + e2 * k);
}

Index TensorMesh::node_stride(int axis) const {
  switch (axis) {
    case 0:
      return 1;
    case 1:
      return n_[0] + 1;
    default:
      return (n_[0] + 1) * (n_[1] + 1);
  }
}

TensorMesh create_mesh(Index n1, Index n2, Index n3, double h1, double h2, double h3) {
  return TensorMesh(n1, n2, n3, h1, h2, h3);
}

namespace {

BlockTemplate make_template(const TensorMesh& mesh, const std::array<Index, 3>& b) {
  BlockTemplate t;
  t.size = b;
  const Index l1 = b[0] + 1;
  const Index l2 = b[1] + 1;
  const Index l3 = b[2] + 1;
  t.num_nodes = l1 * l2 * l3;
  t.num_cells = b[0] * b[1] * b[2];
  t.interior_slot.assign(t.num_nodes, -1);
  t.boundary_slot.assign(t.num_nodes, -1);
  t.node_offset.resize(t.num_nodes);
  t.cell_offset.resize(t.num_cells);

  auto local_node = [&](Index i, Index j, Index k) { return i + l1 * (j + l2 * k); };
  auto local_cell = [&](Index i, Index j, Index k) { return i + b[0] * (j + b[1] * k); };

  for (Index k = 0; k < l3; ++k) {
    for (Index j = 0; j < l2; ++j) {
      for (Index i = 0; i < l1; ++i) {
        const Index id = local_node(i, j, k);
        t.node_offset[id] = mesh.node_index(i, j, k);
        const bool inside = i > 0 && i < b[0] && j > 0 && j < b[1] && k > 0 && k < b[2];
        if (inside) {
          t.interior_slot[id] = static_cast<Index>(t.interior.size());
          t.interior.push_back(id);
        } else {
          t.boundary_slot[id] = static_cast<Index>(t.boundary.size());
          t.boundary.push_back(id);
        }
      }
    }
  }
  for (Index k = 0; k < b[2]; ++k) {
    for (Index j = 0; j < b[1]; ++j) {
      for (Index i = 0; i < b[0]; ++i) {
        t.cell_offset[local_cell(i, j, k)] = mesh.cell_index(i, j, k);
      }
    }
  }

  // Edges with at least one interior endpoint. Their two transverse
  // coordinates are interior, so the four surrounding cells are in the block.
  const std::array<Index, 3> lim{l1, l2, l3};
  for (int axis = 0; axis < 3; ++axis) {
    const int p = (axis + 1) % 3;
    const int q = (axis + 2) % 3;
    std::array<Index, 3> hi = lim;
    hi[axis] = b[axis];
    for (Index k = 0; k < hi[2]; ++k) {
      for (Index j = 0; j < hi[1]; ++j) {
        for (Index i = 0; i < hi[0]; ++i) {
          std::array<Index, 3> lo{i, j, k};
          std::array<Index, 3> up = lo;
          up[axis] += 1;
          const Index a = local_node(lo[0], lo[1], lo[2]);
          const Index c = local_node(up[0], up[1], up[2]);
          if (t.interior_slot[a] < 0 && t.interior_slot[c] < 0) continue;
          LocalEdge e;
          e.a = a;
          e.b = c;
          e.axis = axis;
          int n = 0;
          for (Index dq = -1; dq <= 0; ++dq) {
            for (Index dp = -1; dp <= 0; ++dp) {
              std::array<Index, 3> cell = lo;
              cell[p] += dp;
              cell[q] += dq;
              e.cells[n++] = local_cell(cell[0], cell[1], cell[2]);
            }
          }
          t.edges.push_back(e);
        }
      }
    }
  }
  return t;
}

}  // namespace

CoarsePartition::CoarsePartition(const TensorMesh& mesh, Index b1, Index b2, Index b3)
    : mesh_(mesh) {
  const std::array<Index, 3> b{b1, b2, b3};
  for (int d = 0; d < 3; ++d) {
    if (b[d] < 1) {
      throw std::invalid_argument("partition: block size must be >= 1");
    }
    if (mesh.cells(d) % b[d] != 0) {
      throw std::invalid_argument("partition: block size " + std::to_string(b[d]) +
                                  " does not divide " + std::to_string(mesh.cells(d)) +
                                  " cells along axis " + std::to_string(d));
    }
    nb_[d] = mesh.cells(d) / b[d];
  }
  tmpl_ = make_template(mesh, b);

  const Index nblocks = num_blocks();
  node_base_.resize(nblocks);
  cell_base_.resize(nblocks);
  interior_.reserve(nblocks * tmpl_.interior.size());
  boundary_.reserve(nblocks * tmpl_.boundary.size());
  for (Index blk = 0; blk < nblocks; ++blk) {
    const GridIndex g = block_triple(blk);
    node_base_[blk] = mesh.node_index(g.i * b[0], g.j * b[1], g.k * b[2]);
    cell_base_[blk] = mesh.cell_index(g.i * b[0], g.j * b[1], g.k * b[2]);
    for (Index local : tmpl_.interior) interior_.push_back(global_node(blk, local));
    for (Index local : tmpl_.boundary) boundary_.push_back(global_node(blk, local));
  }

  on_skeleton_.assign(mesh.num_nodes(), 0);
  for (Index node = 0; node < mesh.num_nodes(); ++node) {
    const GridIndex g = mesh.node_triple(node);
    if (g.i % b[0] == 0 || g.j % b[1] == 0 || g.k % b[2] == 0) {
      on_skeleton_[node] = 1;
      skeleton_.push_back(node);
    }
  }
}

Index CoarsePartition::check(Index block) const {
  if (block < 0 || block >= num_blocks()) {
    throw std::invalid_argument("partition: block index " + std::to_string(block) +
                                " out of range");
  }
  return block;
}

GridIndex CoarsePartition::block_triple(Index block) const {
  check(block);
  return {block % nb_[0], (block / nb_[0]) % nb_[1], block / (nb_[0] * nb_[1])};
}

std::span<const Index> CoarsePartition::interior_nodes(Index block) const {
  const auto n = tmpl_.interior.size();
  return std::span<const Index>(interior_).subspan(check(block) * n, n);
}

std::span<const Index> CoarsePartition::boundary_nodes(Index block) const {
  const auto n = tmpl_.boundary.size();
  return std::span<const Index>(boundary_).subspan(check(block) * n, n);
}

std::vector<Index> CoarsePartition::block_cells(Index block) const {
  check(block);
  std::vector<Index> cells(tmpl_.num_cells);
  for (Index c = 0; c < tmpl_.num_cells; ++c) cells[c] = global_cell(block, c);
  return cells;
}

GridIndex CoarsePartition::coarse_node_triple(Index c) const {
  const Index s1 = nb_[0] + 1;
  const Index s2 = nb_[1] + 1;
  return {c % s1, (c / s1) % s2, c / (s1 * s2)};
}

Index CoarsePartition::coarse_to_fine_node(Index c) const {
  const GridIndex g = coarse_node_triple(c);
  return mesh_.node_index(g.i * tmpl_.size[0], g.j * tmpl_.size[1], g.k * tmpl_.size[2]);
}

CoarsePartition create_partition(const TensorMesh& mesh, Index b1, Index b2, Index b3) {
  return CoarsePartition(mesh, b1, b2, b3);
}

BlockNodeSets block_node_sets(const CoarsePartition& partition, Index block) {
  auto in = partition.interior_nodes(block);
  auto bd = partition.boundary_nodes(block);
  return {std::vector<Index>(in.begin(), in.end()), std::vector<Index>(bd.begin(), bd.end())};
}

}  // namespace msfv
