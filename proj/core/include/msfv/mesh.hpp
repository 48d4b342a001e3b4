#pragma once

#include <array>
#include <span>
#include <vector>

#include "msfv/types.hpp"

namespace msfv {

struct GridIndex {
  Index i = 0;
  Index j = 0;
  Index k = 0;

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Uniform 3D tensor mesh. Cells and nodes are numbered lexicographically
/// with x running fastest.
///
/// Nodal edges are numbered by axis: all x-edges, then y-edges, then z-edges,
/// each group lexicographic in the coordinates of its lower endpoint.
class TensorMesh {
 public:
  TensorMesh(Index n1, Index n2, Index n3, double h1, double h2, double h3);

  Index cells(int axis) const { return n_[axis]; }
  double width(int axis) const { return h_[axis]; }
  std::array<Index, 3> cell_counts() const { return n_; }
  std::array<double, 3> widths() const { return h_; }

  Index num_cells() const { return n_[0] * n_[1] * n_[2]; }
  Index num_nodes() const { return (n_[0] + 1) * (n_[1] + 1) * (n_[2] + 1); }
  double cell_volume() const { return h_[0] * h_[1] * h_[2]; }

  Index node_index(Index i, Index j, Index k) const {
    return i + (n_[0] + 1) * (j + (n_[1] + 1) * k);
  }
  Index node_index(const GridIndex& g) const { return node_index(g.i, g.j, g.k); }
  GridIndex node_triple(Index idx) const;

  Index cell_index(Index i, Index j, Index k) const {
    return i + n_[0] * (j + n_[1] * k);
  }
  Index cell_index(const GridIndex& g) const { return cell_index(g.i, g.j, g.k); }
  GridIndex cell_triple(Index idx) const;

  /// Number of nodal edges parallel to `axis`.
  Index num_edges(int axis) const;
  Index num_edges() const { return num_edges(0) + num_edges(1) + num_edges(2); }
  /// Index of the edge parallel to `axis` whose lower endpoint is (i,j,k).
  Index edge_index(int axis, Index i, Index j, Index k) const;

  /// Node stride along `axis` in the global node numbering.
  Index node_stride(int axis) const;

  friend bool operator==(const TensorMesh&, const TensorMesh&) = default;

 private:
  std::array<Index, 3> n_;
  std::array<double, 3> h_;
};

TensorMesh create_mesh(Index n1, Index n2, Index n3, double h1, double h2, double h3);

/// Nodal edge of a block that touches at least one interior node. All four
/// cells around such an edge lie inside the block.
struct LocalEdge {
  Index a = 0;  // local node at the lower end
  Index b = 0;  // local node at the upper end
  int axis = 0;
  std::array<Index, 4> cells{};  // local cell ids
};

/// Node/cell/edge layout shared by every block of a uniform partition.
/// Local numbering is lexicographic inside the block closure.
struct BlockTemplate {
  std::array<Index, 3> size{};  // fine cells per block per axis
  Index num_nodes = 0;          // closure nodes
  Index num_cells = 0;
  std::vector<Index> interior;       // local ids of interior nodes (sorted)
  std::vector<Index> boundary;       // local ids of boundary nodes (sorted)
  std::vector<Index> interior_slot;  // local id -> position in `interior` or -1
  std::vector<Index> boundary_slot;  // local id -> position in `boundary` or -1
  std::vector<Index> node_offset;    // local id -> global node offset from block base
  std::vector<Index> cell_offset;    // local cell -> global cell offset from block base
  std::vector<LocalEdge> edges;      // edges touching interior nodes
};

/// Nested coarse partition of a TensorMesh into equally sized blocks.
class CoarsePartition {
 public:
  CoarsePartition(const TensorMesh& mesh, Index b1, Index b2, Index b3);

  const TensorMesh& mesh() const { return mesh_; }
  const BlockTemplate& block_template() const { return tmpl_; }

  Index num_blocks() const { return nb_[0] * nb_[1] * nb_[2]; }
  std::array<Index, 3> blocks_per_axis() const { return nb_; }
  std::array<Index, 3> block_size() const { return tmpl_.size; }
  Index block_index(Index bi, Index bj, Index bk) const {
    return bi + nb_[0] * (bj + nb_[1] * bk);
  }
  GridIndex block_triple(Index block) const;

  /// Global node index of the block's local node 0.
  Index block_node_base(Index block) const { return node_base_[check(block)]; }
  /// Global cell index of the block's local cell 0.
  Index block_cell_base(Index block) const { return cell_base_[check(block)]; }

  Index global_node(Index block, Index local) const {
    return node_base_[block] + tmpl_.node_offset[local];
  }
  Index global_cell(Index block, Index local) const {
    return cell_base_[block] + tmpl_.cell_offset[local];
  }

  std::span<const Index> interior_nodes(Index block) const;
  std::span<const Index> boundary_nodes(Index block) const;
  /// Sorted global ids of all fine cells in the block.
  std::vector<Index> block_cells(Index block) const;

  /// Sorted union of all block-boundary nodes.
  const std::vector<Index>& skeleton_nodes() const { return skeleton_; }
  bool is_skeleton(Index node) const { return on_skeleton_[node] != 0; }

  Index num_coarse_nodes() const { return (nb_[0] + 1) * (nb_[1] + 1) * (nb_[2] + 1); }
  Index coarse_node_index(Index ci, Index cj, Index ck) const {
    return ci + (nb_[0] + 1) * (cj + (nb_[1] + 1) * ck);
  }
  GridIndex coarse_node_triple(Index c) const;
  /// Fine node located at coarse node `c`.
  Index coarse_to_fine_node(Index c) const;

 private:
  Index check(Index block) const;

  TensorMesh mesh_;
  std::array<Index, 3> nb_{};
  BlockTemplate tmpl_;
  std::vector<Index> node_base_;
  std::vector<Index> cell_base_;
  std::vector<Index> interior_;  // num_blocks * |I| global ids
  std::vector<Index> boundary_;  // num_blocks * |B| global ids
  std::vector<Index> skeleton_;
  std::vector<char> on_skeleton_;
};

CoarsePartition create_partition(const TensorMesh& mesh, Index b1, Index b2, Index b3);

struct BlockNodeSets {
  std::vector<Index> interior;
  std::vector<Index> boundary;
};

/// Interior and boundary node ids of block `block`, both sorted.
BlockNodeSets block_node_sets(const CoarsePartition& partition, Index block);

}  // namespace msfv
