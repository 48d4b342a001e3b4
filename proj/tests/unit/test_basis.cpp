#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <set>

#include "msfv/basis.hpp"
#include "msfv/diffusion.hpp"
#include "test_support.hpp"

using namespace msfv;
using msfv::testing::random_vector;

namespace {

// Trilinear hat of coarse node c evaluated at fine node n.
double hat(const CoarsePartition& p, Index c, Index n) {
  const GridIndex cg = p.coarse_node_triple(c);
  const GridIndex f = p.mesh().node_triple(n);
  const auto b = p.block_size();
  const std::array<double, 3> d{std::abs(static_cast<double>(f.i - cg.i * b[0])) / b[0],
                                std::abs(static_cast<double>(f.j - cg.j * b[1])) / b[1],
                                std::abs(static_cast<double>(f.k - cg.k * b[2])) / b[2]};
  double v = 1.0;
  for (double x : d) v *= std::max(0.0, 1.0 - x);
  return v;
}

// Dense oracle for a Dirichlet solve on one block, using rows of the global
// unpinned operator.
Vector dense_local(const CoarsePartition& p, const Vector& m, Index block, const Vector& xb,
                   const Vector& q = Vector()) {
  const Matrix a = Matrix(DiffusionOperator(p.mesh(), m).unpinned());
  const auto in = p.interior_nodes(block);
  const auto bd = p.boundary_nodes(block);
  const Index ni = static_cast<Index>(in.size()), nb = static_cast<Index>(bd.size());
  Matrix aii(ni, ni), aib(ni, nb);
  for (Index r = 0; r < ni; ++r) {
    for (Index c = 0; c < ni; ++c) aii(r, c) = a(in[r], in[c]);
    for (Index c = 0; c < nb; ++c) aib(r, c) = a(in[r], bd[c]);
  }
  Vector rhs = -aib * xb;
  if (q.size()) rhs += q;
  return aii.ldlt().solve(rhs);
}

Vector column(const MultiscaleBasis& b, Index c) { return unpin(Vector(b.matrix().col(c))); }

SparseMatrix point_sources(const TensorMesh& mesh, const std::vector<std::pair<Index, Index>>& dipoles) {
  SparseMatrix q(mesh.num_nodes() - 1, static_cast<Index>(dipoles.size()));
  std::vector<Triplet> t;
  for (std::size_t s = 0; s < dipoles.size(); ++s) {
    t.emplace_back(dipoles[s].first - 1, static_cast<Index>(s), 1.0);
    if (dipoles[s].second > 0) t.emplace_back(dipoles[s].second - 1, static_cast<Index>(s), -1.0);
  }
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

}  // namespace

TEST(LagrangeConditions, KroneckerAndPartitionOfUnity) {
  const CoarsePartition p(TensorMesh(6, 4, 4, 1, 1, 1), 3, 2, 2);
  const BoundaryConditionSet bcs = generate_bc_lagrange(p);
  ASSERT_EQ(bcs.size(), p.num_coarse_nodes());
  std::vector<double> sum(static_cast<std::size_t>(p.mesh().num_nodes()), 0.0);
  std::vector<int> seen(sum.size(), 0);
  for (Index c = 0; c < bcs.size(); ++c) {
    const auto& f = bcs.functions[static_cast<std::size_t>(c)];
    EXPECT_EQ(f.family, Family::Lagrange);
    std::set<Index> counted;
    for (const BlockCondition& bc : f.blocks) {
      const auto bd = p.boundary_nodes(bc.block);
      for (std::size_t n = 0; n < bd.size(); ++n) {
        const double v = bc.dirichlet[static_cast<Index>(n)];
        if (bd[n] != kPinnedNode) EXPECT_NEAR(v, hat(p, c, bd[n]), 1e-15);
        if (counted.insert(bd[n]).second) sum[static_cast<std::size_t>(bd[n])] += v;
      }
    }
    for (Index c2 = 0; c2 < p.num_coarse_nodes(); ++c2) {
      const Index n = p.coarse_to_fine_node(c2);
      if (n == kPinnedNode) continue;
      EXPECT_EQ(hat(p, c, n), c == c2 ? 1.0 : 0.0);
    }
  }
  for (Index n : p.skeleton_nodes()) {
    if (n == kPinnedNode) continue;
    EXPECT_NEAR(sum[static_cast<std::size_t>(n)], 1.0, 1e-14);
  }
}

TEST(LagrangeConditions, CoarseNodeCounts) {
  const TensorMesh mesh(36, 36, 12, 1, 1, 1);
  EXPECT_EQ(generate_bc_lagrange(CoarsePartition(mesh, 12, 12, 12)).size(), 32);
  EXPECT_EQ(generate_bc_lagrange(CoarsePartition(mesh, 6, 6, 6)).size(), 147);
}

TEST(LagrangeConditions, PinnedValueIsZero) {
  const CoarsePartition p(TensorMesh(4, 4, 4, 1, 1, 1), 2, 2, 2);
  const BoundaryConditionSet bcs = generate_bc_lagrange(p);
  const BlockCondition& bc = bcs.functions[0].blocks[0];
  ASSERT_EQ(bc.block, 0);
  EXPECT_EQ(bc.dirichlet[p.block_template().boundary_slot[0]], 0.0);
}

TEST(MultiscaleBasisLagrange, PartitionOfUnityRandomModel) {
  auto p = std::make_shared<const CoarsePartition>(TensorMesh(8, 8, 4, 1, 1, 1), 4, 4, 2);
  const Vector m = random_vector(p->mesh().num_cells(), 31, -3, 3);
  auto bcs = std::make_shared<const BoundaryConditionSet>(generate_bc_lagrange(*p));
  const MultiscaleBasis b = MultiscaleBasis::assemble(bcs, p, m);
  const Vector sum = b.matrix() * Vector::Ones(b.size());
  EXPECT_LE((sum - Vector::Ones(sum.size())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MultiscaleBasisLagrange, HomogeneousEqualsTrilinearHats) {
  auto p = std::make_shared<const CoarsePartition>(TensorMesh(6, 6, 6, 1.0, 2.0, 0.5), 3, 3, 3);
  auto bcs = std::make_shared<const BoundaryConditionSet>(generate_bc_lagrange(*p));
  const MultiscaleBasis b = MultiscaleBasis::assemble(bcs, p, Vector::Zero(p->mesh().num_cells()));
  double worst = 0.0;
  for (Index c = 0; c < b.size(); ++c) {
    const Vector col = column(b, c);
    for (Index n = 1; n < p->mesh().num_nodes(); ++n) worst = std::max(worst, std::abs(col[n] - hat(*p, c, n)));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(MultiscaleBasisLagrange, Locality) {
  auto p = std::make_shared<const CoarsePartition>(TensorMesh(6, 6, 6, 1, 1, 1), 2, 2, 2);
  auto bcs = std::make_shared<const BoundaryConditionSet>(generate_bc_lagrange(*p));
  const MultiscaleBasis b =
      MultiscaleBasis::assemble(bcs, p, random_vector(p->mesh().num_cells(), 3, -2, 2));
  for (Index c = 0; c < b.size(); ++c) {
    std::set<Index> support;
    for (const BlockCondition& bc : bcs->functions[static_cast<std::size_t>(c)].blocks) {
      for (Index l = 0; l < p->block_template().num_nodes; ++l) support.insert(p->global_node(bc.block, l));
    }
    EXPECT_LE(bcs->functions[static_cast<std::size_t>(c)].blocks.size(), 8u);
    const Vector col = column(b, c);
    for (Index n = 0; n < col.size(); ++n) {
      if (!support.count(n)) EXPECT_EQ(col[n], 0.0);
    }
  }
}

TEST(SourceConditions, ColumnSupportedInOneBlock) {
  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  auto p = std::make_shared<const CoarsePartition>(mesh, 2, 2, 2);
  const Index inner = p->interior_nodes(5)[0];
  const SparseMatrix q = point_sources(mesh, {{inner, 0}, {mesh.node_index(2, 2, 4), 0}});
  const BoundaryConditionSet bcs = generate_bc_source(*p, q);
  // The second source sits on the skeleton and has no interior support.
  ASSERT_EQ(bcs.size(), 1);
  ASSERT_EQ(bcs.functions[0].blocks.size(), 1u);
  EXPECT_EQ(bcs.functions[0].blocks[0].block, 5);

  const Vector m = random_vector(mesh.num_cells(), 8, -1, 1);
  const MultiscaleBasis b =
      MultiscaleBasis::assemble(std::make_shared<const BoundaryConditionSet>(bcs), p, m);
  const Vector col = column(b, 0);
  const auto in = p->interior_nodes(5);
  Vector qi = Vector::Zero(static_cast<Index>(in.size()));
  qi[0] = 1.0;
  const Vector oracle = dense_local(*p, m, 5, Vector::Zero(static_cast<Index>(p->boundary_nodes(5).size())), qi);
  for (Index n = 0; n < col.size(); ++n) {
    const auto it = std::find(in.begin(), in.end(), n);
    if (it == in.end()) {
      EXPECT_EQ(col[n], 0.0);
    } else {
      EXPECT_NEAR(col[n], oracle[it - in.begin()], 1e-12);
    }
  }
}

TEST(SourceConditions, ZeroSourceDropped) {
  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  const CoarsePartition p(mesh, 2, 2, 2);
  SparseMatrix q(mesh.num_nodes() - 1, 2);
  q.insert(p.interior_nodes(0)[0] - 1, 1) = 2.0;
  const BoundaryConditionSet bcs = generate_bc_source(p, q);
  ASSERT_EQ(bcs.size(), 1);
  EXPECT_EQ(bcs.functions[0].label, 1);
}

TEST(SkeletonConditions, OnePerSourceWithReferenceTrace) {
  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  const CoarsePartition p(mesh, 2, 2, 2);
  const SparseMatrix q = point_sources(mesh, {{mesh.node_index(0, 0, 4), mesh.node_index(4, 4, 4)},
                                              {mesh.node_index(1, 2, 4), mesh.node_index(3, 2, 4)},
                                              {mesh.node_index(2, 0, 4), mesh.node_index(2, 4, 4)}});
  const Vector mref = Vector::Constant(mesh.num_cells(), std::log(0.01));
  const Matrix u = reference_fields(mesh, mref, q);
  const BoundaryConditionSet bcs = generate_bc_skeleton(p, mref, q);
  ASSERT_EQ(bcs.size(), 3);
  for (Index s = 0; s < 3; ++s) {
    for (const BlockCondition& bc : bcs.functions[static_cast<std::size_t>(s)].blocks) {
      const auto bd = p.boundary_nodes(bc.block);
      for (std::size_t n = 0; n < bd.size(); ++n) {
        EXPECT_EQ(bc.dirichlet[static_cast<Index>(n)], u(bd[n], s));
      }
    }
  }
}

TEST(SkeletonConditions, ReproducesReferenceFieldWhenItSolvesLocally) {
  // Without forcing inside blocks, the fine solution restricted to each block
  // solves the local Dirichlet problem, so the skeleton column is u_ref itself.
  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  auto p = std::make_shared<const CoarsePartition>(mesh, 2, 2, 2);
  const SparseMatrix q = point_sources(mesh, {{mesh.node_index(0, 2, 4), mesh.node_index(4, 2, 4)}});
  const Vector m = random_vector(mesh.num_cells(), 17, -1, 1);
  auto bcs = std::make_shared<const BoundaryConditionSet>(generate_bc_skeleton(*p, m, q));
  const MultiscaleBasis b = MultiscaleBasis::assemble(bcs, p, m);
  const Matrix u = reference_fields(mesh, m, q);
  EXPECT_LE((column(b, 0) - u.col(0)).cwiseAbs().maxCoeff(), 1e-10 * u.cwiseAbs().maxCoeff());
}

TEST(LocalPcaConditions, OrthonormalPerBlock) {
  const TensorMesh mesh(6, 6, 4, 1, 1, 1);
  const CoarsePartition p(mesh, 3, 3, 2);
  Matrix fields = msfv::testing::random_matrix(mesh.num_nodes(), 5, 99);
  fields.row(kPinnedNode).setZero();
  const BoundaryConditionSet bcs = generate_bc_local_pca(p, fields, 3);
  std::vector<std::vector<Vector>> per_block(static_cast<std::size_t>(p.num_blocks()));
  for (const auto& f : bcs.functions) {
    ASSERT_EQ(f.blocks.size(), 1u);
    EXPECT_EQ(f.family, Family::LocalPca);
    EXPECT_EQ(f.label, f.blocks[0].block);
    per_block[static_cast<std::size_t>(f.label)].push_back(f.blocks[0].dirichlet);
  }
  for (const auto& vs : per_block) {
    ASSERT_EQ(vs.size(), 3u);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = 0; j < vs.size(); ++j) {
        EXPECT_NEAR(vs[i].dot(vs[j]), i == j ? 1.0 : 0.0, 1e-12);
      }
    }
  }
}

TEST(LocalPcaConditions, IdenticalTracesGiveOneComponent) {
  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  const CoarsePartition p(mesh, 2, 2, 2);
  Matrix fields(mesh.num_nodes(), 4);
  const Vector u = unpin(random_vector(mesh.num_nodes() - 1, 3));
  for (Index s = 0; s < 4; ++s) fields.col(s) = u;
  const BoundaryConditionSet bcs = generate_bc_local_pca(p, fields, 4);
  EXPECT_EQ(bcs.size(), p.num_blocks());
}

TEST(LocalPcaConditions, QuotaAndErrors) {
  EXPECT_EQ(pca_quota(9, 11, 93), (std::vector<Index>{11, 11, 11, 10, 10, 10, 10, 10, 10}));
  const auto q = pca_quota(72, 6, 400);
  Index total = 0;
  for (Index v : q) total += v;
  EXPECT_EQ(total, 400);
  EXPECT_EQ(pca_quota(3, 2, 0), (std::vector<Index>{2, 2, 2}));

  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  const CoarsePartition p(mesh, 2, 2, 2);
  const Matrix fields = Matrix::Ones(mesh.num_nodes(), 2);
  EXPECT_THROW(generate_bc_local_pca(p, fields, 3), std::invalid_argument);
  EXPECT_THROW(generate_bc_local_pca(p, fields, 0), std::invalid_argument);
  BasisSpec none;
  none.lagrange = false;
  EXPECT_THROW(none.validate(), std::invalid_argument);
}

TEST(LocalSolve, ConstantBoundaryGivesConstantInterior) {
  const CoarsePartition p(TensorMesh(6, 6, 6, 1, 1, 1), 3, 3, 3);
  const Vector m = random_vector(p.mesh().num_cells(), 4, -3, 3);
  const Index nb = static_cast<Index>(p.block_template().boundary.size());
  const Vector x = solve_local_block(p, m, 7, Vector::Ones(nb));
  EXPECT_LE((x - Vector::Ones(x.size())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LocalSolve, MatchesDenseOracle) {
  const CoarsePartition p(TensorMesh(6, 6, 6, 1, 1, 1), 3, 3, 3);
  const Vector m = random_vector(p.mesh().num_cells(), 5, -2, 2);
  const Index nb = static_cast<Index>(p.block_template().boundary.size());
  const Index ni = static_cast<Index>(p.block_template().interior.size());
  const Vector xb = random_vector(nb, 6);
  const Vector q = random_vector(ni, 7);
  EXPECT_LE((solve_local_block(p, m, 3, xb, q) - dense_local(p, m, 3, xb, q)).norm(), 1e-12);
  EXPECT_THROW(solve_local_block(p, m, 3, Vector::Zero(2)), std::invalid_argument);
  EXPECT_THROW(solve_local_block(p, m, 99, xb), std::invalid_argument);
}

TEST(LocalSolve, ConductiveInclusionBendsTheHat) {
  // sigma = 10 on a sub-box of one coarse cell, 1 elsewhere.
  const TensorMesh mesh(8, 8, 8, 1, 1, 1);
  const CoarsePartition p(mesh, 4, 4, 4);
  Vector m = Vector::Zero(mesh.num_cells());
  for (Index k = 1; k < 3; ++k)
    for (Index j = 1; j < 3; ++j)
      for (Index i = 1; i < 3; ++i) m[mesh.cell_index(i, j, k)] = std::log(10.0);
  const BoundaryConditionSet bcs = generate_bc_lagrange(p);
  const Index c = p.coarse_node_index(1, 1, 1);
  const BlockCondition& bc = bcs.functions[static_cast<std::size_t>(c)].blocks.front();
  ASSERT_EQ(bc.block, 0);
  const Vector x = solve_local_block(p, m, 0, bc.dirichlet);
  const Vector oracle = dense_local(p, m, 0, bc.dirichlet);
  EXPECT_LE((x - oracle).norm(), 1e-12);
  double dev = 0.0;
  const auto in = p.interior_nodes(0);
  for (std::size_t n = 0; n < in.size(); ++n) dev = std::max(dev, std::abs(x[static_cast<Index>(n)] - hat(p, c, in[n])));
  EXPECT_GT(dev, 1e-3);
}

class BasisDerivatives : public ::testing::Test {
 protected:
  void SetUp() override {
    partition = std::make_shared<const CoarsePartition>(mesh, 2, 2, 2);
    const SparseMatrix q = point_sources(mesh, {{mesh.node_index(1, 2, 4), mesh.node_index(3, 2, 4)},
                                                {mesh.node_index(2, 1, 4), mesh.node_index(2, 3, 4)}});
    BasisSpec spec;
    spec.source = true;
    spec.skeleton = true;
    spec.local_pca = true;
    spec.pca_rank = 2;
    spec.reference_model = Vector::Constant(mesh.num_cells(), std::log(0.01));
    conditions = std::make_shared<const BoundaryConditionSet>(build_boundary_conditions(spec, *partition, q));
    m = spec.reference_model + random_vector(mesh.num_cells(), 41, -1, 1);
    basis = std::make_unique<MultiscaleBasis>(MultiscaleBasis::assemble(conditions, partition, m));
  }
  TensorMesh mesh{4, 4, 4, 1, 1, 1};
  std::shared_ptr<const CoarsePartition> partition;
  std::shared_ptr<const BoundaryConditionSet> conditions;
  Vector m;
  std::unique_ptr<MultiscaleBasis> basis;
};

TEST_F(BasisDerivatives, FamiliesInOrder) {
  const auto fam = basis->families();
  EXPECT_TRUE(std::is_sorted(fam.begin(), fam.end()));
  EXPECT_EQ(basis->count(Family::Lagrange), 27);
  EXPECT_EQ(basis->count(Family::Skeleton), 2);
}

TEST_F(BasisDerivatives, YTaylor) {
  const Vector v = random_vector(basis->size(), 1);
  const Vector dm = random_vector(mesh.num_cells(), 2);
  const Vector sv = basis->matrix() * v;
  const Vector ydm = basis->Y(v, m).apply(dm);
  const auto t = msfv::testing::taylor_sequence(
      [&](double e) {
        const MultiscaleBasis b = MultiscaleBasis::assemble(conditions, partition, m + e * dm);
        return (b.matrix() * v - sv - e * ydm).norm();
      },
      0.1, 11);
  EXPECT_TRUE(t.quadratic()) << t.ratio[0] << ' ' << t.ratio[5];
}

TEST_F(BasisDerivatives, XTaylor) {
  const Vector w = random_vector(mesh.num_nodes() - 1, 3);
  const Vector dm = random_vector(mesh.num_cells(), 4);
  const Vector stw = basis->matrix().transpose() * w;
  const Vector xdm = basis->X(w, m).apply(dm);
  const auto t = msfv::testing::taylor_sequence(
      [&](double e) {
        const MultiscaleBasis b = MultiscaleBasis::assemble(conditions, partition, m + e * dm);
        return (b.matrix().transpose() * w - stw - e * xdm).norm();
      },
      0.1, 11);
  EXPECT_TRUE(t.quadratic()) << t.ratio[0] << ' ' << t.ratio[5];
}

TEST_F(BasisDerivatives, AdjointsAndMixedSymmetry) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Vector v = random_vector(basis->size(), 10 + s);
    const Vector w = random_vector(mesh.num_nodes() - 1, 20 + s);
    const Vector dm = random_vector(mesh.num_cells(), 30 + s);
    const auto y = basis->Y(v, m);
    const auto x = basis->X(w, m);
    using msfv::testing::relative_gap;
    EXPECT_LE(relative_gap(w.dot(y.apply(dm)), dm.dot(y.apply_transpose(w))), 1e-12);
    EXPECT_LE(relative_gap(v.dot(x.apply(dm)), dm.dot(x.apply_transpose(v))), 1e-12);
    EXPECT_LE(relative_gap(v.dot(x.apply(dm)), w.dot(y.apply(dm))), 1e-12);
  }
}

TEST_F(BasisDerivatives, ZeroInputsAndStaleModel) {
  const Vector dm = random_vector(mesh.num_cells(), 5);
  EXPECT_EQ(basis->X(Vector::Zero(mesh.num_nodes() - 1), m).apply(dm).norm(), 0.0);
  EXPECT_EQ(basis->Y(random_vector(basis->size(), 1), m).apply(Vector::Zero(mesh.num_cells())).norm(), 0.0);
  Vector other = m;
  other[0] += 1e-3;
  EXPECT_THROW(basis->Y(Vector::Ones(basis->size()), other), StaleBasis);
  EXPECT_THROW(basis->X(Vector::Ones(mesh.num_nodes() - 1), other), StaleBasis);
}

TEST_F(BasisDerivatives, ParallelBitwiseDeterminism) {
  const Vector v = random_vector(basis->size(), 1);
  const Vector w = random_vector(mesh.num_nodes() - 1, 2);
  const Vector dm = random_vector(mesh.num_cells(), 3);
  const Vector y1 = basis->Y(v, m).apply(dm);
  const Vector x1 = basis->X(w, m).apply(dm);
  const Vector yt1 = basis->Y(v, m).apply_transpose(w);
  for (std::size_t nw : {2u, 4u}) {
    WorkerPool pool(nw);
    const MultiscaleBasis b = MultiscaleBasis::assemble(conditions, partition, m, pool);
    EXPECT_TRUE((Matrix(b.matrix()).array() == Matrix(basis->matrix()).array()).all());
    EXPECT_TRUE((b.Y(v, m, pool).apply(dm).array() == y1.array()).all());
    EXPECT_TRUE((b.X(w, m, pool).apply(dm).array() == x1.array()).all());
    EXPECT_TRUE((b.Y(v, m, pool).apply_transpose(w).array() == yt1.array()).all());
  }
}
