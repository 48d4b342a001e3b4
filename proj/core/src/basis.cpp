#include "msfv/basis.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/SVD>

#include "msfv/diffusion.hpp"
#include "msfv/solvers.hpp"

namespace msfv {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::Lagrange:
      return "lagrange";
    case Family::Source:
      return "source";
    case Family::Skeleton:
      return "skeleton";
    case Family::LocalPca:
      return "local_pca";
  }
  return "unknown";
}

void BasisSpec::validate() const {
  if (!lagrange && !source && !skeleton && !local_pca) {
    throw std::invalid_argument("basis spec: at least one family must be enabled");
  }
  if (local_pca && pca_rank < 1) {
    throw std::invalid_argument("basis spec: local PCA rank must be >= 1");
  }
  if (pca_total < 0) throw std::invalid_argument("basis spec: negative local PCA total");
}

void BoundaryConditionSet::append(BoundaryConditionSet other) {
  functions.insert(functions.end(), std::make_move_iterator(other.functions.begin()),
                   std::make_move_iterator(other.functions.end()));
}

namespace {

// Cholesky of one block's interior operator. Dense below a size cut-off.
class LocalFactor {
 public:
  void compute(const SparseMatrix& aii) {
    n_ = aii.rows();
    if (n_ == 0) return;
    if (n_ <= kDenseLimit) {
      dense_.compute(Matrix(aii));
      if (dense_.info() != Eigen::Success) {
        throw FactorizationFailure("local block operator is not positive definite");
      }
    } else {
      sparse_.emplace(aii);
    }
  }

  template <class Rhs>
  Matrix solve(const Rhs& b) const {
    if (n_ == 0) return Matrix(0, b.cols());
    if (sparse_) return sparse_->solve(Matrix(b));
    return dense_.solve(b);
  }

  Index size() const { return n_; }

 private:
  static constexpr Index kDenseLimit = 400;
  Index n_ = 0;
  Eigen::LLT<Matrix> dense_;
  std::optional<DirectSolver> sparse_;
};

struct LocalSystem {
  SparseMatrix aii;
  SparseMatrix aib;
};

LocalSystem assemble_local(const CoarsePartition& p, const Vector& sigma, Index block) {
  const BlockTemplate& t = p.block_template();
  const TensorMesh& mesh = p.mesh();
  const double quarter = 0.25 * mesh.cell_volume();
  const Index ni = static_cast<Index>(t.interior.size());
  const Index nb = static_cast<Index>(t.boundary.size());
  std::vector<Triplet> ii;
  std::vector<Triplet> ib;
  ii.reserve(4 * t.edges.size());
  ib.reserve(t.edges.size());
  for (const LocalEdge& e : t.edges) {
    double s = 0.0;
    for (Index c : e.cells) s += sigma[p.global_cell(block, c)];
    const double h = mesh.width(e.axis);
    const double coef = quarter * s / (h * h);
    const Index ia = t.interior_slot[e.a];
    const Index ic = t.interior_slot[e.b];
    if (ia >= 0) ii.emplace_back(ia, ia, coef);
    if (ic >= 0) ii.emplace_back(ic, ic, coef);
    if (ia >= 0 && ic >= 0) {
      ii.emplace_back(ia, ic, -coef);
      ii.emplace_back(ic, ia, -coef);
    } else if (ia >= 0) {
      ib.emplace_back(ia, t.boundary_slot[e.b], -coef);
    } else {
      ib.emplace_back(ic, t.boundary_slot[e.a], -coef);
    }
  }
  LocalSystem sys;
  sys.aii.resize(ni, ni);
  sys.aii.setFromTriplets(ii.begin(), ii.end());
  sys.aib.resize(ni, nb);
  sys.aib.setFromTriplets(ib.begin(), ib.end());
  return sys;
}

// (x[b] - x[a]) / h on every template edge.
Vector edge_grad(const BlockTemplate& t, const TensorMesh& mesh, const Vector& x) {
  Vector g(static_cast<Index>(t.edges.size()));
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    const LocalEdge& le = t.edges[e];
    g[e] = (x[le.b] - x[le.a]) / mesh.width(le.axis);
  }
  return g;
}

// Transpose of edge_grad: local nodal vector.
Vector edge_div(const BlockTemplate& t, const TensorMesh& mesh, const Vector& vals) {
  Vector out = Vector::Zero(t.num_nodes);
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    const LocalEdge& le = t.edges[e];
    const double v = vals[e] / mesh.width(le.axis);
    out[le.a] -= v;
    out[le.b] += v;
  }
  return out;
}

// Edge weight perturbation (V/4) sum_c sigma'_c dm_c.
Vector edge_dw(const CoarsePartition& p, Index block, const Vector& sigma_prime,
               const Vector& dm) {
  const BlockTemplate& t = p.block_template();
  const double quarter = 0.25 * p.mesh().cell_volume();
  Vector dw(static_cast<Index>(t.edges.size()));
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    double s = 0.0;
    for (Index c : t.edges[e].cells) {
      const Index g = p.global_cell(block, c);
      s += sigma_prime[g] * dm[g];
    }
    dw[e] = quarter * s;
  }
  return dw;
}

// Transpose of edge_dw, scaled by `scale`, written into the block's cells.
void scatter_cells(const CoarsePartition& p, Index block, const Vector& sigma_prime,
                   const Vector& vals, double scale, Vector& out) {
  const BlockTemplate& t = p.block_template();
  const double quarter = 0.25 * p.mesh().cell_volume();
  Vector local = Vector::Zero(t.num_cells);
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    for (Index c : t.edges[e].cells) local[c] += vals[e];
  }
  for (Index c = 0; c < t.num_cells; ++c) {
    const Index g = p.global_cell(block, c);
    out[g] = scale * quarter * sigma_prime[g] * local[c];
  }
}

// Boundary-node local coordinates relative to the block, normalized to [0,1].
std::vector<std::array<double, 3>> boundary_coords(const BlockTemplate& t) {
  const Index l1 = t.size[0] + 1;
  const Index l2 = t.size[1] + 1;
  std::vector<std::array<double, 3>> out;
  out.reserve(t.boundary.size());
  for (Index id : t.boundary) {
    const Index i = id % l1;
    const Index j = (id / l1) % l2;
    const Index k = id / (l1 * l2);
    out.push_back({static_cast<double>(i) / static_cast<double>(t.size[0]),
                   static_cast<double>(j) / static_cast<double>(t.size[1]),
                   static_cast<double>(k) / static_cast<double>(t.size[2])});
  }
  return out;
}

void zero_pinned(const CoarsePartition& p, Index block, Vector& dirichlet) {
  auto bnodes = p.boundary_nodes(block);
  for (std::size_t i = 0; i < bnodes.size(); ++i) {
    if (bnodes[i] == kPinnedNode) dirichlet[static_cast<Index>(i)] = 0.0;
  }
}

Vector gather(const Vector& full, std::span<const Index> nodes) {
  Vector out(static_cast<Index>(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) out[static_cast<Index>(i)] = full[nodes[i]];
  return out;
}

}  // namespace

struct MultiscaleBasis::Block {
  std::vector<Index> columns;
  Matrix closure;  // local closure nodes x active columns
  LocalFactor factor;
};

BoundaryConditionSet generate_bc_lagrange(const CoarsePartition& partition) {
  const BlockTemplate& t = partition.block_template();
  const auto coords = boundary_coords(t);
  const auto nb = partition.blocks_per_axis();
  BoundaryConditionSet out;
  out.functions.reserve(partition.num_coarse_nodes());
  for (Index c = 0; c < partition.num_coarse_nodes(); ++c) {
    const GridIndex cg = partition.coarse_node_triple(c);
    BasisFunctionData f;
    f.family = Family::Lagrange;
    f.label = c;
    for (Index bk = std::max<Index>(cg.k - 1, 0); bk <= std::min(cg.k, nb[2] - 1); ++bk) {
      for (Index bj = std::max<Index>(cg.j - 1, 0); bj <= std::min(cg.j, nb[1] - 1); ++bj) {
        for (Index bi = std::max<Index>(cg.i - 1, 0); bi <= std::min(cg.i, nb[0] - 1); ++bi) {
          const std::array<bool, 3> upper{cg.i > bi, cg.j > bj, cg.k > bk};
          BlockCondition bc;
          bc.block = partition.block_index(bi, bj, bk);
          bc.dirichlet.resize(static_cast<Index>(coords.size()));
          for (std::size_t n = 0; n < coords.size(); ++n) {
            double v = 1.0;
            for (int d = 0; d < 3; ++d) v *= upper[d] ? coords[n][d] : 1.0 - coords[n][d];
            bc.dirichlet[static_cast<Index>(n)] = v;
          }
          zero_pinned(partition, bc.block, bc.dirichlet);
          if (bc.dirichlet.cwiseAbs().maxCoeff() == 0.0) continue;
          f.blocks.push_back(std::move(bc));
        }
      }
    }
    // Only with single-cell blocks can pinning wipe out a whole hat.
    if (!f.blocks.empty()) out.functions.push_back(std::move(f));
  }
  return out;
}

BoundaryConditionSet generate_bc_source(const CoarsePartition& partition,
                                        const SparseMatrix& sources) {
  const Index nn = partition.mesh().num_nodes();
  if (sources.rows() != nn - 1) {
    throw std::invalid_argument("source basis: source matrix must have num_nodes-1 rows");
  }
  const Index nbd = static_cast<Index>(partition.block_template().boundary.size());
  BoundaryConditionSet out;
  for (Index s = 0; s < sources.cols(); ++s) {
    const Vector q = unpin(Vector(sources.col(s)));
    BasisFunctionData f;
    f.family = Family::Source;
    f.label = s;
    for (Index blk = 0; blk < partition.num_blocks(); ++blk) {
      Vector qi = gather(q, partition.interior_nodes(blk));
      if (qi.size() == 0 || qi.cwiseAbs().maxCoeff() == 0.0) continue;
      f.blocks.push_back({blk, Vector::Zero(nbd), std::move(qi)});
    }
    if (!f.blocks.empty()) out.functions.push_back(std::move(f));
  }
  return out;
}

Matrix reference_fields(const TensorMesh& mesh, const Vector& m_ref, const SparseMatrix& sources) {
  const DiffusionOperator op(mesh, m_ref);
  if (sources.rows() != op.size()) {
    throw std::invalid_argument("reference fields: source matrix has wrong row count");
  }
  const DirectSolver solver(op.matrix());
  return unpin(Matrix(solver.solve(Matrix(sources))));
}

BoundaryConditionSet generate_bc_skeleton(const CoarsePartition& partition, const Matrix& fields) {
  if (fields.rows() != partition.mesh().num_nodes()) {
    throw std::invalid_argument("skeleton basis: fields must be full nodal vectors");
  }
  BoundaryConditionSet out;
  for (Index s = 0; s < fields.cols(); ++s) {
    const Vector u = fields.col(s);
    BasisFunctionData f;
    f.family = Family::Skeleton;
    f.label = s;
    for (Index blk = 0; blk < partition.num_blocks(); ++blk) {
      Vector xb = gather(u, partition.boundary_nodes(blk));
      zero_pinned(partition, blk, xb);
      if (xb.cwiseAbs().maxCoeff() == 0.0) continue;
      f.blocks.push_back({blk, std::move(xb), Vector()});
    }
    if (!f.blocks.empty()) out.functions.push_back(std::move(f));
  }
  return out;
}

BoundaryConditionSet generate_bc_skeleton(const CoarsePartition& partition, const Vector& m_ref,
                                          const SparseMatrix& sources) {
  return generate_bc_skeleton(partition, reference_fields(partition.mesh(), m_ref, sources));
}

std::vector<Index> pca_quota(Index num_blocks, Index rank, Index total) {
  std::vector<Index> quota(static_cast<std::size_t>(num_blocks), rank);
  if (total > 0) {
    for (Index j = 0; j < num_blocks; ++j) {
      const Index share = total / num_blocks + (j < total % num_blocks ? 1 : 0);
      quota[static_cast<std::size_t>(j)] = std::min(rank, share);
    }
  }
  return quota;
}

BoundaryConditionSet generate_bc_local_pca(const CoarsePartition& partition, const Matrix& fields,
                                           Index rank, Index total) {
  const Index ns = fields.cols();
  if (fields.rows() != partition.mesh().num_nodes()) {
    throw std::invalid_argument("local PCA basis: fields must be full nodal vectors");
  }
  if (ns < 1) throw std::invalid_argument("local PCA basis: need at least one source");
  if (rank < 1 || rank > ns) {
    throw std::invalid_argument("local PCA basis: rank must be in [1, number of sources]");
  }
  const auto quota = pca_quota(partition.num_blocks(), rank, total);
  constexpr double kDrop = 1e-10;
  constexpr double kIndependent = 1e-8;

  BoundaryConditionSet out;
  for (Index blk = 0; blk < partition.num_blocks(); ++blk) {
    const Index want = quota[static_cast<std::size_t>(blk)];
    if (want == 0) continue;
    auto bnodes = partition.boundary_nodes(blk);
    Matrix traces(ns, static_cast<Index>(bnodes.size()));
    for (std::size_t n = 0; n < bnodes.size(); ++n) {
      traces.col(static_cast<Index>(n)) = fields.row(bnodes[n]).transpose();
    }
    const double scale = traces.rowwise().norm().maxCoeff();
    if (!(scale > 0.0)) continue;

    const Eigen::RowVectorXd mean = traces.colwise().mean();
    const Matrix centered = traces.rowwise() - mean;

    std::vector<Vector> candidates;
    if (mean.norm() > kDrop * scale) candidates.emplace_back(mean.transpose().normalized());
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector sv = svd.singularValues();
    if (sv.size() > 0 && sv[0] > kDrop * scale) {
      for (Index i = 0; i < sv.size(); ++i) {
        if (sv[i] < kDrop * sv[0]) break;
        candidates.emplace_back(svd.matrixV().col(i));
      }
    }

    std::vector<Vector> kept;
    for (Vector v : candidates) {
      if (static_cast<Index>(kept.size()) >= want) break;
      zero_pinned(partition, blk, v);
      for (int pass = 0; pass < 2; ++pass) {
        for (const Vector& k : kept) v -= k.dot(v) * k;
      }
      const double nrm = v.norm();
      if (nrm < kIndependent) continue;
      v /= nrm;
      Index imax = 0;
      v.cwiseAbs().maxCoeff(&imax);
      if (v[imax] < 0.0) v = -v;
      kept.push_back(std::move(v));
    }
    for (Vector& v : kept) {
      BasisFunctionData f;
      f.family = Family::LocalPca;
      f.label = blk;
      f.blocks.push_back({blk, std::move(v), Vector()});
      out.functions.push_back(std::move(f));
    }
  }
  return out;
}

BoundaryConditionSet generate_bc_local_pca(const CoarsePartition& partition, const Vector& m_ref,
                                           const SparseMatrix& sources, Index rank, Index total) {
  if (rank > sources.cols()) {
    throw std::invalid_argument("local PCA basis: rank exceeds number of sources");
  }
  return generate_bc_local_pca(partition, reference_fields(partition.mesh(), m_ref, sources), rank,
                               total);
}

BoundaryConditionSet build_boundary_conditions(const BasisSpec& spec,
                                               const CoarsePartition& partition,
                                               const SparseMatrix& sources) {
  spec.validate();
  BoundaryConditionSet out;
  if (spec.lagrange) out.append(generate_bc_lagrange(partition));
  if (spec.source) out.append(generate_bc_source(partition, sources));
  if (spec.skeleton || spec.local_pca) {
    if (spec.reference_model.size() != partition.mesh().num_cells()) {
      throw std::invalid_argument("basis spec: reference model required for skeleton/local PCA");
    }
    if (spec.local_pca && spec.pca_rank > sources.cols()) {
      throw std::invalid_argument("local PCA basis: rank exceeds number of sources");
    }
    const Matrix fields = reference_fields(partition.mesh(), spec.reference_model, sources);
    if (spec.skeleton) out.append(generate_bc_skeleton(partition, fields));
    if (spec.local_pca) {
      out.append(generate_bc_local_pca(partition, fields, spec.pca_rank, spec.pca_total));
    }
  }
  return out;
}

Vector solve_local_block(const CoarsePartition& partition, const Vector& m, Index block,
                         const Vector& dirichlet, const Vector& forcing) {
  const BlockTemplate& t = partition.block_template();
  partition.block_triple(block);  // range check
  if (m.size() != partition.mesh().num_cells()) {
    throw std::invalid_argument("local solve: model length mismatch");
  }
  if (dirichlet.size() != static_cast<Index>(t.boundary.size())) {
    throw std::invalid_argument("local solve: boundary data length mismatch");
  }
  if (forcing.size() != 0 && forcing.size() != static_cast<Index>(t.interior.size())) {
    throw std::invalid_argument("local solve: forcing length mismatch");
  }
  const LocalSystem sys = assemble_local(partition, sigma_map(m), block);
  LocalFactor f;
  f.compute(sys.aii);
  Vector rhs = -(sys.aib * dirichlet);
  if (forcing.size() != 0) rhs += forcing;
  return f.solve(rhs);
}

MultiscaleBasis MultiscaleBasis::assemble(std::shared_ptr<const BoundaryConditionSet> conditions,
                                          std::shared_ptr<const CoarsePartition> partition,
                                          const Vector& m, WorkerPool& pool) {
  const CoarsePartition& p = *partition;
  const BlockTemplate& t = p.block_template();
  const TensorMesh& mesh = p.mesh();
  if (m.size() != mesh.num_cells()) throw std::invalid_argument("basis: model length mismatch");
  if (!m.allFinite()) throw InvalidModel("basis: model has non-finite entries");

  MultiscaleBasis out;
  out.partition_ = partition;
  out.conditions_ = conditions;
  out.m_ = m;
  const Vector sigma = sigma_map(m);
  out.sigma_prime_ = sigma_deriv(m);

  const Index nblocks = p.num_blocks();
  std::vector<std::vector<const BlockCondition*>> per_block(static_cast<std::size_t>(nblocks));
  auto blocks = std::make_shared<std::vector<Block>>(static_cast<std::size_t>(nblocks));
  for (Index c = 0; c < conditions->size(); ++c) {
    for (const BlockCondition& bc : conditions->functions[static_cast<std::size_t>(c)].blocks) {
      per_block[static_cast<std::size_t>(bc.block)].push_back(&bc);
      (*blocks)[static_cast<std::size_t>(bc.block)].columns.push_back(c);
    }
  }

  const Index ni = static_cast<Index>(t.interior.size());
  const Index nbd = static_cast<Index>(t.boundary.size());
  pool.parallel_for(static_cast<std::size_t>(nblocks), [&](std::size_t j) {
    Block& b = (*blocks)[j];
    const auto& conds = per_block[j];
    const Index na = static_cast<Index>(conds.size());
    const Index blk = static_cast<Index>(j);
    Matrix xb(nbd, na);
    Matrix rhs = Matrix::Zero(ni, na);
    for (Index a = 0; a < na; ++a) {
      xb.col(a) = conds[static_cast<std::size_t>(a)]->dirichlet;
      const Vector& q = conds[static_cast<std::size_t>(a)]->forcing;
      if (q.size() != 0) rhs.col(a) = q;
    }
    Matrix xi(ni, na);
    if (ni > 0) {
      const LocalSystem sys = assemble_local(p, sigma, blk);
      b.factor.compute(sys.aii);
      if (na > 0) {
        rhs -= sys.aib * xb;
        xi = b.factor.solve(rhs);
      }
    }
    b.closure.resize(t.num_nodes, na);
    for (Index n = 0; n < nbd; ++n) b.closure.row(t.boundary[n]) = xb.row(n);
    for (Index n = 0; n < ni; ++n) b.closure.row(t.interior[n]) = xi.row(n);
  });

  std::vector<Triplet> trip;
  for (Index blk = 0; blk < nblocks; ++blk) {
    const Block& b = (*blocks)[static_cast<std::size_t>(blk)];
    for (std::size_t a = 0; a < b.columns.size(); ++a) {
      const Index col = b.columns[a];
      for (Index l = 0; l < t.num_nodes; ++l) {
        const Index g = p.global_node(blk, l);
        if (g == kPinnedNode) continue;
        const double v = b.closure(l, static_cast<Index>(a));
        if (t.boundary_slot[l] >= 0 && v == 0.0) continue;
        trip.emplace_back(g - 1, col, v);
      }
    }
  }
  out.s_.resize(mesh.num_nodes() - 1, conditions->size());
  out.s_.setFromTriplets(trip.begin(), trip.end(), [](double first, double) { return first; });
  out.blocks_ = std::move(blocks);
  return out;
}

MultiscaleBasis MultiscaleBasis::assemble(const BasisSpec& spec, const CoarsePartition& partition,
                                          const Vector& m, const SparseMatrix& sources,
                                          WorkerPool& pool) {
  BasisSpec s = spec;
  if (s.reference_model.size() == 0) s.reference_model = m;
  auto conditions =
      std::make_shared<const BoundaryConditionSet>(build_boundary_conditions(s, partition, sources));
  return assemble(std::move(conditions), std::make_shared<const CoarsePartition>(partition), m,
                  pool);
}

std::vector<Family> MultiscaleBasis::families() const {
  std::vector<Family> out;
  out.reserve(conditions_->functions.size());
  for (const auto& f : conditions_->functions) out.push_back(f.family);
  return out;
}

Index MultiscaleBasis::count(Family f) const {
  return static_cast<Index>(std::count_if(conditions_->functions.begin(),
                                          conditions_->functions.end(),
                                          [f](const auto& fn) { return fn.family == f; }));
}

void MultiscaleBasis::check_model(const Vector& m) const {
  if (m.size() != m_.size() || m != m_) {
    throw StaleBasis("basis derivative requested at a model the basis was not built from");
  }
}

BasisDirectionalDerivative MultiscaleBasis::Y(const Vector& v, const Vector& m,
                                              WorkerPool& pool) const {
  check_model(m);
  if (v.size() != size()) throw std::invalid_argument("Y_k: coefficient length mismatch");
  BasisDirectionalDerivative d(*this, pool);
  const CoarsePartition& p = *partition_;
  const auto& blocks = *blocks_;
  d.edge_grad_.resize(blocks.size());
  pool.parallel_for(blocks.size(), [&](std::size_t j) {
    const Block& b = blocks[j];
    Vector va(static_cast<Index>(b.columns.size()));
    for (std::size_t a = 0; a < b.columns.size(); ++a) va[static_cast<Index>(a)] = v[b.columns[a]];
    d.edge_grad_[j] = edge_grad(p.block_template(), p.mesh(), b.closure * va);
  });
  return d;
}

BasisTransposeDerivative MultiscaleBasis::X(const Vector& w, const Vector& m,
                                            WorkerPool& pool) const {
  check_model(m);
  if (w.size() != s_.rows()) throw std::invalid_argument("X_k: field length mismatch");
  BasisTransposeDerivative d(*this, pool);
  const CoarsePartition& p = *partition_;
  const BlockTemplate& t = p.block_template();
  const auto& blocks = *blocks_;
  d.edge_grad_.resize(blocks.size());
  pool.parallel_for(blocks.size(), [&](std::size_t j) {
    const Block& b = blocks[j];
    if (b.factor.size() == 0) return;
    const auto inodes = p.interior_nodes(static_cast<Index>(j));
    Vector wi(static_cast<Index>(inodes.size()));
    for (std::size_t n = 0; n < inodes.size(); ++n) wi[static_cast<Index>(n)] = w[inodes[n] - 1];
    const Vector z = b.factor.solve(wi);
    Vector zl = Vector::Zero(t.num_nodes);
    for (std::size_t n = 0; n < t.interior.size(); ++n) zl[t.interior[n]] = z[static_cast<Index>(n)];
    d.edge_grad_[j] = edge_grad(t, p.mesh(), zl);
  });
  return d;
}

Index BasisDirectionalDerivative::rows() const { return basis_->s_.rows(); }
Index BasisDirectionalDerivative::cols() const { return basis_->m_.size(); }
Index BasisTransposeDerivative::rows() const { return basis_->size(); }
Index BasisTransposeDerivative::cols() const { return basis_->m_.size(); }

Vector BasisDirectionalDerivative::apply(const Vector& dm) const {
  if (dm.size() != cols()) throw std::invalid_argument("Y_k: perturbation length mismatch");
  const CoarsePartition& p = *basis_->partition_;
  const BlockTemplate& t = p.block_template();
  const auto& blocks = *basis_->blocks_;
  Vector out = Vector::Zero(rows());
  pool_->parallel_for(blocks.size(), [&](std::size_t j) {
    const auto& b = blocks[j];
    if (b.factor.size() == 0 || b.columns.empty()) return;
    const Index blk = static_cast<Index>(j);
    const Vector dw = edge_dw(p, blk, basis_->sigma_prime_, dm);
    const Vector r = edge_div(t, p.mesh(), edge_grad_[j].cwiseProduct(dw));
    Vector ri(static_cast<Index>(t.interior.size()));
    for (std::size_t n = 0; n < t.interior.size(); ++n) ri[static_cast<Index>(n)] = r[t.interior[n]];
    const Vector yi = b.factor.solve(ri);
    const auto inodes = p.interior_nodes(blk);
    for (std::size_t n = 0; n < inodes.size(); ++n) out[inodes[n] - 1] = -yi[static_cast<Index>(n)];
  });
  return out;
}

Vector BasisDirectionalDerivative::apply_transpose(const Vector& w) const {
  if (w.size() != rows()) throw std::invalid_argument("Y_k': input length mismatch");
  const CoarsePartition& p = *basis_->partition_;
  const BlockTemplate& t = p.block_template();
  const auto& blocks = *basis_->blocks_;
  Vector out = Vector::Zero(cols());
  pool_->parallel_for(blocks.size(), [&](std::size_t j) {
    const auto& b = blocks[j];
    if (b.factor.size() == 0 || b.columns.empty()) return;
    const Index blk = static_cast<Index>(j);
    const auto inodes = p.interior_nodes(blk);
    Vector wi(static_cast<Index>(inodes.size()));
    for (std::size_t n = 0; n < inodes.size(); ++n) wi[static_cast<Index>(n)] = w[inodes[n] - 1];
    const Vector z = b.factor.solve(wi);
    Vector zl = Vector::Zero(t.num_nodes);
    for (std::size_t n = 0; n < t.interior.size(); ++n) zl[t.interior[n]] = z[static_cast<Index>(n)];
    const Vector a = edge_grad(t, p.mesh(), zl);
    scatter_cells(p, blk, basis_->sigma_prime_, a.cwiseProduct(edge_grad_[j]), -1.0, out);
  });
  return out;
}

Vector BasisTransposeDerivative::apply(const Vector& dm) const {
  if (dm.size() != cols()) throw std::invalid_argument("X_k: perturbation length mismatch");
  const CoarsePartition& p = *basis_->partition_;
  const BlockTemplate& t = p.block_template();
  const auto& blocks = *basis_->blocks_;
  std::vector<Vector> partial(blocks.size());
  pool_->parallel_for(blocks.size(), [&](std::size_t j) {
    const auto& b = blocks[j];
    if (b.factor.size() == 0 || b.columns.empty()) return;
    const Vector dw = edge_dw(p, static_cast<Index>(j), basis_->sigma_prime_, dm);
    const Vector div = edge_div(t, p.mesh(), edge_grad_[j].cwiseProduct(dw));
    partial[j] = -(b.closure.transpose() * div);
  });
  Vector out = Vector::Zero(rows());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (partial[j].size() == 0) continue;
    const auto& cols = blocks[j].columns;
    for (std::size_t a = 0; a < cols.size(); ++a) out[cols[a]] += partial[j][static_cast<Index>(a)];
  }
  return out;
}

Vector BasisTransposeDerivative::apply_transpose(const Vector& y) const {
  if (y.size() != rows()) throw std::invalid_argument("X_k': input length mismatch");
  const CoarsePartition& p = *basis_->partition_;
  const BlockTemplate& t = p.block_template();
  const auto& blocks = *basis_->blocks_;
  Vector out = Vector::Zero(cols());
  pool_->parallel_for(blocks.size(), [&](std::size_t j) {
    const auto& b = blocks[j];
    if (b.factor.size() == 0 || b.columns.empty()) return;
    Vector ya(static_cast<Index>(b.columns.size()));
    for (std::size_t a = 0; a < b.columns.size(); ++a) ya[static_cast<Index>(a)] = y[b.columns[a]];
    const Vector g = edge_grad(t, p.mesh(), b.closure * ya);
    scatter_cells(p, static_cast<Index>(j), basis_->sigma_prime_, g.cwiseProduct(edge_grad_[j]),
                  -1.0, out);
  });
  return out;
}

}  // namespace msfv
