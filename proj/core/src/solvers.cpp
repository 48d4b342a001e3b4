#include "msfv/solvers.hpp"

#include <cmath>
#include <numeric>

namespace msfv {

DirectSolver::DirectSolver(const SparseMatrix& a) : n_(a.rows()) {
  if (a.rows() != a.cols()) throw std::invalid_argument("direct solver: matrix not square");
  auto llt = std::make_shared<
      Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<Index>>>();
  llt->compute(a);
  if (llt->info() != Eigen::Success) {
    throw FactorizationFailure("direct solver: matrix is not symmetric positive definite");
  }
  factor_nnz_ = llt->matrixL().nestedExpression().nonZeros();
  llt_ = std::move(llt);
}

Matrix DirectSolver::solve(const Matrix& b) const {
  if (b.rows() != n_) throw std::invalid_argument("direct solver: rhs size mismatch");
  Matrix x(b.rows(), b.cols());
  for (Index c = 0; c < b.cols(); ++c) x.col(c) = llt_->solve(b.col(c));
  return x;
}

Vector DirectSolver::solve(const Vector& b) const {
  if (b.size() != n_) throw std::invalid_argument("direct solver: rhs size mismatch");
  return llt_->solve(b);
}

DirectSolver direct_factorize(const SparseMatrix& a) { return DirectSolver(a); }

Matrix direct_solve(const DirectSolver& factor, const Matrix& b) { return factor.solve(b); }

namespace {

// Orthonormal basis of the numerical range of z (pivoted QR, relative
// threshold on the diagonal of R).
Matrix orthonormal_range(const Matrix& z) {
  if (z.cols() == 0) return z;
  Eigen::ColPivHouseholderQR<Matrix> qr(z);
  qr.setThreshold(1e-12);
  const Index rank = qr.rank();
  Matrix basis = qr.householderQ() * Matrix::Identity(z.rows(), rank);
  return basis;
}

}  // namespace

IterativeResult block_cg(const BlockOperator& a, const Matrix& b, double tol, int maxit) {
  if (!(tol > 0.0)) throw std::invalid_argument("block_cg: tolerance must be positive");
  if (maxit < 1) throw std::invalid_argument("block_cg: maxit must be >= 1");

  const Index n = b.rows();
  const Index s = b.cols();
  IterativeResult out;
  out.solution = Matrix::Zero(n, s);

  Vector bnorm(s);
  for (Index c = 0; c < s; ++c) bnorm[c] = b.col(c).norm();

  auto rel = [&](const Matrix& r, Index col, Index src) {
    return bnorm[src] > 0.0 ? r.col(col).norm() / bnorm[src] : 0.0;
  };

  // Active columns: residual block R and their original column ids.
  std::vector<Index> active;
  Matrix r(n, 0);
  {
    std::vector<Index> keep;
    for (Index c = 0; c < s; ++c)
      if (bnorm[c] > 0.0) keep.push_back(c);
    active = keep;
    r.resize(n, static_cast<Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) r.col(i) = b.col(keep[i]);
  }
  Vector final_rel = Vector::Zero(s);
  out.history.push_back(active.empty() ? 0.0 : 1.0);
  if (active.empty()) {
    out.converged = true;
    return out;
  }

  // Search directions are kept orthonormal and rank-revealed, so a block
  // whose columns become numerically dependent loses those directions
  // instead of producing a singular Gram matrix.
  Matrix p = orthonormal_range(r);
  for (int it = 1; it <= maxit && p.cols() > 0; ++it) {
    const Matrix q = a(p);
    const Matrix gram = 0.5 * (p.transpose() * q + q.transpose() * p);
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
      out.iterations = it - 1;
      out.breakdown = true;
      out.relative_residual = out.history.back();
      throw SolverBreakdown("block_cg: search directions lost positive curvature", out);
    }
    const Matrix alpha = llt.solve(p.transpose() * r);
    const Matrix step = p * alpha;
    for (std::size_t i = 0; i < active.size(); ++i) out.solution.col(active[i]) += step.col(i);
    r -= q * alpha;

    std::vector<Index> keep;
    double worst = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const double rr = rel(r, static_cast<Index>(i), active[i]);
      final_rel[active[i]] = rr;
      worst = std::max(worst, rr);
      if (rr > tol) keep.push_back(static_cast<Index>(i));
    }
    out.iterations = it;
    out.history.push_back(worst);
    if (keep.empty()) {
      out.converged = true;
      break;
    }
    Matrix r_next(n, static_cast<Index>(keep.size()));
    std::vector<Index> next_active;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      r_next.col(i) = r.col(keep[i]);
      next_active.push_back(active[keep[i]]);
    }
    const Matrix beta = -llt.solve(q.transpose() * r_next);
    p = orthonormal_range(r_next + p * beta);
    r = std::move(r_next);
    active = std::move(next_active);
  }
  out.relative_residual = final_rel.size() ? final_rel.maxCoeff() : 0.0;
  return out;
}

IterativeResult block_cg(const SparseMatrix& a, const Matrix& b, double tol, int maxit) {
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw std::invalid_argument("block_cg: dimension mismatch");
  }
  return block_cg([&a](const Matrix& x) -> Matrix { return a * x; }, b, tol, maxit);
}

FineSolver::FineSolver(const SparseMatrix& a, const SolverOptions& options)
    : options_(options), matrix_(std::make_shared<const SparseMatrix>(a)) {
  if (options_.kind == SolverKind::Direct) {
    direct_ = std::make_shared<const DirectSolver>(a);
  }
}

Matrix FineSolver::solve(const Matrix& b) const {
  if (direct_) return direct_->solve(b);
  return block_cg(*matrix_, b, options_.tolerance, options_.max_iterations).solution;
}

}  // namespace msfv
