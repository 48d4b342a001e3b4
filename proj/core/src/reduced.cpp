#include "msfv/reduced.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace msfv {

namespace {

// Reciprocal condition estimate below which the dense reduced factorization is
// treated as numerically singular and shifted.
constexpr double kReducedRcondFloor = 1e-13;
constexpr double kReducedShiftScale = 1e-12;

bool same_model(const Vector& a, const Vector& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

void check_columns(const SparseMatrix& m, const char* what) {
  for (Index j = 0; j < m.outerSize(); ++j) {
    bool nonzero = false;
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
      if (it.value() != 0.0) {
        nonzero = true;
        break;
      }
    }
    if (!nonzero) throw std::invalid_argument(std::string("survey: zero column in ") + what);
  }
}

std::vector<GradAu> grad_per_source(const TensorMesh& mesh, const Vector& m, const Matrix& u) {
  std::vector<GradAu> out;
  out.reserve(static_cast<std::size_t>(u.cols()));
  for (Index j = 0; j < u.cols(); ++j) out.emplace_back(mesh, m, u.col(j));
  return out;
}

class FullSensitivity : public SensitivityOp {
 public:
  FullSensitivity(const TensorMesh& mesh, const FullState& state, const Survey& survey)
      : solver_(state.solver),
        p_(survey.receivers),
        n_params_(mesh.num_cells()),
        grads_(grad_per_source(mesh, state.model, state.fields)) {}

  Matrix apply(const Vector& dm) const override {
    check_length(dm);
    Matrix rhs(p_.rows(), static_cast<Index>(grads_.size()));
    for (std::size_t j = 0; j < grads_.size(); ++j) rhs.col(static_cast<Index>(j)) = grads_[j].apply(dm);
    return -(p_.transpose() * solver_->solve(rhs));
  }

  Vector apply_transpose(const Matrix& w) const override {
    const Matrix z = solver_->solve(Matrix(p_ * w));
    Vector out = Vector::Zero(n_params_);
    for (std::size_t j = 0; j < grads_.size(); ++j) {
      out -= grads_[j].apply_transpose(z.col(static_cast<Index>(j)));
    }
    return out;
  }

  Index num_params() const override { return n_params_; }

 private:
  void check_length(const Vector& dm) const {
    if (dm.size() != n_params_) throw std::invalid_argument("sensitivity: model length mismatch");
  }
  std::shared_ptr<const FineSolver> solver_;
  SparseMatrix p_;
  Index n_params_;
  std::vector<GradAu> grads_;
};

class FixedSensitivity : public SensitivityOp {
 public:
  FixedSensitivity(const TensorMesh& mesh, const ReducedState& state, const Survey& survey)
      : basis_(state.basis),
        reduced_(state.reduced),
        p_(survey.receivers),
        n_params_(mesh.num_cells()),
        grads_(grad_per_source(mesh, state.model, Matrix(state.basis->matrix() * state.coefficients))) {}

  Matrix apply(const Vector& dm) const override {
    if (dm.size() != n_params_) throw std::invalid_argument("sensitivity: model length mismatch");
    const SparseMatrix& s = basis_->matrix();
    Matrix rhs(s.cols(), static_cast<Index>(grads_.size()));
    for (std::size_t j = 0; j < grads_.size(); ++j) {
      rhs.col(static_cast<Index>(j)) = s.transpose() * grads_[j].apply(dm);
    }
    return -(p_.transpose() * (s * reduced_->solve(rhs)));
  }

  Vector apply_transpose(const Matrix& w) const override {
    const SparseMatrix& s = basis_->matrix();
    const Matrix lambda = reduced_->solve(Matrix(s.transpose() * (p_ * w)));
    const Matrix slam = s * lambda;
    Vector out = Vector::Zero(n_params_);
    for (std::size_t j = 0; j < grads_.size(); ++j) {
      out -= grads_[j].apply_transpose(slam.col(static_cast<Index>(j)));
    }
    return out;
  }

  Index num_params() const override { return n_params_; }

 private:
  std::shared_ptr<const MultiscaleBasis> basis_;
  std::shared_ptr<const ReducedOperator> reduced_;
  SparseMatrix p_;
  Index n_params_;
  std::vector<GradAu> grads_;
};

class AdaptiveSensitivity : public SensitivityOp {
 public:
  AdaptiveSensitivity(const TensorMesh& mesh, const ReducedState& state, const Survey& survey,
                      WorkerPool& pool)
      : basis_(state.basis),
        op_(state.op),
        reduced_(state.reduced),
        p_(survey.receivers),
        n_params_(mesh.num_cells()) {
    const SparseMatrix& s = basis_->matrix();
    const Matrix u = s * state.coefficients;
    grads_ = grad_per_source(mesh, state.model, u);
    const Matrix residual = Matrix(survey.sources) - op_->matrix() * u;
    const Index ns = state.coefficients.cols();
    y_.reserve(static_cast<std::size_t>(ns));
    x_.reserve(static_cast<std::size_t>(ns));
    for (Index j = 0; j < ns; ++j) {
      y_.push_back(basis_->Y(state.coefficients.col(j), state.model, pool));
      x_.push_back(basis_->X(residual.col(j), state.model, pool));
    }
  }

  Matrix apply(const Vector& dm) const override {
    if (dm.size() != n_params_) throw std::invalid_argument("sensitivity: model length mismatch");
    const SparseMatrix& s = basis_->matrix();
    const SparseMatrix& a = op_->matrix();
    const Index ns = static_cast<Index>(grads_.size());
    Matrix ydm(s.rows(), ns);
    Matrix rhs(s.cols(), ns);
    for (Index j = 0; j < ns; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      ydm.col(j) = y_[jj].apply(dm);
      const Vector inner = grads_[jj].apply(dm) + a * ydm.col(j);
      rhs.col(j) = x_[jj].apply(dm) - s.transpose() * inner;
    }
    const Matrix dt = reduced_->solve(rhs);
    return p_.transpose() * (ydm + s * dt);
  }

  Vector apply_transpose(const Matrix& w) const override {
    const SparseMatrix& s = basis_->matrix();
    const SparseMatrix& a = op_->matrix();
    const Matrix y = p_ * w;
    const Matrix lambda = reduced_->solve(Matrix(s.transpose() * y));
    const Matrix slam = s * lambda;
    const Matrix aslam = a * slam;
    Vector out = Vector::Zero(n_params_);
    for (std::size_t j = 0; j < grads_.size(); ++j) {
      const auto c = static_cast<Index>(j);
      out += y_[j].apply_transpose(y.col(c) - aslam.col(c));
      out += x_[j].apply_transpose(lambda.col(c));
      out -= grads_[j].apply_transpose(slam.col(c));
    }
    return out;
  }

  Index num_params() const override { return n_params_; }

 private:
  std::shared_ptr<const MultiscaleBasis> basis_;
  std::shared_ptr<const DiffusionOperator> op_;
  std::shared_ptr<const ReducedOperator> reduced_;
  SparseMatrix p_;
  Index n_params_;
  std::vector<GradAu> grads_;
  std::vector<BasisDirectionalDerivative> y_;
  std::vector<BasisTransposeDerivative> x_;
};

}  // namespace

void Survey::validate(Index free_nodes) const {
  if (receivers.rows() != free_nodes || sources.rows() != free_nodes) {
    throw std::invalid_argument("survey: receiver/source rows must equal the free node count");
  }
  if (receivers.cols() < 1 || sources.cols() < 1) {
    throw std::invalid_argument("survey: needs at least one source and one receiver");
  }
  check_columns(receivers, "receivers");
  check_columns(sources, "sources");
  if (observed.size() != 0 &&
      (observed.rows() != receivers.cols() || observed.cols() != sources.cols())) {
    throw std::invalid_argument("survey: observed data shape mismatch");
  }
  if (!(noise_level >= 0.0)) throw std::invalid_argument("survey: negative noise level");
}

FullState forward_full(const TensorMesh& mesh, const Vector& m, const Survey& survey,
                       const SolverOptions& solver) {
  if (m.size() != mesh.num_cells()) throw std::invalid_argument("forward: model length mismatch");
  FullState st;
  st.model = m;
  st.op = std::make_shared<const DiffusionOperator>(mesh, m);
  if (survey.sources.rows() != st.op->size() || survey.receivers.rows() != st.op->size()) {
    throw std::invalid_argument("forward: survey does not match mesh");
  }
  st.solver = std::make_shared<const FineSolver>(st.op->matrix(), solver);
  st.fields = st.solver->solve(Matrix(survey.sources));
  st.data = survey.receivers.transpose() * st.fields;
  return st;
}

ReducedOperator::ReducedOperator(const SparseMatrix& s, const SparseMatrix& a) : n_(s.cols()) {
  if (s.rows() != a.rows() || a.rows() != a.cols()) {
    throw std::invalid_argument("reduced: basis and operator sizes differ");
  }
  if (n_ < 1) throw std::invalid_argument("reduced: empty basis");
  const SparseMatrix as = a * s;
  SparseMatrix ak = SparseMatrix(s.transpose()) * as;
  ak = 0.5 * (ak + SparseMatrix(ak.transpose()));
  sparse_ = ak;
  const double trace = ak.diagonal().sum();
  if (!(trace > 0.0) || !std::isfinite(trace)) throw ReducedSingular("reduced: non-positive trace");
  const double lambda = kReducedShiftScale * trace / static_cast<double>(n_);

  if (n_ <= kDenseReducedLimit) {
    Matrix dense = Matrix(ak);
    Eigen::LLT<Matrix> llt(dense);
    if (llt.info() == Eigen::Success && llt.rcond() >= kReducedRcondFloor) {
      dense_factor_ = std::move(llt);
      return;
    }
    dense.diagonal().array() += lambda;
    llt.compute(dense);
    if (llt.info() != Eigen::Success) throw ReducedSingular("reduced: shifted factorization failed");
    shift_ = lambda;
    dense_factor_ = std::move(llt);
    return;
  }
  try {
    sparse_factor_.emplace(ak);
  } catch (const FactorizationFailure&) {
    SparseMatrix shifted = ak;
    for (Index i = 0; i < n_; ++i) shifted.coeffRef(i, i) += lambda;
    try {
      sparse_factor_.emplace(shifted);
    } catch (const FactorizationFailure&) {
      throw ReducedSingular("reduced: shifted factorization failed");
    }
    shift_ = lambda;
  }
}

Matrix ReducedOperator::solve(const Matrix& b) const {
  if (b.rows() != n_) throw std::invalid_argument("reduced: right-hand side size mismatch");
  if (dense_factor_) return dense_factor_->solve(b);
  return sparse_factor_->solve(b);
}

Matrix ReducedOperator::dense() const { return Matrix(sparse_); }

ReducedState forward_reduced(const TensorMesh& mesh, const Vector& m, const Survey& survey,
                             std::shared_ptr<const MultiscaleBasis> basis) {
  if (!basis) throw std::invalid_argument("forward_reduced: null basis");
  if (m.size() != mesh.num_cells()) throw std::invalid_argument("forward: model length mismatch");
  ReducedState st;
  st.model = m;
  st.op = std::make_shared<const DiffusionOperator>(mesh, m);
  const SparseMatrix& s = basis->matrix();
  if (s.rows() != st.op->size() || survey.sources.rows() != s.rows() ||
      survey.receivers.rows() != s.rows()) {
    throw std::invalid_argument("forward_reduced: survey, basis and mesh sizes differ");
  }
  st.reduced = std::make_shared<const ReducedOperator>(s, st.op->matrix());
  st.coefficients = st.reduced->solve(Matrix(s.transpose() * survey.sources));
  st.data = survey.receivers.transpose() * (s * st.coefficients);
  st.basis = std::move(basis);
  return st;
}

std::unique_ptr<SensitivityOp> sensitivity_full(const TensorMesh& mesh, const FullState& state,
                                                const Survey& survey) {
  return std::make_unique<FullSensitivity>(mesh, state, survey);
}

std::unique_ptr<SensitivityOp> sensitivity_fixed(const TensorMesh& mesh,
                                                 const ReducedState& state, const Survey& survey) {
  return std::make_unique<FixedSensitivity>(mesh, state, survey);
}

std::unique_ptr<SensitivityOp> sensitivity_adaptive(const TensorMesh& mesh,
                                                    const ReducedState& state,
                                                    const Survey& survey, WorkerPool& pool) {
  return std::make_unique<AdaptiveSensitivity>(mesh, state, survey, pool);
}

FullForwardModel::FullForwardModel(TensorMesh mesh, std::shared_ptr<const Survey> survey,
                                   SolverOptions solver)
    : mesh_(std::move(mesh)), survey_(std::move(survey)), solver_(solver) {
  survey_->validate(mesh_.num_nodes() - 1);
}

const FullState& FullForwardModel::state_at(const Vector& m) {
  if (!cache_ || !same_model(cache_->model, m)) cache_ = forward_full(mesh_, m, *survey_, solver_);
  return *cache_;
}

Matrix FullForwardModel::predict(const Vector& m) { return state_at(m).data; }

Linearization FullForwardModel::linearize(const Vector& m) {
  const FullState& st = state_at(m);
  Linearization lin;
  lin.data = st.data;
  lin.jacobian = sensitivity_full(mesh_, st, *survey_);
  return lin;
}

FixedBasisForwardModel::FixedBasisForwardModel(TensorMesh mesh,
                                               std::shared_ptr<const Survey> survey,
                                               std::shared_ptr<const MultiscaleBasis> basis)
    : mesh_(std::move(mesh)), survey_(std::move(survey)), basis_(std::move(basis)) {
  survey_->validate(mesh_.num_nodes() - 1);
}

const ReducedState& FixedBasisForwardModel::state_at(const Vector& m) {
  if (!cache_ || !same_model(cache_->model, m)) cache_ = forward_reduced(mesh_, m, *survey_, basis_);
  return *cache_;
}

Matrix FixedBasisForwardModel::predict(const Vector& m) { return state_at(m).data; }

Linearization FixedBasisForwardModel::linearize(const Vector& m) {
  const ReducedState& st = state_at(m);
  Linearization lin;
  lin.data = st.data;
  lin.jacobian = sensitivity_fixed(mesh_, st, *survey_);
  lin.reduced_shifted = st.reduced->shifted();
  return lin;
}

AdaptiveBasisForwardModel::AdaptiveBasisForwardModel(
    std::shared_ptr<const CoarsePartition> partition, std::shared_ptr<const Survey> survey,
    std::shared_ptr<const BoundaryConditionSet> conditions, WorkerPool& pool)
    : partition_(std::move(partition)),
      survey_(std::move(survey)),
      conditions_(std::move(conditions)),
      pool_(&pool) {
  survey_->validate(partition_->mesh().num_nodes() - 1);
}

const ReducedState& AdaptiveBasisForwardModel::state_at(const Vector& m, bool& rebuilt) {
  rebuilt = false;
  if (!cache_ || !same_model(cache_->model, m)) {
    auto basis = std::make_shared<const MultiscaleBasis>(
        MultiscaleBasis::assemble(conditions_, partition_, m, *pool_));
    ++rebuilds_;
    rebuilt = true;
    cache_ = forward_reduced(partition_->mesh(), m, *survey_, std::move(basis));
  }
  return *cache_;
}

Matrix AdaptiveBasisForwardModel::predict(const Vector& m) {
  bool rebuilt = false;
  return state_at(m, rebuilt).data;
}

Linearization AdaptiveBasisForwardModel::linearize(const Vector& m) {
  bool rebuilt = false;
  const ReducedState& st = state_at(m, rebuilt);
  Linearization lin;
  lin.data = st.data;
  lin.jacobian = sensitivity_adaptive(partition_->mesh(), st, *survey_, *pool_);
  lin.basis_rebuilt = true;
  lin.reduced_shifted = st.reduced->shifted();
  return lin;
}

}  // namespace msfv
