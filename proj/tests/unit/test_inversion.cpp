#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "msfv/diffusion.hpp"
#include "msfv/experiment.hpp"
#include "msfv/inversion.hpp"
#include "test_support.hpp"

using namespace msfv;
using msfv::testing::random_matrix;
using msfv::testing::random_vector;

namespace {

// Linear map m -> reshape(B m) with a fixed matrix B.
class LinearForward : public ForwardModel {
 public:
  LinearForward(Matrix b, Index rows, Index cols) : b_(std::move(b)), rows_(rows), cols_(cols) {}
  Index num_params() const override { return b_.cols(); }
  Matrix predict(const Vector& m) override {
    return Eigen::Map<const Matrix>(Vector(b_ * m).data(), rows_, cols_);
  }
  Linearization linearize(const Vector& m) override {
    Linearization lin;
    lin.data = predict(m);
    lin.jacobian = std::make_shared<Jac>(b_, rows_, cols_);
    return lin;
  }

 private:
  struct Jac : SensitivityOp {
    Jac(const Matrix& b, Index r, Index c) : b(b), r(r), c(c) {}
    Matrix apply(const Vector& dm) const override {
      return Eigen::Map<const Matrix>(Vector(b * dm).data(), r, c);
    }
    Vector apply_transpose(const Matrix& w) const override {
      return b.transpose() * Eigen::Map<const Vector>(w.data(), w.size());
    }
    Index num_params() const override { return b.cols(); }
    Matrix b;
    Index r, c;
  };
  Matrix b_;
  Index rows_, cols_;
};

GNConfig wide_bounds(Index n) {
  GNConfig c;
  c.lower = Vector::Constant(n, -50.0);
  c.upper = Vector::Constant(n, 50.0);
  return c;
}

}  // namespace

TEST(Misfit, Values) {
  const Matrix d = random_matrix(3, 4, 1);
  EXPECT_EQ(misfit_ssd(d, d).value, 0.0);
  EXPECT_DOUBLE_EQ(misfit_ssd(Matrix::Ones(2, 3), Matrix::Zero(2, 3)).value, 3.0);
  const Matrix r = random_matrix(3, 4, 2);
  EXPECT_NEAR(misfit_ssd(2.5 * r, Matrix::Zero(3, 4)).value, 6.25 * misfit_ssd(r, Matrix::Zero(3, 4)).value, 1e-12);
  EXPECT_THROW(misfit_ssd(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST(Tikhonov, ZeroAtReferenceAndConstants) {
  const TensorMesh mesh(3, 3, 2, 1, 1, 1);
  const Vector mref = random_vector(mesh.num_cells(), 1);
  const RegularizationValue at = tikhonov_reg(mref, mref, 0.3, mesh);
  EXPECT_EQ(at.value, 0.0);
  EXPECT_EQ(at.gradient.norm(), 0.0);
  const RegularizationValue shift = tikhonov_reg(Vector(mref.array() + 2.0), mref, 0.3, mesh);
  EXPECT_NEAR(shift.value, 0.0, 1e-24);
  EXPECT_THROW(tikhonov_reg(mref, mref, -1.0, mesh), std::invalid_argument);
}

TEST(Tikhonov, GradientMatchesFiniteDifference) {
  const TensorMesh mesh(3, 2, 2, 1.0, 0.5, 2.0);
  const TikhonovRegularizer reg(mesh, random_vector(mesh.num_cells(), 2), 0.7);
  const Vector m = random_vector(mesh.num_cells(), 3);
  const Vector d = random_vector(mesh.num_cells(), 4);
  const double h = 1e-6;
  const double fd = (reg.value(m + h * d) - reg.value(m - h * d)) / (2 * h);
  EXPECT_NEAR(fd, reg.gradient(m).dot(d), 1e-7 * std::abs(fd));
}

TEST(ProjectBounds, Cases) {
  const Vector lo = Vector::Constant(5, -1.0), hi = Vector::Constant(5, 1.0);
  const Vector inside = Vector::LinSpaced(5, -0.5, 0.5);
  const BoundProjection a = project_bounds(inside, lo, hi);
  EXPECT_EQ(a.model, inside);
  EXPECT_TRUE(a.active.empty());
  const BoundProjection b = project_bounds(Vector::Constant(5, 3.0), lo, hi);
  EXPECT_EQ(b.model, hi);

  Vector m(5), g(5);
  m << -2.0, -1.0, 0.3, 1.0, 4.0;
  g << 1.0, -1.0, 5.0, 1.0, -2.0;
  const BoundProjection c = project_bounds(m, lo, hi, g);
  Vector expect(5);
  expect << -1.0, -1.0, 0.3, 1.0, 1.0;
  EXPECT_EQ(c.model, expect);
  // Index 0: at lower, g > 0 (descent pushes down) -> active.
  // Index 1: at lower, g < 0 -> free. Index 3: at upper, g > 0 -> free.
  // Index 4: at upper, g < 0 -> active.
  EXPECT_EQ(c.active, (std::vector<Index>{0, 4}));
  EXPECT_EQ(project_bounds(m, lo, hi).active, (std::vector<Index>{0, 1, 3, 4}));
  EXPECT_THROW(project_bounds(m, hi, lo), std::invalid_argument);
}

TEST(AddNoise, LevelsAndDeterminism) {
  const Matrix d = random_matrix(40, 9, 5, 1.0, 2.0);
  EXPECT_EQ(add_noise(d, 0.0, 1), d);
  const Matrix n1 = add_noise(d, 0.01, 7);
  const double ratio = (n1 - d).norm() / d.norm();
  EXPECT_GE(ratio, 0.005);
  EXPECT_LE(ratio, 0.02);
  EXPECT_TRUE((add_noise(d, 0.01, 7).array() == n1.array()).all());
  EXPECT_FALSE((add_noise(d, 0.01, 8).array() == n1.array()).all());
  EXPECT_THROW(add_noise(d, -0.1, 1), std::invalid_argument);
}

TEST(GaussNewton, QuadraticConvergesInOneStep) {
  const TensorMesh mesh(3, 3, 2, 1, 1, 1);
  const Index n = mesh.num_cells();
  const Matrix b = random_matrix(12, n, 11);
  const Vector mtrue = random_vector(n, 12);
  const Matrix d = Eigen::Map<const Matrix>(Vector(b * mtrue).data(), 4, 3);
  const double alpha = 0.05;
  const Vector mref = Vector::Zero(n);
  LinearForward fwd(b, 4, 3);
  Objective obj(fwd, d, TikhonovRegularizer(mesh, mref, alpha));
  GNConfig cfg = wide_bounds(n);
  cfg.max_cg_iterations = 200;
  cfg.cg_tolerance = 1e-14;
  cfg.max_iterations = 3;
  cfg.keep_models = true;
  const InversionTrace tr = projected_gauss_newton(mref, obj, cfg);

  const SparseMatrix l = assemble_cell_gradient(mesh);
  const Matrix h = b.transpose() * b + alpha * Matrix(SparseMatrix(l.transpose()) * l);
  const Vector rhs = b.transpose() * Eigen::Map<const Vector>(d.data(), d.size());
  const Vector oracle = h.ldlt().solve(rhs);
  ASSERT_GE(tr.models.size(), 2u);
  EXPECT_LE((tr.models[1] - oracle).norm(), 1e-8 * oracle.norm());
  EXPECT_DOUBLE_EQ(tr.rows[1].step, 1.0);
  EXPECT_FALSE(tr.line_search_failed);
}

TEST(GaussNewton, RespectsBoundsAndDecreases) {
  const TensorMesh mesh(3, 3, 2, 1, 1, 1);
  const Index n = mesh.num_cells();
  const Matrix b = random_matrix(12, n, 21);
  const Vector mtrue = 3.0 * random_vector(n, 22);
  LinearForward fwd(b, 6, 2);
  Objective obj(fwd, Eigen::Map<const Matrix>(Vector(b * mtrue).data(), 6, 2),
                TikhonovRegularizer(mesh, Vector::Zero(n), 1e-3));
  GNConfig cfg;
  cfg.lower = Vector::Constant(n, -1.0);
  cfg.upper = Vector::Constant(n, 1.0);
  cfg.keep_models = true;
  const InversionTrace tr = projected_gauss_newton(Vector::Zero(n), obj, cfg);
  for (const Vector& m : tr.models) {
    EXPECT_GE(m.minCoeff(), -1.0);
    EXPECT_LE(m.maxCoeff(), 1.0);
  }
  for (std::size_t i = 1; i < tr.rows.size(); ++i) EXPECT_LE(tr.rows[i].total, tr.rows[i - 1].total);
  EXPECT_GT(tr.rows.back().active, 0);
  EXPECT_EQ(static_cast<Index>(tr.rows.size()), tr.rows.back().iter + 1);
}

TEST(GaussNewton, ConfigValidation) {
  GNConfig c = wide_bounds(4);
  EXPECT_NO_THROW(c.validate(4));
  EXPECT_THROW(c.validate(5), std::invalid_argument);
  c.armijo = 0.7;
  EXPECT_THROW(c.validate(4), std::invalid_argument);
  c = wide_bounds(4);
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(4), std::invalid_argument);
}

class ObjectiveGradient : public ::testing::TestWithParam<InversionMode> {};

TEST_P(ObjectiveGradient, MatchesCentralDifference) {
  const TensorMesh mesh(4, 4, 4, 1, 1, 1);
  auto partition = std::make_shared<const CoarsePartition>(mesh, 2, 2, 2);
  SurveyLayout layout;
  layout.sources_x = 2;
  layout.sources_y = 1;
  auto survey = std::make_shared<Survey>(make_surface_survey(mesh, layout));
  const Vector mref = Vector::Constant(mesh.num_cells(), std::log(0.01));
  const Vector m = mref + random_vector(mesh.num_cells(), 61, -0.5, 0.5);
  survey->observed = forward_full(mesh, mref + random_vector(mesh.num_cells(), 62, -1, 1), *survey).data;

  BasisSpec spec;
  spec.skeleton = true;
  spec.local_pca = true;
  spec.reference_model = mref;
  auto bcs = std::make_shared<const BoundaryConditionSet>(
      build_boundary_conditions(spec, *partition, survey->sources));
  std::unique_ptr<ForwardModel> fwd;
  switch (GetParam()) {
    case InversionMode::Full:
      fwd = std::make_unique<FullForwardModel>(mesh, survey, SolverOptions{});
      break;
    case InversionMode::MsFixed:
      fwd = std::make_unique<FixedBasisForwardModel>(
          mesh, survey, std::make_shared<const MultiscaleBasis>(MultiscaleBasis::assemble(bcs, partition, mref)));
      break;
    case InversionMode::MsAdaptive:
      fwd = std::make_unique<AdaptiveBasisForwardModel>(partition, survey, bcs);
      break;
  }
  Objective obj(*fwd, survey->observed, TikhonovRegularizer(mesh, mref, 1e-2));
  const Vector g = obj.gradient(m);
  const Vector d = random_vector(mesh.num_cells(), 63);
  const double h = 1e-5;
  const double fd = (obj.evaluate(m + h * d).total() - obj.evaluate(m - h * d).total()) / (2 * h);
  EXPECT_NEAR(fd, g.dot(d), 1e-5 * std::abs(fd));
}

INSTANTIATE_TEST_SUITE_P(Modes, ObjectiveGradient,
                         ::testing::Values(InversionMode::Full, InversionMode::MsFixed,
                                           InversionMode::MsAdaptive));

TEST(GaussNewton, ModesAgreeWithIdentityBasis) {
  ExperimentConfig cfg;
  cfg.cells = {3, 3, 2};
  cfg.block = {1, 1, 1};
  cfg.blocks = {ModelBlock{{1, 1, 0}, {2, 2, 1}, 0.1}};
  cfg.basis_skeleton = false;
  cfg.basis_local_pca = false;
  cfg.survey.sources_x = 1;
  cfg.survey.sources_y = 1;
  cfg.survey.dipole_length = 2;
  cfg.gn_iterations = 4;
  // Tight inner solves: truncated CG on an ill-conditioned Hessian amplifies
  // roundoff differences between the three Jacobian paths.
  cfg.alpha = 1e-1;
  cfg.cg_iterations = 300;
  cfg.cg_tolerance = 1e-12;
  ExperimentSetup setup = make_setup(cfg);
  simulate_data(setup);
  WorkerPool& pool = WorkerPool::serial();
  const ModeRun full = run_mode(setup, InversionMode::Full, SolverOptions{}, pool);
  const ModeRun fixed = run_mode(setup, InversionMode::MsFixed, SolverOptions{}, pool);
  const ModeRun adaptive = run_mode(setup, InversionMode::MsAdaptive, SolverOptions{}, pool);
  ASSERT_EQ(full.trace.rows.size(), fixed.trace.rows.size());
  ASSERT_EQ(full.trace.rows.size(), adaptive.trace.rows.size());
  const double scale = full.trace.final_model.norm();
  EXPECT_LE((fixed.trace.final_model - full.trace.final_model).norm(), 1e-10 * scale);
  EXPECT_LE((adaptive.trace.final_model - full.trace.final_model).norm(), 1e-10 * scale);
}
