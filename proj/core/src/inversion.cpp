#include "msfv/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "msfv/diffusion.hpp"
#include "msfv/solvers.hpp"

namespace msfv {

MisfitValue misfit_ssd(const Matrix& predicted, const Matrix& observed) {
  if (predicted.rows() != observed.rows() || predicted.cols() != observed.cols()) {
    throw std::invalid_argument("misfit: shape mismatch");
  }
  MisfitValue out;
  out.residual = predicted - observed;
  out.value = 0.5 * out.residual.squaredNorm();
  return out;
}

TikhonovRegularizer::TikhonovRegularizer(const TensorMesh& mesh, Vector m_ref, double alpha)
    : l_(assemble_cell_gradient(mesh)), m_ref_(std::move(m_ref)), alpha_(alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("regularizer: alpha must be non-negative");
  if (m_ref_.size() != mesh.num_cells()) {
    throw std::invalid_argument("regularizer: reference model length mismatch");
  }
}

double TikhonovRegularizer::value(const Vector& m) const {
  return 0.5 * alpha_ * (l_ * (m - m_ref_)).squaredNorm();
}

Vector TikhonovRegularizer::gradient(const Vector& m) const { return hessian_apply(m - m_ref_); }

Vector TikhonovRegularizer::hessian_apply(const Vector& dm) const {
  return alpha_ * (l_.transpose() * (l_ * dm));
}

RegularizationValue tikhonov_reg(const Vector& m, const Vector& m_ref, double alpha,
                                 const TensorMesh& mesh) {
  const TikhonovRegularizer reg(mesh, m_ref, alpha);
  return {reg.value(m), reg.gradient(m)};
}

BoundProjection project_bounds(const Vector& m, const Vector& lower, const Vector& upper,
                               const Vector& gradient) {
  if (lower.size() != m.size() || upper.size() != m.size()) {
    throw std::invalid_argument("project_bounds: bound length mismatch");
  }
  if (gradient.size() != 0 && gradient.size() != m.size()) {
    throw std::invalid_argument("project_bounds: gradient length mismatch");
  }
  if ((lower.array() > upper.array()).any()) {
    throw std::invalid_argument("project_bounds: lower bound exceeds upper bound");
  }
  BoundProjection out;
  out.model = m.cwiseMax(lower).cwiseMin(upper);
  for (Index i = 0; i < m.size(); ++i) {
    const bool at_lo = out.model[i] <= lower[i];
    const bool at_hi = out.model[i] >= upper[i];
    if (gradient.size() == 0) {
      if (at_lo || at_hi) out.active.push_back(i);
    } else if ((at_lo && gradient[i] > 0.0) || (at_hi && gradient[i] < 0.0)) {
      out.active.push_back(i);
    }
  }
  return out;
}

Matrix add_noise(const Matrix& clean, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw std::invalid_argument("add_noise: level must be non-negative");
  if (level == 0.0 || clean.size() == 0) return clean;
  const double sd = level * clean.norm() / std::sqrt(static_cast<double>(clean.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  Matrix out = clean;
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) out(i, j) += normal(rng);
  }
  return out;
}

Objective::Objective(ForwardModel& forward, Matrix observed, TikhonovRegularizer reg)
    : forward_(&forward), observed_(std::move(observed)), reg_(std::move(reg)) {}

Objective::Evaluation Objective::evaluate(const Vector& m) {
  Evaluation e;
  e.phi = misfit_ssd(forward_->predict(m), observed_).value;
  e.reg = reg_.value(m);
  return e;
}

Vector Objective::gradient(const Vector& m) {
  const Linearization lin = forward_->linearize(m);
  const MisfitValue mis = misfit_ssd(lin.data, observed_);
  return lin.jacobian->apply_transpose(mis.residual) + reg_.gradient(m);
}

void GNConfig::validate(Index num_params) const {
  if (max_iterations < 1 || max_cg_iterations < 1 || max_backtracks < 0) {
    throw std::invalid_argument("gauss-newton: iteration counts must be positive");
  }
  if (!(armijo > 0.0 && armijo <= 0.5)) {
    throw std::invalid_argument("gauss-newton: Armijo constant must lie in (0, 0.5]");
  }
  if (!(backtrack > 0.0 && backtrack < 1.0)) {
    throw std::invalid_argument("gauss-newton: backtrack factor must lie in (0, 1)");
  }
  if (!(cg_tolerance > 0.0)) throw std::invalid_argument("gauss-newton: cg tolerance must be positive");
  if (lower.size() != num_params || upper.size() != num_params) {
    throw std::invalid_argument("gauss-newton: bound length mismatch");
  }
  if ((lower.array() > upper.array()).any()) {
    throw std::invalid_argument("gauss-newton: lower bound exceeds upper bound");
  }
}

namespace {

double projected_gradient_norm(const Vector& m, const Vector& g, const GNConfig& cfg) {
  return (m - (m - g).cwiseMax(cfg.lower).cwiseMin(cfg.upper)).norm();
}

}  // namespace

InversionTrace projected_gauss_newton(const Vector& m0, Objective& objective,
                                      const GNConfig& config) {
  ForwardModel& fwd = objective.forward();
  const TikhonovRegularizer& reg = objective.regularizer();
  const Index n = fwd.num_params();
  if (m0.size() != n) throw std::invalid_argument("gauss-newton: model length mismatch");
  config.validate(n);

  InversionTrace trace;
  Vector m = project_bounds(m0, config.lower, config.upper).model;

  Linearization lin = fwd.linearize(m);
  MisfitValue mis = misfit_ssd(lin.data, objective.observed());
  double phi = mis.value;
  double r = reg.value(m);
  Vector g = lin.jacobian->apply_transpose(mis.residual) + reg.gradient(m);
  double pg = projected_gradient_norm(m, g, config);
  const double pg0 = pg;
  BoundProjection bp = project_bounds(m, config.lower, config.upper, g);

  trace.rows.push_back({0, phi, r, phi + r, pg, 0.0, 0, static_cast<Index>(bp.active.size()),
                        lin.basis_rebuilt, lin.reduced_shifted});
  if (config.keep_models) trace.models.push_back(m);

  trace.stop_reason = "max_iterations";
  for (int it = 1; it <= config.max_iterations; ++it) {
    if (pg == 0.0 || pg < config.gradient_tolerance * pg0) {
      trace.stop_reason = "gradient_tolerance";
      break;
    }
    Vector free = Vector::Ones(n);
    for (Index i : bp.active) free[i] = 0.0;

    const SensitivityOp& jac = *lin.jacobian;
    const BlockOperator hess = [&](const Matrix& p) -> Matrix {
      Matrix out(p.rows(), p.cols());
      for (Index c = 0; c < p.cols(); ++c) {
        const Vector pc = free.cwiseProduct(p.col(c));
        const Vector hp = jac.apply_transpose(jac.apply(pc)) + reg.hessian_apply(pc);
        out.col(c) = free.cwiseProduct(hp);
      }
      return out;
    };
    const Matrix rhs = -free.cwiseProduct(g);
    IterativeResult cg;
    try {
      cg = block_cg(hess, rhs, config.cg_tolerance, config.max_cg_iterations);
    } catch (const SolverBreakdown& e) {
      cg = e.result();
    }
    Vector dm = free.cwiseProduct(cg.solution.col(0));

    const double f0 = phi + r;
    double step = 1.0;
    bool accepted = false;
    Vector m_trial;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      m_trial = project_bounds(m + step * dm, config.lower, config.upper).model;
      const double decrease = g.dot(m_trial - m);
      const double f = objective.evaluate(m_trial).total();
      if (std::isfinite(f) && f <= f0 + config.armijo * decrease && f <= f0) {
        accepted = true;
        break;
      }
      step *= config.backtrack;
    }
    if (!accepted) {
      trace.line_search_failed = true;
      trace.stop_reason = "line_search";
      break;
    }

    m = std::move(m_trial);
    lin = fwd.linearize(m);
    mis = misfit_ssd(lin.data, objective.observed());
    phi = mis.value;
    r = reg.value(m);
    g = lin.jacobian->apply_transpose(mis.residual) + reg.gradient(m);
    pg = projected_gradient_norm(m, g, config);
    bp = project_bounds(m, config.lower, config.upper, g);
    trace.rows.push_back({it, phi, r, phi + r, pg, step, cg.iterations,
                          static_cast<Index>(bp.active.size()), lin.basis_rebuilt,
                          lin.reduced_shifted});
    if (config.keep_models) trace.models.push_back(m);
  }
  trace.final_model = m;
  return trace;
}

}  // namespace msfv
