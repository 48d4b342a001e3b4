#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msfv/mesh.hpp"
#include "msfv/reduced.hpp"
#include "msfv/types.hpp"

namespace msfv {

struct MisfitValue {
  double value = 0.0;
  Matrix residual;  // D_pred - D_obs
};

/// Half the squared Frobenius norm of D_pred - D_obs.
MisfitValue misfit_ssd(const Matrix& predicted, const Matrix& observed);

/// R(m) = alpha/2 ||L (m - m_ref)||^2 with L the cell-face difference operator.
class TikhonovRegularizer {
 public:
  TikhonovRegularizer(const TensorMesh& mesh, Vector m_ref, double alpha);

  double value(const Vector& m) const;
  Vector gradient(const Vector& m) const;
  /// alpha L'L dm.
  Vector hessian_apply(const Vector& dm) const;
  double alpha() const { return alpha_; }
  const Vector& reference() const { return m_ref_; }

 private:
  SparseMatrix l_;
  Vector m_ref_;
  double alpha_;
};

struct RegularizationValue {
  double value = 0.0;
  Vector gradient;
};

RegularizationValue tikhonov_reg(const Vector& m, const Vector& m_ref, double alpha,
                                 const TensorMesh& mesh);

struct BoundProjection {
  Vector model;
  /// Indices held at a bound. With a gradient supplied, only those where the
  /// descent direction -g points out of the box.
  std::vector<Index> active;
};

/// Clamps m into [lower, upper]. Pass an empty gradient to mark every index
/// that ends up on a bound.
BoundProjection project_bounds(const Vector& m, const Vector& lower, const Vector& upper,
                               const Vector& gradient = Vector());

/// D + e with e ~ N(0, s^2) i.i.d., s = level ||D||_F / sqrt(size(D)).
Matrix add_noise(const Matrix& clean, double level, std::uint64_t seed);

/// Misfit plus regularization for one forward model.
class Objective {
 public:
  Objective(ForwardModel& forward, Matrix observed, TikhonovRegularizer reg);

  struct Evaluation {
    double phi = 0.0;
    double reg = 0.0;
    double total() const { return phi + reg; }
  };

  Evaluation evaluate(const Vector& m);
  /// Gradient J'(D_pred - D_obs) + alpha L'L (m - m_ref).
  Vector gradient(const Vector& m);

  ForwardModel& forward() { return *forward_; }
  const Matrix& observed() const { return observed_; }
  const TikhonovRegularizer& regularizer() const { return reg_; }

 private:
  ForwardModel* forward_;
  Matrix observed_;
  TikhonovRegularizer reg_;
};

struct GNConfig {
  int max_iterations = 10;
  int max_cg_iterations = 15;
  double cg_tolerance = 1e-3;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 10;
  /// Stop once the projected-gradient norm falls below this fraction of the
  /// initial one.
  double gradient_tolerance = 1e-10;
  Vector lower;
  Vector upper;
  bool keep_models = false;

  void validate(Index num_params) const;
};

struct TraceRow {
  int iter = 0;
  double phi = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double pgnorm = 0.0;
  double step = 0.0;
  int cg_iters = 0;
  Index active = 0;
  bool rebuilt = false;
  bool shifted = false;
};

struct InversionTrace {
  std::vector<TraceRow> rows;
  std::vector<Vector> models;  // filled when GNConfig::keep_models
  Vector final_model;
  bool line_search_failed = false;
  std::string stop_reason;
};

/// Projected Gauss-Newton with CG on the free variables and a projected
/// Armijo backtracking line search.
InversionTrace projected_gauss_newton(const Vector& m0, Objective& objective,
                                      const GNConfig& config);

}  // namespace msfv
