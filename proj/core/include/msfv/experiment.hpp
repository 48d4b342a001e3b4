#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msfv/basis.hpp"
#include "msfv/inversion.hpp"
#include "msfv/mesh.hpp"
#include "msfv/reduced.hpp"
#include "msfv/solvers.hpp"

namespace msfv {

enum class InversionMode { Full, MsFixed, MsAdaptive };

std::string_view to_string(InversionMode mode);
/// Accepts full, ms-fixed, ms-adaptive.
InversionMode parse_mode(std::string_view text);
SolverKind parse_solver(std::string_view text);

/// Axis-aligned box of cells [lo, hi) with a constant conductivity.
struct ModelBlock {
  std::array<Index, 3> lo{};
  std::array<Index, 3> hi{};
  double sigma = 1.0;
};

/// m = ln(sigma) with `background` everywhere except the blocks (later
/// blocks overwrite earlier ones).
Vector generate_block_model(const TensorMesh& mesh, const std::vector<ModelBlock>& blocks,
                            double background);

/// Layered background whose conductivity grows log-linearly from `top` at the
/// surface to `bottom` at depth, with an ellipsoidal body of conductivity
/// `body` in the upper middle of the domain.
Vector generate_salt_model(const TensorMesh& mesh, double top, double bottom, double body);

/// Dipole sources on a regular grid of the top surface, point receivers on
/// every `receiver_stride`-th top node.
struct SurveyLayout {
  Index sources_x = 3;
  Index sources_y = 3;
  Index dipole_length = 2;  // in nodes along x
  Index receiver_stride = 1;
};

Survey make_surface_survey(const TensorMesh& mesh, const SurveyLayout& layout);

struct ExperimentConfig {
  std::array<Index, 3> cells{24, 24, 8};
  std::array<double, 3> widths{1.0, 1.0, 1.0};
  std::array<Index, 3> block{4, 4, 4};

  std::string model = "block";
  double background = 0.01;
  std::vector<ModelBlock> blocks;
  double salt_top = 0.005;
  double salt_bottom = 0.05;
  double salt_body = 0.001;

  bool basis_lagrange = true;
  bool basis_source = false;
  bool basis_skeleton = true;
  bool basis_local_pca = true;
  Index pca_rank = 2;
  Index pca_total = 0;

  SurveyLayout survey;
  double noise = 0.01;
  std::uint64_t seed = 1;
  double alpha = 1e-8;
  double sigma_min = 1e-4;
  double sigma_max = 1.0;

  int gn_iterations = 10;
  int cg_iterations = 15;
  double cg_tolerance = 1e-3;

  InversionMode mode = InversionMode::MsAdaptive;
  SolverOptions solver;
  bool baseline = true;
  int workers = 1;
  std::vector<int> bench_workers{1, 2, 4};
  std::string output = "out";

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  BasisSpec basis_spec() const;
  /// Canonical key = value lines, in a fixed order.
  std::string echo() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, malformed
/// values and duplicate scalar keys throw std::invalid_argument.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// ||m_est - m_base|| / ||m_base||.
double compute_relative_error(const Vector& m_est, const Vector& m_base);

/// Everything a run needs, built once from a config.
struct ExperimentSetup {
  ExperimentConfig config;
  TensorMesh mesh;
  std::shared_ptr<const CoarsePartition> partition;
  Vector true_model;
  Vector reference_model;
  std::shared_ptr<Survey> survey;  // observed data filled by simulate_data
  Matrix clean_data;
};

ExperimentSetup make_setup(const ExperimentConfig& config);
/// Fine direct solve on the true model plus noise.
void simulate_data(ExperimentSetup& setup);

struct ModeRun {
  InversionMode mode = InversionMode::Full;
  InversionTrace trace;
  Index basis_size = 0;  // 0 for full mode
  double seconds = 0.0;
  double relative_error = 0.0;  // NaN without a baseline
};

/// Inverts the observed data of `setup` in one mode. `solver` applies to full
/// mode only.
ModeRun run_mode(const ExperimentSetup& setup, InversionMode mode, const SolverOptions& solver,
                 WorkerPool& pool);

struct ExperimentResult {
  std::optional<ModeRun> baseline;  // full mode, direct solver
  ModeRun run;
};

/// Simulates data, runs the configured mode and, if requested, the full
/// direct baseline; writes metrics.txt, timings.txt, trace CSV and VTK files
/// into config.output.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes predicted data of the true model in the configured mode.
void run_forward(const ExperimentConfig& config);

void export_model_vtk(const Vector& m, const TensorMesh& mesh, const std::filesystem::path& path);
void export_trace_csv(const InversionTrace& trace, const std::filesystem::path& path);

struct ScalingRow {
  int workers = 1;
  double assemble_seconds = 0.0;
  double y_seconds = 0.0;
  double x_seconds = 0.0;
  double assemble_speedup = 1.0;
  double y_speedup = 1.0;
  double x_speedup = 1.0;
  bool identical = true;  // outputs bitwise equal to the serial run
};

/// Median-of-`repeats` wall times for assembling S_k and applying Y_k and X_k
/// (including their construction) at each worker count.
std::vector<ScalingRow> scaling_benchmark(const ExperimentConfig& config,
                                          const std::vector<int>& workers, int repeats = 3);

void write_scaling_table(const std::vector<ScalingRow>& rows, std::ostream& out);

/// Build identification for provenance lines.
std::string build_provenance();

}  // namespace msfv
