#include "msfv/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "msfv/diffusion.hpp"

namespace msfv {

std::string_view to_string(InversionMode mode) {
  switch (mode) {
    case InversionMode::Full:
      return "full";
    case InversionMode::MsFixed:
      return "ms-fixed";
    case InversionMode::MsAdaptive:
      return "ms-adaptive";
  }
  return "unknown";
}

InversionMode parse_mode(std::string_view text) {
  if (text == "full") return InversionMode::Full;
  if (text == "ms-fixed") return InversionMode::MsFixed;
  if (text == "ms-adaptive") return InversionMode::MsAdaptive;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

SolverKind parse_solver(std::string_view text) {
  if (text == "direct") return SolverKind::Direct;
  if (text == "blockcg") return SolverKind::BlockCG;
  throw std::invalid_argument("unknown solver '" + std::string(text) + "'");
}

namespace {

std::string_view solver_name(SolverKind k) { return k == SolverKind::Direct ? "direct" : "blockcg"; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw std::invalid_argument("config: bad value '" + text + "' for key '" + key + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("config: bad boolean '" + text + "' for key '" + key + "'");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<ModelBlock> default_blocks(const std::array<Index, 3>& n) {
  const std::array<Index, 3> ylo{0, n[1] / 3, n[2] / 4};
  const std::array<Index, 3> yhi{0, (2 * n[1]) / 3, (3 * n[2]) / 4};
  ModelBlock a;
  a.lo = {n[0] / 6, ylo[1], ylo[2]};
  a.hi = {(5 * n[0]) / 12, yhi[1], yhi[2]};
  a.sigma = 0.1;
  ModelBlock b = a;
  b.lo[0] = (7 * n[0]) / 12;
  b.hi[0] = (5 * n[0]) / 6;
  return {a, b};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Vector generate_block_model(const TensorMesh& mesh, const std::vector<ModelBlock>& blocks,
                            double background) {
  if (!(background > 0.0)) throw std::invalid_argument("block model: background must be positive");
  Vector m = Vector::Constant(mesh.num_cells(), std::log(background));
  for (const ModelBlock& b : blocks) {
    if (!(b.sigma > 0.0)) throw std::invalid_argument("block model: sigma must be positive");
    for (int d = 0; d < 3; ++d) {
      if (b.lo[d] < 0 || b.hi[d] > mesh.cells(d) || b.lo[d] >= b.hi[d]) {
        throw std::invalid_argument("block model: extent outside the mesh or empty");
      }
    }
    const double v = std::log(b.sigma);
    for (Index k = b.lo[2]; k < b.hi[2]; ++k) {
      for (Index j = b.lo[1]; j < b.hi[1]; ++j) {
        for (Index i = b.lo[0]; i < b.hi[0]; ++i) m[mesh.cell_index({i, j, k})] = v;
      }
    }
  }
  return m;
}

Vector generate_salt_model(const TensorMesh& mesh, double top, double bottom, double body) {
  if (!(top > 0.0 && bottom > 0.0 && body > 0.0)) {
    throw std::invalid_argument("salt model: conductivities must be positive");
  }
  const Index n1 = mesh.cells(0), n2 = mesh.cells(1), n3 = mesh.cells(2);
  Vector m(mesh.num_cells());
  const double lt = std::log(top), lb = std::log(bottom), lbody = std::log(body);
  // Body centre sits two thirds of the way up, semi-axes a quarter of the domain.
  const double cx = 0.5 * n1, cy = 0.5 * n2, cz = (2.0 / 3.0) * n3;
  const double ax = 0.25 * n1, ay = 0.2 * n2, az = 0.2 * n3;
  for (Index k = 0; k < n3; ++k) {
    const double depth = 1.0 - (k + 0.5) / static_cast<double>(n3);
    const double layered = lt + (lb - lt) * depth;
    for (Index j = 0; j < n2; ++j) {
      for (Index i = 0; i < n1; ++i) {
        const double dx = (i + 0.5 - cx) / ax, dy = (j + 0.5 - cy) / ay, dz = (k + 0.5 - cz) / az;
        const bool inside = dx * dx + dy * dy + dz * dz <= 1.0;
        m[mesh.cell_index({i, j, k})] = inside ? lbody : layered;
      }
    }
  }
  return m;
}

Survey make_surface_survey(const TensorMesh& mesh, const SurveyLayout& layout) {
  const Index n1 = mesh.cells(0), n2 = mesh.cells(1), top = mesh.cells(2);
  if (layout.sources_x < 1 || layout.sources_y < 1 || layout.receiver_stride < 1 ||
      layout.dipole_length < 1 || layout.dipole_length > n1) {
    throw std::invalid_argument("survey layout: invalid counts");
  }
  const Index nfree = mesh.num_nodes() - 1;
  std::vector<Triplet> q;
  Index col = 0;
  for (Index b = 0; b < layout.sources_y; ++b) {
    const Index y = ((b + 1) * n2) / (layout.sources_y + 1);
    for (Index a = 0; a < layout.sources_x; ++a) {
      Index x = ((a + 1) * n1) / (layout.sources_x + 1) - layout.dipole_length / 2;
      x = std::clamp<Index>(x, 0, n1 - layout.dipole_length);
      q.emplace_back(mesh.node_index({x, y, top}) - 1, col, 1.0);
      q.emplace_back(mesh.node_index({x + layout.dipole_length, y, top}) - 1, col, -1.0);
      ++col;
    }
  }
  std::vector<Triplet> p;
  Index r = 0;
  for (Index j = 0; j <= n2; j += layout.receiver_stride) {
    for (Index i = 0; i <= n1; i += layout.receiver_stride) {
      p.emplace_back(mesh.node_index({i, j, top}) - 1, r++, 1.0);
    }
  }
  Survey s;
  s.sources.resize(nfree, col);
  s.sources.setFromTriplets(q.begin(), q.end());
  s.receivers.resize(nfree, r);
  s.receivers.setFromTriplets(p.begin(), p.end());
  return s;
}

void ExperimentConfig::validate() const {
  for (int d = 0; d < 3; ++d) {
    if (cells[d] < 1 || !(widths[d] > 0.0) || block[d] < 1 || cells[d] % block[d] != 0) {
      throw std::invalid_argument("config: mesh sizes must be positive and divisible by the block");
    }
  }
  if (model != "block" && model != "salt") throw std::invalid_argument("config: model must be block or salt");
  if (!(background > 0.0)) throw std::invalid_argument("config: background must be positive");
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
    throw std::invalid_argument("config: need 0 < sigma_min < sigma_max");
  }
  if (!(noise >= 0.0) || !(alpha >= 0.0)) throw std::invalid_argument("config: negative noise or alpha");
  if (gn_iterations < 1 || cg_iterations < 1 || !(cg_tolerance > 0.0)) {
    throw std::invalid_argument("config: iteration budgets must be positive");
  }
  if (workers < 1) throw std::invalid_argument("config: workers must be at least 1");
  for (int w : bench_workers) {
    if (w < 1) throw std::invalid_argument("config: bench worker counts must be at least 1");
  }
  if (!(solver.tolerance > 0.0) || solver.max_iterations < 1) {
    throw std::invalid_argument("config: bad solver tolerance or iteration count");
  }
  basis_spec().validate();
}

BasisSpec ExperimentConfig::basis_spec() const {
  BasisSpec s;
  s.lagrange = basis_lagrange;
  s.source = basis_source;
  s.skeleton = basis_skeleton;
  s.local_pca = basis_local_pca;
  s.pca_rank = pca_rank;
  s.pca_total = pca_total;
  return s;
}

std::string ExperimentConfig::echo() const {
  std::ostringstream o;
  o << "nx = " << cells[0] << "\nny = " << cells[1] << "\nnz = " << cells[2] << '\n';
  o << "hx = " << fmt(widths[0]) << "\nhy = " << fmt(widths[1]) << "\nhz = " << fmt(widths[2])
    << '\n';
  o << "bx = " << block[0] << "\nby = " << block[1] << "\nbz = " << block[2] << '\n';
  o << "model = " << model << "\nbackground = " << fmt(background) << '\n';
  for (const ModelBlock& b : blocks) {
    o << "block = " << b.lo[0] << ' ' << b.hi[0] << ' ' << b.lo[1] << ' ' << b.hi[1] << ' '
      << b.lo[2] << ' ' << b.hi[2] << ' ' << fmt(b.sigma) << '\n';
  }
  o << "salt_top = " << fmt(salt_top) << "\nsalt_bottom = " << fmt(salt_bottom)
    << "\nsalt_body = " << fmt(salt_body) << '\n';
  o << "basis_lagrange = " << basis_lagrange << "\nbasis_source = " << basis_source
    << "\nbasis_skeleton = " << basis_skeleton << "\nbasis_local_pca = " << basis_local_pca
    << "\npca_rank = " << pca_rank << "\npca_total = " << pca_total << '\n';
  o << "sources_x = " << survey.sources_x << "\nsources_y = " << survey.sources_y
    << "\ndipole_length = " << survey.dipole_length
    << "\nreceiver_stride = " << survey.receiver_stride << '\n';
  o << "noise = " << fmt(noise) << "\nseed = " << seed << "\nalpha = " << fmt(alpha)
    << "\nsigma_min = " << fmt(sigma_min) << "\nsigma_max = " << fmt(sigma_max) << '\n';
  o << "gn_iterations = " << gn_iterations << "\ncg_iterations = " << cg_iterations
    << "\ncg_tolerance = " << fmt(cg_tolerance) << '\n';
  o << "mode = " << to_string(mode) << "\nsolver = " << solver_name(solver.kind)
    << "\nsolver_tolerance = " << fmt(solver.tolerance)
    << "\nsolver_max_iterations = " << solver.max_iterations << '\n';
  o << "baseline = " << baseline << "\nworkers = " << workers << "\nbench_workers =";
  for (std::size_t i = 0; i < bench_workers.size(); ++i) o << (i ? "," : " ") << bench_workers[i];
  o << "\noutput = " << output << '\n';
  return o.str();
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::set<std::string> seen;
  bool explicit_blocks = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has no '='");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string val = trim(std::string_view(t).substr(eq + 1));
    if (key != "block" && !seen.insert(key).second) {
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    }
    auto idx = [&] { return parse_number<Index>(key, val); };
    auto num = [&] { return parse_number<double>(key, val); };
    auto integer = [&] { return parse_number<int>(key, val); };
    auto flag = [&] { return parse_bool(key, val); };

    if (key == "nx") c.cells[0] = idx();
    else if (key == "ny") c.cells[1] = idx();
    else if (key == "nz") c.cells[2] = idx();
    else if (key == "hx") c.widths[0] = num();
    else if (key == "hy") c.widths[1] = num();
    else if (key == "hz") c.widths[2] = num();
    else if (key == "bx") c.block[0] = idx();
    else if (key == "by") c.block[1] = idx();
    else if (key == "bz") c.block[2] = idx();
    else if (key == "model") c.model = val;
    else if (key == "background") c.background = num();
    else if (key == "block") {
      const auto w = split_words(val);
      if (w.size() != 7) throw std::invalid_argument("config: block needs i0 i1 j0 j1 k0 k1 sigma");
      ModelBlock b;
      for (int d = 0; d < 3; ++d) {
        b.lo[d] = parse_number<Index>(key, w[2 * d]);
        b.hi[d] = parse_number<Index>(key, w[2 * d + 1]);
      }
      b.sigma = parse_number<double>(key, w[6]);
      if (!explicit_blocks) c.blocks.clear();
      explicit_blocks = true;
      c.blocks.push_back(b);
    }
    else if (key == "salt_top") c.salt_top = num();
    else if (key == "salt_bottom") c.salt_bottom = num();
    else if (key == "salt_body") c.salt_body = num();
    else if (key == "basis_lagrange") c.basis_lagrange = flag();
    else if (key == "basis_source") c.basis_source = flag();
    else if (key == "basis_skeleton") c.basis_skeleton = flag();
    else if (key == "basis_local_pca") c.basis_local_pca = flag();
    else if (key == "pca_rank") c.pca_rank = idx();
    else if (key == "pca_total") c.pca_total = idx();
    else if (key == "sources_x") c.survey.sources_x = idx();
    else if (key == "sources_y") c.survey.sources_y = idx();
    else if (key == "dipole_length") c.survey.dipole_length = idx();
    else if (key == "receiver_stride") c.survey.receiver_stride = idx();
    else if (key == "noise") c.noise = num();
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, val);
    else if (key == "alpha") c.alpha = num();
    else if (key == "sigma_min") c.sigma_min = num();
    else if (key == "sigma_max") c.sigma_max = num();
    else if (key == "gn_iterations") c.gn_iterations = integer();
    else if (key == "cg_iterations") c.cg_iterations = integer();
    else if (key == "cg_tolerance") c.cg_tolerance = num();
    else if (key == "mode") c.mode = parse_mode(val);
    else if (key == "solver") c.solver.kind = parse_solver(val);
    else if (key == "solver_tolerance") c.solver.tolerance = num();
    else if (key == "solver_max_iterations") c.solver.max_iterations = integer();
    else if (key == "baseline") c.baseline = flag();
    else if (key == "workers") c.workers = integer();
    else if (key == "bench_workers") {
      c.bench_workers.clear();
      std::string list = val;
      std::replace(list.begin(), list.end(), ',', ' ');
      for (const auto& w : split_words(list)) c.bench_workers.push_back(parse_number<int>(key, w));
      if (c.bench_workers.empty()) throw std::invalid_argument("config: empty bench_workers");
    }
    else if (key == "output") c.output = val;
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  return parse_config(in);
}

double compute_relative_error(const Vector& m_est, const Vector& m_base) {
  if (m_est.size() != m_base.size()) throw std::invalid_argument("relative error: length mismatch");
  const double base = m_base.norm();
  if (base == 0.0) throw std::invalid_argument("relative error: zero baseline");
  return (m_est - m_base).norm() / base;
}

ExperimentSetup make_setup(const ExperimentConfig& config) {
  config.validate();
  ExperimentSetup s{config,
                    TensorMesh(config.cells[0], config.cells[1], config.cells[2], config.widths[0],
                               config.widths[1], config.widths[2]),
                    nullptr,
                    {},
                    {},
                    nullptr,
                    {}};
  s.partition = std::make_shared<const CoarsePartition>(s.mesh, config.block[0], config.block[1],
                                                        config.block[2]);
  if (config.model == "salt") {
    s.true_model = generate_salt_model(s.mesh, config.salt_top, config.salt_bottom, config.salt_body);
  } else {
    const auto blocks = config.blocks.empty() ? default_blocks(config.cells) : config.blocks;
    s.true_model = generate_block_model(s.mesh, blocks, config.background);
  }
  s.reference_model = Vector::Constant(s.mesh.num_cells(), std::log(config.background));
  s.survey = std::make_shared<Survey>(make_surface_survey(s.mesh, config.survey));
  s.survey->noise_level = config.noise;
  return s;
}

void simulate_data(ExperimentSetup& setup) {
  const FullState st = forward_full(setup.mesh, setup.true_model, *setup.survey, SolverOptions{});
  setup.clean_data = st.data;
  setup.survey->observed = add_noise(st.data, setup.config.noise, setup.config.seed);
}

namespace {

std::shared_ptr<const BoundaryConditionSet> conditions_for(const ExperimentSetup& setup) {
  BasisSpec spec = setup.config.basis_spec();
  spec.reference_model = setup.reference_model;
  return std::make_shared<const BoundaryConditionSet>(
      build_boundary_conditions(spec, *setup.partition, setup.survey->sources));
}

}  // namespace

ModeRun run_mode(const ExperimentSetup& setup, InversionMode mode, const SolverOptions& solver,
                 WorkerPool& pool) {
  if (setup.survey->observed.size() == 0) throw std::logic_error("run_mode: no observed data");
  const auto t0 = std::chrono::steady_clock::now();
  std::shared_ptr<const Survey> survey = setup.survey;
  std::unique_ptr<ForwardModel> fwd;
  ModeRun run;
  run.mode = mode;
  if (mode == InversionMode::Full) {
    fwd = std::make_unique<FullForwardModel>(setup.mesh, survey, solver);
  } else {
    auto conditions = conditions_for(setup);
    run.basis_size = conditions->size();
    if (mode == InversionMode::MsFixed) {
      auto basis = std::make_shared<const MultiscaleBasis>(
          MultiscaleBasis::assemble(conditions, setup.partition, setup.reference_model, pool));
      fwd = std::make_unique<FixedBasisForwardModel>(setup.mesh, survey, std::move(basis));
    } else {
      fwd = std::make_unique<AdaptiveBasisForwardModel>(setup.partition, survey, conditions, pool);
    }
  }
  Objective objective(*fwd, survey->observed,
                      TikhonovRegularizer(setup.mesh, setup.reference_model, setup.config.alpha));
  GNConfig gn;
  gn.max_iterations = setup.config.gn_iterations;
  gn.max_cg_iterations = setup.config.cg_iterations;
  gn.cg_tolerance = setup.config.cg_tolerance;
  gn.lower = Vector::Constant(setup.mesh.num_cells(), std::log(setup.config.sigma_min));
  gn.upper = Vector::Constant(setup.mesh.num_cells(), std::log(setup.config.sigma_max));
  run.trace = projected_gauss_newton(setup.reference_model, objective, gn);
  run.seconds = seconds_since(t0);
  run.relative_error = std::numeric_limits<double>::quiet_NaN();
  return run;
}

namespace {

void write_run_metrics(std::ostream& o, const std::string& prefix, const ModeRun& r) {
  const TraceRow& last = r.trace.rows.back();
  Index shifted = 0;
  for (const TraceRow& row : r.trace.rows) shifted += row.shifted ? 1 : 0;
  o << prefix << "mode = " << to_string(r.mode) << '\n';
  o << prefix << "basis_size = " << r.basis_size << '\n';
  o << prefix << "iterations = " << last.iter << '\n';
  o << prefix << "stop_reason = " << r.trace.stop_reason << '\n';
  o << prefix << "phi = " << fmt(last.phi) << '\n';
  o << prefix << "reg = " << fmt(last.reg) << '\n';
  o << prefix << "total = " << fmt(last.total) << '\n';
  o << prefix << "pgnorm = " << fmt(last.pgnorm) << '\n';
  o << prefix << "reduced_shift_iterations = " << shifted << '\n';
  o << prefix << "relative_error = " << fmt(r.relative_error) << '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentSetup setup = make_setup(config);
  simulate_data(setup);
  WorkerPool pool(static_cast<std::size_t>(config.workers));
  ExperimentResult result;

  const bool run_is_baseline =
      config.mode == InversionMode::Full && config.solver.kind == SolverKind::Direct;
  if (config.baseline && !run_is_baseline) {
    result.baseline = run_mode(setup, InversionMode::Full, SolverOptions{}, pool);
    result.baseline->relative_error = 0.0;
  }
  result.run = run_mode(setup, config.mode, config.solver, pool);
  if (run_is_baseline) {
    result.run.relative_error = 0.0;
  } else if (result.baseline) {
    result.run.relative_error =
        compute_relative_error(result.run.trace.final_model, result.baseline->trace.final_model);
  }

  const std::filesystem::path dir(config.output);
  std::filesystem::create_directories(dir);
  const std::string tag(to_string(config.mode));
  export_trace_csv(result.run.trace, dir / ("trace_" + tag + ".csv"));
  export_model_vtk(result.run.trace.final_model, setup.mesh, dir / ("model_" + tag + ".vtk"));
  export_model_vtk(setup.true_model, setup.mesh, dir / "model_true.vtk");
  if (result.baseline) {
    export_trace_csv(result.baseline->trace, dir / "trace_baseline.csv");
    export_model_vtk(result.baseline->trace.final_model, setup.mesh, dir / "model_baseline.vtk");
  }

  std::ofstream metrics(dir / "metrics.txt");
  metrics << "# provenance: " << build_provenance() << '\n';
  metrics << "# command: invert\n" << config.echo();
  metrics << "num_cells = " << setup.mesh.num_cells() << '\n';
  metrics << "num_nodes = " << setup.mesh.num_nodes() << '\n';
  metrics << "num_sources = " << setup.survey->num_sources() << '\n';
  metrics << "num_receivers = " << setup.survey->num_receivers() << '\n';
  metrics << "true_model_error = "
          << fmt(compute_relative_error(result.run.trace.final_model, setup.true_model)) << '\n';
  write_run_metrics(metrics, "run.", result.run);
  if (result.baseline) write_run_metrics(metrics, "baseline.", *result.baseline);
  if (!metrics) throw std::runtime_error("cannot write metrics.txt");

  std::ofstream timings(dir / "timings.txt");
  timings << "run.seconds = " << fmt(result.run.seconds) << '\n';
  if (result.baseline) timings << "baseline.seconds = " << fmt(result.baseline->seconds) << '\n';
  return result;
}

void run_forward(const ExperimentConfig& config) {
  ExperimentSetup setup = make_setup(config);
  WorkerPool pool(static_cast<std::size_t>(config.workers));
  const auto t0 = std::chrono::steady_clock::now();
  Matrix data;
  Index k = 0;
  bool shifted = false;
  if (config.mode == InversionMode::Full) {
    data = forward_full(setup.mesh, setup.true_model, *setup.survey, config.solver).data;
  } else {
    auto conditions = conditions_for(setup);
    const Vector& at =
        config.mode == InversionMode::MsFixed ? setup.reference_model : setup.true_model;
    auto basis = std::make_shared<const MultiscaleBasis>(
        MultiscaleBasis::assemble(conditions, setup.partition, at, pool));
    k = basis->size();
    const ReducedState st = forward_reduced(setup.mesh, setup.true_model, *setup.survey, basis);
    data = st.data;
    shifted = st.reduced->shifted();
  }
  const double secs = seconds_since(t0);

  const std::filesystem::path dir(config.output);
  std::filesystem::create_directories(dir);
  std::ofstream d(dir / "data.txt");
  d << std::setprecision(17);
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.cols(); ++j) d << (j ? " " : "") << data(i, j);
    d << '\n';
  }
  export_model_vtk(setup.true_model, setup.mesh, dir / "model_true.vtk");
  std::ofstream metrics(dir / "metrics.txt");
  metrics << "# provenance: " << build_provenance() << '\n';
  metrics << "# command: forward\n" << config.echo();
  metrics << "basis_size = " << k << '\n';
  metrics << "reduced_shift = " << shifted << '\n';
  metrics << "data_norm = " << fmt(data.norm()) << '\n';
  if (!metrics || !d) throw std::runtime_error("cannot write forward outputs");
  std::ofstream timings(dir / "timings.txt");
  timings << "forward.seconds = " << fmt(secs) << '\n';
}

std::vector<ScalingRow> scaling_benchmark(const ExperimentConfig& config,
                                          const std::vector<int>& workers, int repeats) {
  if (workers.empty() || repeats < 1) throw std::invalid_argument("bench: need workers and repeats");
  for (int w : workers) {
    if (w < 1) throw std::invalid_argument("bench: worker counts must be at least 1");
  }
  const ExperimentSetup setup = make_setup(config);
  const auto conditions = conditions_for(setup);
  const Vector& m = setup.true_model;
  const Index k = conditions->size();
  const Index nfree = setup.mesh.num_nodes() - 1;
  const Vector v = Vector::LinSpaced(k, 1.0, 2.0).array().sin();
  const Vector w = Vector::LinSpaced(nfree, 0.0, 3.0).array().cos();
  const Vector dm = Vector::LinSpaced(setup.mesh.num_cells(), -1.0, 1.0);

  struct Outputs {
    SparseMatrix s;
    Vector y, x;
  };
  auto median = [](std::vector<double> t) {
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
  };
  auto same = [](const Outputs& a, const Outputs& b) {
    if (a.s.nonZeros() != b.s.nonZeros() || a.y.size() != b.y.size() || a.x.size() != b.x.size()) {
      return false;
    }
    const auto n = static_cast<std::size_t>(a.s.nonZeros());
    return std::equal(a.s.valuePtr(), a.s.valuePtr() + n, b.s.valuePtr()) &&
           std::equal(a.s.innerIndexPtr(), a.s.innerIndexPtr() + n, b.s.innerIndexPtr()) &&
           std::equal(a.s.outerIndexPtr(), a.s.outerIndexPtr() + a.s.outerSize() + 1,
                      b.s.outerIndexPtr()) &&
           (a.y.array() == b.y.array()).all() && (a.x.array() == b.x.array()).all();
  };

  std::optional<Outputs> serial;
  {
    const MultiscaleBasis b = MultiscaleBasis::assemble(conditions, setup.partition, m);
    serial = Outputs{b.matrix(), b.Y(v, m).apply(dm), b.X(w, m).apply(dm)};
  }

  std::vector<ScalingRow> rows;
  for (int nw : workers) {
    WorkerPool pool(static_cast<std::size_t>(nw));
    std::vector<double> ta, ty, tx;
    Outputs last;
    for (int r = 0; r < repeats; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      const MultiscaleBasis b = MultiscaleBasis::assemble(conditions, setup.partition, m, pool);
      ta.push_back(seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      last.y = b.Y(v, m, pool).apply(dm);
      ty.push_back(seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      last.x = b.X(w, m, pool).apply(dm);
      tx.push_back(seconds_since(t0));
      last.s = b.matrix();
    }
    ScalingRow row;
    row.workers = nw;
    row.assemble_seconds = median(ta);
    row.y_seconds = median(ty);
    row.x_seconds = median(tx);
    row.identical = same(last, *serial);
    rows.push_back(row);
  }
  const auto base = std::find_if(rows.begin(), rows.end(), [](const ScalingRow& r) { return r.workers == 1; });
  const ScalingRow ref = base != rows.end() ? *base : rows.front();
  for (ScalingRow& r : rows) {
    r.assemble_speedup = ref.assemble_seconds / r.assemble_seconds;
    r.y_speedup = ref.y_seconds / r.y_seconds;
    r.x_speedup = ref.x_seconds / r.x_seconds;
  }
  return rows;
}

std::string build_provenance() {
  return std::string("msfvinv ") + MSFV_VERSION + " rev " + MSFV_GIT_REV;
}

}  // namespace msfv
