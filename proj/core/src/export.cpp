#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "msfv/experiment.hpp"

namespace msfv {

void export_model_vtk(const Vector& m, const TensorMesh& mesh, const std::filesystem::path& path) {
  if (m.size() != mesh.num_cells()) throw std::invalid_argument("vtk: model length mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vtk: cannot open " + path.string());
  out << "# vtk DataFile Version 3.0\n";
  out << "msfvinv conductivity\n";
  out << "ASCII\n";
  out << "DATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << mesh.cells(0) << ' ' << mesh.cells(1) << ' ' << mesh.cells(2) << '\n';
  out << std::setprecision(17);
  // Cell values are written as point data on the grid of cell centres.
  out << "ORIGIN " << 0.5 * mesh.width(0) << ' ' << 0.5 * mesh.width(1) << ' '
      << 0.5 * mesh.width(2) << '\n';
  out << "SPACING " << mesh.width(0) << ' ' << mesh.width(1) << ' ' << mesh.width(2) << '\n';
  out << "POINT_DATA " << mesh.num_cells() << '\n';
  out << "SCALARS sigma double 1\n";
  out << "LOOKUP_TABLE default\n";
  for (Index c = 0; c < m.size(); ++c) out << std::exp(m[c]) << '\n';
  if (!out) throw std::runtime_error("vtk: write failed for " + path.string());
}

void export_trace_csv(const InversionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot open " + path.string());
  out << "iter,phi,reg,total,pgnorm,step,cg_iters,active,rebuilt\n";
  out << std::setprecision(17);
  for (const TraceRow& r : trace.rows) {
    out << r.iter << ',' << r.phi << ',' << r.reg << ',' << r.total << ',' << r.pgnorm << ','
        << r.step << ',' << r.cg_iters << ',' << r.active << ',' << (r.rebuilt ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("csv: write failed for " + path.string());
}

void write_scaling_table(const std::vector<ScalingRow>& rows, std::ostream& out) {
  out << "workers,assemble_s,assemble_speedup,y_s,y_speedup,x_s,x_speedup,identical\n";
  out << std::setprecision(6);
  for (const ScalingRow& r : rows) {
    out << r.workers << ',' << r.assemble_seconds << ',' << r.assemble_speedup << ','
        << r.y_seconds << ',' << r.y_speedup << ',' << r.x_seconds << ',' << r.x_speedup << ','
        << (r.identical ? "yes" : "no") << '\n';
  }
}

}  // namespace msfv
