#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>

#include "msfv/experiment.hpp"

using namespace msfv;

namespace {

// 16x16x8 block model with 4^3 blocks and a 3x3 dipole survey.
struct Problem {
  Problem() : setup(make_setup(config())) {
    BasisSpec spec = setup.config.basis_spec();
    spec.reference_model = setup.reference_model;
    conditions = std::make_shared<const BoundaryConditionSet>(
        build_boundary_conditions(spec, *setup.partition, setup.survey->sources));
  }
  static ExperimentConfig config() {
    ExperimentConfig c;
    c.cells = {16, 16, 8};
    return c;
  }
  ExperimentSetup setup;
  std::shared_ptr<const BoundaryConditionSet> conditions;
};

const Problem& problem() {
  static const Problem p;
  return p;
}

void BM_AssembleBasis(benchmark::State& state) {
  const Problem& p = problem();
  WorkerPool pool(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto b = MultiscaleBasis::assemble(p.conditions, p.setup.partition, p.setup.true_model, pool);
    benchmark::DoNotOptimize(b.matrix().nonZeros());
  }
  state.counters["k"] = static_cast<double>(p.conditions->size());
}

void BM_ApplyY(benchmark::State& state) {
  const Problem& p = problem();
  WorkerPool pool(static_cast<std::size_t>(state.range(0)));
  const Vector& m = p.setup.true_model;
  const auto b = MultiscaleBasis::assemble(p.conditions, p.setup.partition, m);
  const Vector v = Vector::LinSpaced(b.size(), 1.0, 2.0).array().sin();
  const Vector dm = Vector::LinSpaced(m.size(), -1.0, 1.0);
  for (auto _ : state) {
    Vector out = b.Y(v, m, pool).apply(dm);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ApplyX(benchmark::State& state) {
  const Problem& p = problem();
  WorkerPool pool(static_cast<std::size_t>(state.range(0)));
  const Vector& m = p.setup.true_model;
  const auto b = MultiscaleBasis::assemble(p.conditions, p.setup.partition, m);
  const Vector w = Vector::LinSpaced(b.matrix().rows(), 0.0, 3.0).array().cos();
  const Vector dm = Vector::LinSpaced(m.size(), -1.0, 1.0);
  for (auto _ : state) {
    Vector out = b.X(w, m, pool).apply(dm);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ReducedForward(benchmark::State& state) {
  const Problem& p = problem();
  const auto b = std::make_shared<const MultiscaleBasis>(
      MultiscaleBasis::assemble(p.conditions, p.setup.partition, p.setup.true_model));
  for (auto _ : state) {
    auto st = forward_reduced(p.setup.mesh, p.setup.true_model, *p.setup.survey, b);
    benchmark::DoNotOptimize(st.data.data());
  }
}

void BM_FullForward(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) {
    auto st = forward_full(p.setup.mesh, p.setup.true_model, *p.setup.survey, SolverOptions{});
    benchmark::DoNotOptimize(st.data.data());
  }
}

}  // namespace

BENCHMARK(BM_AssembleBasis)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApplyY)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApplyX)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReducedForward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FullForward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
