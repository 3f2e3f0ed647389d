// Serial reference against the OpenMP paths. Both give identical numbers; only
// wall time differs. Run with --benchmark_counters_tabular=true.

#include <benchmark/benchmark.h>

#include "knudsen/flight.hpp"
#include "knudsen/kernels.hpp"
#include "knudsen/spectral.hpp"

using namespace knudsen;

namespace {

const CollisionKernel& semicircle() {
  static const CollisionKernel k = microstructure_kernel(CellGeometry::semicircle());
  return k;
}

Execution exec_for(int64_t parallel) { return parallel ? Execution{} : Execution::serial(); }

void BM_KernelStep(benchmark::State& st) {
  CollisionKernel k = st.range(0) == 0   ? semicircle()
                      : st.range(0) == 1 ? microstructure_kernel(CellGeometry::flat_bottom(0.5))
                                         : ms_kernel(0.5, SurfaceMeasure::cosine(2, 1.0));
  Stream rng(1, 0, Purpose::Test);
  AngleState s{1.0, 1.0};
  for (auto _ : st) {
    s = k.step(s, rng);
    benchmark::DoNotOptimize(s);
  }
  st.SetItemsProcessed(st.iterations());
  st.SetLabel(k.label());
}
BENCHMARK(BM_KernelStep)->Arg(0)->Arg(1)->Arg(2);

void BM_Discretize(benchmark::State& st) {
  DiscretizeOptions opt;
  opt.parallel = st.range(1) != 0;
  for (auto _ : st) {
    KernelMatrix km = discretize_kernel(semicircle(), static_cast<std::size_t>(st.range(0)), opt);
    benchmark::DoNotOptimize(km.entries.data());
  }
  st.SetLabel(opt.parallel ? "openmp" : "serial");
}
BENCHMARK(BM_Discretize)->Args({256, 0})->Args({256, 1})->Args({1024, 0})->Args({1024, 1})->Unit(benchmark::kMillisecond);

void BM_LagSum(benchmark::State& st) {
  ChannelConfig cfg;
  DiffusivityOptions opt;
  opt.reps = 32;
  opt.samples_per_rep = 500;
  opt.lags = 50;
  opt.exec = exec_for(st.range(0));
  for (auto _ : st) {
    DiffusivityResult r = diffusivity_mc(semicircle(), cfg, ScalingSchedule{}, TruncationSpec{}, opt);
    benchmark::DoNotOptimize(r.fit.eta);
  }
  st.SetLabel(st.range(0) ? "openmp" : "serial");
}
BENCHMARK(BM_LagSum)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ExitTime(benchmark::State& st) {
  ChannelConfig cfg;
  cfg.L = 30.0;
  ExitTimeOptions opt;
  opt.reps = 1000;
  opt.exec = exec_for(st.range(0));
  for (auto _ : st) {
    ExitTimeResult r = mean_exit_time(semicircle(), cfg, opt);
    benchmark::DoNotOptimize(r.mean);
  }
  st.SetLabel(st.range(0) ? "openmp" : "serial");
}
BENCHMARK(BM_ExitTime)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
