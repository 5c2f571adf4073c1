// Serial against OpenMP kernels.

#include <benchmark/benchmark.h>

#include <omp.h>

#include "vtol/geometry.hpp"
#include "vtol/piml.hpp"
#include "vtol/vlm.hpp"

using namespace vtol;

namespace {

geometry::PanelMesh mesh(int spanwise) {
    geometry::AircraftConfig c = geometry::AircraftConfig::nominal();
    c.wing_panels_spanwise = spanwise;
    c.tail_panels_spanwise = spanwise / 2;
    return geometry::build_mesh(c);
}

template <vlm::Parallelism P>
void BM_assemble_aic(benchmark::State& state) {
    const geometry::PanelMesh m = mesh(static_cast<int>(state.range(0)));
    const Vec3 d = vlm::freestream_direction(deg2rad(4.0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(vlm::assemble_aic(m, d, 5e-7, P));
    }
    state.counters["panels"] = static_cast<double>(m.size());
    state.counters["threads"] = P == vlm::Parallelism::OpenMP ? omp_get_max_threads() : 1;
}

template <vlm::Parallelism P>
void BM_lf_forward(benchmark::State& state) {
    const piml::Physics ph(geometry::AircraftConfig::nominal(), {}, P);
    const FlightState f{20.0, 5.0, 6000.0, 7000.0, 30.0, 35.0, 2.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(piml::lf_forward(ph, f));
    }
}

}  // namespace

BENCHMARK(BM_assemble_aic<vlm::Parallelism::Serial>)->Arg(20)->Arg(40)->Arg(80)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_assemble_aic<vlm::Parallelism::OpenMP>)->Arg(20)->Arg(40)->Arg(80)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lf_forward<vlm::Parallelism::Serial>)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lf_forward<vlm::Parallelism::OpenMP>)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
