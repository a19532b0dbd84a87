#include <cmath>

#include <benchmark/benchmark.h>

#include "idyn/decoupling.hpp"
#include "idyn/examples.hpp"
#include "idyn/internal_dynamics.hpp"
#include "idyn/stability.hpp"

namespace {

using namespace idyn;

void BM_GenericRhsManipulator(benchmark::State& state) {
    const examples::ManipulatorParams p;
    const DecouplingMap map(examples::manipulator_model(p), examples::manipulator_joint_options(p));
    const Vec eta = Eigen::Vector2d(0.7, 0.1);
    const Vec y = Vec::Constant(1, 0.2);
    const Vec dy = Vec::Constant(1, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(generic_rhs(map, eta, y, dy));
}
BENCHMARK(BM_GenericRhsManipulator);

void BM_GenericRhsMassOnCar(benchmark::State& state) {
    const auto car = examples::mass_on_car({});
    const DecouplingMap map(car.system);
    const Vec eta = Eigen::Vector2d(2.0, -1.0);
    const Vec y = Eigen::Vector2d(0.1, 0.2);
    for (auto _ : state) benchmark::DoNotOptimize(generic_rhs(map, eta, y, y));
}
BENCHMARK(BM_GenericRhsMassOnCar);

void BM_ConstantRhsMassOnCar(benchmark::State& state) {
    const auto car = examples::mass_on_car({});
    const Vec eta = Eigen::Vector2d(2.0, -1.0);
    const Vec y = Eigen::Vector2d(0.1, 0.2);
    for (auto _ : state) benchmark::DoNotOptimize(constant_rhs(car.ccm, eta, y, y));
}
BENCHMARK(BM_ConstantRhsMassOnCar);

void BM_CertificateCheck(benchmark::State& state) {
    const auto car = examples::mass_on_car({});
    const auto cert = compute_constants(car.ccm, car.envelope, 0.0, 0.0, 1.0, 0.1);
    SamplerConfig cfg;
    cfg.samples = static_cast<std::size_t>(state.range(0));
    cfg.threads = 1;
    for (auto _ : state) benchmark::DoNotOptimize(certificate_check(cert, car.envelope, car.ccm, cfg).worst_value);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CertificateCheck)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_IntegrateInternal(benchmark::State& state) {
    const auto car = examples::mass_on_car({});
    const auto rhs = make_constant_rhs(car.ccm);
    const OutputSignal signal{[](double t) { return Vec(Vec::Constant(2, 0.1 * std::sin(t))); },
                              [](double t) { return Vec(Vec::Constant(2, 0.1 * std::cos(t))); }};
    for (auto _ : state) {
        benchmark::DoNotOptimize(integrate(rhs, Eigen::Vector2d(3.0, 0.0), signal, {0.0, 10.0}, 1e-3).size());
    }
}
BENCHMARK(BM_IntegrateInternal)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
