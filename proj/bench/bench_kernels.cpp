// Serial reference kernels against the OpenMP kernels the engine uses.
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cgsam/kernels.hpp"

namespace k = cgsam::kernels;
using cgsam::real;

namespace {

std::vector<real> random_vector(std::size_t n, unsigned seed)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<real> u(-1.0, 1.0);
    std::vector<real> v(n);
    for (auto& x : v) x = u(gen);
    return v;
}

template <auto Kernel>
void gemm(benchmark::State& state)
{
    const int n = static_cast<int>(state.range(0));
    const auto a = random_vector(std::size_t(n) * n, 1), b = random_vector(std::size_t(n) * n, 2);
    std::vector<real> c(std::size_t(n) * n);
    for (auto _ : state) {
        Kernel(a, b, c, n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * std::int64_t(n) * n * n);
}

template <auto Kernel>
void softmax(benchmark::State& state)
{
    const int rows = static_cast<int>(state.range(0)), cols = rows;
    const auto x0 = random_vector(std::size_t(rows) * cols, 3);
    std::vector<real> x(x0.size());
    for (auto _ : state) {
        x = x0;
        Kernel(x, rows, cols);
        benchmark::DoNotOptimize(x.data());
    }
}

template <auto Kernel>
void layer_norm(benchmark::State& state)
{
    const int rows = static_cast<int>(state.range(0)), cols = 256;
    const auto x = random_vector(std::size_t(rows) * cols, 4), g = random_vector(cols, 5), b = random_vector(cols, 6);
    std::vector<real> y(x.size()), mean(rows), rstd(rows);
    for (auto _ : state) {
        Kernel(x, g, b, y, mean, rstd, rows, cols, 1e-6);
        benchmark::DoNotOptimize(y.data());
    }
}

template <auto Kernel>
void gelu(benchmark::State& state)
{
    const auto x = random_vector(std::size_t(state.range(0)), 7);
    std::vector<real> y(x.size());
    for (auto _ : state) {
        Kernel(x, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <auto Kernel>
void bilinear(benchmark::State& state)
{
    const int side = static_cast<int>(state.range(0)), channels = 32;
    const auto in = random_vector(std::size_t(side) * side * channels, 8);
    std::vector<real> out(std::size_t(4 * side) * 4 * side * channels);
    for (auto _ : state) {
        Kernel(in, out, channels, side, side, 4 * side, 4 * side);
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(gemm<k::reference::gemm_nn>)->Name("gemm_nn/reference")->Arg(64)->Arg(256);
BENCHMARK(gemm<k::gemm_nn>)->Name("gemm_nn/openmp")->Arg(64)->Arg(256);
BENCHMARK(gemm<k::reference::gemm_nt>)->Name("gemm_nt/reference")->Arg(64)->Arg(256);
BENCHMARK(gemm<k::gemm_nt>)->Name("gemm_nt/openmp")->Arg(64)->Arg(256);
BENCHMARK(gemm<k::reference::gemm_tn>)->Name("gemm_tn/reference")->Arg(64)->Arg(256);
BENCHMARK(gemm<k::gemm_tn>)->Name("gemm_tn/openmp")->Arg(64)->Arg(256);
BENCHMARK(softmax<k::reference::softmax_rows>)->Name("softmax_rows/reference")->Arg(256);
BENCHMARK(softmax<k::softmax_rows>)->Name("softmax_rows/openmp")->Arg(256);
BENCHMARK(layer_norm<k::reference::layer_norm>)->Name("layer_norm/reference")->Arg(1024);
BENCHMARK(layer_norm<k::layer_norm>)->Name("layer_norm/openmp")->Arg(1024);
BENCHMARK(gelu<k::reference::gelu>)->Name("gelu/reference")->Arg(1 << 16);
BENCHMARK(gelu<k::gelu>)->Name("gelu/openmp")->Arg(1 << 16);
BENCHMARK(bilinear<k::reference::bilinear_resize>)->Name("bilinear_resize/reference")->Arg(24);
BENCHMARK(bilinear<k::bilinear_resize>)->Name("bilinear_resize/openmp")->Arg(24);

BENCHMARK_MAIN();
