// Serial reference vs OpenMP kernels on decoder-sized problems.

#include <benchmark/benchmark.h>

#include <vector>

#include "cenet/kernels.hpp"
#include "cenet/params.hpp"

namespace {

namespace k = cenet::kernels;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    cenet::SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

k::ConvGeometry conv_geometry(std::size_t channels, std::size_t hw) {
    k::ConvGeometry g;
    g.batch = 1;
    g.in_channels = channels;
    g.out_channels = channels;
    g.height = g.width = hw;
    g.kernel = 3;
    g.padding = 1;
    g.out_height = g.out_width = hw;
    return g;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    const auto in = random_vec(g.batch * g.in_channels * g.height * g.width, 1);
    const auto w = random_vec(g.out_channels * g.in_channels * 9, 2);
    const auto b = random_vec(g.out_channels, 3);
    std::vector<double> out(g.batch * g.out_channels * g.out_height * g.out_width);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::parallel::conv2d_forward(g, in, w, b, out);
        } else {
            k::serial::conv2d_forward(g, in, w, b, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Conv2dBackwardWeight(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    const auto in = random_vec(g.batch * g.in_channels * g.height * g.width, 4);
    const auto go = random_vec(g.batch * g.out_channels * g.out_height * g.out_width, 5);
    std::vector<double> gw(g.out_channels * g.in_channels * 9), gb(g.out_channels);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::parallel::conv2d_backward_weight(g, go, in, gw, gb);
        } else {
            k::serial::conv2d_backward_weight(g, go, in, gw, gb);
        }
        benchmark::DoNotOptimize(gw.data());
    }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
    k::MatmulGeometry g;
    g.batch = 2;
    g.m = g.k = g.p = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(g.batch * g.m * g.k, 6);
    const auto b = random_vec(g.batch * g.k * g.p, 7);
    std::vector<double> out(g.batch * g.m * g.p);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::parallel::matmul(g, a, b, out);
        } else {
            k::serial::matmul(g, a, b, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Resize(benchmark::State& state) {
    k::ResizeGeometry g;
    g.planes = 64;
    g.height = g.width = static_cast<std::size_t>(state.range(0));
    g.out_height = g.out_width = 4 * g.height;
    const auto in = random_vec(g.planes * g.height * g.width, 8);
    std::vector<double> out(g.planes * g.out_height * g.out_width);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::parallel::resize_forward(g, in, out);
        } else {
            k::serial::resize_forward(g, in, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Args({16, 32})->Args({64, 32})->Args({128, 16});
BENCHMARK(BM_Conv2dForward<true>)->Args({16, 32})->Args({64, 32})->Args({128, 16});
BENCHMARK(BM_Conv2dBackwardWeight<false>)->Args({64, 32});
BENCHMARK(BM_Conv2dBackwardWeight<true>)->Args({64, 32});
BENCHMARK(BM_Matmul<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Resize<false>)->Arg(16)->Arg(32);
BENCHMARK(BM_Resize<true>)->Arg(16)->Arg(32);

BENCHMARK_MAIN();
