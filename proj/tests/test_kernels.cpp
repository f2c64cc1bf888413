#include "doctest.h"

#include <vector>

#include "cenet/kernels.hpp"
#include "oracles.hpp"

namespace k = cenet::kernels;

namespace {

k::ConvGeometry random_geometry(oracle::Rng& rng) {
    k::ConvGeometry g;
    g.groups = rng.range(1, 3);
    g.batch = rng.range(1, 2);
    g.in_channels = g.groups * rng.range(1, 4);
    g.out_channels = g.groups * rng.range(1, 4);
    g.kernel = rng.range(1, 3) * 2 - 1;
    g.stride = rng.range(1, 2);
    g.dilation = rng.range(1, 3);
    g.padding = rng.range(0, 3);
    g.height = rng.range(g.dilation * (g.kernel - 1) + 1, 16);
    g.width = rng.range(g.dilation * (g.kernel - 1) + 1, 16);
    g.out_height = k::conv_out_extent(g.height, g.kernel, g.stride, g.dilation, g.padding);
    g.out_width = k::conv_out_extent(g.width, g.kernel, g.stride, g.dilation, g.padding);
    return g;
}

std::size_t in_size(const k::ConvGeometry& g) { return g.batch * g.in_channels * g.height * g.width; }
std::size_t out_size(const k::ConvGeometry& g) { return g.batch * g.out_channels * g.out_height * g.out_width; }
std::size_t w_size(const k::ConvGeometry& g) { return g.out_channels * g.in_per_group() * g.kernel * g.kernel; }

}  // namespace

TEST_CASE("conv_out_extent") {
    CHECK(k::conv_out_extent(32, 3, 2, 1, 1) == 16);
    CHECK(k::conv_out_extent(6, 3, 1, 3, 3) == 6);
    CHECK(k::conv_out_extent(2, 5, 1, 1, 0) == 0);
}

TEST_CASE("resize_tap clamps at both borders") {
    const auto first = k::resize_tap(0, 4, 8);
    CHECK(first.lo == 0);
    CHECK(first.frac == 0.0);
    const auto last = k::resize_tap(7, 4, 8);
    CHECK(last.lo == 3);
    CHECK(last.hi == 3);
    const auto mid = k::resize_tap(1, 4, 2);
    CHECK(mid.lo == 2);
    CHECK(mid.hi == 3);
    CHECK(mid.frac == doctest::Approx(0.5));
}

TEST_CASE("serial conv forward matches the direct definition") {
    oracle::Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const auto g = random_geometry(rng);
        const auto in = oracle::random_values(in_size(g), rng);
        const auto w = oracle::random_values(w_size(g), rng);
        const auto b = oracle::random_values(g.out_channels, rng);
        std::vector<double> out(out_size(g));
        k::serial::conv2d_forward(g, in, w, b, out);
        const auto ref = oracle::conv2d({g.batch, g.in_channels, g.height, g.width, g.out_channels, g.kernel, g.stride,
                                         g.dilation, g.padding, g.groups},
                                        in, w, b);
        CHECK(oracle::max_abs_diff(out, ref) <= 1e-12);
    }
}

TEST_CASE("parallel kernels are bitwise equal to serial") {
    oracle::Rng rng(12);
    for (int trial = 0; trial < 40; ++trial) {
        const auto g = random_geometry(rng);
        const auto in = oracle::random_values(in_size(g), rng);
        const auto w = oracle::random_values(w_size(g), rng);
        const auto b = oracle::random_values(g.out_channels, rng);
        const auto go = oracle::random_values(out_size(g), rng);

        std::vector<double> o1(out_size(g)), o2(out_size(g));
        k::serial::conv2d_forward(g, in, w, b, o1);
        k::parallel::conv2d_forward(g, in, w, b, o2);
        CHECK(oracle::bitwise_equal(o1, o2));

        std::vector<double> gi1(in_size(g), 0.5), gi2(in_size(g), 0.5);
        k::serial::conv2d_backward_input(g, go, w, gi1);
        k::parallel::conv2d_backward_input(g, go, w, gi2);
        CHECK(oracle::bitwise_equal(gi1, gi2));

        std::vector<double> gw1(w_size(g), 0.0), gw2(w_size(g), 0.0), gb1(g.out_channels, 0.0), gb2(g.out_channels, 0.0);
        k::serial::conv2d_backward_weight(g, go, in, gw1, gb1);
        k::parallel::conv2d_backward_weight(g, go, in, gw2, gb2);
        CHECK(oracle::bitwise_equal(gw1, gw2));
        CHECK(oracle::bitwise_equal(gb1, gb2));
    }

    for (int trial = 0; trial < 30; ++trial) {
        k::MatmulGeometry g;
        g.batch = rng.range(1, 4);
        g.m = rng.range(1, 17);
        g.k = rng.range(1, 17);
        g.p = rng.range(1, 17);
        g.rhs_batched = trial % 2 == 0;
        const auto a = oracle::random_values(g.batch * g.m * g.k, rng);
        const auto b = oracle::random_values((g.rhs_batched ? g.batch : 1) * g.k * g.p, rng);
        const auto go = oracle::random_values(g.batch * g.m * g.p, rng);
        std::vector<double> o1(g.batch * g.m * g.p), o2(o1.size());
        k::serial::matmul(g, a, b, o1);
        k::parallel::matmul(g, a, b, o2);
        CHECK(oracle::bitwise_equal(o1, o2));
        std::vector<double> ga1(a.size(), 0.0), ga2(a.size(), 0.0), gb1(b.size(), 0.0), gb2(b.size(), 0.0);
        k::serial::matmul_backward_lhs(g, go, b, ga1);
        k::parallel::matmul_backward_lhs(g, go, b, ga2);
        k::serial::matmul_backward_rhs(g, go, a, gb1);
        k::parallel::matmul_backward_rhs(g, go, a, gb2);
        CHECK(oracle::bitwise_equal(ga1, ga2));
        CHECK(oracle::bitwise_equal(gb1, gb2));
    }

    for (int trial = 0; trial < 30; ++trial) {
        k::ResizeGeometry g;
        g.planes = rng.range(1, 6);
        g.height = rng.range(1, 9);
        g.width = rng.range(1, 9);
        g.out_height = rng.range(1, 20);
        g.out_width = rng.range(1, 20);
        const auto in = oracle::random_values(g.planes * g.height * g.width, rng);
        const auto go = oracle::random_values(g.planes * g.out_height * g.out_width, rng);
        std::vector<double> o1(go.size()), o2(go.size());
        k::serial::resize_forward(g, in, o1);
        k::parallel::resize_forward(g, in, o2);
        CHECK(oracle::bitwise_equal(o1, o2));
        std::vector<double> gi1(in.size(), 0.0), gi2(in.size(), 0.0);
        k::serial::resize_backward(g, go, gi1);
        k::parallel::resize_backward(g, go, gi2);
        CHECK(oracle::bitwise_equal(gi1, gi2));
    }
}

TEST_CASE("backward kernels are adjoint to forward") {
    // <conv(x), y> == <x, conv^T(y)>, and likewise for resize.
    oracle::Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = random_geometry(rng);
        const auto x = oracle::random_values(in_size(g), rng);
        const auto w = oracle::random_values(w_size(g), rng);
        const auto y = oracle::random_values(out_size(g), rng);
        std::vector<double> cx(out_size(g)), cty(in_size(g), 0.0);
        k::serial::conv2d_forward(g, x, w, {}, cx);
        k::serial::conv2d_backward_input(g, y, w, cty);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * cty[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
    for (int trial = 0; trial < 20; ++trial) {
        k::ResizeGeometry g{2, rng.range(1, 8), rng.range(1, 8), rng.range(1, 16), rng.range(1, 16)};
        const auto x = oracle::random_values(g.planes * g.height * g.width, rng);
        const auto y = oracle::random_values(g.planes * g.out_height * g.out_width, rng);
        std::vector<double> rx(y.size()), rty(x.size(), 0.0);
        k::serial::resize_forward(g, x, rx);
        k::serial::resize_backward(g, y, rty);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) lhs += rx[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * rty[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("backend switch") {
    const auto saved = k::backend();
    k::set_backend(k::Backend::serial);
    CHECK(k::backend() == k::Backend::serial);
    k::set_backend(k::Backend::parallel);
    CHECK(k::backend() == k::Backend::parallel);
    k::set_backend(saved);
}
