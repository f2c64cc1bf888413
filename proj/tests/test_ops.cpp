#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "cenet/gradcheck.hpp"
#include "cenet/ops.hpp"
#include "oracles.hpp"

using namespace cenet;

TEST_CASE("conv2d op matches the direct definition, with and without bias") {
    oracle::Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t groups = rng.range(1, 2);
        oracle::ConvSpec s{rng.range(1, 2), groups * rng.range(1, 3), rng.range(5, 9), rng.range(5, 9),
                           groups * rng.range(1, 3), 3, rng.range(1, 2), rng.range(1, 2), rng.range(0, 2), groups};
        const Tensor x = oracle::random_tensor({s.n, s.cin, s.h, s.w}, rng);
        const Tensor w = oracle::random_tensor({s.cout, s.cin / groups, 3, 3}, rng);
        const Tensor b = oracle::random_tensor({s.cout}, rng);
        const bool with_bias = trial % 2 == 0;
        const Tensor y = conv2d(x, w, with_bias ? b : Tensor(), {s.stride, s.dilation, s.padding, s.groups});
        const auto bias = with_bias ? std::vector<double>(b.data().begin(), b.data().end()) : std::vector<double>{};
        const auto ref = oracle::conv2d(s, {x.data().begin(), x.data().end()}, {w.data().begin(), w.data().end()}, bias);
        CHECK(oracle::max_abs_diff(y.data(), ref) <= 1e-12);
    }
}

TEST_CASE("conv2d rejects inconsistent operands") {
    const Tensor x({1, 4, 5, 5});
    CHECK_THROWS_AS(conv2d(x, Tensor({2, 3, 3, 3}), Tensor()), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor({2, 4, 3, 3}), Tensor({3})), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor({2, 4, 7, 7}), Tensor()), std::invalid_argument);
    ConvOptions g3;
    g3.groups = 3;
    CHECK_THROWS_AS(conv2d(x, Tensor({3, 1, 1, 1}), Tensor(), g3), std::invalid_argument);
}

TEST_CASE("bilinear resize extents and values") {
    oracle::Rng rng(22);
    const Tensor x = oracle::random_tensor({2, 3, 7, 5}, rng);
    const Tensor y = bilinear_resize(x, 0.75);
    CHECK(y.shape() == Shape{2, 3, 5, 4});
    const auto ref = oracle::resize({x.data().begin(), x.data().end()}, 6, 7, 5, 5, 4);
    CHECK(oracle::max_abs_diff(y.data(), ref) <= 1e-12);
    CHECK_THROWS_AS(bilinear_resize(Tensor({1, 1, 1, 1}), 0.25), std::invalid_argument);
    CHECK_THROWS_AS(bilinear_resize(x, 0.0), std::invalid_argument);
}

TEST_CASE("resize of a constant plane is exact") {
    const Tensor x({1, 2, 5, 3}, 0.3);
    const Tensor y = resize_to(x, 9, 11);
    for (double v : y.data()) CHECK(v == 0.3);
}

TEST_CASE("softmax rows sum to one and match an extended-precision oracle") {
    oracle::Rng rng(23);
    const Tensor x = oracle::random_tensor({3, 4, 9}, rng, -20.0, 20.0);
    const Tensor y = softmax_lastdim(x);
    const auto ref = oracle::softmax_rows({x.data().begin(), x.data().end()}, 9);
    CHECK(oracle::max_abs_diff(y.data(), ref) <= 1e-12);
    for (std::size_t r = 0; r < 12; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 9; ++j) s += y.at(r * 9 + j);
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
    // Shift invariance survives huge offsets.
    const Tensor big = softmax_lastdim(Tensor::from({1, 2}, {1000.0, 1001.0}));
    CHECK(big.at(1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("pooling trios") {
    oracle::Rng rng(24);
    const Tensor x = oracle::random_tensor({2, 5, 3, 4}, rng);
    const std::vector<double> xs(x.data().begin(), x.data().end());
    CHECK(oracle::max_abs_diff(spatial_masp(x).data(), oracle::spatial_masp(xs, 2, 5, 12)) <= 1e-12);
    CHECK(oracle::max_abs_diff(channel_masp(x).data(), oracle::channel_masp(xs, 2, 5, 12)) <= 1e-12);
    const Tensor m = channel_mean(x);
    CHECK(m.shape() == Shape{2, 1, 3, 4});
    const auto cm = oracle::channel_masp(xs, 2, 5, 12);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < 12; ++p) CHECK(std::fabs(m.at(b * 12 + p) - cm[(b * 3) * 12 + p]) <= 1e-12);
}

TEST_CASE("matmul batched and shared right operand") {
    oracle::Rng rng(25);
    const Tensor a = oracle::random_tensor({2, 3, 4, 5}, rng);
    const Tensor b = oracle::random_tensor({2, 3, 5, 6}, rng);
    const Tensor shared = oracle::random_tensor({5, 6}, rng);
    const std::vector<double> av(a.data().begin(), a.data().end());
    CHECK(oracle::max_abs_diff(matmul_batched(a, b).data(),
                               oracle::matmul(av, {b.data().begin(), b.data().end()}, 6, 4, 5, 6, true)) <= 1e-12);
    const Tensor c = matmul_batched(a, shared);
    CHECK(c.shape() == Shape{2, 3, 4, 6});
    CHECK(oracle::max_abs_diff(c.data(), oracle::matmul(av, {shared.data().begin(), shared.data().end()}, 6, 4, 5, 6,
                                                        false)) <= 1e-12);
    CHECK_THROWS_AS(matmul_batched(a, Tensor({4, 6})), std::invalid_argument);
}

TEST_CASE("linear and transpose") {
    const Tensor x = Tensor::from({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor w = Tensor::from({2, 3}, {1, 0, -1, 0.5, 0.5, 0.5});
    const Tensor b = Tensor::from({2}, {10, 20});
    const Tensor y = linear(x, w, b);
    CHECK(y.shape() == Shape{1, 2, 2});
    CHECK(y.at(0) == 8.0);
    CHECK(y.at(1) == 23.0);
    CHECK(y.at(2) == 8.0);
    CHECK(y.at(3) == 27.5);
    const Tensor t = transpose_last2(x);
    CHECK(t.shape() == Shape{1, 3, 2});
    CHECK(t.at(1) == 4.0);
}

TEST_CASE("layer norm output has zero mean and unit spread before gain") {
    oracle::Rng rng(26);
    const Tensor x = oracle::random_tensor({4, 7}, rng, -3.0, 5.0);
    const Tensor y = layer_norm(x, Tensor({7}, 1.0), Tensor({7}, 0.0), 1e-300);
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0, sq = 0.0;
        for (std::size_t j = 0; j < 7; ++j) s += y.at(r * 7 + j);
        for (std::size_t j = 0; j < 7; ++j) sq += y.at(r * 7 + j) * y.at(r * 7 + j);
        CHECK(std::fabs(s) <= 1e-12);
        CHECK(std::fabs(sq / 7.0 - 1.0) <= 1e-12);
    }
}

TEST_CASE("channel concat, slice and token round trips") {
    oracle::Rng rng(27);
    const Tensor a = oracle::random_tensor({2, 3, 2, 2}, rng);
    const Tensor b = oracle::random_tensor({2, 1, 2, 2}, rng);
    const Tensor parts[] = {a, b};
    const Tensor c = concat_channels(parts);
    CHECK(c.shape() == Shape{2, 4, 2, 2});
    CHECK(oracle::bitwise_equal(slice_channels(c, 0, 3).data(), a.data()));
    CHECK(oracle::bitwise_equal(slice_channels(c, 3, 1).data(), b.data()));
    CHECK_THROWS_AS(slice_channels(c, 3, 2), std::invalid_argument);
    const Tensor tok = to_tokens(a);
    CHECK(tok.shape() == Shape{2, 4, 3});
    CHECK(tok.at(1) == a.at(4));
    CHECK(oracle::bitwise_equal(from_tokens(tok, 2, 2).data(), a.data()));
    const Tensor lp[] = {tok, tok};
    const Tensor l = concat_lastdim(lp);
    CHECK(oracle::bitwise_equal(slice_lastdim(l, 3, 3).data(), tok.data()));
}

TEST_CASE("broadcast products") {
    const Tensor x({1, 2, 2, 2}, 2.0);
    const Tensor s = Tensor::from({2}, {0.5, 3.0});
    const Tensor y = mul_channelwise(x, s);
    CHECK(y.at(0) == 1.0);
    CHECK(y.at(4) == 6.0);
    const Tensor map = Tensor::from({1, 1, 2, 2}, {0, 1, 2, 3});
    const Tensor z = mul_spatial(x, map);
    CHECK(z.at(7) == 6.0);
    CHECK(mul_scalar(x, Tensor::scalar(-1.0)).at(3) == -2.0);
    CHECK_THROWS_AS(add(x, Tensor({2})), std::invalid_argument);
}

TEST_CASE("compensated sum recovers cancelled terms") {
    const Tensor x = Tensor::from({4}, {1e16, 1.0, -1e16, 1.0});
    CHECK(sum(x).item() == 2.0);
    CHECK(mean(Tensor({5}, 0.2)).item() == doctest::Approx(0.2));
}

TEST_CASE("activations") {
    const Tensor x = Tensor::from({4}, {-2.0, -0.5, 0.0, 1.5});
    CHECK(sigmoid(x).at(2) == 0.5);
    CHECK(relu(x).at(0) == 0.0);
    CHECK(relu(x).at(3) == 1.5);
    CHECK(gelu(x).at(2) == 0.0);
    CHECK(gelu(x).at(3) == doctest::Approx(1.5 * 0.5 * (1.0 + std::erf(1.5 / std::sqrt(2.0)))));
    CHECK(silu(x).at(1) == doctest::Approx(-0.5 / (1.0 + std::exp(0.5))));
    CHECK(sigmoid(Tensor::scalar(-800.0)).item() >= 0.0);
}

namespace {

void check_grad(const std::function<Tensor(const Tensor&)>& f, Shape shape, std::uint64_t seed) {
    oracle::Rng rng(seed);
    ParamSet ps;
    const Tensor x = ps.add("x", oracle::random_tensor(shape, rng));
    Tensor probe;
    {
        NoGradGuard g;
        probe = f(x);
    }
    const Tensor proj = oracle::random_tensor(probe.shape(), rng);
    GradCheckOptions opts;
    opts.samples = 64;
    const auto reps = finite_diff_check([&] { return sum(mul(f(x), proj)); }, ps, opts);
    for (const auto& r : reps) {
        INFO(r.param_name << " rel=" << r.max_rel_err << " abs=" << r.max_abs_err);
        CHECK(r.pass);
    }
}

}  // namespace

TEST_CASE("op gradients agree with central differences") {
    oracle::Rng rng(28);
    const Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = oracle::random_tensor({3}, rng);
    check_grad([&](const Tensor& x) { return conv2d(x, w, b, {2, 1, 1, 1}); }, {1, 2, 6, 6}, 1);
    check_grad([](const Tensor& x) { return bilinear_resize(x, 0.75); }, {1, 2, 5, 5}, 2);
    check_grad([](const Tensor& x) { return resize_to(x, 9, 4); }, {1, 2, 3, 5}, 3);
    check_grad([](const Tensor& x) { return softmax_lastdim(x); }, {2, 3, 5}, 4);
    check_grad([](const Tensor& x) { return spatial_masp(x); }, {2, 3, 2, 3}, 5);
    check_grad([](const Tensor& x) { return channel_masp(x); }, {1, 4, 2, 3}, 6);
    check_grad([](const Tensor& x) { return channel_mean(x); }, {1, 4, 2, 3}, 7);
    check_grad([](const Tensor& x) { return gelu(x); }, {10}, 8);
    check_grad([](const Tensor& x) { return silu(x); }, {10}, 9);
    check_grad([](const Tensor& x) { return sigmoid(x); }, {10}, 10);
    const Tensor gain = oracle::random_tensor({5}, rng), shift = oracle::random_tensor({5}, rng);
    check_grad([&](const Tensor& x) { return layer_norm(x, gain, shift); }, {3, 5}, 11);
    const Tensor m = oracle::random_tensor({4, 3}, rng);
    check_grad([&](const Tensor& x) { return matmul_batched(x, m); }, {2, 2, 4}, 12);
    check_grad([](const Tensor& x) { return matmul_batched(x, transpose_last2(x)); }, {2, 3, 4}, 13);
    check_grad([&](const Tensor& x) { return linear(x, m, Tensor()); }, {2, 3}, 14);
    check_grad([](const Tensor& x) { return mul_channelwise(x, slice_lastdim(spatial_masp(x), 0, 2)); }, {1, 2, 3, 3},
               15);
    check_grad([](const Tensor& x) { return mul_spatial(x, channel_mean(x)); }, {1, 2, 3, 3}, 16);
    check_grad([](const Tensor& x) { return mul_scalar(x, sum(x)); }, {6}, 17);
    check_grad([](const Tensor& x) { return abs(x); }, {12}, 18);
    check_grad([](const Tensor& x) {
        const Tensor parts[] = {slice_channels(x, 1, 2), x};
        return from_tokens(to_tokens(concat_channels(parts)), 2, 2);
    }, {1, 3, 2, 2}, 19);
}
