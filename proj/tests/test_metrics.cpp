#include "doctest.h"

#include <stdexcept>

#include "cenet/metrics.hpp"
#include "oracles.hpp"

using namespace cenet;

namespace {

LabelMap square(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t side) {
    LabelMap m(h, w);
    for (std::size_t y = y0; y < y0 + side; ++y)
        for (std::size_t x = x0; x < x0 + side; ++x) m.at(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("dice hand counts") {
    const LabelMap a = square(6, 6, 1, 1, 2);
    const LabelMap b = square(6, 6, 1, 2, 2);
    CHECK(dice_score(a, a, 1) == 1.0);
    CHECK(dice_score(a, b, 1) == 0.5);
    CHECK(dice_score(a, square(6, 6, 4, 4, 2), 1) == 0.0);
    CHECK(dice_score(LabelMap(3, 3), LabelMap(3, 3), 1) == 1.0);
    CHECK_THROWS_AS(dice_score(a, LabelMap(6, 5), 1), std::invalid_argument);
}

TEST_CASE("hd95 hand values") {
    LabelMap p(5, 5), g(5, 5);
    p.at(2, 2) = 1;
    g.at(2, 3) = 1;
    CHECK(hd95(p, g, 1) == 1.0);
    CHECK(hd95(p, p, 1) == 0.0);
    g.at(2, 3) = 0;
    g.at(0, 0) = 1;
    CHECK(*hd95(p, g, 1) == doctest::Approx(std::sqrt(8.0)));
    CHECK_FALSE(hd95(p, LabelMap(5, 5), 1).has_value());
    CHECK_FALSE(hd95(LabelMap(5, 5), LabelMap(5, 5), 1).has_value());
    CHECK_THROWS_AS(hd95(p, LabelMap(4, 5), 1), std::invalid_argument);
}

TEST_CASE("hd95 percentile interpolates between order statistics") {
    // Pred: 20 pixels of row 0; gt: same row plus one pixel 10 rows below.
    LabelMap p(12, 20), g(12, 20);
    for (std::size_t x = 0; x < 20; ++x) p.at(0, x) = g.at(0, x) = 1;
    g.at(10, 0) = 1;
    // 40 zeros and one 10: rank 0.95 * 40 = 38 lands on a zero.
    CHECK(hd95(p, g, 1) == 0.0);
    LabelMap p2(12, 4), g2(12, 4);
    for (std::size_t x = 0; x < 4; ++x) p2.at(0, x) = g2.at(0, x) = 1;
    g2.at(10, 0) = 1;
    // 9 distances, rank 7.6: d[7] = 0, d[8] = 10 -> 6.
    CHECK(*hd95(p2, g2, 1) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("metrics match brute-force oracles on random masks") {
    oracle::Rng rng(71);
    for (int trial = 0; trial < 200; ++trial) {
        const LabelMap p = oracle::random_mask(16, 16, rng, rng.uniform(0.0, 0.6));
        const LabelMap g = oracle::random_mask(16, 16, rng, rng.uniform(0.0, 0.6));
        CHECK(dice_score(p, g, 1) == oracle::dice(p, g, 1));
        CHECK(dice_score(p, g, 0) == oracle::dice(p, g, 0));
        CHECK(hd95(p, g, 1) == oracle::hd95(p, g, 1));
    }
}

TEST_CASE("hd95 is translation invariant and symmetric") {
    oracle::Rng rng(72);
    for (int trial = 0; trial < 50; ++trial) {
        LabelMap p(20, 20), g(20, 20), ps(20, 20), gs(20, 20);
        const std::size_t dy = rng.range(0, 4), dx = rng.range(0, 4);
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) {
                p.at(y, x) = ps.at(y + dy, x + dx) = rng.unit() < 0.2;
                g.at(y, x) = gs.at(y + dy, x + dx) = rng.unit() < 0.2;
            }
        CHECK(hd95(p, g, 1) == hd95(ps, gs, 1));
        CHECK(hd95(p, g, 1) == hd95(g, p, 1));
    }
}

TEST_CASE("pixel accuracy and argmax") {
    const LabelMap a = square(4, 4, 0, 0, 2);
    const LabelMap b = square(4, 4, 0, 1, 2);
    CHECK(pixel_accuracy(a, a) == 1.0);
    CHECK(pixel_accuracy(a, b) == 12.0 / 16.0);
    const Tensor logits = Tensor::from({1, 3, 1, 3}, {0.0, 1.0, 2.0, 0.0, 3.0, 2.0, 0.0, 0.0, 2.0});
    const auto labels = argmax_labels(logits);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].labels == std::vector<int>{0, 1, 0});
    CHECK_THROWS_AS(argmax_labels(Tensor({3, 3})), std::invalid_argument);
}
