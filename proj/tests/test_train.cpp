#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "cenet/gradcheck.hpp"
#include "cenet/train.hpp"
#include "oracles.hpp"

using namespace cenet;

namespace {

// Plain re-derivation of the loss from its definition.
double loss_oracle(const Tensor& logits, const std::vector<LabelMap>& masks) {
    const std::size_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    std::vector<double> inter(k, 0.0), ps(k, 0.0), gs(k, 0.0);
    double ce = 0.0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p) {
            double z = 0.0;
            for (std::size_t c = 0; c < k; ++c) z += std::exp(logits.at((b * k + c) * hw + p));
            const int lbl = masks[b].labels[p];
            for (std::size_t c = 0; c < k; ++c) {
                const double prob = std::exp(logits.at((b * k + c) * hw + p)) / z;
                const double g = lbl == static_cast<int>(c) ? 1.0 : 0.0;
                inter[c] += prob * g;
                ps[c] += prob;
                gs[c] += g;
                if (g == 1.0) ce -= std::log(prob);
            }
        }
    double dice = 0.0;
    for (std::size_t c = 0; c < k; ++c) dice += (2.0 * inter[c] + 1.0) / (ps[c] + gs[c] + 1.0);
    return 0.5 * (1.0 - dice / static_cast<double>(k)) + 0.5 * ce / static_cast<double>(n * hw);
}

std::vector<LabelMap> random_masks(std::size_t n, std::size_t h, std::size_t w, int k, oracle::Rng& rng) {
    std::vector<LabelMap> out;
    for (std::size_t b = 0; b < n; ++b) {
        LabelMap m(h, w);
        for (int& v : m.labels) v = static_cast<int>(rng.next() % static_cast<std::uint64_t>(k));
        out.push_back(m);
    }
    return out;
}

}  // namespace

TEST_CASE("dice_ce_loss value and gradient") {
    oracle::Rng rng(61);
    for (int k : {2, 3}) {
        ParamSet ps;
        const Tensor logits = ps.add("logits", oracle::random_tensor({2, static_cast<std::size_t>(k), 4, 3}, rng, -3, 3));
        const auto masks = random_masks(2, 4, 3, k, rng);
        const Tensor loss = dice_ce_loss(logits, masks);
        CHECK(loss.item() == doctest::Approx(loss_oracle(logits, masks)).epsilon(1e-12));
        CHECK(loss.item() >= 0.0);
        GradCheckOptions o;
        o.samples = 100;
        CHECK(all_pass(finite_diff_check([&] { return dice_ce_loss(logits, masks); }, ps, o)));
    }
}

TEST_CASE("dice_ce_loss rejects malformed inputs") {
    const Tensor logits({1, 2, 3, 3});
    std::vector<LabelMap> good{LabelMap(3, 3)};
    CHECK_THROWS_AS(dice_ce_loss(logits, std::vector<LabelMap>{}), std::invalid_argument);
    CHECK_THROWS_AS(dice_ce_loss(logits, std::vector<LabelMap>{LabelMap(3, 4)}), std::invalid_argument);
    good[0].labels[4] = 2;
    CHECK_THROWS_AS(dice_ce_loss(logits, good), std::invalid_argument);
    good[0].labels[4] = -1;
    CHECK_THROWS_AS(dice_ce_loss(logits, good), std::invalid_argument);
}

TEST_CASE("first Adam step moves every coordinate by lr against the gradient sign") {
    ParamSet ps;
    Tensor w = ps.add("w", Tensor::from({3}, {1.0, 2.0, -1.0}));
    auto g = w.mutable_grad();
    g[0] = 0.3;
    g[1] = -0.02;
    g[2] = 1e-3;
    OptimConfig oc;
    oc.lr = 0.01;
    Optimizer opt(oc);
    opt.step(ps);
    // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
    const double want[3] = {1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 2.0 + 0.01 * 0.02 / (0.02 + 1e-8),
                            -1.0 - 0.01 * 1e-3 / (1e-3 + 1e-8)};
    for (std::size_t i = 0; i < 3; ++i) CHECK(w.at(i) == doctest::Approx(want[i]).epsilon(1e-14));
    CHECK(w.grad()[0] == 0.0);
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("gradient clipping rescales by the global norm") {
    ParamSet ps;
    Tensor a = ps.add("a", Tensor({1}, 0.0));
    Tensor b = ps.add("b", Tensor({1}, 0.0));
    a.mutable_grad()[0] = 30.0;
    b.mutable_grad()[0] = 40.0;
    OptimConfig oc;
    oc.kind = OptimKind::sgd;
    oc.momentum = 0.0;
    oc.lr = 1.0;
    oc.clip_norm = 5.0;
    Optimizer(oc).step(ps);
    CHECK(a.at(0) == doctest::Approx(-3.0).epsilon(1e-14));
    CHECK(b.at(0) == doctest::Approx(-4.0).epsilon(1e-14));

    a.mutable_grad()[0] = 0.3;
    b.mutable_grad()[0] = 0.4;
    Optimizer(oc).step(ps);
    CHECK(a.at(0) == doctest::Approx(-3.3).epsilon(1e-14));
}

TEST_CASE("SGD momentum and weight decay") {
    ParamSet ps;
    Tensor w = ps.add("w", Tensor({1}, 1.0));
    OptimConfig oc;
    oc.kind = OptimKind::sgd;
    oc.lr = 0.1;
    oc.momentum = 0.5;
    oc.weight_decay = 0.2;
    oc.clip_norm = 0.0;
    Optimizer opt(oc);
    w.mutable_grad()[0] = 1.0;
    opt.step(ps);  // v = 1 + 0.2 = 1.2
    CHECK(w.at(0) == doctest::Approx(1.0 - 0.12));
    w.mutable_grad()[0] = 1.0;
    opt.step(ps);  // v = 0.5 * 1.2 + 1 + 0.2 * 0.88
    CHECK(w.at(0) == doctest::Approx(0.88 - 0.1 * (0.6 + 1.0 + 0.176)));
}

TEST_CASE("zero learning rate changes nothing") {
    for (OptimKind kind : {OptimKind::sgd, OptimKind::adam}) {
        ParamSet ps;
        Tensor w = ps.add("w", Tensor::from({2}, {0.5, -0.25}));
        w.mutable_grad()[0] = 3.0;
        w.mutable_grad()[1] = -7.0;
        OptimConfig oc;
        oc.kind = kind;
        oc.lr = 0.0;
        Optimizer(oc).step(ps);
        CHECK(w.at(0) == 0.5);
        CHECK(w.at(1) == -0.25);
    }
}

TEST_CASE("optimizer requires gradients on every parameter") {
    ParamSet ps;
    ps.add("w", Tensor({2}, 1.0));
    Optimizer opt(OptimConfig{});
    CHECK_THROWS_AS(opt.step(ps), std::invalid_argument);
}

TEST_CASE("synthetic data") {
    const auto a = synth_dataset(20, 32, 32, 2, 5);
    const auto b = synth_dataset(20, 32, 32, 2, 5);
    REQUIRE(a.size() == 20);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.shape() == Shape{1, 1, 32, 32});
        CHECK(oracle::bitwise_equal(a[i].image.data(), b[i].image.data()));
        CHECK(a[i].mask == b[i].mask);
        int fg = 0;
        for (int v : a[i].mask.labels) fg += v;
        CHECK(fg > 0);
        CHECK(fg < 32 * 32);
        for (double v : a[i].image.data()) CHECK((v >= 0.0 && v <= 1.0));
    }
    const auto c = synth_dataset(5, 32, 32, 3, 6);
    bool has2 = false;
    for (const auto& s : c)
        for (int v : s.mask.labels) has2 = has2 || v == 2;
    CHECK(has2);
    CHECK_FALSE(synth_dataset(1, 32, 32, 2, 7)[0].mask == synth_dataset(1, 32, 32, 2, 8)[0].mask);
    CHECK_THROWS_AS(synth_dataset(1, 32, 32, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(1, 4, 4, 2, 1), std::invalid_argument);
    CHECK(heldout_seed(1) != 1);
}

TEST_CASE("short training runs are reproducible and healthy") {
    TrainOptions opts;
    opts.steps = 6;
    const auto r1 = train_loop(ModelConfig{}, opts);
    const auto r2 = train_loop(ModelConfig{}, opts);
    REQUIRE(r1.losses.size() == 6);
    CHECK(oracle::bitwise_equal(r1.losses, r2.losses));
    for (double l : r1.losses) CHECK((std::isfinite(l) && l >= 0.0));
    auto it = r2.model.params().begin();
    for (const auto& [n, t] : r1.model.params()) {
        CHECK(oracle::bitwise_equal(t.data(), it->second.data()));
        ++it;
    }
    opts.steps = 0;
    CHECK_THROWS_AS(train_loop(ModelConfig{}, opts), std::invalid_argument);
}

TEST_CASE("evaluate reports foreground classes only") {
    ModelConfig cfg;
    cfg.num_classes = 3;
    const CenetModel m = CenetModel::create(cfg);
    const auto data = synth_dataset(3, 32, 32, 3, 9);
    const EvalReport rep = evaluate(m, data);
    REQUIRE(rep.classes.size() == 2);
    CHECK(rep.classes[0].cls == 1);
    CHECK(rep.classes[1].cls == 2);
    CHECK(rep.samples == 3);
    CHECK((rep.accuracy >= 0.0 && rep.accuracy <= 1.0));
    for (const auto& c : rep.classes) CHECK((c.dice >= 0.0 && c.dice <= 1.0));
}
