#include "doctest.h"

#include <stdexcept>

#include "cenet/kernels.hpp"
#include "cenet/model.hpp"
#include "oracles.hpp"

using namespace cenet;

TEST_CASE("parameter count matches the closed form") {
    std::vector<ModelConfig> cfgs(1);
    for (int mask = 0; mask < 16; ++mask) {
        ModelConfig c;
        c.enable_fea = mask & 1;
        c.enable_diffatt = mask & 2;
        c.enable_wnlb = mask & 4;
        c.enable_ccu = mask & 8;
        cfgs.push_back(c);
    }
    ModelConfig odd;
    odd.stage_channels = {20, 32, 40, 64};
    odd.in_channels = 3;
    odd.num_classes = 4;
    odd.heads = 1;
    cfgs.push_back(odd);
    for (const auto& cfg : cfgs) {
        INFO(format_config(cfg));
        CHECK(param_count(init_params(cfg)) == oracle::param_count(cfg));
    }
}

TEST_CASE("forward shapes and feature taps") {
    ModelConfig cfg;
    cfg.height = 64;
    cfg.width = 32;
    cfg.num_classes = 3;
    const CenetModel m = CenetModel::create(cfg);
    oracle::Rng rng(51);
    const Tensor img = oracle::random_tensor({1, 1, 64, 32}, rng, 0.0, 1.0);
    FeatureTaps taps;
    const Tensor logits = m.forward(img, &taps);
    CHECK(logits.shape() == Shape{1, 3, 64, 32});
    std::vector<std::string> names;
    for (const auto& [n, t] : taps) names.push_back(n);
    CHECK(names == std::vector<std::string>{"enc1", "enc2", "enc3", "enc4", "dec4", "up3", "skip3", "dec3", "up2",
                                            "skip2", "dec2", "up1", "skip1", "dec1", "head"});
    CHECK(taps[0].second.shape() == Shape{1, 16, 16, 8});
    CHECK(taps[3].second.shape() == Shape{1, 128, 2, 1});
    CHECK(taps[14].second.shape() == Shape{1, 3, 16, 8});
    const auto enc = encoder_forward(img, m);
    CHECK(enc[2].shape() == Shape{1, 64, 4, 2});
    CHECK_THROWS_AS(m.forward(Tensor({1, 2, 64, 32})), std::invalid_argument);
    CHECK_THROWS_AS(m.forward(Tensor({1, 1, 48, 32})), std::invalid_argument);
}

TEST_CASE("construction and forward are deterministic and backend independent") {
    ModelConfig cfg;
    cfg.seed = 9;
    const CenetModel a = CenetModel::create(cfg), b = CenetModel::create(cfg);
    auto ia = a.params().begin();
    for (const auto& [n, t] : b.params()) {
        CHECK(n == ia->first);
        CHECK(oracle::bitwise_equal(t.data(), ia->second.data()));
        ++ia;
    }
    oracle::Rng rng(52);
    const Tensor img = oracle::random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
    const auto saved = kernels::backend();
    kernels::set_backend(kernels::Backend::serial);
    const Tensor ys = cenet_forward(img, a);
    kernels::set_backend(kernels::Backend::parallel);
    const Tensor yp = cenet_forward(img, b);
    kernels::set_backend(saved);
    CHECK(oracle::bitwise_equal(ys.data(), yp.data()));

    cfg.seed = 10;
    const CenetModel c = CenetModel::create(cfg);
    CHECK_FALSE(oracle::bitwise_equal(c.params().at("head.weight").data(), a.params().at("head.weight").data()));
}

TEST_CASE("batch entries are independent") {
    const CenetModel m = CenetModel::create(ModelConfig{});
    oracle::Rng rng(53);
    const Tensor img = oracle::random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
    const Tensor one(Shape{1, 1, 32, 32}, std::vector<double>(img.data().begin() + 1024, img.data().end()));
    const Tensor both = m.forward(img), single = m.forward(one);
    CHECK(oracle::max_abs_diff(both.data().subspan(2 * 1024), single.data()) <= 1e-12);
}

TEST_CASE("config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.height = 40;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.stage_channels = {14, 32, 64, 128};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.stage_channels = {13, 32, 64, 128};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // odd channels need wNLB off
    c.enable_wnlb = false;
    c.enable_diffatt = false;
    CHECK_NOTHROW(c.validate());
    c = {};
    c.num_classes = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("config text round trip and errors") {
    ModelConfig c;
    c.height = 64;
    c.num_classes = 3;
    c.enable_wnlb = false;
    c.dseb_sequential = true;
    c.seed = 77;
    c.dilations = {1, 2, 4};
    CHECK(parse_config(format_config(c)) == c);
    const ModelConfig d = parse_config("# comment\n  seed = 5  \n\ninput_hw=32,64 # trailing\n");
    CHECK(d.seed == 5);
    CHECK(d.width == 64);
    CHECK_THROWS_WITH_AS(parse_config("seed=1\nbogus=2\n"), doctest::Contains("line 2"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("seed=-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("enable_fea=maybe"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("stage_channels=16,32"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("novalue"), std::invalid_argument);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.txt"), std::runtime_error);
}
