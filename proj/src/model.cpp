#include "cenet/model.hpp"

#include <stdexcept>

namespace cenet {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
        fail("input_hw " + std::to_string(height) + "," + std::to_string(width) + " must be positive multiples of 32");
    }
    if (in_channels == 0) fail("in_channels must be positive");
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (heads == 0) fail("heads must be positive");
    for (std::size_t d : dilations) {
        if (d == 0) fail("dilations must be positive");
    }
    for (std::size_t i = 0; i < stage_channels.size(); ++i) {
        const std::size_t c = stage_channels[i];
        try {
            mca_split(c);
        } catch (const std::invalid_argument& e) {
            fail("stage_channels[" + std::to_string(i) + "]: " + e.what());
        }
        if (enable_wnlb && c % 2 != 0) fail("stage_channels[" + std::to_string(i) + "] must be even for wNLB");
        if (i < 3 && enable_diffatt && c % (2 * heads) != 0) {
            fail("stage_channels[" + std::to_string(i) + "] = " + std::to_string(c) + " not divisible by 2*heads");
        }
    }
}

CenetModel CenetModel::create(const ModelConfig& cfg) {
    cfg.validate();
    CenetModel m;
    m.cfg_ = cfg;
    Initializer init(cfg.seed);
    ParamSet& ps = m.params_;
    const auto& ch = cfg.stage_channels;

    ConvOptions down;
    down.stride = 2;
    down.padding = 1;
    m.encoder_[0] = Conv2dLayer::create(ps, init, "enc.stem1", cfg.in_channels, ch[0], 3, down);
    m.encoder_[1] = Conv2dLayer::create(ps, init, "enc.stem2", ch[0], ch[0], 3, down);
    for (std::size_t i = 1; i < 4; ++i) {
        m.encoder_[i + 1] = Conv2dLayer::create(ps, init, "enc.down" + std::to_string(i + 1), ch[i - 1], ch[i], 3, down);
    }

    CfamOptions copts;
    copts.enable_ccu = cfg.enable_ccu;
    copts.enable_wnlb = cfg.enable_wnlb;
    copts.dilations = cfg.dilations;
    DsebOptions dopts;
    dopts.enable_fea = cfg.enable_fea;
    dopts.enable_diffatt = cfg.enable_diffatt;
    dopts.sequential = cfg.dseb_sequential;
    dopts.heads = cfg.heads;

    m.cfam_[3] = CfamParams::create(ps, init, "dec4.cfam", ch[3], copts);
    for (std::size_t i = 3; i-- > 0;) {
        const std::string stage = std::to_string(i + 1);
        m.align_[i] = Conv2dLayer::create(ps, init, "up" + stage + ".align", ch[i + 1], ch[i], 1);
        m.dseb_[i] = DsebParams::create(ps, init, "skip" + stage + ".dseb", ch[i], dopts);
        m.cfam_[i] = CfamParams::create(ps, init, "dec" + stage + ".cfam", ch[i], copts);
    }
    m.head_ = Conv2dLayer::create(ps, init, "head", ch[0], cfg.num_classes, 1);
    return m;
}

std::array<Tensor, 4> CenetModel::encode(const Tensor& image) const {
    if (image.ndim() != 4 || image.dim(1) != cfg_.in_channels) {
        throw std::invalid_argument("encoder_forward: image " + shape_str(image.shape()) + " does not carry " +
                                    std::to_string(cfg_.in_channels) + " channels");
    }
    if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0) {
        throw std::invalid_argument("encoder_forward: spatial extent of " + shape_str(image.shape()) +
                                    " is not divisible by 32");
    }
    std::array<Tensor, 4> feats;
    const Tensor stem = gelu(encoder_[0](image));
    feats[0] = gelu(encoder_[1](stem));
    for (std::size_t i = 1; i < 4; ++i) feats[i] = gelu(encoder_[i + 1](feats[i - 1]));
    return feats;
}

Tensor CenetModel::forward(const Tensor& image, FeatureTaps* taps) const {
    const auto feats = encode(image);
    auto tap = [taps](std::string name, const Tensor& t) {
        if (taps) taps->emplace_back(std::move(name), t);
    };
    for (std::size_t i = 0; i < 4; ++i) tap("enc" + std::to_string(i + 1), feats[i]);

    Tensor dec = cfam_forward(feats[3], cfam_[3]);
    tap("dec4", dec);
    for (std::size_t i = 3; i-- > 0;) {
        const std::string stage = std::to_string(i + 1);
        const Tensor& skip = feats[i];
        const Tensor up = align_[i](resize_to(dec, skip.dim(2), skip.dim(3)));
        tap("up" + stage, up);
        const Tensor fused = dseb_forward(skip, up, dseb_[i]);
        tap("skip" + stage, fused);
        dec = cfam_forward(fused, cfam_[i]);
        tap("dec" + stage, dec);
    }
    const Tensor head = head_(dec);
    tap("head", head);
    return resize_to(head, image.dim(2), image.dim(3));
}

ParamSet init_params(const ModelConfig& cfg) { return CenetModel::create(cfg).params(); }

std::array<Tensor, 4> encoder_forward(const Tensor& image, const CenetModel& model) { return model.encode(image); }

Tensor cenet_forward(const Tensor& image, const CenetModel& model) { return model.forward(image); }

}  // namespace cenet
