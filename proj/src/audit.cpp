#include "cenet/audit.hpp"

#include <array>
#include <memory>
#include <stdexcept>

#include "cenet/cfam.hpp"
#include "cenet/dseb.hpp"

namespace cenet {

namespace {

constexpr std::array<std::pair<AuditTarget, std::string_view>, 10> kNames{{
    {AuditTarget::fea, "fea"},
    {AuditTarget::diffatt, "diffatt"},
    {AuditTarget::dseb, "dseb"},
    {AuditTarget::ccu, "ccu"},
    {AuditTarget::mca, "mca"},
    {AuditTarget::wnlb, "wnlb"},
    {AuditTarget::srm, "srm"},
    {AuditTarget::cfam, "cfam"},
    {AuditTarget::cfam13, "cfam13"},
    {AuditTarget::model, "model"},
}};

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void perturb(const ParamSet& ps, SplitMix64& rng, double jitter) {
    for (const auto& [name, t] : ps) {
        Tensor p = t;
        const bool weight = ends_with(name, ".lambda") || ends_with(name, ".gamma");
        for (double& v : p.mutable_data()) v = weight ? rng.uniform(0.3, 0.9) : v + rng.uniform(-jitter, jitter);
    }
}

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo, double hi) {
    std::vector<double> d(numel(shape));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(d));
}

// Builds the case around a block forward `fwd` taking the input tensor.
AuditCase block_case(std::string name, ParamSet ps, SplitMix64& rng, Shape in_shape,
                     std::function<Tensor(const Tensor&)> fwd) {
    perturb(ps, rng, 0.25);
    Tensor x = ps.add("input", random_tensor(in_shape, rng, -1.0, 1.0));
    Tensor probe;
    {
        NoGradGuard g;
        probe = fwd(x);
    }
    const Tensor proj = random_tensor(probe.shape(), rng, -1.0, 1.0);
    AuditCase c{std::move(name), std::move(ps), {}};
    c.loss = [x, proj, fwd = std::move(fwd)] { return sum(mul(fwd(x), proj)); };
    return c;
}

}  // namespace

std::string_view audit_name(AuditTarget t) {
    for (const auto& [k, n] : kNames)
        if (k == t) return n;
    return "?";
}

std::optional<AuditTarget> parse_audit_target(std::string_view name) {
    for (const auto& [k, n] : kNames)
        if (n == name) return k;
    return std::nullopt;
}

const std::vector<AuditTarget>& all_audit_targets() {
    static const std::vector<AuditTarget> all = [] {
        std::vector<AuditTarget> v;
        for (const auto& [k, n] : kNames) v.push_back(k);
        return v;
    }();
    return all;
}

ModelConfig audit_model_config(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.stage_channels = {16, 16, 16, 16};
    cfg.seed = seed;
    return cfg;
}

AuditCase make_model_audit(const ModelConfig& cfg) {
    cfg.validate();
    auto model = std::make_shared<CenetModel>(CenetModel::create(cfg));
    SplitMix64 rng(cfg.seed ^ 0xA0D17ULL);
    perturb(model->params(), rng, 0.02);
    ParamSet ps;
    for (const auto& [name, t] : model->params()) ps.add(name, t);
    Tensor image = ps.add("image", random_tensor({1, cfg.in_channels, cfg.height, cfg.width}, rng, 0.0, 1.0));
    AuditCase c{"model", std::move(ps), {}};
    c.loss = [model, image] { return sum(model->forward(image)); };
    return c;
}

AuditCase make_audit(AuditTarget t, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Initializer init(seed);
    ParamSet ps;
    const std::string name(audit_name(t));
    switch (t) {
        case AuditTarget::fea: {
            auto p = FeaParams::create(ps, "fea", 8);
            return block_case(name, std::move(ps), rng, {1, 8, 6, 6}, [p](const Tensor& x) { return fea_forward(x, p); });
        }
        case AuditTarget::diffatt: {
            auto p = DiffAttParams::create(ps, init, "datt", 8, 2);
            return block_case(name, std::move(ps), rng, {1, 8, 4, 4},
                              [p](const Tensor& x) { return diff_attention(x, p); });
        }
        case AuditTarget::dseb: {
            auto p = DsebParams::create(ps, init, "dseb", 4, DsebOptions{});
            Tensor dec = ps.add("dec_up", Tensor({1, 4, 4, 4}));
            for (double& v : dec.mutable_data()) v = rng.uniform(-1.0, 1.0);
            return block_case(name, std::move(ps), rng, {1, 4, 4, 4},
                              [p, dec](const Tensor& x) { return dseb_forward(x, dec, p); });
        }
        case AuditTarget::ccu: {
            auto p = CcuParams::create(ps, init, "ccu", 16);
            return block_case(name, std::move(ps), rng, {1, 16, 6, 6}, [p](const Tensor& x) { return ccu_forward(x, p); });
        }
        case AuditTarget::mca: {
            auto p = McaParams::create(ps, init, "mca", 16, {3, 5, 8});
            return block_case(name, std::move(ps), rng, {1, 16, 6, 6},
                              [p](const Tensor& x) { return mca_forward(x, x, p); });
        }
        case AuditTarget::wnlb: {
            auto p = WnlbParams::create(ps, init, "wnlb", 16);
            return block_case(name, std::move(ps), rng, {1, 16, 6, 6},
                              [p](const Tensor& x) { return wnlb_forward(x, p); });
        }
        case AuditTarget::srm: {
            auto p = SrmParams::create(ps, init, "srm");
            return block_case(name, std::move(ps), rng, {1, 16, 6, 6}, [p](const Tensor& x) { return srm_forward(x, p); });
        }
        case AuditTarget::cfam: {
            auto p = CfamParams::create(ps, init, "cfam", 16, CfamOptions{});
            return block_case(name, std::move(ps), rng, {1, 16, 6, 6},
                              [p](const Tensor& x) { return cfam_forward(x, p); });
        }
        case AuditTarget::cfam13: {
            CfamOptions opts;
            opts.enable_wnlb = false;
            auto p = CfamParams::create(ps, init, "cfam", 13, opts);
            return block_case(name, std::move(ps), rng, {1, 13, 6, 6},
                              [p](const Tensor& x) { return cfam_forward(x, p); });
        }
        case AuditTarget::model:
            return make_model_audit(audit_model_config(seed));
    }
    throw std::invalid_argument("make_audit: unknown target");
}

std::vector<GradReport> run_audit(const AuditCase& c, const GradCheckOptions& opts) {
    return finite_diff_check(c.loss, c.params, opts);
}

}  // namespace cenet
