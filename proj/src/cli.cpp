#include "cenet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "cenet/audit.hpp"
#include "cenet/io.hpp"
#include "cenet/train.hpp"

namespace cenet {

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

ModelConfig config_from(const std::string& path) { return path.empty() ? ModelConfig{} : load_config(path); }

Tensor load_image(const std::string& path, const ModelConfig& cfg) {
    Tensor img = read_pgm(path);
    if (cfg.in_channels != 1) throw std::runtime_error("PGM input requires in_channels=1");
    if (img.dim(2) != cfg.height || img.dim(3) != cfg.width) {
        throw std::runtime_error("input '" + path + "' is " + std::to_string(img.dim(2)) + "x" +
                                 std::to_string(img.dim(3)) + ", config expects " + std::to_string(cfg.height) + "x" +
                                 std::to_string(cfg.width));
    }
    return img;
}

CenetModel build_model(const ModelConfig& cfg, const std::string& ckpt) {
    CenetModel m = CenetModel::create(cfg);
    if (!ckpt.empty()) load_checkpoint(ckpt, m.params());
    return m;
}

std::uint64_t parse_synth_spec(const std::string& spec) {
    constexpr std::string_view prefix = "synth:";
    if (spec.rfind(prefix, 0) != 0) throw std::runtime_error("--data must look like synth:SEED, got '" + spec + "'");
    std::uint64_t seed = 0;
    const char* b = spec.data() + prefix.size();
    const char* e = spec.data() + spec.size();
    const auto res = std::from_chars(b, e, seed);
    if (res.ec != std::errc{} || res.ptr != e || b == e) {
        throw std::runtime_error("--data seed is not an unsigned integer: '" + spec + "'");
    }
    return seed;
}

std::string report_csv(const EvalReport& rep) {
    std::string s = "class,dsc,hd95,hd95_defined,acc\n";
    for (const auto& c : rep.classes) {
        s += std::to_string(c.cls) + ',' + fmt(c.dice) + ',' + fmt(c.hd95) + ',' + std::to_string(c.hd95_defined) +
             ',' + fmt(rep.accuracy) + '\n';
    }
    return s;
}

OptimConfig optim_from(const std::string& kind, double lr) {
    OptimConfig o;
    if (kind == "sgd") {
        o.kind = OptimKind::sgd;
    } else if (kind != "adam") {
        throw std::runtime_error("--opt must be sgd or adam, got '" + kind + "'");
    }
    if (lr > 0.0) o.lr = lr;
    return o;
}

struct AblationRow {
    bool fea, diffatt, wnlb, ccu;
};

// Toggle rows (FEA, DiffAtt, wNLB, CCU), from everything off to everything on.
constexpr std::array<AblationRow, 5> kAblationRows{{
    {false, false, false, false},
    {true, false, true, false},
    {true, true, false, false},
    {true, true, true, false},
    {true, true, true, true},
}};

const char* yn(bool b) { return b ? "Y" : "N"; }

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CENet segmentation toolkit", "cenet"};
    app.require_subcommand(1);

    std::string config_path;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value model config (defaults when omitted)")
            ->check(CLI::ExistingFile);
    };

    std::string input, out_path, ckpt, trace, tap, mode = "csv", data = "synth:1000", block = "all", opt = "adam";
    std::size_t steps = 200, samples = 32;
    std::optional<std::uint64_t> seed;
    double tol = 1e-4, h = 1e-5, lr = 0.0;

    auto* fwd = app.add_subcommand("forward", "Run one inference pass and write the logits as CSV");
    add_config(fwd);
    fwd->add_option("--input", input, "P5 PGM image")->required()->check(CLI::ExistingFile);
    fwd->add_option("--out", out_path, "logits CSV")->required();
    fwd->add_option("--ckpt", ckpt, "checkpoint to load")->check(CLI::ExistingFile);

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference audit of a block or the model");
    add_config(grad);
    grad->add_option("--block", block, "fea|diffatt|dseb|ccu|mca|wnlb|srm|cfam|cfam13|model|all");
    grad->add_option("--tol", tol, "relative tolerance");
    grad->add_option("--step", h, "central difference step h");
    grad->add_option("--seed", seed, "audit seed (config seed when omitted)");

    auto* tr = app.add_subcommand("train", "Train on synthetic data and save a checkpoint");
    add_config(tr);
    tr->add_option("--steps", steps, "optimizer steps");
    tr->add_option("--out", out_path, "checkpoint path")->required();
    tr->add_option("--trace", trace, "loss trace CSV (step,loss)");
    tr->add_option("--lr", lr, "learning rate");
    tr->add_option("--opt", opt, "sgd|adam");
    tr->add_option("--seed", seed, "model and data seed (config seed when omitted)");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on synthetic data");
    add_config(ev);
    ev->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "synth:SEED");
    ev->add_option("--samples", samples, "number of samples");
    ev->add_option("--report", out_path, "metrics CSV (stdout when omitted)");

    auto* ab = app.add_subcommand("ablate", "Train and evaluate the five component rows");
    add_config(ab);
    ab->add_option("--steps", steps, "optimizer steps per row");
    ab->add_option("--out", out_path, "output directory")->required();
    ab->add_option("--samples", samples, "held-out samples per row");
    ab->add_option("--seed", seed, "model and data seed (config seed when omitted)");

    auto* dump = app.add_subcommand("dump-features", "Export one intermediate feature map");
    add_config(dump);
    dump->add_option("--input", input, "P5 PGM image")->required()->check(CLI::ExistingFile);
    dump->add_option("--tap", tap, "feature name, see `info`")->required();
    dump->add_option("--mode", mode, "csv|pgm-grid");
    dump->add_option("--out", out_path, "output file")->required();
    dump->add_option("--ckpt", ckpt, "checkpoint to load")->check(CLI::ExistingFile);

    auto* info = app.add_subcommand("info", "Print parameter count and feature shapes");
    add_config(info);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "cenet: " << msg << "\n";
        return 2;
    }

    try {
        ModelConfig cfg = config_from(config_path);
        if (seed) cfg.seed = *seed;

        if (fwd->parsed()) {
            const CenetModel m = build_model(cfg, ckpt);
            NoGradGuard g;
            dump_features(out_path, m.forward(load_image(input, cfg)), DumpMode::csv);
            out << "wrote logits to " << out_path << "\n";
            return 0;
        }

        if (grad->parsed()) {
            GradCheckOptions gopts;
            gopts.tol_rel = tol;
            gopts.h = h;
            std::vector<AuditTarget> targets;
            if (block == "all") {
                targets = all_audit_targets();
            } else if (auto t = parse_audit_target(block)) {
                targets.push_back(*t);
            } else {
                throw std::runtime_error("unknown --block '" + block + "'");
            }
            bool ok = true;
            for (AuditTarget t : targets) {
                AuditCase c = t == AuditTarget::model && !config_path.empty() ? make_model_audit(cfg)
                                                                              : make_audit(t, cfg.seed);
                const auto reports = run_audit(c, gopts);
                out << "== " << c.name << "\n";
                print_reports(out, reports);
                ok = ok && all_pass(reports);
            }
            out << (ok ? "PASS" : "FAIL") << "\n";
            return ok ? 0 : 1;
        }

        if (tr->parsed()) {
            TrainOptions topts;
            topts.steps = steps;
            topts.optim = optim_from(opt, lr);
            topts.data_seed = cfg.seed;
            const TrainResult res = train_loop(cfg, topts);
            save_checkpoint(out_path, res.model.params());
            if (!trace.empty()) {
                std::string s = "step,loss\n";
                for (std::size_t i = 0; i < res.losses.size(); ++i) {
                    s += std::to_string(i) + ',' + fmt(res.losses[i]) + '\n';
                }
                write_text(trace, s);
            }
            out << "trained " << steps << " steps, final loss " << fmt(res.losses.back()) << ", checkpoint "
                << out_path << "\n";
            return 0;
        }

        if (ev->parsed()) {
            const CenetModel m = build_model(cfg, ckpt);
            const auto set = synth_dataset(samples, cfg.height, cfg.width, cfg.num_classes, parse_synth_spec(data));
            const std::string csv = report_csv(evaluate(m, set));
            if (out_path.empty()) {
                out << csv;
            } else {
                write_text(out_path, csv);
                out << "wrote metrics to " << out_path << "\n";
            }
            return 0;
        }

        if (ab->parsed()) {
            std::filesystem::create_directories(out_path);
            std::string csv = "fea,diffatt,wnlb,ccu,params,final_loss,dsc,hd95,acc\n";
            TrainOptions topts;
            topts.steps = steps;
            topts.data_seed = cfg.seed;
            const auto held = synth_dataset(samples, cfg.height, cfg.width, cfg.num_classes, heldout_seed(cfg.seed));
            for (const AblationRow& r : kAblationRows) {
                ModelConfig rc = cfg;
                rc.enable_fea = r.fea;
                rc.enable_diffatt = r.diffatt;
                rc.enable_wnlb = r.wnlb;
                rc.enable_ccu = r.ccu;
                const TrainResult res = train_loop(rc, topts);
                const EvalReport rep = evaluate(res.model, held);
                double dsc = 0.0, hd = 0.0;
                for (const auto& c : rep.classes) {
                    dsc += c.dice;
                    hd += c.hd95;
                }
                dsc /= static_cast<double>(rep.classes.size());
                hd /= static_cast<double>(rep.classes.size());
                csv += std::string(yn(r.fea)) + ',' + yn(r.diffatt) + ',' + yn(r.wnlb) + ',' + yn(r.ccu) + ',' +
                       std::to_string(param_count(res.model.params())) + ',' + fmt(res.losses.back()) + ',' +
                       fmt(dsc) + ',' + fmt(hd) + ',' + fmt(rep.accuracy) + '\n';
                out << "row " << yn(r.fea) << yn(r.diffatt) << yn(r.wnlb) << yn(r.ccu) << " dsc " << fmt(dsc) << "\n";
            }
            const std::string path = (std::filesystem::path(out_path) / "ablation.csv").string();
            write_text(path, csv);
            out << "wrote " << path << "\n";
            return 0;
        }

        if (dump->parsed()) {
            DumpMode dm;
            if (mode == "csv") {
                dm = DumpMode::csv;
            } else if (mode == "pgm-grid") {
                dm = DumpMode::pgm_grid;
            } else {
                throw std::runtime_error("--mode must be csv or pgm-grid, got '" + mode + "'");
            }
            const CenetModel m = build_model(cfg, ckpt);
            NoGradGuard g;
            FeatureTaps taps;
            m.forward(load_image(input, cfg), &taps);
            const auto it = std::find_if(taps.begin(), taps.end(), [&](const auto& t) { return t.first == tap; });
            if (it == taps.end()) {
                std::string names;
                for (const auto& t : taps) names += (names.empty() ? "" : ",") + t.first;
                throw std::runtime_error("unknown --tap '" + tap + "' (available: " + names + ")");
            }
            dump_features(out_path, it->second, dm);
            out << "wrote " << tap << " " << shape_str(it->second.shape()) << " to " << out_path << "\n";
            return 0;
        }

        if (info->parsed()) {
            const CenetModel m = CenetModel::create(cfg);
            out << "param_count=" << param_count(m.params()) << "\n";
            NoGradGuard g;
            FeatureTaps taps;
            m.forward(Tensor({1, cfg.in_channels, cfg.height, cfg.width}), &taps);
            for (const auto& [name, t] : taps) out << name << " " << shape_str(t.shape()) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "cenet: error: " << msg << "\n";
        return 1;
    }
    return 1;
}

}  // namespace cenet
