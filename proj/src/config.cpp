#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cenet/model.hpp"

namespace cenet {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(std::size_t line, const std::string& msg) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + msg);
}

std::uint64_t parse_uint(std::string_view s, std::size_t line, std::string_view key) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        bad(line, "'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::size_t> parse_list(std::string_view s, std::size_t expected, std::size_t line,
                                    std::string_view key) {
    std::vector<std::size_t> out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(static_cast<std::size_t>(parse_uint(s.substr(0, comma), line, key)));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    if (out.size() != expected) {
        bad(line, "'" + std::string(key) + "' expects " + std::to_string(expected) + " comma-separated values");
    }
    return out;
}

bool parse_bool(std::string_view s, std::size_t line, std::string_view key) {
    s = trim(s);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    bad(line, "'" + std::string(key) + "' expects true or false, got '" + std::string(s) + "'");
}

}  // namespace

ModelConfig parse_config(std::string_view text) {
    ModelConfig cfg;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) bad(line_no, "expected key=value, got '" + std::string(line) + "'");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));

        if (key == "input_hw") {
            const auto v = parse_list(value, 2, line_no, key);
            cfg.height = v[0];
            cfg.width = v[1];
        } else if (key == "in_channels") {
            cfg.in_channels = parse_uint(value, line_no, key);
        } else if (key == "num_classes") {
            cfg.num_classes = parse_uint(value, line_no, key);
        } else if (key == "stage_channels") {
            const auto v = parse_list(value, 4, line_no, key);
            std::copy(v.begin(), v.end(), cfg.stage_channels.begin());
        } else if (key == "dilations") {
            const auto v = parse_list(value, 3, line_no, key);
            std::copy(v.begin(), v.end(), cfg.dilations.begin());
        } else if (key == "heads") {
            cfg.heads = parse_uint(value, line_no, key);
        } else if (key == "seed") {
            cfg.seed = parse_uint(value, line_no, key);
        } else if (key == "enable_fea") {
            cfg.enable_fea = parse_bool(value, line_no, key);
        } else if (key == "enable_diffatt") {
            cfg.enable_diffatt = parse_bool(value, line_no, key);
        } else if (key == "enable_wnlb") {
            cfg.enable_wnlb = parse_bool(value, line_no, key);
        } else if (key == "enable_ccu") {
            cfg.enable_ccu = parse_bool(value, line_no, key);
        } else if (key == "dseb_sequential") {
            cfg.dseb_sequential = parse_bool(value, line_no, key);
        } else {
            bad(line_no, "unknown key '" + std::string(key) + "'");
        }
    }
    cfg.validate();
    return cfg;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const ModelConfig& cfg) {
    auto b = [](bool v) { return v ? "true" : "false"; };
    std::ostringstream os;
    os << "input_hw=" << cfg.height << "," << cfg.width << "\n"
       << "in_channels=" << cfg.in_channels << "\n"
       << "num_classes=" << cfg.num_classes << "\n"
       << "stage_channels=" << cfg.stage_channels[0] << "," << cfg.stage_channels[1] << ","
       << cfg.stage_channels[2] << "," << cfg.stage_channels[3] << "\n"
       << "enable_fea=" << b(cfg.enable_fea) << "\n"
       << "enable_diffatt=" << b(cfg.enable_diffatt) << "\n"
       << "enable_wnlb=" << b(cfg.enable_wnlb) << "\n"
       << "enable_ccu=" << b(cfg.enable_ccu) << "\n"
       << "dilations=" << cfg.dilations[0] << "," << cfg.dilations[1] << "," << cfg.dilations[2] << "\n"
       << "heads=" << cfg.heads << "\n"
       << "seed=" << cfg.seed << "\n"
       << "dseb_sequential=" << b(cfg.dseb_sequential) << "\n";
    return os.str();
}

}  // namespace cenet
