#include "cenet/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace cenet {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string pgm_bytes(std::size_t h, std::size_t w, const std::vector<unsigned char>& pixels) {
    std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    s.append(pixels.begin(), pixels.end());
    return s;
}

unsigned char quantize(double v) {
    const double q = std::floor(v * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp(q, 0.0, 255.0));
}

class PgmHeader {
public:
    PgmHeader(const std::vector<unsigned char>& b, const std::string& path) : b_(b), path_(path) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("read_pgm: " + what + " at byte " + std::to_string(pos_) + " of '" + path_ + "'");
    }

    void skip_space() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* field) {
        skip_space();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
            v = v * 10 + (b_[pos_] - '0');
            if (v > (1u << 24)) fail(std::string(field) + " too large");
            ++pos_;
        }
        if (pos_ == start) fail(std::string("expected ") + field);
        return v;
    }

    std::size_t pos_ = 0;

private:
    const std::vector<unsigned char>& b_;
    const std::string& path_;
};

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& b, const std::string& path) : b_(b), path_(path) {}

    template <typename T>
    T get(const std::string& field) {
        need(sizeof(T), field);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::string bytes(std::size_t n, const std::string& field) {
        need(n, field);
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

    void need(std::size_t n, const std::string& field) const {
        if (b_.size() - pos_ < n) {
            throw std::runtime_error("load_checkpoint: truncated " + field + " at byte " + std::to_string(pos_) +
                                     " of '" + path_ + "'");
        }
    }

    bool done() const { return pos_ == b_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& b_;
    const std::string& path_;
    std::size_t pos_ = 0;
};

std::vector<std::pair<std::string, Tensor>> parse_checkpoint(const std::string& path) {
    const auto b = read_file(path);
    Reader r(b, path);
    if (r.bytes(std::min<std::size_t>(4, b.size()), "magic") != "CENT") {
        throw std::runtime_error("load_checkpoint: bad magic in '" + path + "'");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != 1) {
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version) + " in '" + path +
                                 "'");
    }
    const auto count = r.get<std::uint32_t>("tensor count");
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::string idx = "tensor " + std::to_string(t);
        const auto len = r.get<std::uint16_t>(idx + " name length");
        std::string name = r.bytes(len, idx + " name");
        const auto ndim = r.get<std::uint8_t>(idx + " ndim");
        if (ndim == 0) throw std::runtime_error("load_checkpoint: " + idx + " ('" + name + "') has ndim 0");
        Shape shape;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const auto e = r.get<std::uint32_t>(idx + " dims");
            if (e == 0) throw std::runtime_error("load_checkpoint: " + idx + " ('" + name + "') has a zero extent");
            shape.push_back(e);
        }
        const std::size_t n = numel(shape);
        if (n > (b.size() - r.pos()) / 8) r.need(n * 8, idx + " data");
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(r.get<std::uint64_t>(idx + " data"));
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!r.done()) {
        throw std::runtime_error("load_checkpoint: " + std::to_string(b.size() - r.pos()) +
                                 " trailing bytes after tensor data in '" + path + "'");
    }
    return out;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    const auto b = read_file(path);
    PgmHeader hdr(b, path);
    if (b.size() < 2 || b[0] != 'P' || b[1] != '5') hdr.fail("missing P5 magic");
    hdr.pos_ = 2;
    const std::size_t w = hdr.number("width");
    const std::size_t h = hdr.number("height");
    const std::size_t maxval = hdr.number("maxval");
    if (w == 0 || h == 0) hdr.fail("zero image extent");
    if (maxval != 255) hdr.fail("maxval " + std::to_string(maxval) + " (only 255 supported)");
    if (hdr.pos_ >= b.size() || !std::isspace(b[hdr.pos_])) hdr.fail("expected whitespace after maxval");
    ++hdr.pos_;
    if (b.size() - hdr.pos_ < h * w) {
        hdr.pos_ = b.size();
        hdr.fail("truncated pixel data (" + std::to_string(h * w) + " bytes expected)");
    }
    std::vector<double> data(h * w);
    for (std::size_t i = 0; i < h * w; ++i) data[i] = static_cast<double>(b[hdr.pos_ + i]) / 255.0;
    return Tensor({1, 1, h, w}, std::move(data));
}

void write_pgm(const std::string& path, const Tensor& image) {
    if (image.ndim() != 4 || image.dim(0) != 1 || image.dim(1) != 1) {
        throw std::invalid_argument("write_pgm: expected 1x1xHxW, got " + shape_str(image.shape()));
    }
    const auto d = image.data();
    std::vector<unsigned char> px(d.size());
    std::transform(d.begin(), d.end(), px.begin(), quantize);
    write_file(path, pgm_bytes(image.dim(2), image.dim(3), px));
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
    std::string out = "CENT";
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        if (name.size() > 0xFFFF) throw std::invalid_argument("save_checkpoint: name too long: " + name);
        if (t.ndim() > 0xFF) throw std::invalid_argument("save_checkpoint: too many dims in " + name);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
        for (std::size_t e : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
        for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    write_file(path, out);
}

ParamSet read_checkpoint(const std::string& path) {
    ParamSet ps;
    for (auto& [name, t] : parse_checkpoint(path)) ps.add(name, t);
    return ps;
}

void load_checkpoint(const std::string& path, ParamSet& params) {
    const ParamSet loaded = read_checkpoint(path);
    try {
        params.assign_from(loaded);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("load_checkpoint: '" + path + "' does not match the model: " + e.what());
    }
}

void dump_features(const std::string& path, const Tensor& features, DumpMode mode) {
    if (features.ndim() != 4) {
        throw std::invalid_argument("dump_features: expected NxCxHxW, got " + shape_str(features.shape()));
    }
    const std::size_t n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
    const auto d = features.data();
    if (mode == DumpMode::csv) {
        std::string out = "n,c,y,x,value\n";
        char buf[64];
        std::size_t i = 0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x, ++i) {
                        out += std::to_string(b) + ',' + std::to_string(ch) + ',' + std::to_string(y) + ',' +
                               std::to_string(x) + ',';
                        const auto res = std::to_chars(buf, buf + sizeof buf, d[i]);
                        out.append(buf, res.ptr);
                        out += '\n';
                    }
        write_file(path, out);
        return;
    }
    const std::size_t tiles = n * c;
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(tiles))));
    const std::size_t rows = (tiles + cols - 1) / cols;
    const std::size_t gw = cols * w, gh = rows * h;
    std::vector<unsigned char> px(gw * gh, 0);
    for (std::size_t t = 0; t < tiles; ++t) {
        const auto map = d.subspan(t * h * w, h * w);
        const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
        const double range = *hi - *lo;
        const std::size_t oy = (t / cols) * h, ox = (t % cols) * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double v = range > 0.0 ? (map[y * w + x] - *lo) / range : 0.0;
                px[(oy + y) * gw + ox + x] = quantize(v);
            }
    }
    write_file(path, pgm_bytes(gh, gw, px));
}

}  // namespace cenet
