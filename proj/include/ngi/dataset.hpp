#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/rng.hpp"
#include "ngi/tensor.hpp"

namespace ngi {

struct Dataset {
    Tensor images;  // (N,C,H,W), values in [0,1]
    std::vector<std::size_t> labels;
    std::size_t classes = 0;

    std::size_t size() const { return labels.size(); }

    Dataset slice(std::size_t begin, std::size_t count) const {
        if (begin + count > size()) throw std::invalid_argument("slice out of range");
        std::size_t per = images.numel() / size();
        Shape sh = images.shape();
        sh[0] = count;
        std::vector<double> v(images.value().begin() + begin * per,
                              images.value().begin() + (begin + count) * per);
        Dataset out;
        out.images = Tensor(sh, std::move(v));
        out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
        out.classes = classes;
        return out;
    }

    Dataset select(const std::vector<std::size_t>& idx) const {
        std::size_t per = images.numel() / size();
        Shape sh = images.shape();
        sh[0] = idx.size();
        std::vector<double> v;
        v.reserve(idx.size() * per);
        Dataset out;
        for (std::size_t i : idx) {
            v.insert(v.end(), images.value().begin() + i * per, images.value().begin() + (i + 1) * per);
            out.labels.push_back(labels[i]);
        }
        out.images = Tensor(sh, std::move(v));
        out.classes = classes;
        return out;
    }
};

// ---------------------------------------------------------------------------
// IDX files (big-endian magic 0x00000803 for images, 0x00000801 for labels)
// ---------------------------------------------------------------------------

namespace idx {

inline std::uint32_t read_be32(std::istream& in, std::size_t& offset, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw std::runtime_error("IDX: truncated while reading " + what + " at offset " + std::to_string(offset));
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

inline Dataset load(const std::string& image_path, const std::string& label_path, std::size_t classes) {
    std::ifstream imgf(image_path, std::ios::binary);
    if (!imgf) throw std::runtime_error("IDX: cannot open " + image_path);
    std::size_t off = 0;
    std::uint32_t magic = read_be32(imgf, off, "image magic");
    if (magic != 0x00000803u)
        throw std::runtime_error("IDX: bad image magic 0x" + std::to_string(magic) + " at offset 0 in " + image_path);
    std::uint32_t n = read_be32(imgf, off, "image count");
    std::uint32_t h = read_be32(imgf, off, "image rows");
    std::uint32_t w = read_be32(imgf, off, "image cols");
    std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
    imgf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(imgf.gcount()) != raw.size())
        throw std::runtime_error("IDX: " + image_path + " truncated: expected " + std::to_string(raw.size()) +
                                 " pixel bytes, found " + std::to_string(imgf.gcount()));

    std::ifstream labf(label_path, std::ios::binary);
    if (!labf) throw std::runtime_error("IDX: cannot open " + label_path);
    std::size_t loff = 0;
    std::uint32_t lmagic = read_be32(labf, loff, "label magic");
    if (lmagic != 0x00000801u)
        throw std::runtime_error("IDX: bad label magic 0x" + std::to_string(lmagic) + " at offset 0 in " + label_path);
    std::uint32_t ln = read_be32(labf, loff, "label count");
    if (ln != n)
        throw std::runtime_error("IDX: label count " + std::to_string(ln) + " does not match image count " +
                                 std::to_string(n));
    std::vector<unsigned char> labraw(ln);
    labf.read(reinterpret_cast<char*>(labraw.data()), static_cast<std::streamsize>(ln));
    if (static_cast<std::size_t>(labf.gcount()) != ln)
        throw std::runtime_error("IDX: " + label_path + " truncated: expected " + std::to_string(ln) +
                                 " label bytes, found " + std::to_string(labf.gcount()));

    Dataset out;
    out.classes = classes;
    std::vector<double> v(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) v[i] = raw[i] / 255.0;
    out.images = Tensor({n, 1, h, w}, std::move(v));
    out.labels.reserve(ln);
    for (unsigned char l : labraw) {
        if (l >= classes)
            throw std::runtime_error("IDX: label " + std::to_string(l) + " exceeds class count " + std::to_string(classes));
        out.labels.push_back(l);
    }
    return out;
}

}  // namespace idx

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::string kind = "glyphs";  // glyphs | blobs
    std::size_t classes = 10;
    std::size_t count = 1000;
    std::uint64_t seed = 0;
    double noise = 0.30;  // pixel noise stddev
};

namespace detail {

// 5x7 digit glyph bitmaps, one per class.
inline const std::array<const char*, 10>& glyph_rows() {
    static const std::array<const char*, 10> g = {
        "01110" "10001" "10011" "10101" "11001" "10001" "01110",
        "00100" "01100" "00100" "00100" "00100" "00100" "01110",
        "01110" "10001" "00001" "00010" "00100" "01000" "11111",
        "11111" "00010" "00100" "00010" "00001" "10001" "01110",
        "00010" "00110" "01010" "10010" "11111" "00010" "00010",
        "11111" "10000" "11110" "00001" "00001" "10001" "01110",
        "00110" "01000" "10000" "11110" "10001" "10001" "01110",
        "11111" "00001" "00010" "00100" "01000" "01000" "01000",
        "01110" "10001" "10001" "01110" "10001" "10001" "01110",
        "01110" "10001" "10001" "01111" "00001" "00010" "01100",
    };
    return g;
}

}  // namespace detail

// Digit-glyph images on a 28x28 canvas: per-image random placement, stroke
// intensity, and additive pixel noise. Sample i of a given spec is the same
// regardless of how many samples are requested.
inline Dataset synthetic_glyphs(const SyntheticSpec& spec) {
    if (spec.classes < 2 || spec.classes > 10)
        throw std::invalid_argument("glyphs: classes must be in [2,10]");
    const std::size_t H = 28, W = 28, scale = 3;  // glyph occupies 15x21
    Dataset out;
    out.classes = spec.classes;
    std::vector<double> v(spec.count * H * W, 0.0);
    Rng base(spec.seed ^ 0x9E3779B97F4A7C15ULL);
    for (std::size_t i = 0; i < spec.count; ++i) {
        Rng rng = base.derive(i);
        std::size_t label = rng.uniform_int(spec.classes);
        const char* glyph = detail::glyph_rows()[label];
        std::size_t dy = 1 + rng.uniform_int(6);  // glyph height 21, canvas 28
        std::size_t dx = 2 + rng.uniform_int(10);  // glyph width 15
        double intensity = rng.uniform(0.55, 1.0);
        double* img = &v[i * H * W];
        for (std::size_t gy = 0; gy < 7; ++gy)
            for (std::size_t gx = 0; gx < 5; ++gx) {
                if (glyph[gy * 5 + gx] != '1') continue;
                for (std::size_t sy = 0; sy < scale; ++sy)
                    for (std::size_t sx = 0; sx < scale; ++sx)
                        img[(dy + gy * scale + sy) * W + dx + gx * scale + sx] = intensity;
            }
        for (std::size_t p = 0; p < H * W; ++p) {
            double x = img[p] + rng.normal(0.0, spec.noise);
            img[p] = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
        }
        out.labels.push_back(label);
    }
    out.images = Tensor({spec.count, 1, H, W}, std::move(v));
    return out;
}

// Well-separated Gaussian blobs on an 8x8 canvas; linearly separable for the
// default noise level.
inline Dataset synthetic_blobs(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("blobs: need at least 2 classes");
    const std::size_t H = 8, W = 8;
    Rng centers_rng(spec.seed ^ 0xC2B2AE3D27D4EB4FULL);
    std::vector<double> centers(spec.classes * H * W);
    for (auto& c : centers) c = centers_rng.uniform();
    Dataset out;
    out.classes = spec.classes;
    std::vector<double> v(spec.count * H * W);
    Rng base(spec.seed ^ 0x165667B19E3779F9ULL);
    for (std::size_t i = 0; i < spec.count; ++i) {
        Rng rng = base.derive(i);
        std::size_t label = rng.uniform_int(spec.classes);
        double* img = &v[i * H * W];
        const double* c = &centers[label * H * W];
        for (std::size_t p = 0; p < H * W; ++p) {
            double x = c[p] + rng.normal(0.0, spec.noise * 0.1);
            img[p] = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
        }
        out.labels.push_back(label);
    }
    out.images = Tensor({spec.count, 1, H, W}, std::move(v));
    return out;
}

inline Dataset synthetic(const SyntheticSpec& spec) {
    if (spec.kind == "glyphs") return synthetic_glyphs(spec);
    if (spec.kind == "blobs") return synthetic_blobs(spec);
    throw std::invalid_argument("unknown synthetic dataset kind: " + spec.kind);
}

}  // namespace ngi
