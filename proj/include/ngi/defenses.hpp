#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/model.hpp"
#include "ngi/rng.hpp"
#include "ngi/tensor.hpp"

// Input purification and smoothing wrappers applied in front of a target
// model. Attacks never differentiate through these; they guard the target as
// a black box.

namespace ngi {

struct DefenseConfig {
    std::string kind = "bit_red";  // bit_red | jpeg_q | rand_resize_pad | rand_smooth
    std::size_t bits = 2;
    double quality = 75.0;
    double sigma = 0.1;
    std::size_t votes = 25;
    std::uint64_t seed = 0;

    void validate() const {
        if (kind != "bit_red" && kind != "jpeg_q" && kind != "rand_resize_pad" && kind != "rand_smooth")
            throw std::invalid_argument("unknown defense kind: " + kind);
        if (bits < 1 || bits > 8) throw std::invalid_argument("defense: bits must be in [1,8]");
        if (quality <= 0.0 || quality > 100.0) throw std::invalid_argument("defense: quality must be in (0,100]");
        if (sigma < 0.0) throw std::invalid_argument("defense: sigma must be >= 0");
        if (votes < 1) throw std::invalid_argument("defense: vote count must be >= 1");
    }
};

namespace defenses {

// Quantize each value to the nearest of 2^bits uniformly spaced levels in [0,1].
inline Tensor bit_reduce(const Tensor& x, std::size_t bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("bit_reduce: bits must be in [1,8]");
    double levels = static_cast<double>((1u << bits) - 1);
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out.value()[i] = std::round(x.value()[i] * levels) / levels;
    return out;
}

namespace detail {

// Standard luminance quantization table.
inline const std::array<double, 64>& jpeg_luma_table() {
    static const std::array<double, 64> t = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    return t;
}

inline void dct8(const double* in, double* out, bool inverse) {
    // Separable orthonormal DCT-II / DCT-III on an 8x8 block.
    static const double pi = 3.14159265358979323846;
    auto c = [](std::size_t k) { return k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0); };
    double tmp[64];
    // rows
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (std::size_t xx = 0; xx < 8; ++xx)
                acc += inverse ? c(xx) * in[y * 8 + xx] * std::cos((2 * u + 1) * xx * pi / 16.0)
                               : in[y * 8 + xx] * std::cos((2 * xx + 1) * u * pi / 16.0);
            tmp[y * 8 + u] = inverse ? acc : c(u) * acc;
        }
    // columns
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (std::size_t yy = 0; yy < 8; ++yy)
                acc += inverse ? c(yy) * tmp[yy * 8 + u] * std::cos((2 * v + 1) * yy * pi / 16.0)
                               : tmp[yy * 8 + u] * std::cos((2 * yy + 1) * v * pi / 16.0);
            out[v * 8 + u] = inverse ? acc : c(v) * acc;
        }
}

}  // namespace detail

// 8x8 block DCT with the luminance table scaled by the IJG quality formula.
// Coefficients are truncated toward zero in units of the scaled table, so
// block energy never increases; quality 100 scales the table to zero and the
// pass reduces to a DCT round-trip.
inline Tensor jpeg_quantize(const Tensor& x, double quality) {
    if (quality <= 0.0 || quality > 100.0) throw std::invalid_argument("jpeg_quantize: quality must be in (0,100]");
    if (x.ndim() < 2) throw std::invalid_argument("jpeg_quantize: need spatial dims, got " + shape_str(x.shape()));
    std::size_t h = x.dim(x.ndim() - 2), w = x.dim(x.ndim() - 1);
    std::size_t planes = x.numel() / (h * w);
    double scale_pct = quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    std::array<double, 64> table;
    for (std::size_t i = 0; i < 64; ++i) table[i] = detail::jpeg_luma_table()[i] * scale_pct / 100.0;

    Tensor out = Tensor::zeros(x.shape());
    std::size_t bh = (h + 7) / 8, bw = (w + 7) / 8;
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* src = &x.value()[pl * h * w];
        double* dst = &out.value()[pl * h * w];
        for (std::size_t by = 0; by < bh; ++by)
            for (std::size_t bx = 0; bx < bw; ++bx) {
                double block[64], coef[64];
                for (std::size_t y = 0; y < 8; ++y)
                    for (std::size_t xx = 0; xx < 8; ++xx) {
                        // Edge-replicate partial border blocks.
                        std::size_t sy = std::min(by * 8 + y, h - 1);
                        std::size_t sx = std::min(bx * 8 + xx, w - 1);
                        block[y * 8 + xx] = src[sy * w + sx] * 255.0 - 128.0;
                    }
                detail::dct8(block, coef, false);
                for (std::size_t i = 0; i < 64; ++i)
                    if (table[i] > 1e-9) coef[i] = std::trunc(coef[i] / table[i]) * table[i];
                detail::dct8(coef, block, true);
                for (std::size_t y = 0; y < 8 && by * 8 + y < h; ++y)
                    for (std::size_t xx = 0; xx < 8 && bx * 8 + xx < w; ++xx) {
                        double v = (block[y * 8 + xx] + 128.0) / 255.0;
                        dst[(by * 8 + y) * w + bx * 8 + xx] = std::min(std::max(v, 0.0), 1.0);
                    }
            }
    }
    return out;
}

// Nearest-resize to a random side in [ceil(0.9*H), H], zero-pad back at a
// random offset. Image: (C,H,W).
inline Tensor rand_resize_pad_defend(const Tensor& x, Rng& rng) {
    if (x.ndim() != 3) throw std::invalid_argument("rand_resize_pad_defend: expected (C,H,W), got " + shape_str(x.shape()));
    std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::size_t min_h = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(h)));
    std::size_t min_w = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(w)));
    std::size_t rh = min_h + rng.uniform_int(h - min_h + 1);
    std::size_t rw = min_w + rng.uniform_int(w - min_w + 1);
    std::size_t top = rng.uniform_int(h - rh + 1);
    std::size_t left = rng.uniform_int(w - rw + 1);
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t yo = 0; yo < rh; ++yo) {
            std::size_t yi = yo * h / rh;
            for (std::size_t xo = 0; xo < rw; ++xo) {
                std::size_t xi = xo * w / rw;
                out.value()[(ci * h + top + yo) * w + left + xo] = x.value()[(ci * h + yi) * w + xi];
            }
        }
    return out;
}

// Majority vote of model predictions over n Gaussian-noised copies; ties
// break toward the smallest class index. Image: (C,H,W).
inline std::size_t smoothed_predict(const Model& model, const Tensor& x, double sigma, std::size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("smoothed_predict: vote count must be >= 1");
    if (x.ndim() != 3) throw std::invalid_argument("smoothed_predict: expected (C,H,W), got " + shape_str(x.shape()));
    std::vector<std::size_t> votes(model.spec().classes, 0);
    Shape batch_shape = {1, x.dim(0), x.dim(1), x.dim(2)};
    for (std::size_t s = 0; s < n; ++s) {
        Tensor noisy(batch_shape, x.value());
        if (sigma > 0.0)
            for (auto& v : noisy.value()) v += rng.normal(0.0, sigma);
        ++votes[model.predict(noisy)[0]];
    }
    std::size_t best = 0;
    for (std::size_t cidx = 1; cidx < votes.size(); ++cidx)
        if (votes[cidx] > votes[best]) best = cidx;
    return best;
}

}  // namespace defenses

// A target model with an optional purification or smoothing front end.
// Predicts per image with an rng stream derived per image index.
class DefendedModel {
public:
    DefendedModel(const Model& model, DefenseConfig cfg)
        : model_(&model), cfg_(std::move(cfg)), has_defense_(true) {
        cfg_.validate();
    }

    explicit DefendedModel(const Model& model) : model_(&model), has_defense_(false) {}

    bool defended() const { return has_defense_; }

    const Model& model() const { return *model_; }
    const DefenseConfig& config() const { return cfg_; }

    std::vector<std::size_t> predict(const Tensor& batch) const {
        if (!has_defense_) return model_->predict(batch);
        std::size_t n = batch.dim(0);
        std::size_t per = batch.numel() / n;
        Shape img_shape(batch.shape().begin() + 1, batch.shape().end());
        std::vector<std::size_t> out(n);
        Rng base(cfg_.seed ^ 0x6A09E667F3BCC909ULL);
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng = base.derive(i);
            Tensor img(img_shape, std::vector<double>(batch.value().begin() + i * per,
                                                      batch.value().begin() + (i + 1) * per));
            if (cfg_.kind == "rand_smooth") {
                out[i] = defenses::smoothed_predict(*model_, img, cfg_.sigma, cfg_.votes, rng);
                continue;
            }
            Tensor purified = img;
            if (cfg_.kind == "bit_red") purified = defenses::bit_reduce(img, cfg_.bits);
            else if (cfg_.kind == "jpeg_q") purified = defenses::jpeg_quantize(img, cfg_.quality);
            else if (cfg_.kind == "rand_resize_pad") purified = defenses::rand_resize_pad_defend(img, rng);
            Tensor one({1, img_shape[0], img_shape[1], img_shape[2]}, purified.value());
            out[i] = model_->predict(one)[0];
        }
        return out;
    }

private:
    const Model* model_;
    DefenseConfig cfg_;
    bool has_defense_ = true;
};

}  // namespace ngi
