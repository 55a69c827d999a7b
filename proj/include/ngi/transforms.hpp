#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ngi/rng.hpp"
#include "ngi/tensor.hpp"

// Input- and gradient-space transformations. All are pure functions of
// (input, config, rng state); images are (C,H,W) tensors in [0,1].

namespace ngi {

struct TransformConfig {
    double di_prob = 0.5;
    std::size_t ti_kernel_size = 7;
    double ti_sigma = 3.0;
    std::size_t si_copies = 5;
    std::size_t admix_m1 = 5;
    std::size_t admix_m2 = 3;
    double admix_eta = 0.2;
    std::size_t bsr_blocks = 2;
    double bsr_max_angle = 24.0;
    double mask_keep_prob = 0.9;

    void validate() const {
        if (di_prob < 0.0 || di_prob > 1.0) throw std::invalid_argument("di_prob must be in [0,1]");
        if (ti_kernel_size % 2 == 0) throw std::invalid_argument("ti_kernel_size must be odd");
        if (si_copies < 1) throw std::invalid_argument("si_copies must be >= 1");
        if (bsr_blocks < 1) throw std::invalid_argument("bsr_blocks must be >= 1");
        if (mask_keep_prob < 0.0 || mask_keep_prob > 1.0) throw std::invalid_argument("mask_keep_prob must be in [0,1]");
        if (admix_eta < 0.0) throw std::invalid_argument("admix_eta must be >= 0");
    }
};

namespace transforms {

namespace detail {
inline void check_image(const Tensor& x, const char* op) {
    if (x.ndim() != 3) throw std::invalid_argument(std::string(op) + ": expected image (C,H,W), got " + shape_str(x.shape()));
}
}  // namespace detail

// One Bernoulli draw per pixel, shared across channels: kept with probability
// keep_prob, zeroed otherwise.
inline Tensor mask_process(const Tensor& x, double keep_prob, Rng& rng) {
    detail::check_image(x, "mask_process");
    if (keep_prob < 0.0 || keep_prob > 1.0) throw std::invalid_argument("mask_process: keep probability outside [0,1]");
    std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<double> mask(h * w);
    for (auto& m : mask) m = rng.bernoulli(keep_prob) ? 1.0 : 0.0;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < h * w; ++p)
            out.value()[ci * h * w + p] = x.value()[ci * h * w + p] * mask[p];
    return out;
}

// Per-output-pixel source index into the input HW plane; -1 means zero fill.
// Channels share the route. The adjoint of applying a route is scatter-add.
using PixelRoute = std::vector<std::int64_t>;

inline Tensor apply_route(const Tensor& x, const PixelRoute& route) {
    detail::check_image(x, "apply_route");
    std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (route.size() != h * w) throw std::invalid_argument("apply_route: route size mismatch");
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < h * w; ++p) {
            std::int64_t s = route[p];
            if (s >= 0) out.value()[ci * h * w + p] = x.value()[ci * h * w + s];
        }
    return out;
}

// Pulls an output-space gradient back through a route (each output gradient
// accumulates onto its source pixel).
inline Tensor route_adjoint(const Tensor& grad_out, const PixelRoute& route) {
    detail::check_image(grad_out, "route_adjoint");
    std::size_t c = grad_out.dim(0), h = grad_out.dim(1), w = grad_out.dim(2);
    Tensor out = Tensor::zeros(grad_out.shape());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t p = 0; p < h * w; ++p) {
            std::int64_t s = route[p];
            if (s >= 0) out.value()[ci * h * w + s] += grad_out.value()[ci * h * w + p];
        }
    return out;
}

// Diversity draw: with probability p, nearest-resize to a random smaller side
// in [ceil(0.86*H), H] and zero-pad back at a random offset.
struct DiDraw {
    bool active = false;
    std::size_t rh = 0, rw = 0;   // resized dims
    std::size_t top = 0, left = 0;  // pad offsets
};

inline DiDraw draw_diverse_input(std::size_t h, std::size_t w, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("diverse_input: probability outside [0,1]");
    DiDraw d;
    if (!rng.bernoulli(p)) return d;
    d.active = true;
    std::size_t min_h = static_cast<std::size_t>(std::ceil(0.86 * static_cast<double>(h)));
    std::size_t min_w = static_cast<std::size_t>(std::ceil(0.86 * static_cast<double>(w)));
    d.rh = min_h + rng.uniform_int(h - min_h + 1);
    d.rw = min_w + rng.uniform_int(w - min_w + 1);
    d.top = rng.uniform_int(h - d.rh + 1);
    d.left = rng.uniform_int(w - d.rw + 1);
    return d;
}

inline PixelRoute diverse_input_route(std::size_t h, std::size_t w, const DiDraw& d) {
    PixelRoute route(h * w, -1);
    if (!d.active) {
        for (std::size_t p = 0; p < h * w; ++p) route[p] = static_cast<std::int64_t>(p);
        return route;
    }
    for (std::size_t yo = 0; yo < d.rh; ++yo) {
        std::size_t yi = yo * h / d.rh;
        for (std::size_t xo = 0; xo < d.rw; ++xo) {
            std::size_t xi = xo * w / d.rw;
            route[(d.top + yo) * w + d.left + xo] = static_cast<std::int64_t>(yi * w + xi);
        }
    }
    return route;
}

inline Tensor diverse_input(const Tensor& x, double p, Rng& rng) {
    detail::check_image(x, "diverse_input");
    DiDraw d = draw_diverse_input(x.dim(1), x.dim(2), p, rng);
    if (!d.active) return x;
    return apply_route(x, diverse_input_route(x.dim(1), x.dim(2), d));
}

// Symmetric, nonnegative 2-D Gaussian kernel summing to 1.
inline Tensor gaussian_kernel(std::size_t size, double sigma) {
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd and >= 1");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    Tensor k = Tensor::zeros({size, size});
    std::ptrdiff_t r = static_cast<std::ptrdiff_t>(size / 2);
    double total = 0.0;
    for (std::ptrdiff_t y = -r; y <= r; ++y)
        for (std::ptrdiff_t x = -r; x <= r; ++x) {
            double v = std::exp(-(double(y * y) + double(x * x)) / (2.0 * sigma * sigma));
            k.value()[(y + r) * size + (x + r)] = v;
            total += v;
        }
    for (auto& v : k.value()) v /= total;
    return k;
}

// Same-shape convolution of a gradient image with a normalized kernel
// (zero-padded borders). Works for (C,H,W) and (N,C,H,W).
inline Tensor ti_smooth(const Tensor& grad, const Tensor& kernel) {
    if (kernel.ndim() != 2 || kernel.dim(0) != kernel.dim(1))
        throw std::invalid_argument("ti_smooth: kernel must be square 2-D, got " + shape_str(kernel.shape()));
    if (grad.ndim() < 2) throw std::invalid_argument("ti_smooth: gradient must have spatial dims");
    std::size_t h = grad.dim(grad.ndim() - 2), w = grad.dim(grad.ndim() - 1);
    std::size_t planes = grad.numel() / (h * w);
    std::size_t ks = kernel.dim(0);
    std::ptrdiff_t r = static_cast<std::ptrdiff_t>(ks / 2);
    Tensor out = Tensor::zeros(grad.shape());
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* src = &grad.value()[pl * h * w];
        double* dst = &out.value()[pl * h * w];
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t ky = -r; ky <= r; ++ky) {
                    std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + ky;
                    if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::ptrdiff_t kx = -r; kx <= r; ++kx) {
                        std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + kx;
                        if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
                        acc += src[yy * w + xx] * kernel.value()[(ky + r) * ks + (kx + r)];
                    }
                }
                dst[y * w + x] = acc;
            }
    }
    return out;
}

// Scale copies x/2^i for i in [0, m).
inline std::vector<Tensor> scale_copies(const Tensor& x, std::size_t m) {
    if (m < 1) throw std::invalid_argument("scale_copies: m must be >= 1");
    std::vector<Tensor> out;
    out.reserve(m);
    double factor = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        Tensor c = Tensor::zeros(x.shape());
        for (std::size_t p = 0; p < x.numel(); ++p) c.value()[p] = x.value()[p] * factor;
        out.push_back(std::move(c));
        factor *= 0.5;
    }
    return out;
}

// Output (i,j) = gamma_i * (x + eta * others_j).
inline std::vector<Tensor> admix_mix(const Tensor& x, const std::vector<Tensor>& others,
                                     const std::vector<double>& gammas, double eta) {
    if (eta < 0.0) throw std::invalid_argument("admix_mix: eta must be >= 0");
    if (others.empty()) throw std::invalid_argument("admix_mix: empty mixing set");
    if (gammas.empty()) throw std::invalid_argument("admix_mix: empty gamma schedule");
    std::vector<Tensor> out;
    out.reserve(gammas.size() * others.size());
    for (double g : gammas)
        for (const Tensor& o : others) {
            if (o.shape() != x.shape())
                throw std::invalid_argument("admix_mix: mixing image shape " + shape_str(o.shape()) +
                                            " does not match " + shape_str(x.shape()));
            Tensor m = Tensor::zeros(x.shape());
            for (std::size_t p = 0; p < x.numel(); ++p)
                m.value()[p] = g * (x.value()[p] + eta * o.value()[p]);
            out.push_back(std::move(m));
        }
    return out;
}

inline std::vector<double> halving_gammas(std::size_t m) {
    std::vector<double> g(m);
    double v = 1.0;
    for (auto& x : g) {
        x = v;
        v *= 0.5;
    }
    return g;
}

// Block shuffle + rotate as a pixel route. Non-divisible dims are
// reflect-padded to the next multiple and cropped after.
inline PixelRoute block_shuffle_rotate_route(std::size_t h, std::size_t w, std::size_t n,
                                             double max_angle_deg, Rng& rng) {
    if (n < 1) throw std::invalid_argument("block_shuffle_rotate: blocks per side must be >= 1");
    if (max_angle_deg < 0.0) throw std::invalid_argument("block_shuffle_rotate: max angle must be >= 0");
    std::size_t ph = (h + n - 1) / n * n;
    std::size_t pw = (w + n - 1) / n * n;
    std::size_t bh = ph / n, bw = pw / n;
    // Reflect mapping from padded coordinates onto the original image.
    auto reflect = [](std::size_t v, std::size_t limit) {
        return v < limit ? v : 2 * limit - 2 - v;
    };
    std::vector<std::size_t> perm(n * n);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    std::vector<double> angle(n * n);
    for (auto& a : angle) a = rng.uniform(-max_angle_deg, max_angle_deg) * (3.14159265358979323846 / 180.0);

    PixelRoute route(h * w, -1);
    double cy = (static_cast<double>(bh) - 1.0) / 2.0;
    double cx = (static_cast<double>(bw) - 1.0) / 2.0;
    for (std::size_t by = 0; by < n; ++by)
        for (std::size_t bx = 0; bx < n; ++bx) {
            std::size_t dst_block = by * n + bx;
            std::size_t src_block = perm[dst_block];
            std::size_t sby = src_block / n, sbx = src_block % n;
            double th = angle[dst_block];
            double c = std::cos(th), s = std::sin(th);
            for (std::size_t y = 0; y < bh; ++y)
                for (std::size_t x = 0; x < bw; ++x) {
                    std::size_t oy = by * bh + y, ox = bx * bw + x;
                    if (oy >= h || ox >= w) continue;  // cropped region
                    // Rotate back around the block center to find the source pixel.
                    double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                    std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(std::lround(c * dy + s * dx + cy));
                    std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(std::lround(-s * dy + c * dx + cx));
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(bh) || sx < 0 || sx >= static_cast<std::ptrdiff_t>(bw))
                        continue;  // rotated outside the block: zero fill
                    std::size_t py = sby * bh + static_cast<std::size_t>(sy);
                    std::size_t px = sbx * bw + static_cast<std::size_t>(sx);
                    route[oy * w + ox] = static_cast<std::int64_t>(reflect(py, h) * w + reflect(px, w));
                }
        }
    return route;
}

inline Tensor block_shuffle_rotate(const Tensor& x, std::size_t n, double max_angle_deg, Rng& rng) {
    detail::check_image(x, "block_shuffle_rotate");
    return apply_route(x, block_shuffle_rotate_route(x.dim(1), x.dim(2), n, max_angle_deg, rng));
}

}  // namespace transforms
}  // namespace ngi
