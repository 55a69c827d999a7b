#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ngi/tensor.hpp"

// Primitive differentiable operations. Each forward call records a backward
// step on the tape; Tape::backward replays them in reverse execution order.
// The op set is closed: exactly what the model zoo and input transforms need.

namespace ngi::ops {

namespace detail {
[[noreturn]] inline void shape_error(const char* op, const std::string& msg) {
    throw std::invalid_argument(std::string(op) + ": " + msg);
}
}  // namespace detail

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        detail::shape_error("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    auto& ov = out.value();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    auto ad = a.data(), bd = b.data(), od = out.data();
    tape.record([ad, bd, od] {
        od->ensure_grad();
        ad->ensure_grad();
        bd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) {
            ad->grad[i] += od->grad[i];
            bd->grad[i] += od->grad[i];
        }
    });
    return out;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        detail::shape_error("mul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    auto& ov = out.value();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    auto ad = a.data(), bd = b.data(), od = out.data();
    tape.record([ad, bd, od] {
        od->ensure_grad();
        ad->ensure_grad();
        bd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) {
            ad->grad[i] += od->grad[i] * bd->value[i];
            bd->grad[i] += od->grad[i] * ad->value[i];
        }
    });
    return out;
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.value();
    auto& ov = out.value();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    auto ad = a.data();
    auto od = out.data();
    tape.record([ad, od, c] {
        od->ensure_grad();
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] * c;
    });
    return out;
}

inline Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.value();
    auto& ov = out.value();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    auto ad = a.data();
    auto od = out.data();
    tape.record([ad, od] {
        od->ensure_grad();
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i)
            if (ad->value[i] > 0.0) ad->grad[i] += od->grad[i];
    });
    return out;
}

// Pure reinterpretation of the value buffer; gradient passes through.
inline Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        detail::shape_error("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Tensor out(std::move(shape), a.value());
    auto ad = a.data();
    auto od = out.data();
    tape.record([ad, od] {
        od->ensure_grad();
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
    });
    return out;
}

// x: (N,F), w: (O,F), b: (O) -> (N,O)
inline Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
        detail::shape_error("dense", "expected x(N,F) w(O,F) b(O), got " + shape_str(x.shape()) + " " +
                                         shape_str(w.shape()) + " " + shape_str(b.shape()));
    std::size_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
    if (w.dim(1) != f || b.dim(0) != o)
        detail::shape_error("dense", "inner dims: x " + shape_str(x.shape()) + " vs w " + shape_str(w.shape()) +
                                         " vs b " + shape_str(b.shape()));
    Tensor out = Tensor::zeros({n, o});
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    auto& ov = out.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < o; ++j) {
            double acc = bv[j];
            const double* xr = &xv[i * f];
            const double* wr = &wv[j * f];
            for (std::size_t k = 0; k < f; ++k) acc += xr[k] * wr[k];
            ov[i * o + j] = acc;
        }
    auto xd = x.data(), wd = w.data(), bd = b.data(), od = out.data();
    tape.record([xd, wd, bd, od, n, f, o] {
        od->ensure_grad();
        xd->ensure_grad();
        wd->ensure_grad();
        bd->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < o; ++j) {
                double g = od->grad[i * o + j];
                if (g == 0.0) continue;
                bd->grad[j] += g;
                double* xg = &xd->grad[i * f];
                const double* xr = &xd->value[i * f];
                double* wg = &wd->grad[j * f];
                const double* wr = &wd->value[j * f];
                for (std::size_t k = 0; k < f; ++k) {
                    xg[k] += g * wr[k];
                    wg[k] += g * xr[k];
                }
            }
    });
    return out;
}

// x: (N,C,H,W), k: (O,C,Kh,Kw), b: (O); zero padding `pad` on each side.
inline Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& k, const Tensor& b,
                     std::size_t stride = 1, std::size_t pad = 0) {
    if (stride < 1) detail::shape_error("conv2d", "stride must be >= 1");
    if (x.ndim() != 4 || k.ndim() != 4 || b.ndim() != 1)
        detail::shape_error("conv2d", "expected x(N,C,H,W) k(O,C,Kh,Kw) b(O), got " + shape_str(x.shape()) +
                                          " " + shape_str(k.shape()) + " " + shape_str(b.shape()));
    std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    if (k.dim(1) != c)
        detail::shape_error("conv2d", "channel mismatch: x has " + std::to_string(c) + ", kernel expects " +
                                          std::to_string(k.dim(1)));
    if (b.dim(0) != o) detail::shape_error("conv2d", "bias dim " + shape_str(b.shape()) + " vs out channels " + std::to_string(o));
    if (h + 2 * pad < kh || w + 2 * pad < kw)
        detail::shape_error("conv2d", "kernel " + shape_str(k.shape()) + " larger than padded input " + shape_str(x.shape()));
    std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    std::size_t ow = (w + 2 * pad - kw) / stride + 1;
    Tensor out = Tensor::zeros({n, o, oh, ow});
    const auto& xv = x.value();
    const auto& kv = k.value();
    const auto& bv = b.value();
    auto& ov = out.value();
    auto at_x = [&](std::size_t ni, std::size_t ci, std::size_t yi, std::size_t xi) {
        return ((ni * c + ci) * h + yi) * w + xi;
    };
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oi = 0; oi < o; ++oi)
            for (std::size_t yo = 0; yo < oh; ++yo)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    double acc = bv[oi];
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(yo * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                            if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(xo * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += xv[at_x(ni, ci, yi, xi)] * kv[((oi * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    ov[((ni * o + oi) * oh + yo) * ow + xo] = acc;
                }
    auto xd = x.data(), kd = k.data(), bd = b.data(), od = out.data();
    tape.record([xd, kd, bd, od, n, c, h, w, o, kh, kw, oh, ow, stride, pad] {
        od->ensure_grad();
        xd->ensure_grad();
        kd->ensure_grad();
        bd->ensure_grad();
        for (std::size_t ni = 0; ni < n; ++ni)
            for (std::size_t oi = 0; oi < o; ++oi)
                for (std::size_t yo = 0; yo < oh; ++yo)
                    for (std::size_t xo = 0; xo < ow; ++xo) {
                        double g = od->grad[((ni * o + oi) * oh + yo) * ow + xo];
                        if (g == 0.0) continue;
                        bd->grad[oi] += g;
                        for (std::size_t ci = 0; ci < c; ++ci)
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(yo * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                                if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(xo * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                    if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(w)) continue;
                                    std::size_t xidx = ((ni * c + ci) * h + yi) * w + xi;
                                    std::size_t kidx = ((oi * c + ci) * kh + ky) * kw + kx;
                                    xd->grad[xidx] += g * kd->value[kidx];
                                    kd->grad[kidx] += g * xd->value[xidx];
                                }
                            }
                    }
    });
    return out;
}

// Non-overlapping max pooling, window == stride. Ties route to the first
// (row-major) maximum.
inline Tensor maxpool2d(Tape& tape, const Tensor& x, std::size_t window = 2) {
    if (x.ndim() != 4) detail::shape_error("maxpool2d", "expected (N,C,H,W), got " + shape_str(x.shape()));
    if (window < 1) detail::shape_error("maxpool2d", "window must be >= 1");
    std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::size_t oh = h / window, ow = w / window;
    if (oh == 0 || ow == 0)
        detail::shape_error("maxpool2d", "window " + std::to_string(window) + " too large for " + shape_str(x.shape()));
    Tensor out = Tensor::zeros({n, c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
    const auto& xv = x.value();
    auto& ov = out.value();
    std::size_t oidx = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t yo = 0; yo < oh; ++yo)
                for (std::size_t xo = 0; xo < ow; ++xo, ++oidx) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t bestidx = 0;
                    for (std::size_t dy = 0; dy < window; ++dy)
                        for (std::size_t dx = 0; dx < window; ++dx) {
                            std::size_t idx = ((ni * c + ci) * h + yo * window + dy) * w + xo * window + dx;
                            if (xv[idx] > best) {
                                best = xv[idx];
                                bestidx = idx;
                            }
                        }
                    ov[oidx] = best;
                    (*argmax)[oidx] = bestidx;
                }
    auto xd = x.data();
    auto od = out.data();
    tape.record([xd, od, argmax] {
        od->ensure_grad();
        xd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) xd->grad[(*argmax)[i]] += od->grad[i];
    });
    return out;
}

// Nearest-neighbor resize; each output gradient routes back to its source pixel.
inline Tensor resize_nearest(Tape& tape, const Tensor& x, std::size_t oh, std::size_t ow) {
    if (x.ndim() != 4) detail::shape_error("resize_nearest", "expected (N,C,H,W), got " + shape_str(x.shape()));
    if (oh == 0 || ow == 0) detail::shape_error("resize_nearest", "target dims must be positive");
    std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out = Tensor::zeros({n, c, oh, ow});
    const auto& xv = x.value();
    auto& ov = out.value();
    std::size_t oidx = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t yo = 0; yo < oh; ++yo) {
                std::size_t yi = yo * h / oh;
                for (std::size_t xo = 0; xo < ow; ++xo, ++oidx) {
                    std::size_t xi = xo * w / ow;
                    ov[oidx] = xv[((ni * c + ci) * h + yi) * w + xi];
                }
            }
    auto xd = x.data();
    auto od = out.data();
    tape.record([xd, od, n, c, h, w, oh, ow] {
        od->ensure_grad();
        xd->ensure_grad();
        std::size_t oidx = 0;
        for (std::size_t ni = 0; ni < n; ++ni)
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t yo = 0; yo < oh; ++yo) {
                    std::size_t yi = yo * h / oh;
                    for (std::size_t xo = 0; xo < ow; ++xo, ++oidx) {
                        std::size_t xi = xo * w / ow;
                        xd->grad[((ni * c + ci) * h + yi) * w + xi] += od->grad[oidx];
                    }
                }
    });
    return out;
}

// Zero-pads x into an (oh, ow) canvas with its top-left corner at (top, left).
inline Tensor pad(Tape& tape, const Tensor& x, std::size_t top, std::size_t left,
                  std::size_t oh, std::size_t ow) {
    if (x.ndim() != 4) detail::shape_error("pad", "expected (N,C,H,W), got " + shape_str(x.shape()));
    std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (top + h > oh || left + w > ow)
        detail::shape_error("pad", "input " + shape_str(x.shape()) + " at offset (" + std::to_string(top) + "," +
                                       std::to_string(left) + ") exceeds canvas " + std::to_string(oh) + "x" + std::to_string(ow));
    Tensor out = Tensor::zeros({n, c, oh, ow});
    const auto& xv = x.value();
    auto& ov = out.value();
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t yi = 0; yi < h; ++yi)
                for (std::size_t xi = 0; xi < w; ++xi)
                    ov[((ni * c + ci) * oh + top + yi) * ow + left + xi] = xv[((ni * c + ci) * h + yi) * w + xi];
    auto xd = x.data();
    auto od = out.data();
    tape.record([xd, od, n, c, h, w, oh, ow, top, left] {
        od->ensure_grad();
        xd->ensure_grad();
        for (std::size_t ni = 0; ni < n; ++ni)
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t yi = 0; yi < h; ++yi)
                    for (std::size_t xi = 0; xi < w; ++xi)
                        xd->grad[((ni * c + ci) * h + yi) * w + xi] +=
                            od->grad[((ni * c + ci) * oh + top + yi) * ow + left + xi];
    });
    return out;
}

inline Tensor sum(Tape& tape, const Tensor& x) {
    double acc = 0.0;
    for (double v : x.value()) acc += v;
    Tensor out = Tensor::scalar(acc);
    auto xd = x.data();
    auto od = out.data();
    tape.record([xd, od] {
        od->ensure_grad();
        xd->ensure_grad();
        double g = od->grad[0];
        for (auto& gv : xd->grad) gv += g;
    });
    return out;
}

// logits: (N,C), labels: per-row class index. Returns per-image losses (N,).
inline Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.ndim() != 2) detail::shape_error("softmax_cross_entropy", "expected logits (N,C), got " + shape_str(logits.shape()));
    std::size_t n = logits.dim(0), c = logits.dim(1);
    if (c < 2) detail::shape_error("softmax_cross_entropy", "need at least 2 classes, got " + std::to_string(c));
    if (labels.size() != n)
        detail::shape_error("softmax_cross_entropy", std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
    for (std::size_t l : labels)
        if (l >= c) detail::shape_error("softmax_cross_entropy", "label " + std::to_string(l) + " out of range [0," + std::to_string(c) + ")");
    Tensor out = Tensor::zeros({n});
    auto probs = std::make_shared<std::vector<double>>(n * c);
    const auto& lv = logits.value();
    auto& ov = out.value();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &lv[i * c];
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        double logz = std::log(z) + mx;
        for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - logz);
        ov[i] = logz - row[labels[i]];
    }
    auto ld = logits.data();
    auto od = out.data();
    auto lab = std::make_shared<std::vector<std::size_t>>(labels);
    tape.record([ld, od, probs, lab, n, c] {
        od->ensure_grad();
        ld->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            double g = od->grad[i];
            if (g == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j)
                ld->grad[i * c + j] += g * ((*probs)[i * c + j] - (j == (*lab)[i] ? 1.0 : 0.0));
        }
    });
    return out;
}

// Single-example convenience: logits (C,) or (1,C) with one label.
inline Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::size_t label) {
    Tensor row = logits.ndim() == 1 ? reshape(tape, logits, {1, logits.dim(0)}) : logits;
    Tensor losses = softmax_cross_entropy(tape, row, std::vector<std::size_t>{label});
    return sum(tape, losses);
}

}  // namespace ngi::ops
