#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/dataset.hpp"
#include "ngi/model.hpp"
#include "ngi/ops.hpp"
#include "ngi/rng.hpp"
#include "ngi/transforms.hpp"

// Iterative sign-gradient attacks: the FGSM family plus the two-branch
// backtracking attack. All methods share one gradient pipeline so input
// transforms compose uniformly: (DI | BSR) -> Admix -> scale-copy averaging
// -> TI smoothing -> momentum accumulation.

namespace ngi {

enum class Method { Fgsm, IFgsm, MiFgsm, NiFgsm, VmiFgsm, Ngi };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Fgsm: return "fgsm";
        case Method::IFgsm: return "i-fgsm";
        case Method::MiFgsm: return "mi-fgsm";
        case Method::NiFgsm: return "ni-fgsm";
        case Method::VmiFgsm: return "vmi-fgsm";
        case Method::Ngi: return "ngi";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "fgsm") return Method::Fgsm;
    if (s == "i-fgsm" || s == "ifgsm") return Method::IFgsm;
    if (s == "mi-fgsm" || s == "mifgsm" || s == "mi") return Method::MiFgsm;
    if (s == "ni-fgsm" || s == "nifgsm" || s == "ni") return Method::NiFgsm;
    if (s == "vmi-fgsm" || s == "vmifgsm" || s == "vmi") return Method::VmiFgsm;
    if (s == "ngi" || s == "ngi-mi-fgsm") return Method::Ngi;
    throw std::invalid_argument("unknown attack method: " + s);
}

struct VtConfig {
    double beta = 1.5;
    std::size_t samples = 20;
};

struct AttackConfig {
    double eps = 16.0 / 255.0;  // L-inf budget in pixel units
    std::size_t iterations = 10;
    double alpha = 0.0;  // step size; 0 means eps / iterations
    double mu = 1.0;     // momentum decay
    Method method = Method::MiFgsm;
    std::size_t backtrack_k = 5;   // reset-to-clean iteration
    double mask_keep_prob = 0.9;
    VtConfig vt;
    TransformConfig transform;
    bool use_di = false, use_ti = false, use_si = false, use_admix = false, use_bsr = false;
    std::uint64_t seed = 0;
    bool trace = false;

    double step() const { return alpha > 0.0 ? alpha : eps / static_cast<double>(iterations); }

    void validate() const {
        if (eps <= 0.0) throw std::invalid_argument("attack config: eps must be > 0");
        if (iterations < 1) throw std::invalid_argument("attack config: iterations must be >= 1");
        if (alpha < 0.0) throw std::invalid_argument("attack config: alpha must be >= 0");
        if (method == Method::Ngi && backtrack_k >= iterations)
            throw std::invalid_argument("attack config: backtracking step K must satisfy K < T (K=" +
                                        std::to_string(backtrack_k) + ", T=" + std::to_string(iterations) + ")");
        if (mask_keep_prob < 0.0 || mask_keep_prob > 1.0)
            throw std::invalid_argument("attack config: mask keep probability must be in [0,1]");
        if (vt.beta < 0.0) throw std::invalid_argument("attack config: vt beta must be >= 0");
        if (vt.samples < 1) throw std::invalid_argument("attack config: vt sample count must be >= 1");
        transform.validate();
    }
};

struct IterRecord {
    Tensor pre_update;   // example after any reset, before the step
    Tensor post_update;  // example after the step
    Tensor momentum;       // g after this iteration's accumulation
    Tensor mask_momentum;  // g_mask (two-branch method only)
};

struct AdversarialBatch {
    Tensor clean;
    Tensor adv;
    std::vector<std::size_t> labels;
    std::vector<IterRecord> trace;
};

// min(max(x_adv, x_clean - eps), x_clean + eps), then clamp to [0,1].
inline double clip_project(double v, double clean, double eps) {
    v = std::min(std::max(v, clean - eps), clean + eps);
    return std::min(std::max(v, 0.0), 1.0);
}

inline Tensor clip_project(const Tensor& x_adv, const Tensor& x_clean, double eps) {
    if (x_adv.shape() != x_clean.shape())
        throw std::invalid_argument("clip_project: shape mismatch " + shape_str(x_adv.shape()) + " vs " +
                                    shape_str(x_clean.shape()));
    Tensor out = Tensor::zeros(x_adv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.value()[i] = clip_project(x_adv.value()[i], x_clean.value()[i], eps);
    return out;
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

namespace detail {

inline Tensor image_of(const Tensor& batch, std::size_t i) {
    std::size_t per = batch.numel() / batch.dim(0);
    Shape sh(batch.shape().begin() + 1, batch.shape().end());
    std::vector<double> v(batch.value().begin() + i * per, batch.value().begin() + (i + 1) * per);
    return Tensor(sh, std::move(v));
}

inline void set_image(Tensor& batch, std::size_t i, const Tensor& img) {
    std::size_t per = batch.numel() / batch.dim(0);
    std::copy(img.value().begin(), img.value().end(), batch.value().begin() + i * per);
}

// Accumulate sum of per-model cross-entropy losses of one tape-resident input.
inline Tensor model_losses(Tape& tape, const std::vector<const Model*>& models, const Tensor& x,
                           const std::vector<std::size_t>& y) {
    Tensor total;
    bool first = true;
    for (const Model* m : models) {
        Tensor l = ops::sum(tape, ops::softmax_cross_entropy(tape, m->forward(tape, x), y));
        total = first ? l : ops::add(tape, total, l);
        first = false;
    }
    return total;
}

}  // namespace detail

// Gradient of the mean of per-model losses with respect to the input batch.
inline Tensor ensemble_gradient(const std::vector<const Model*>& models, const Tensor& x,
                                const std::vector<std::size_t>& y) {
    if (models.empty()) throw std::invalid_argument("ensemble_gradient: need at least one model");
    for (const Model* m : models)
        if (m->spec().in_c != x.dim(1) || m->spec().in_h != x.dim(2) || m->spec().in_w != x.dim(3))
            throw std::invalid_argument("ensemble_gradient: model input shape mismatch for input " + shape_str(x.shape()));
    Tape tape;
    Tensor leaf(x.shape(), x.value(), true);
    Tensor total = detail::model_losses(tape, models, leaf, y);
    Tensor loss = ops::scale(tape, total, 1.0 / static_cast<double>(models.size()));
    tape.backward(loss);
    return Tensor(x.shape(), leaf.grad());
}

namespace detail {

// Raw per-iteration gradient with the configured input transforms applied.
// Per-image rng streams keep results independent of batch partitioning.
inline Tensor pipeline_gradient(const std::vector<const Model*>& models, const Tensor& x,
                                const std::vector<std::size_t>& y, const AttackConfig& cfg,
                                std::vector<Rng>& streams, const Dataset* mix_pool) {
    std::size_t n = x.dim(0);
    double model_norm = 1.0 / static_cast<double>(models.size());
    bool per_image = cfg.use_di || cfg.use_bsr || cfg.use_admix;

    if (!per_image) {
        Tape tape;
        Tensor leaf(x.shape(), x.value(), true);
        Tensor total;
        if (cfg.use_si && cfg.transform.si_copies > 1) {
            bool first = true;
            double factor = 1.0;
            for (std::size_t i = 0; i < cfg.transform.si_copies; ++i) {
                Tensor copy = ops::scale(tape, leaf, factor);
                Tensor l = model_losses(tape, models, copy, y);
                total = first ? l : ops::add(tape, total, l);
                first = false;
                factor *= 0.5;
            }
            total = ops::scale(tape, total, model_norm / static_cast<double>(cfg.transform.si_copies));
        } else {
            total = ops::scale(tape, model_losses(tape, models, leaf, y), model_norm);
        }
        tape.backward(total);
        return Tensor(x.shape(), leaf.grad());
    }

    if (cfg.use_admix && (mix_pool == nullptr || mix_pool->size() == 0))
        throw std::invalid_argument("attack: admix requires a mixing pool");

    Tensor grad = Tensor::zeros(x.shape());
    std::size_t h = x.dim(2), w = x.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
        Rng& rng = streams[i];
        Tensor img = image_of(x, i);
        std::optional<transforms::PixelRoute> bsr_route;
        if (cfg.use_bsr) {
            bsr_route = transforms::block_shuffle_rotate_route(h, w, cfg.transform.bsr_blocks,
                                                               cfg.transform.bsr_max_angle, rng);
            img = transforms::apply_route(img, *bsr_route);
        }
        Tape tape;
        Shape leaf_shape = {1, x.dim(1), h, w};
        Tensor leaf(leaf_shape, img.value(), true);
        Tensor cur = leaf;
        if (cfg.use_di) {
            auto d = transforms::draw_diverse_input(h, w, cfg.transform.di_prob, rng);
            if (d.active)
                cur = ops::pad(tape, ops::resize_nearest(tape, cur, d.rh, d.rw), d.top, d.left, h, w);
        }
        std::vector<Tensor> variants;
        if (cfg.use_admix) {
            for (std::size_t j = 0; j < cfg.transform.admix_m2; ++j) {
                // Mixing image from a different class.
                std::size_t pick = rng.uniform_int(mix_pool->size());
                for (std::size_t tries = 0; tries < 64 && mix_pool->labels[pick] == y[i]; ++tries)
                    pick = rng.uniform_int(mix_pool->size());
                Tensor other(leaf_shape, image_of(mix_pool->images, pick).value());
                Tensor mixed = ops::add(tape, cur, ops::scale(tape, other, cfg.transform.admix_eta));
                double gamma = 1.0;
                for (std::size_t g = 0; g < cfg.transform.admix_m1; ++g) {
                    variants.push_back(ops::scale(tape, mixed, gamma));
                    gamma *= 0.5;
                }
            }
        } else {
            variants.push_back(cur);
        }
        std::vector<Tensor> inputs;
        if (cfg.use_si && cfg.transform.si_copies > 1) {
            for (const Tensor& v : variants) {
                double factor = 1.0;
                for (std::size_t s = 0; s < cfg.transform.si_copies; ++s) {
                    inputs.push_back(ops::scale(tape, v, factor));
                    factor *= 0.5;
                }
            }
        } else {
            inputs = variants;
        }
        Tensor total;
        bool first = true;
        std::vector<std::size_t> yi = {y[i]};
        for (const Tensor& in : inputs) {
            Tensor l = model_losses(tape, models, in, yi);
            total = first ? l : ops::add(tape, total, l);
            first = false;
        }
        total = ops::scale(tape, total, model_norm / static_cast<double>(inputs.size()));
        tape.backward(total);
        Tensor g(Shape(leaf_shape.begin() + 1, leaf_shape.end()), leaf.grad());
        if (bsr_route) g = transforms::route_adjoint(g, *bsr_route);
        set_image(grad, i, g);
    }
    return grad;
}

// g <- mu*g + raw/||raw||_1 per image; a vanishing gradient contributes zero
// instead of dividing.
inline void accumulate_momentum(std::vector<double>& g, const Tensor& raw, double mu, std::size_t n) {
    std::size_t per = raw.numel() / n;
    for (std::size_t i = 0; i < n; ++i) {
        double l1 = 0.0;
        for (std::size_t p = 0; p < per; ++p) l1 += std::abs(raw.value()[i * per + p]);
        double inv = l1 < 1e-12 ? 0.0 : 1.0 / l1;
        for (std::size_t p = 0; p < per; ++p) {
            std::size_t idx = i * per + p;
            g[idx] = mu * g[idx] + raw.value()[idx] * inv;
        }
    }
}

}  // namespace detail

// Shared driver for every attack method. `index_offset` shifts the per-image
// rng streams so a shard of a batch reproduces the full-batch results.
inline AdversarialBatch run_attack(const std::vector<const Model*>& models, const Tensor& x,
                                   const std::vector<std::size_t>& y, const AttackConfig& cfg,
                                   const Dataset* mix_pool = nullptr, std::size_t index_offset = 0) {
    cfg.validate();
    if (models.empty()) throw std::invalid_argument("attack: need at least one surrogate model");
    if (x.ndim() != 4) throw std::invalid_argument("attack: expected image batch (N,C,H,W), got " + shape_str(x.shape()));
    if (y.size() != x.dim(0)) throw std::invalid_argument("attack: label count does not match batch size");

    std::size_t n = x.dim(0);
    std::size_t per = x.numel() / n;
    double alpha = cfg.step();
    Rng base(cfg.seed);
    std::vector<Rng> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) streams.push_back(base.derive(index_offset + i));

    AdversarialBatch out;
    out.clean = Tensor(x.shape(), x.value());
    out.adv = Tensor(x.shape(), x.value());
    out.labels = y;

    Tensor ti_kernel;
    if (cfg.use_ti)
        ti_kernel = transforms::gaussian_kernel(cfg.transform.ti_kernel_size, cfg.transform.ti_sigma);
    auto smooth = [&](Tensor raw) {
        return cfg.use_ti ? transforms::ti_smooth(raw, ti_kernel) : raw;
    };

    if (cfg.method == Method::Fgsm) {
        Tensor raw = smooth(detail::pipeline_gradient(models, out.adv, y, cfg, streams, mix_pool));
        for (std::size_t i = 0; i < out.adv.numel(); ++i)
            out.adv.value()[i] = clip_project(out.clean.value()[i] + cfg.eps * sign(raw.value()[i]),
                                              out.clean.value()[i], cfg.eps);
        return out;
    }

    std::vector<double> g(x.numel(), 0.0);
    std::vector<double> g_mask(x.numel(), 0.0);
    std::vector<double> variance(x.numel(), 0.0);

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        Tensor update_dir = Tensor::zeros(x.shape());

        switch (cfg.method) {
            case Method::IFgsm: {
                Tensor raw = smooth(detail::pipeline_gradient(models, out.adv, y, cfg, streams, mix_pool));
                for (std::size_t i = 0; i < raw.numel(); ++i) update_dir.value()[i] = sign(raw.value()[i]);
                break;
            }
            case Method::MiFgsm: {
                Tensor raw = smooth(detail::pipeline_gradient(models, out.adv, y, cfg, streams, mix_pool));
                detail::accumulate_momentum(g, raw, cfg.mu, n);
                for (std::size_t i = 0; i < raw.numel(); ++i) update_dir.value()[i] = sign(g[i]);
                break;
            }
            case Method::NiFgsm: {
                // Lookahead: gradient at x + alpha*mu*g.
                Tensor nes = Tensor::zeros(x.shape());
                for (std::size_t i = 0; i < nes.numel(); ++i)
                    nes.value()[i] = out.adv.value()[i] + alpha * cfg.mu * g[i];
                Tensor raw = smooth(detail::pipeline_gradient(models, nes, y, cfg, streams, mix_pool));
                detail::accumulate_momentum(g, raw, cfg.mu, n);
                for (std::size_t i = 0; i < raw.numel(); ++i) update_dir.value()[i] = sign(g[i]);
                break;
            }
            case Method::VmiFgsm: {
                Tensor raw = detail::pipeline_gradient(models, out.adv, y, cfg, streams, mix_pool);
                Tensor combined = Tensor::zeros(x.shape());
                for (std::size_t i = 0; i < raw.numel(); ++i)
                    combined.value()[i] = raw.value()[i] + variance[i];
                combined = smooth(combined);
                detail::accumulate_momentum(g, combined, cfg.mu, n);
                for (std::size_t i = 0; i < raw.numel(); ++i) update_dir.value()[i] = sign(g[i]);
                if (cfg.vt.beta > 0.0) {
                    // v_{t+1} = (1/N) sum grad(x + u) - grad(x), u uniform in [-beta*eps, beta*eps].
                    std::vector<double> mean_grad(x.numel(), 0.0);
                    for (std::size_t s = 0; s < cfg.vt.samples; ++s) {
                        Tensor nb = Tensor::zeros(x.shape());
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t p = 0; p < per; ++p)
                                nb.value()[i * per + p] = out.adv.value()[i * per + p] +
                                                          streams[i].uniform(-cfg.vt.beta * cfg.eps, cfg.vt.beta * cfg.eps);
                        Tensor sg = detail::pipeline_gradient(models, nb, y, cfg, streams, mix_pool);
                        for (std::size_t i = 0; i < sg.numel(); ++i) mean_grad[i] += sg.value()[i];
                    }
                    for (std::size_t i = 0; i < x.numel(); ++i)
                        variance[i] = mean_grad[i] / static_cast<double>(cfg.vt.samples) - raw.value()[i];
                }
                break;
            }
            case Method::Ngi: {
                // Two branches: the untouched example and its pixel-masked copy.
                Tensor masked = Tensor::zeros(x.shape());
                for (std::size_t i = 0; i < n; ++i)
                    detail::set_image(masked, i,
                                      transforms::mask_process(detail::image_of(out.adv, i),
                                                               cfg.mask_keep_prob, streams[i]));
                Tensor raw = smooth(detail::pipeline_gradient(models, out.adv, y, cfg, streams, mix_pool));
                AttackConfig mask_cfg = cfg;  // mask branch sees no input transforms
                mask_cfg.use_di = mask_cfg.use_bsr = mask_cfg.use_admix = mask_cfg.use_si = false;
                Tensor raw_mask = smooth(detail::pipeline_gradient(models, masked, y, mask_cfg, streams, mix_pool));
                detail::accumulate_momentum(g, raw, cfg.mu, n);
                detail::accumulate_momentum(g_mask, raw_mask, cfg.mu, n);
                if (t == cfg.backtrack_k)
                    out.adv = Tensor(x.shape(), out.clean.value());  // reset the example, keep both momenta
                for (std::size_t i = 0; i < x.numel(); ++i)
                    update_dir.value()[i] = sign(g[i]) + sign(g_mask[i]);
                break;
            }
            case Method::Fgsm:
                break;  // handled above
        }

        IterRecord rec;
        if (cfg.trace) {
            rec.pre_update = Tensor(x.shape(), out.adv.value());
            rec.momentum = Tensor(x.shape(), std::vector<double>(g));
            rec.mask_momentum = Tensor(x.shape(), std::vector<double>(g_mask));
        }
        for (std::size_t i = 0; i < x.numel(); ++i)
            out.adv.value()[i] = clip_project(out.adv.value()[i] + alpha * update_dir.value()[i],
                                              out.clean.value()[i], cfg.eps);
        if (cfg.trace) {
            rec.post_update = Tensor(x.shape(), out.adv.value());
            out.trace.push_back(std::move(rec));
        }
    }
    return out;
}

// Convenience single-surrogate entry points.
inline AdversarialBatch fgsm(const Model& model, const Tensor& x, const std::vector<std::size_t>& y, double eps) {
    AttackConfig cfg;
    cfg.method = Method::Fgsm;
    cfg.eps = eps;
    cfg.iterations = 1;
    return run_attack({&model}, x, y, cfg);
}

inline AdversarialBatch i_fgsm(const Model& model, const Tensor& x, const std::vector<std::size_t>& y,
                               const AttackConfig& cfg) {
    AttackConfig c = cfg;
    c.method = Method::IFgsm;
    return run_attack({&model}, x, y, c);
}

inline AdversarialBatch mi_fgsm(const Model& model, const Tensor& x, const std::vector<std::size_t>& y,
                                const AttackConfig& cfg) {
    AttackConfig c = cfg;
    c.method = Method::MiFgsm;
    return run_attack({&model}, x, y, c);
}

inline AdversarialBatch ni_fgsm(const Model& model, const Tensor& x, const std::vector<std::size_t>& y,
                                const AttackConfig& cfg) {
    AttackConfig c = cfg;
    c.method = Method::NiFgsm;
    return run_attack({&model}, x, y, c);
}

inline AdversarialBatch vmi_fgsm(const Model& model, const Tensor& x, const std::vector<std::size_t>& y,
                                 const AttackConfig& cfg) {
    AttackConfig c = cfg;
    c.method = Method::VmiFgsm;
    return run_attack({&model}, x, y, c);
}

inline AdversarialBatch ngi_attack(const std::vector<const Model*>& models, const Tensor& x,
                                   const std::vector<std::size_t>& y, const AttackConfig& cfg,
                                   const Dataset* mix_pool = nullptr) {
    AttackConfig c = cfg;
    c.method = Method::Ngi;
    return run_attack(models, x, y, c, mix_pool);
}

inline double max_linf(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.value()[i] - b.value()[i]));
    return m;
}

}  // namespace ngi
