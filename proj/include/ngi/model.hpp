#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/ops.hpp"
#include "ngi/rng.hpp"
#include "ngi/tensor.hpp"

namespace ngi {

// Architecture description of a small convolutional classifier. The four
// architectures are pairwise distinct in kernel size or depth so transfer is
// measured across genuinely different models.
struct ModelSpec {
    std::string arch;  // cnn-a | cnn-b | cnn-c | mlp-d
    std::size_t in_c = 1, in_h = 28, in_w = 28;
    std::size_t classes = 10;

    bool operator==(const ModelSpec&) const = default;
};

struct TrainMeta {
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;
    double clean_accuracy = 0.0;
    bool adversarial = false;
};

namespace detail {

struct LayerDef {
    enum Kind { Conv, Relu, Pool, Flatten, Dense } kind;
    std::size_t out = 0;     // channels (Conv) or units (Dense)
    std::size_t ksize = 0;   // Conv kernel side
    std::size_t stride = 1;  // Conv stride
    std::size_t pad = 0;     // Conv zero padding
};

inline std::vector<LayerDef> layers_for(const ModelSpec& s) {
    using L = LayerDef;
    if (s.arch == "cnn-a")
        return {{L::Conv, 4, 3, 1, 0}, {L::Relu}, {L::Pool},
                {L::Conv, 8, 3, 1, 0}, {L::Relu}, {L::Pool},
                {L::Flatten}, {L::Dense, s.classes}};
    if (s.arch == "cnn-b")
        return {{L::Conv, 6, 5, 1, 0}, {L::Relu}, {L::Pool},
                {L::Conv, 10, 5, 1, 0}, {L::Relu}, {L::Pool},
                {L::Flatten}, {L::Dense, s.classes}};
    if (s.arch == "cnn-c")
        return {{L::Conv, 8, 3, 2, 1}, {L::Relu},
                {L::Conv, 8, 3, 1, 1}, {L::Relu}, {L::Pool},
                {L::Flatten}, {L::Dense, 48}, {L::Relu}, {L::Dense, s.classes}};
    if (s.arch == "mlp-d")
        return {{L::Flatten}, {L::Dense, 48}, {L::Relu}, {L::Dense, s.classes}};
    throw std::invalid_argument("unknown architecture id: " + s.arch);
}

// Parameter shapes in forward order: conv kernel+bias, dense weight+bias.
inline std::vector<Shape> param_shapes(const ModelSpec& s) {
    std::vector<Shape> shapes;
    std::size_t c = s.in_c, h = s.in_h, w = s.in_w;
    std::size_t flat = 0;
    for (const auto& l : layers_for(s)) {
        switch (l.kind) {
            case LayerDef::Conv: {
                shapes.push_back({l.out, c, l.ksize, l.ksize});
                shapes.push_back({l.out});
                if (h + 2 * l.pad < l.ksize || w + 2 * l.pad < l.ksize)
                    throw std::invalid_argument("input " + std::to_string(h) + "x" + std::to_string(w) +
                                                " too small for " + s.arch);
                h = (h + 2 * l.pad - l.ksize) / l.stride + 1;
                w = (w + 2 * l.pad - l.ksize) / l.stride + 1;
                c = l.out;
                break;
            }
            case LayerDef::Pool:
                h /= 2;
                w /= 2;
                if (h == 0 || w == 0) throw std::invalid_argument("input too small for " + s.arch);
                break;
            case LayerDef::Flatten:
                flat = c * h * w;
                break;
            case LayerDef::Dense:
                shapes.push_back({l.out, flat});
                shapes.push_back({l.out});
                flat = l.out;
                break;
            case LayerDef::Relu:
                break;
        }
    }
    return shapes;
}

}  // namespace detail

// A ModelSpec plus its parameter tensors and training metadata.
class Model {
public:
    Model() = default;

    // Fresh model with He-normal kernels/weights and zero biases.
    static Model init(const ModelSpec& spec, std::uint64_t seed) {
        Model m;
        m.spec_ = spec;
        Rng rng(seed ^ 0xA5A5A5A5DEADBEEFULL);
        for (const Shape& sh : detail::param_shapes(spec)) {
            if (sh.size() == 1) {
                m.params_.push_back(Tensor::zeros(sh));
            } else {
                std::size_t fan_in = shape_numel(sh) / sh[0];
                double std = std::sqrt(2.0 / static_cast<double>(fan_in));
                std::vector<double> v(shape_numel(sh));
                for (auto& x : v) x = rng.normal(0.0, std);
                m.params_.push_back(Tensor(sh, std::move(v)));
            }
        }
        return m;
    }

    const ModelSpec& spec() const { return spec_; }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    TrainMeta& meta() { return meta_; }
    const TrainMeta& meta() const { return meta_; }

    // x: (N,C,H,W) -> logits (N,classes)
    Tensor forward(Tape& tape, const Tensor& x) const {
        if (x.ndim() != 4 || x.dim(1) != spec_.in_c || x.dim(2) != spec_.in_h || x.dim(3) != spec_.in_w)
            throw std::invalid_argument("forward: input " + shape_str(x.shape()) + " does not match spec (" +
                                        std::to_string(spec_.in_c) + "," + std::to_string(spec_.in_h) + "," +
                                        std::to_string(spec_.in_w) + ")");
        Tensor cur = x;
        std::size_t p = 0;
        using L = detail::LayerDef;
        for (const auto& l : detail::layers_for(spec_)) {
            switch (l.kind) {
                case L::Conv: {
                    const Tensor& k = params_[p++];
                    const Tensor& b = params_[p++];
                    cur = ops::conv2d(tape, cur, k, b, l.stride, l.pad);
                    break;
                }
                case L::Relu:
                    cur = ops::relu(tape, cur);
                    break;
                case L::Pool:
                    cur = ops::maxpool2d(tape, cur, 2);
                    break;
                case L::Flatten:
                    cur = ops::reshape(tape, cur, {cur.dim(0), cur.numel() / cur.dim(0)});
                    break;
                case L::Dense: {
                    const Tensor& w = params_[p++];
                    const Tensor& b = params_[p++];
                    cur = ops::dense(tape, cur, w, b);
                    break;
                }
            }
        }
        return cur;
    }

    // Argmax prediction per image; ties resolve to the smallest class index.
    std::vector<std::size_t> predict(const Tensor& x) const {
        Tape tape;
        Tensor logits = forward(tape, x);
        std::size_t n = logits.dim(0), c = logits.dim(1);
        std::vector<std::size_t> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = &logits.value()[i * c];
            std::size_t best = 0;
            for (std::size_t j = 1; j < c; ++j)
                if (row[j] > row[best]) best = j;
            out[i] = best;
        }
        return out;
    }

    // FNV-1a over the parameter bytes; identifies a trained model in reports.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 0x100000001b3ULL;
            }
        };
        for (const Tensor& t : params_) mix(t.value().data(), t.value().size() * sizeof(double));
        return h;
    }

private:
    ModelSpec spec_;
    std::vector<Tensor> params_;
    TrainMeta meta_;
};

struct LossAndGrad {
    std::vector<double> loss;  // per image
    Tensor grad;               // same shape as x
};

// Loss and d(loss)/d(input) per image. Pure function of (model, x, y): uses a
// private tape and a private copy of x as the differentiated leaf.
inline LossAndGrad loss_and_input_gradient(const Model& model, const Tensor& x,
                                           const std::vector<std::size_t>& y) {
    Tape tape;
    Tensor leaf(x.shape(), x.value(), true);
    Tensor logits = model.forward(tape, leaf);
    Tensor losses = ops::softmax_cross_entropy(tape, logits, y);
    Tensor total = ops::sum(tape, losses);
    LossAndGrad out;
    out.loss = losses.value();
    tape.backward(total);
    out.grad = Tensor(x.shape(), leaf.grad());
    return out;
}

}  // namespace ngi
