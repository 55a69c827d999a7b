#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ngi/dataset.hpp"
#include "ngi/model.hpp"
#include "ngi/ops.hpp"
#include "ngi/rng.hpp"

namespace ngi {

struct TrainHyper {
    std::size_t epochs = 3;
    double lr = 0.05;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    double momentum = 0.9;
};

struct AdvHyper {
    double eps = 0.0;      // inner-loop L-inf budget; 0 disables hardening
    std::size_t steps = 1; // sign-gradient steps per batch
};

inline double accuracy(const Model& model, const Dataset& data, std::size_t batch = 256) {
    if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch) {
        std::size_t count = std::min(batch, data.size() - begin);
        Dataset part = data.slice(begin, count);
        auto pred = model.predict(part.images);
        for (std::size_t i = 0; i < count; ++i)
            if (pred[i] == part.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace detail {

// Iterative sign-gradient perturbation of a training batch against the
// current weights. eps == 0 returns the batch untouched.
inline Tensor perturb_batch(const Model& model, const Tensor& x, const std::vector<std::size_t>& y,
                            double eps, std::size_t steps) {
    if (eps == 0.0) return x;
    double alpha = eps / static_cast<double>(steps);
    Tensor adv(x.shape(), x.value());
    for (std::size_t s = 0; s < steps; ++s) {
        LossAndGrad lg = loss_and_input_gradient(model, adv, y);
        auto& av = adv.value();
        const auto& gv = lg.grad.value();
        const auto& cv = x.value();
        for (std::size_t i = 0; i < av.size(); ++i) {
            double step = gv[i] > 0.0 ? alpha : (gv[i] < 0.0 ? -alpha : 0.0);
            double v = av[i] + step;
            v = std::min(std::max(v, cv[i] - eps), cv[i] + eps);
            av[i] = std::min(std::max(v, 0.0), 1.0);
        }
    }
    return adv;
}

inline Model train_core(const ModelSpec& spec, const Dataset& train_set, const Dataset& test_set,
                        const TrainHyper& hyper, const AdvHyper& adv, bool adversarial) {
    if (train_set.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (adv.eps < 0.0 || adv.eps > 1.0) throw std::invalid_argument("train: adversarial eps outside pixel range");
    if (adversarial && adv.steps < 1) throw std::invalid_argument("train: adversarial steps must be >= 1");
    for (std::size_t l : train_set.labels)
        if (l >= spec.classes) throw std::invalid_argument("train: label " + std::to_string(l) + " >= class count");

    Model model = Model::init(spec, hyper.seed);
    std::vector<std::vector<double>> velocity;
    for (const Tensor& p : model.params()) velocity.emplace_back(p.numel(), 0.0);

    Rng shuffle_rng(hyper.seed ^ 0x2545F4914F6CDD1DULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
        for (std::size_t begin = 0; begin < order.size(); begin += hyper.batch) {
            std::size_t count = std::min(hyper.batch, order.size() - begin);
            std::vector<std::size_t> idx(order.begin() + begin, order.begin() + begin + count);
            Dataset batch = train_set.select(idx);
            // Adversarial hardening mixes adversarial examples into the batch:
            // the second half of each batch is perturbed, the first half stays
            // clean so the model keeps its clean accuracy. The first epoch
            // trains clean only; perturbing an untrained model destabilizes
            // learning at useful budgets.
            Tensor x = batch.images;
            if (adversarial && epoch > 0 && adv.eps > 0.0 && count >= 2) {
                std::size_t half = count / 2;
                Dataset sub = batch.slice(half, count - half);
                Tensor advpart = perturb_batch(model, sub.images, sub.labels, adv.eps, adv.steps);
                x = Tensor(batch.images.shape(), batch.images.value());
                std::size_t per = x.numel() / count;
                std::copy(advpart.value().begin(), advpart.value().end(), x.value().begin() + half * per);
            }
            for (Tensor& p : model.params()) {
                p.ensure_grad();
                p.zero_grad();
            }
            Tape tape;
            Tensor logits = model.forward(tape, x);
            Tensor losses = ops::softmax_cross_entropy(tape, logits, batch.labels);
            Tensor loss = ops::scale(tape, ops::sum(tape, losses), 1.0 / static_cast<double>(count));
            if (!std::isfinite(loss.item()))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            for (std::size_t p = 0; p < model.params().size(); ++p) {
                auto& val = model.params()[p].value();
                const auto& grad = model.params()[p].grad();
                auto& vel = velocity[p];
                for (std::size_t j = 0; j < val.size(); ++j) {
                    vel[j] = hyper.momentum * vel[j] + grad[j];
                    val[j] -= hyper.lr * vel[j];
                }
            }
        }
    }

    // Snap weights to f32 so the serialized form reproduces them bit-exactly.
    for (Tensor& p : model.params())
        for (double& v : p.value()) v = static_cast<double>(static_cast<float>(v));

    model.meta().seed = hyper.seed;
    model.meta().epochs = static_cast<std::uint32_t>(hyper.epochs);
    model.meta().adversarial = adversarial;
    model.meta().clean_accuracy = test_set.size() ? accuracy(model, test_set) : 0.0;
    return model;
}

}  // namespace detail

inline Model train(const ModelSpec& spec, const Dataset& train_set, const Dataset& test_set,
                   const TrainHyper& hyper) {
    return detail::train_core(spec, train_set, test_set, hyper, AdvHyper{}, false);
}

inline Model adversarial_train(const ModelSpec& spec, const Dataset& train_set, const Dataset& test_set,
                               const TrainHyper& hyper, const AdvHyper& adv) {
    return detail::train_core(spec, train_set, test_set, hyper, adv, true);
}

}  // namespace ngi
