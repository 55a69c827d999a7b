#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ngi/dataset.hpp"
#include "ngi/model.hpp"
#include "ngi/train.hpp"

using namespace ngi;

namespace {

Dataset blobs(std::size_t count, std::uint64_t seed = 0) {
    SyntheticSpec spec;
    spec.kind = "blobs";
    spec.count = count;
    spec.seed = seed;
    return synthetic(spec);
}

Dataset glyphs(std::size_t count, std::uint64_t seed = 0, double noise = 0.2) {
    SyntheticSpec spec;
    spec.kind = "glyphs";
    spec.count = count;
    spec.seed = seed;
    spec.noise = noise;
    return synthetic(spec);
}

bool same_params(const Model& a, const Model& b) {
    if (a.params().size() != b.params().size()) return false;
    for (std::size_t i = 0; i < a.params().size(); ++i)
        if (a.params()[i].value() != b.params()[i].value()) return false;
    return true;
}

}  // namespace

TEST_CASE("mlp-d separates synthetic blobs perfectly") {
    Dataset pool = blobs(600);
    Dataset train_set = pool.slice(0, 400);
    Dataset test_set = pool.slice(400, 200);
    ModelSpec spec{"mlp-d", 1, 8, 8, 10};
    TrainHyper hyper;
    hyper.epochs = 5;
    Model m = train(spec, train_set, test_set, hyper);
    REQUIRE(accuracy(m, test_set) == 1.0);
}

TEST_CASE("cnn-a reaches high accuracy on digit glyphs") {
    Dataset pool = glyphs(4600);
    Dataset train_set = pool.slice(0, 4000);
    Dataset test_set = pool.slice(4000, 600);
    ModelSpec spec{"cnn-a", 1, 28, 28, 10};
    TrainHyper hyper;  // 3 epochs, lr 0.05, batch 64, seed 0
    Model m = train(spec, train_set, test_set, hyper);
    REQUIRE(accuracy(m, test_set) >= 0.95);
    REQUIRE(m.meta().clean_accuracy >= 0.95);
    REQUIRE_FALSE(m.meta().adversarial);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    Dataset pool = blobs(300);
    Dataset train_set = pool.slice(0, 200);
    Dataset test_set = pool.slice(200, 100);
    ModelSpec spec{"mlp-d", 1, 8, 8, 10};
    TrainHyper hyper;
    hyper.epochs = 2;
    hyper.seed = 9;
    Model a = train(spec, train_set, test_set, hyper);
    Model b = train(spec, train_set, test_set, hyper);
    REQUIRE(same_params(a, b));
    REQUIRE(a.fingerprint() == b.fingerprint());

    hyper.seed = 10;
    Model c = train(spec, train_set, test_set, hyper);
    REQUIRE_FALSE(same_params(a, c));
}

TEST_CASE("adversarial training with zero budget matches plain training") {
    Dataset pool = blobs(300);
    Dataset train_set = pool.slice(0, 200);
    Dataset test_set = pool.slice(200, 100);
    ModelSpec spec{"mlp-d", 1, 8, 8, 10};
    TrainHyper hyper;
    hyper.epochs = 2;
    AdvHyper adv;
    adv.eps = 0.0;
    Model plain = train(spec, train_set, test_set, hyper);
    Model hardened = adversarial_train(spec, train_set, test_set, hyper, adv);
    REQUIRE(same_params(plain, hardened));
    REQUIRE(hardened.meta().adversarial);
    REQUIRE_FALSE(plain.meta().adversarial);
}

TEST_CASE("adversarial training improves robust accuracy by a wide margin") {
    Dataset pool = glyphs(3400);
    Dataset train_set = pool.slice(0, 3000);
    Dataset test_set = pool.slice(3000, 400);
    ModelSpec spec{"cnn-a", 1, 28, 28, 10};
    TrainHyper hyper;
    AdvHyper adv;
    adv.eps = 0.1;
    adv.steps = 5;
    Model plain = train(spec, train_set, test_set, hyper);
    Model hardened = adversarial_train(spec, train_set, test_set, hyper, adv);

    // Robust accuracy under the same inner-loop perturbation both were (or
    // were not) trained against.
    auto robust = [&](const Model& m) {
        Tensor adv_x = detail::perturb_batch(m, test_set.images, test_set.labels, 0.1, 5);
        auto pred = m.predict(adv_x);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == test_set.labels[i]) ++ok;
        return static_cast<double>(ok) / static_cast<double>(pred.size());
    };
    double r_plain = robust(plain);
    double r_hard = robust(hardened);
    INFO("plain robust " << r_plain << " hardened robust " << r_hard);
    REQUIRE(r_hard - r_plain >= 0.20);
    REQUIRE(accuracy(hardened, test_set) >= 0.90);
}

TEST_CASE("input gradient properties") {
    Dataset pool = blobs(220);
    Dataset train_set = pool.slice(0, 200);
    Dataset test_set = pool.slice(200, 20);
    ModelSpec spec{"mlp-d", 1, 8, 8, 10};
    TrainHyper hyper;
    hyper.epochs = 3;
    Model m = train(spec, train_set, test_set, hyper);

    SECTION("saturated logits give a vanishing input gradient") {
        // Amplify the final dense layer so the softmax saturates.
        for (double& v : m.params()[m.params().size() - 2].value()) v *= 200.0;
        Dataset one = test_set.slice(0, 1);
        std::vector<std::size_t> label = {m.predict(one.images)[0]};
        LossAndGrad lg = loss_and_input_gradient(m, one.images, label);
        double linf = 0.0;
        for (double g : lg.grad.value()) linf = std::max(linf, std::abs(g));
        REQUIRE(linf < 1e-6);
    }
    SECTION("input gradient matches finite differences on sampled pixels") {
        Dataset one = test_set.slice(0, 1);
        LossAndGrad lg = loss_and_input_gradient(m, one.images, {one.labels[0]});
        Rng rng(5);
        double h = 1e-5;
        for (std::size_t probe = 0; probe < 8; ++probe) {
            std::size_t p = rng.uniform_int(one.images.numel());
            Tensor lo(one.images.shape(), one.images.value());
            Tensor hi(one.images.shape(), one.images.value());
            lo.value()[p] -= h;
            hi.value()[p] += h;
            double fl = loss_and_input_gradient(m, lo, {one.labels[0]}).loss[0];
            double fh = loss_and_input_gradient(m, hi, {one.labels[0]}).loss[0];
            double fd = (fh - fl) / (2.0 * h);
            REQUIRE(std::abs(fd - lg.grad.value()[p]) < 1e-3);
        }
    }
    SECTION("a duplicated image gets identical per-image gradients") {
        Dataset one = test_set.slice(0, 1);
        std::vector<double> doubled = one.images.value();
        doubled.insert(doubled.end(), one.images.value().begin(), one.images.value().end());
        Tensor batch({2, 1, 8, 8}, doubled);
        LossAndGrad lg = loss_and_input_gradient(m, batch, {one.labels[0], one.labels[0]});
        std::size_t per = batch.numel() / 2;
        for (std::size_t i = 0; i < per; ++i)
            REQUIRE(lg.grad.value()[i] == lg.grad.value()[per + i]);
        REQUIRE(lg.loss[0] == lg.loss[1]);
    }
    SECTION("gradient computation does not mutate the input or the model") {
        Dataset one = test_set.slice(0, 1);
        std::vector<double> before = one.images.value();
        std::uint64_t fp = m.fingerprint();
        loss_and_input_gradient(m, one.images, {one.labels[0]});
        REQUIRE(one.images.value() == before);
        REQUIRE(m.fingerprint() == fp);
    }
}

TEST_CASE("the four architectures are genuinely different models") {
    Dataset pool = glyphs(2300, 1);
    Dataset train_set = pool.slice(0, 2000);
    Dataset test_set = pool.slice(2000, 300);
    TrainHyper hyper;
    std::vector<Model> zoo;
    for (const char* arch : {"cnn-a", "cnn-b", "cnn-c", "mlp-d"})
        zoo.push_back(train(ModelSpec{arch, 1, 28, 28, 10}, train_set, test_set, hyper));
    for (std::size_t i = 0; i < zoo.size(); ++i)
        for (std::size_t j = i + 1; j < zoo.size(); ++j) {
            auto pa = zoo[i].predict(test_set.images);
            auto pb = zoo[j].predict(test_set.images);
            std::size_t differ = 0;
            for (std::size_t k = 0; k < pa.size(); ++k)
                if (pa[k] != pb[k]) ++differ;
            // Distinct architectures should disagree on at least 1% of images.
            REQUIRE(differ * 100 >= pa.size());
        }
}

TEST_CASE("unknown architecture and bad labels are rejected") {
    REQUIRE_THROWS_WITH(Model::init(ModelSpec{"cnn-z", 1, 8, 8, 10}, 0),
                        Catch::Matchers::ContainsSubstring("cnn-z"));
    Dataset d = blobs(10);
    d.labels[3] = 99;
    REQUIRE_THROWS_WITH(train(ModelSpec{"mlp-d", 1, 8, 8, 10}, d, d, TrainHyper{}),
                        Catch::Matchers::ContainsSubstring("label"));
}
