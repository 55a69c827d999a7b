#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ngi/dataset.hpp"
#include "ngi/defenses.hpp"
#include "ngi/model.hpp"
#include "ngi/train.hpp"

using namespace ngi;
using namespace ngi::defenses;

namespace {

struct Fixture {
    Dataset train_set, test_set;
    Model model;

    Fixture() {
        SyntheticSpec spec;
        spec.kind = "blobs";
        spec.count = 300;
        Dataset pool = synthetic(spec);
        train_set = pool.slice(0, 240);
        test_set = pool.slice(240, 60);
        TrainHyper hyper;
        hyper.epochs = 3;
        model = train(ModelSpec{"mlp-d", 1, 8, 8, 10}, train_set, test_set, hyper);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("bit depth reduction") {
    SECTION("one bit rounds to the nearest of {0, 1}") {
        Tensor x({4}, {0.6, 0.4, 0.0, 1.0});
        Tensor y = bit_reduce(x, 1);
        REQUIRE(y.value() == std::vector<double>{1.0, 0.0, 0.0, 1.0});
    }
    SECTION("idempotent") {
        Tensor x({5}, {0.13, 0.55, 0.72, 0.98, 0.31});
        Tensor once = bit_reduce(x, 3);
        Tensor twice = bit_reduce(once, 3);
        REQUIRE(once.value() == twice.value());
    }
    SECTION("eight bits is the identity on 8-bit-quantized data") {
        std::vector<double> v;
        for (int i : {0, 1, 17, 128, 200, 255}) v.push_back(i / 255.0);
        Tensor x({6}, v);
        Tensor y = bit_reduce(x, 8);
        for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(y.value()[i] == Catch::Approx(v[i]).margin(1e-12));
    }
    SECTION("bit counts outside [1,8] are rejected") {
        Tensor x({1}, {0.5});
        REQUIRE_THROWS_AS(bit_reduce(x, 0), std::invalid_argument);
        REQUIRE_THROWS_AS(bit_reduce(x, 9), std::invalid_argument);
    }
}

TEST_CASE("block transform quantization") {
    Rng rng(1);
    std::vector<double> v(1 * 16 * 16);
    for (auto& x : v) x = rng.uniform();
    Tensor img({1, 16, 16}, v);

    SECTION("quality 100 reconstructs the image almost exactly") {
        Tensor y = jpeg_quantize(img, 100.0);
        for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(std::abs(y.value()[i] - v[i]) < 1e-6);
    }
    SECTION("a constant image stays spatially constant") {
        Tensor flat({1, 16, 16}, std::vector<double>(256, 0.5));
        Tensor y = jpeg_quantize(flat, 50.0);
        // Only the DC coefficient is nonzero; its quantization may shift the
        // level slightly but cannot introduce spatial structure.
        for (double x : y.value()) {
            REQUIRE(x == Catch::Approx(y.value()[0]).margin(1e-9));
            REQUIRE(x == Catch::Approx(0.5).margin(0.01));
        }
    }
    SECTION("truncation never increases block energy of a zero-mean block") {
        // Zero-mean pattern so no DC offset hides behind the [0,1] clamp.
        std::vector<double> z(64);
        Rng r(2);
        double mean = 0.0;
        for (auto& x : z) { x = r.uniform(0.3, 0.7); mean += x; }
        mean /= 64.0;
        for (auto& x : z) x = x - mean + 0.5;
        Tensor block({1, 8, 8}, z);
        Tensor y = jpeg_quantize(block, 30.0);
        double e_in = 0.0, e_out = 0.0;
        for (std::size_t i = 0; i < 64; ++i) {
            e_in += (z[i] - 0.5) * (z[i] - 0.5);
            e_out += (y.value()[i] - 0.5) * (y.value()[i] - 0.5);
        }
        REQUIRE(e_out <= e_in + 1e-9);
    }
    SECTION("lower quality distorts more") {
        Tensor hi = jpeg_quantize(img, 90.0);
        Tensor lo = jpeg_quantize(img, 10.0);
        double d_hi = 0.0, d_lo = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            d_hi += std::abs(hi.value()[i] - v[i]);
            d_lo += std::abs(lo.value()[i] - v[i]);
        }
        REQUIRE(d_lo > d_hi);
    }
    SECTION("invalid quality is rejected") {
        REQUIRE_THROWS_AS(jpeg_quantize(img, 0.0), std::invalid_argument);
        REQUIRE_THROWS_AS(jpeg_quantize(img, 101.0), std::invalid_argument);
    }
}

TEST_CASE("random resize and pad defense") {
    Rng rng(3);
    std::vector<double> v(1 * 10 * 10);
    for (auto& x : v) x = rng.uniform(0.1, 1.0);
    Tensor img({1, 10, 10}, v);

    SECTION("output dims match the input") {
        Rng r(4);
        Tensor y = rand_resize_pad_defend(img, r);
        REQUIRE(y.shape() == img.shape());
    }
    SECTION("deterministic per rng seed") {
        Rng r1(5), r2(5);
        REQUIRE(rand_resize_pad_defend(img, r1).value() == rand_resize_pad_defend(img, r2).value());
    }
    SECTION("different draws eventually differ") {
        Rng r(6);
        Tensor first = rand_resize_pad_defend(img, r);
        bool differed = false;
        for (int i = 0; i < 20 && !differed; ++i)
            differed = rand_resize_pad_defend(img, r).value() != first.value();
        REQUIRE(differed);
    }
}

TEST_CASE("randomized smoothing prediction") {
    const Fixture& f = fixture();
    Dataset one = f.test_set.slice(0, 1);
    Tensor img({1, 8, 8}, one.images.value());

    SECTION("zero noise matches the base prediction for any vote count") {
        Rng r(1);
        std::size_t base = f.model.predict(one.images)[0];
        REQUIRE(smoothed_predict(f.model, img, 0.0, 1, r) == base);
        REQUIRE(smoothed_predict(f.model, img, 0.0, 25, r) == base);
    }
    SECTION("a single vote with noise is some valid class") {
        Rng r(2);
        REQUIRE(smoothed_predict(f.model, img, 0.3, 1, r) < 10);
    }
    SECTION("ties break toward the smallest class index") {
        // A zero model predicts class 0 for every noisy copy (argmax of equal
        // logits), so the vote is unanimous for index 0.
        Model flat = Model::init(ModelSpec{"mlp-d", 1, 8, 8, 10}, 0);
        for (Tensor& p : flat.params())
            for (double& v : p.value()) v = 0.0;
        Rng r(3);
        REQUIRE(smoothed_predict(flat, img, 0.5, 10, r) == 0);
    }
    SECTION("zero vote count is rejected") {
        Rng r(4);
        REQUIRE_THROWS_AS(smoothed_predict(f.model, img, 0.1, 0, r), std::invalid_argument);
    }
}

TEST_CASE("defense config validation") {
    DefenseConfig c;
    REQUIRE_NOTHROW(c.validate());
    c.kind = "origami";
    REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("origami"));
    c = DefenseConfig{};
    c.bits = 0;
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    c = DefenseConfig{};
    c.quality = 0.0;
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    c = DefenseConfig{};
    c.votes = 0;
    REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("defended models keep most of their clean accuracy") {
    const Fixture& f = fixture();
    double clean = accuracy(f.model, f.test_set);
    for (const char* kind : {"bit_red", "jpeg_q", "rand_resize_pad", "rand_smooth"}) {
        DefenseConfig cfg;
        cfg.kind = kind;
        cfg.bits = 3;
        cfg.quality = 92.0;  // the blob textures are high-frequency; harsher
                             // quantization would degrade clean accuracy
        cfg.sigma = 0.05;
        cfg.votes = 9;
        DefendedModel dm(f.model, cfg);
        auto pred = dm.predict(f.test_set.images);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == f.test_set.labels[i]) ++ok;
        double defended = static_cast<double>(ok) / static_cast<double>(pred.size());
        INFO(kind << ": clean " << clean << " defended " << defended);
        // Desk-scale sanity: purification must not destroy the model.
        REQUIRE(clean - defended < 0.10);
    }

    SECTION("undefended wrapper is a passthrough") {
        DefendedModel dm(f.model);
        REQUIRE_FALSE(dm.defended());
        REQUIRE(dm.predict(f.test_set.images) == f.model.predict(f.test_set.images));
    }
    SECTION("defended predictions are deterministic given the config seed") {
        DefenseConfig cfg;
        cfg.kind = "rand_smooth";
        cfg.sigma = 0.2;
        cfg.votes = 5;
        cfg.seed = 11;
        DefendedModel a(f.model, cfg), b(f.model, cfg);
        REQUIRE(a.predict(f.test_set.images) == b.predict(f.test_set.images));
    }
}
