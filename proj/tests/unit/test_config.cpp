#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "ngi/config.hpp"

using namespace ngi;

TEST_CASE("attack defaults match the published operating point") {
    RunConfig c = parse_config_text("");
    const AttackConfig& a = c.attack.cfg;
    REQUIRE(a.eps == 16.0 / 255.0);
    REQUIRE(a.iterations == 10);
    REQUIRE(a.alpha == 0.0);                       // resolves to eps / T
    REQUIRE(a.step() == (16.0 / 255.0) / 10.0);
    REQUIRE(a.mu == 1.0);
    REQUIRE(a.backtrack_k == 5);
    REQUIRE(a.mask_keep_prob == 0.9);
    REQUIRE(a.vt.beta == 1.5);
    REQUIRE(a.vt.samples == 20);
    REQUIRE(a.transform.di_prob == 0.5);
    REQUIRE(a.transform.ti_kernel_size == 7);
    REQUIRE(a.transform.si_copies == 5);
    REQUIRE(a.transform.admix_m1 == 5);
    REQUIRE(a.transform.admix_m2 == 3);
    REQUIRE(a.transform.admix_eta == 0.2);
    REQUIRE(a.transform.bsr_blocks == 2);
    REQUIRE(a.transform.bsr_max_angle == 24.0);
}

TEST_CASE("parsing key=value sections") {
    std::string text =
        "# experiment configuration\n"
        "[dataset]\n"
        "kind = glyphs\n"
        "train_count = 4000   # bigger pool\n"
        "noise = 0.2\n"
        "\n"
        "[attack]\n"
        "method = ngi\n"
        "eps = 0.1\n"
        "backtrack_k = 3\n"
        "surrogate = cnn-a+cnn-b\n"
        "\n"
        "[eval]\n"
        "targets = cnn-a, cnn-b , mlp-d\n";
    RunConfig c = parse_config_text(text);
    REQUIRE(c.dataset.kind == "glyphs");
    REQUIRE(c.dataset.train_count == 4000);
    REQUIRE(c.dataset.noise == 0.2);
    REQUIRE(c.dataset.test_count == 1000);  // untouched default
    REQUIRE(c.attack.cfg.method == Method::Ngi);
    REQUIRE(c.attack.cfg.eps == 0.1);
    REQUIRE(c.attack.cfg.backtrack_k == 3);
    REQUIRE(c.attack.surrogate == "cnn-a+cnn-b");
    REQUIRE(c.eval.targets == std::vector<std::string>{"cnn-a", "cnn-b", "mlp-d"});
}

TEST_CASE("unknown keys are rejected by name") {
    REQUIRE_THROWS_WITH(parse_config_text("[attack]\nepislon = 0.1\n"),
                        Catch::Matchers::ContainsSubstring("epislon") &&
                            Catch::Matchers::ContainsSubstring("[attack]"));
    REQUIRE_THROWS_WITH(parse_config_text("[sandwich]\nkind = blt\n"),
                        Catch::Matchers::ContainsSubstring("sandwich"));
}

TEST_CASE("malformed lines are rejected with line numbers") {
    REQUIRE_THROWS_WITH(parse_config_text("[dataset\nkind = glyphs\n"),
                        Catch::Matchers::ContainsSubstring("line 1"));
    REQUIRE_THROWS_WITH(parse_config_text("[dataset]\njust some words\n"),
                        Catch::Matchers::ContainsSubstring("line 2"));
    REQUIRE_THROWS_WITH(parse_config_text("kind = glyphs\n"),
                        Catch::Matchers::ContainsSubstring("before any section"));
}

TEST_CASE("invalid values name the key and section") {
    REQUIRE_THROWS_WITH(parse_config_text("[attack]\neps = fast\n"),
                        Catch::Matchers::ContainsSubstring("fast") &&
                            Catch::Matchers::ContainsSubstring("eps"));
    REQUIRE_THROWS_WITH(parse_config_text("[attack]\ndi = maybe\n"),
                        Catch::Matchers::ContainsSubstring("maybe"));
    REQUIRE_THROWS_WITH(parse_config_text("[attack]\nmethod = pgd\n"),
                        Catch::Matchers::ContainsSubstring("pgd"));
}

TEST_CASE("emitted configuration parses back to an identical configuration") {
    RunConfig c = parse_config_text(
        "[dataset]\nkind = glyphs\nseed = 3\nnoise = 0.2\ntrain_count = 123\n"
        "[models]\ntrain = cnn-a,cnn-b\nadversarial = cnn-a\nlr = 0.01\n"
        "[attack]\nmethod = ngi\neps = 0.1\nalpha = 0.015\nti = true\nseed = 9\n"
        "[defense]\nenabled = true\nkind = rand_smooth\nsigma = 0.25\n"
        "[eval]\nsurrogates = cnn-a+cnn-b\nmethods = mi-fgsm,ngi\ncount = 77\n");
    std::string emitted = emit_config(c);
    RunConfig reparsed = parse_config_text(emitted);
    REQUIRE(emit_config(reparsed) == emitted);
    REQUIRE(reparsed.dataset.seed == 3);
    REQUIRE(reparsed.models.train == std::vector<std::string>{"cnn-a", "cnn-b"});
    REQUIRE(reparsed.attack.cfg.alpha == 0.015);
    REQUIRE(reparsed.attack.cfg.use_ti);
    REQUIRE(reparsed.defense.enabled);
    REQUIRE(reparsed.defense.cfg.sigma == 0.25);
    REQUIRE(reparsed.eval.count == 77);
}

TEST_CASE("floating point values survive the round trip exactly") {
    RunConfig c;
    c.attack.cfg.eps = 16.0 / 255.0;  // not representable in short decimal
    c.attack.cfg.alpha = 1.0 / 3.0;
    std::string emitted = emit_config(c);
    RunConfig r = parse_config_text(emitted);
    REQUIRE(r.attack.cfg.eps == c.attack.cfg.eps);
    REQUIRE(r.attack.cfg.alpha == c.attack.cfg.alpha);
}

TEST_CASE("mask keep probability flows into both attack and transform config") {
    RunConfig c = parse_config_text("[attack]\nmask_keep_prob = 0.8\n");
    REQUIRE(c.attack.cfg.mask_keep_prob == 0.8);
    REQUIRE(c.attack.cfg.transform.mask_keep_prob == 0.8);
}
