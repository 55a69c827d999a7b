#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/attacks.hpp"
#include "ngi/dataset.hpp"
#include "ngi/defenses.hpp"

// Run configuration: strict INI-style sections with key=value lines and "#"
// comments. Unknown sections or keys are rejected by name. emit() renders the
// fully resolved configuration (defaults filled in) in canonical order so a
// report can embed enough to re-run bit-exactly.

namespace ngi {

struct DatasetSection {
    std::string kind = "glyphs";  // glyphs | blobs | idx
    std::string images;           // IDX image path (kind=idx)
    std::string labels;           // IDX label path (kind=idx)
    std::size_t classes = 10;
    std::size_t train_count = 2000;
    std::size_t test_count = 1000;
    std::uint64_t seed = 0;
    double noise = 0.3;
};

struct ModelsSection {
    std::string dir = "weights";
    std::vector<std::string> train;        // architectures trained normally
    std::vector<std::string> adversarial;  // architectures trained adversarially
    std::size_t epochs = 3;
    double lr = 0.05;
    std::size_t batch = 64;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    double adv_eps = 0.1;
    std::size_t adv_steps = 5;
};

struct AttackSection {
    AttackConfig cfg;
    std::string surrogate = "cnn-a";  // model name, or "a+b+c" ensemble
    std::size_t count = 100;          // evaluation images to attack
    std::string output = "batch.ngib";
};

struct DefenseSection {
    bool enabled = false;
    DefenseConfig cfg;
};

struct EvalSection {
    std::vector<std::string> surrogates = {"cnn-a"};  // each entry may be an ensemble "a+b"
    std::vector<std::string> targets = {"cnn-a", "cnn-b", "cnn-c", "mlp-d"};
    std::vector<std::string> methods = {"mi-fgsm", "ngi"};
    std::size_t count = 200;        // evaluation slice size (after filtering)
    std::size_t min_filtered = 50;  // minimum surviving the correctness filter
    std::string output = "report";  // prefix for .csv/.md/.config artifacts
    std::size_t parallelism = 1;    // no effect on results (per-image rng streams)
};

struct RunConfig {
    DatasetSection dataset;
    ModelsSection models;
    AttackSection attack;
    DefenseSection defense;
    EvalSection eval;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

[[noreturn]] inline void bad_key(const std::string& section, const std::string& key) {
    throw std::invalid_argument("config: unknown key \"" + key + "\" in section [" + section + "]");
}

[[noreturn]] inline void bad_value(const std::string& section, const std::string& key, const std::string& value) {
    throw std::invalid_argument("config: invalid value \"" + value + "\" for key \"" + key + "\" in section [" +
                                section + "]");
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(section, key, v);
}

inline double parse_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) bad_value(section, key, v);
        return d;
    } catch (const std::invalid_argument&) {
        bad_value(section, key, v);
    } catch (const std::out_of_range&) {
        bad_value(section, key, v);
    }
}

inline std::uint64_t parse_u64(const std::string& section, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(section, key, v);
        return u;
    } catch (const std::invalid_argument&) {
        bad_value(section, key, v);
    } catch (const std::out_of_range&) {
        bad_value(section, key, v);
    }
}

inline std::size_t parse_size(const std::string& section, const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(parse_u64(section, key, v));
}

// Shortest decimal that round-trips through stod.
inline std::string fmt(double v) {
    char buf[40];
    for (int prec : {1, 3, 6, 9, 12, 15, 17}) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::stod(buf) == v) return buf;
    }
    return buf;
}

inline std::string fmt(bool v) { return v ? "true" : "false"; }

inline void assign(RunConfig& c, const std::string& sec, const std::string& key, const std::string& val) {
    if (sec == "dataset") {
        auto& d = c.dataset;
        if (key == "kind") d.kind = val;
        else if (key == "images") d.images = val;
        else if (key == "labels") d.labels = val;
        else if (key == "classes") d.classes = parse_size(sec, key, val);
        else if (key == "train_count") d.train_count = parse_size(sec, key, val);
        else if (key == "test_count") d.test_count = parse_size(sec, key, val);
        else if (key == "seed") d.seed = parse_u64(sec, key, val);
        else if (key == "noise") d.noise = parse_double(sec, key, val);
        else bad_key(sec, key);
    } else if (sec == "models") {
        auto& m = c.models;
        if (key == "dir") m.dir = val;
        else if (key == "train") m.train = split(val, ',');
        else if (key == "adversarial") m.adversarial = split(val, ',');
        else if (key == "epochs") m.epochs = parse_size(sec, key, val);
        else if (key == "lr") m.lr = parse_double(sec, key, val);
        else if (key == "batch") m.batch = parse_size(sec, key, val);
        else if (key == "momentum") m.momentum = parse_double(sec, key, val);
        else if (key == "seed") m.seed = parse_u64(sec, key, val);
        else if (key == "adv_eps") m.adv_eps = parse_double(sec, key, val);
        else if (key == "adv_steps") m.adv_steps = parse_size(sec, key, val);
        else bad_key(sec, key);
    } else if (sec == "attack") {
        auto& a = c.attack;
        if (key == "method") a.cfg.method = parse_method(val);
        else if (key == "eps") a.cfg.eps = parse_double(sec, key, val);
        else if (key == "iterations") a.cfg.iterations = parse_size(sec, key, val);
        else if (key == "alpha") a.cfg.alpha = parse_double(sec, key, val);
        else if (key == "mu") a.cfg.mu = parse_double(sec, key, val);
        else if (key == "backtrack_k") a.cfg.backtrack_k = parse_size(sec, key, val);
        else if (key == "mask_keep_prob") { a.cfg.mask_keep_prob = parse_double(sec, key, val); a.cfg.transform.mask_keep_prob = a.cfg.mask_keep_prob; }
        else if (key == "vt_beta") a.cfg.vt.beta = parse_double(sec, key, val);
        else if (key == "vt_samples") a.cfg.vt.samples = parse_size(sec, key, val);
        else if (key == "di") a.cfg.use_di = parse_bool(sec, key, val);
        else if (key == "ti") a.cfg.use_ti = parse_bool(sec, key, val);
        else if (key == "si") a.cfg.use_si = parse_bool(sec, key, val);
        else if (key == "admix") a.cfg.use_admix = parse_bool(sec, key, val);
        else if (key == "bsr") a.cfg.use_bsr = parse_bool(sec, key, val);
        else if (key == "di_prob") a.cfg.transform.di_prob = parse_double(sec, key, val);
        else if (key == "ti_kernel") a.cfg.transform.ti_kernel_size = parse_size(sec, key, val);
        else if (key == "ti_sigma") a.cfg.transform.ti_sigma = parse_double(sec, key, val);
        else if (key == "si_copies") a.cfg.transform.si_copies = parse_size(sec, key, val);
        else if (key == "admix_m1") a.cfg.transform.admix_m1 = parse_size(sec, key, val);
        else if (key == "admix_m2") a.cfg.transform.admix_m2 = parse_size(sec, key, val);
        else if (key == "admix_eta") a.cfg.transform.admix_eta = parse_double(sec, key, val);
        else if (key == "bsr_blocks") a.cfg.transform.bsr_blocks = parse_size(sec, key, val);
        else if (key == "bsr_max_angle") a.cfg.transform.bsr_max_angle = parse_double(sec, key, val);
        else if (key == "seed") a.cfg.seed = parse_u64(sec, key, val);
        else if (key == "surrogate") a.surrogate = val;
        else if (key == "count") a.count = parse_size(sec, key, val);
        else if (key == "output") a.output = val;
        else bad_key(sec, key);
    } else if (sec == "defense") {
        auto& d = c.defense;
        if (key == "enabled") d.enabled = parse_bool(sec, key, val);
        else if (key == "kind") d.cfg.kind = val;
        else if (key == "bits") d.cfg.bits = parse_size(sec, key, val);
        else if (key == "quality") d.cfg.quality = parse_double(sec, key, val);
        else if (key == "sigma") d.cfg.sigma = parse_double(sec, key, val);
        else if (key == "votes") d.cfg.votes = parse_size(sec, key, val);
        else if (key == "seed") d.cfg.seed = parse_u64(sec, key, val);
        else bad_key(sec, key);
    } else if (sec == "eval") {
        auto& e = c.eval;
        if (key == "surrogates") e.surrogates = split(val, ',');
        else if (key == "targets") e.targets = split(val, ',');
        else if (key == "methods") e.methods = split(val, ',');
        else if (key == "count") e.count = parse_size(sec, key, val);
        else if (key == "min_filtered") e.min_filtered = parse_size(sec, key, val);
        else if (key == "output") e.output = val;
        else if (key == "parallelism") e.parallelism = parse_size(sec, key, val);
        else bad_key(sec, key);
    } else {
        throw std::invalid_argument("config: unknown section [" + sec + "]");
    }
}

}  // namespace config_detail

inline RunConfig parse_config_text(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section header at line " + std::to_string(lineno) +
                                            ": " + line);
            section = config_detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key=value at line " + std::to_string(lineno) + ": " + line);
        std::string key = config_detail::trim(line.substr(0, eq));
        std::string val = config_detail::trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config: key \"" + key + "\" before any section header (line " +
                                        std::to_string(lineno) + ")");
        config_detail::assign(c, section, key, val);
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// Canonical rendering of the fully resolved configuration. Parsing the output
// reproduces the same RunConfig, so an embedded copy re-runs bit-exactly.
inline std::string emit_config(const RunConfig& c) {
    using config_detail::fmt;
    using config_detail::join;
    std::ostringstream os;
    os << "[dataset]\n";
    os << "kind = " << c.dataset.kind << "\n";
    if (!c.dataset.images.empty()) os << "images = " << c.dataset.images << "\n";
    if (!c.dataset.labels.empty()) os << "labels = " << c.dataset.labels << "\n";
    os << "classes = " << c.dataset.classes << "\n";
    os << "train_count = " << c.dataset.train_count << "\n";
    os << "test_count = " << c.dataset.test_count << "\n";
    os << "seed = " << c.dataset.seed << "\n";
    os << "noise = " << fmt(c.dataset.noise) << "\n";
    os << "\n[models]\n";
    os << "dir = " << c.models.dir << "\n";
    if (!c.models.train.empty()) os << "train = " << join(c.models.train, ',') << "\n";
    if (!c.models.adversarial.empty()) os << "adversarial = " << join(c.models.adversarial, ',') << "\n";
    os << "epochs = " << c.models.epochs << "\n";
    os << "lr = " << fmt(c.models.lr) << "\n";
    os << "batch = " << c.models.batch << "\n";
    os << "momentum = " << fmt(c.models.momentum) << "\n";
    os << "seed = " << c.models.seed << "\n";
    os << "adv_eps = " << fmt(c.models.adv_eps) << "\n";
    os << "adv_steps = " << c.models.adv_steps << "\n";
    os << "\n[attack]\n";
    const AttackConfig& a = c.attack.cfg;
    os << "method = " << method_name(a.method) << "\n";
    os << "eps = " << fmt(a.eps) << "\n";
    os << "iterations = " << a.iterations << "\n";
    os << "alpha = " << fmt(a.alpha) << "\n";
    os << "mu = " << fmt(a.mu) << "\n";
    os << "backtrack_k = " << a.backtrack_k << "\n";
    os << "mask_keep_prob = " << fmt(a.mask_keep_prob) << "\n";
    os << "vt_beta = " << fmt(a.vt.beta) << "\n";
    os << "vt_samples = " << a.vt.samples << "\n";
    os << "di = " << fmt(a.use_di) << "\n";
    os << "ti = " << fmt(a.use_ti) << "\n";
    os << "si = " << fmt(a.use_si) << "\n";
    os << "admix = " << fmt(a.use_admix) << "\n";
    os << "bsr = " << fmt(a.use_bsr) << "\n";
    os << "di_prob = " << fmt(a.transform.di_prob) << "\n";
    os << "ti_kernel = " << a.transform.ti_kernel_size << "\n";
    os << "ti_sigma = " << fmt(a.transform.ti_sigma) << "\n";
    os << "si_copies = " << a.transform.si_copies << "\n";
    os << "admix_m1 = " << a.transform.admix_m1 << "\n";
    os << "admix_m2 = " << a.transform.admix_m2 << "\n";
    os << "admix_eta = " << fmt(a.transform.admix_eta) << "\n";
    os << "bsr_blocks = " << a.transform.bsr_blocks << "\n";
    os << "bsr_max_angle = " << fmt(a.transform.bsr_max_angle) << "\n";
    os << "seed = " << a.seed << "\n";
    os << "surrogate = " << c.attack.surrogate << "\n";
    os << "count = " << c.attack.count << "\n";
    os << "output = " << c.attack.output << "\n";
    os << "\n[defense]\n";
    os << "enabled = " << fmt(c.defense.enabled) << "\n";
    os << "kind = " << c.defense.cfg.kind << "\n";
    os << "bits = " << c.defense.cfg.bits << "\n";
    os << "quality = " << fmt(c.defense.cfg.quality) << "\n";
    os << "sigma = " << fmt(c.defense.cfg.sigma) << "\n";
    os << "votes = " << c.defense.cfg.votes << "\n";
    os << "seed = " << c.defense.cfg.seed << "\n";
    os << "\n[eval]\n";
    os << "surrogates = " << join(c.eval.surrogates, ',') << "\n";
    os << "targets = " << join(c.eval.targets, ',') << "\n";
    os << "methods = " << join(c.eval.methods, ',') << "\n";
    os << "count = " << c.eval.count << "\n";
    os << "min_filtered = " << c.eval.min_filtered << "\n";
    os << "output = " << c.eval.output << "\n";
    os << "parallelism = " << c.eval.parallelism << "\n";
    return os.str();
}

}  // namespace ngi
