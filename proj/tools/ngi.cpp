// Command-line entry point: config-driven training, attacking, defending, and
// reporting. One config file fully specifies a run; the eval subcommand embeds
// the resolved config next to its reports so any run can be reproduced
// byte-for-byte.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ngi/attacks.hpp"
#include "ngi/config.hpp"
#include "ngi/dataset.hpp"
#include "ngi/defenses.hpp"
#include "ngi/eval.hpp"
#include "ngi/serialize.hpp"
#include "ngi/train.hpp"

namespace {

struct Datasets {
    ngi::Dataset train;
    ngi::Dataset test;
};

// One pool of train_count + test_count samples, split front/back, so the two
// halves are disjoint and individually deterministic.
Datasets make_datasets(const ngi::RunConfig& cfg) {
    const auto& d = cfg.dataset;
    ngi::Dataset all;
    if (d.kind == "idx") {
        if (d.images.empty() || d.labels.empty())
            throw std::runtime_error("dataset: kind=idx requires images= and labels= paths");
        all = ngi::idx::load(d.images, d.labels, d.classes);
    } else {
        ngi::SyntheticSpec spec;
        spec.kind = d.kind;
        spec.classes = d.classes;
        spec.count = d.train_count + d.test_count;
        spec.seed = d.seed;
        spec.noise = d.noise;
        all = ngi::synthetic(spec);
    }
    if (all.size() < d.train_count + d.test_count)
        throw std::runtime_error("dataset: " + std::to_string(all.size()) + " samples available, need " +
                                 std::to_string(d.train_count + d.test_count));
    return {all.slice(0, d.train_count), all.slice(d.train_count, d.test_count)};
}

std::string weight_path(const ngi::RunConfig& cfg, const std::string& name) {
    return cfg.models.dir + "/" + name + ".ngiw";
}

ngi::ModelSpec spec_for(const ngi::RunConfig& cfg, const std::string& arch) {
    ngi::ModelSpec s;
    s.arch = arch;
    s.classes = cfg.dataset.classes;
    s.in_c = 1;
    if (cfg.dataset.kind == "blobs") { s.in_h = 8; s.in_w = 8; }
    else { s.in_h = 28; s.in_w = 28; }
    return s;
}

// Loads (and caches) named weight files; "-adv" suffixed names are the
// adversarially trained variants. std::map keeps model addresses stable.
class ModelStore {
public:
    explicit ModelStore(const ngi::RunConfig& cfg) : cfg_(cfg) {}

    const ngi::Model& get(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        std::string path = weight_path(cfg_, name);
        if (!std::filesystem::exists(path))
            throw std::runtime_error("model \"" + name + "\": weight file not found: " + path +
                                     " (run the train subcommand first)");
        return cache_.emplace(name, ngi::io::load_weights(path)).first->second;
    }

    // "a+b+c" denotes an ensemble surrogate.
    std::vector<const ngi::Model*> ensemble(const std::string& names) {
        std::vector<const ngi::Model*> out;
        std::string cur;
        for (char ch : names + "+") {
            if (ch == '+') {
                if (!cur.empty()) out.push_back(&get(cur));
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (out.empty()) throw std::runtime_error("empty surrogate specification: " + names);
        return out;
    }

private:
    const ngi::RunConfig& cfg_;
    std::map<std::string, ngi::Model> cache_;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

int cmd_train(const std::string& config_path) {
    ngi::RunConfig cfg = ngi::load_config(config_path);
    Datasets data = make_datasets(cfg);
    std::filesystem::create_directories(cfg.models.dir);
    ngi::TrainHyper hyper;
    hyper.epochs = cfg.models.epochs;
    hyper.lr = cfg.models.lr;
    hyper.batch = cfg.models.batch;
    hyper.momentum = cfg.models.momentum;
    hyper.seed = cfg.models.seed;
    if (cfg.models.train.empty() && cfg.models.adversarial.empty())
        throw std::runtime_error("config: [models] lists nothing to train (set train= or adversarial=)");
    for (const std::string& arch : cfg.models.train) {
        ngi::Model m = ngi::train(spec_for(cfg, arch), data.train, data.test, hyper);
        ngi::io::save_weights(m, weight_path(cfg, arch));
        std::printf("trained %-10s seed=%llu epochs=%zu clean_accuracy=%.4f -> %s\n", arch.c_str(),
                    static_cast<unsigned long long>(hyper.seed), cfg.models.epochs, m.meta().clean_accuracy,
                    weight_path(cfg, arch).c_str());
    }
    ngi::AdvHyper adv;
    adv.eps = cfg.models.adv_eps;
    adv.steps = cfg.models.adv_steps;
    for (const std::string& arch : cfg.models.adversarial) {
        ngi::Model m = ngi::adversarial_train(spec_for(cfg, arch), data.train, data.test, hyper, adv);
        std::string name = arch + "-adv";
        ngi::io::save_weights(m, weight_path(cfg, name));
        std::printf("trained %-10s seed=%llu epochs=%zu clean_accuracy=%.4f (adversarial, eps=%.3f) -> %s\n",
                    name.c_str(), static_cast<unsigned long long>(hyper.seed), cfg.models.epochs,
                    m.meta().clean_accuracy, adv.eps, weight_path(cfg, name).c_str());
    }
    return 0;
}

int cmd_attack(const std::string& config_path) {
    ngi::RunConfig cfg = ngi::load_config(config_path);
    Datasets data = make_datasets(cfg);
    ModelStore store(cfg);
    auto surrogates = store.ensemble(cfg.attack.surrogate);

    // Evaluation convention: attack only images the surrogates classify
    // correctly, so clean accuracy on the slice is 100%.
    std::vector<ngi::TargetEntry> filter_targets;
    {
        std::vector<const ngi::Model*> seen;
        for (const ngi::Model* m : surrogates)
            filter_targets.push_back({"surrogate", ngi::DefendedModel(*m)});
    }
    ngi::Dataset slice = ngi::filter_correct(data.test, filter_targets, cfg.attack.count);
    if (slice.size() == 0) throw std::runtime_error("attack: no correctly classified images to attack");

    ngi::io::BatchFile file;
    file.labels = slice.labels;
    file.seed = cfg.attack.cfg.seed;
    if (cfg.attack.cfg.eps == 0.0) {
        // Degenerate budget: the adversarial batch is the clean batch.
        file.clean = slice.images;
        file.adv = slice.images;
        file.method = ngi::method_name(cfg.attack.cfg.method);
        file.eps = 0.0;
    } else {
        ngi::AdversarialBatch batch =
            ngi::run_attack(surrogates, slice.images, slice.labels, cfg.attack.cfg, &data.train);
        file.clean = batch.clean;
        file.adv = batch.adv;
        file.method = ngi::method_name(cfg.attack.cfg.method);
        file.eps = cfg.attack.cfg.eps;
    }
    ngi::io::save_batch(file, cfg.attack.output);
    double wb = ngi::attack_success_rate(ngi::DefendedModel(*surrogates.front()), file.adv, file.labels);
    std::printf("attack method=%s eps=%.6f images=%zu white_box_success=%.4f -> %s\n", file.method.c_str(),
                file.eps, slice.size(), wb, cfg.attack.output.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path) {
    ngi::RunConfig cfg = ngi::load_config(config_path);
    Datasets data = make_datasets(cfg);
    ModelStore store(cfg);
    if (cfg.eval.targets.empty()) throw std::runtime_error("config: [eval] targets list is empty");

    std::vector<ngi::TargetEntry> targets;
    for (const std::string& name : cfg.eval.targets)
        targets.push_back({name, ngi::DefendedModel(store.get(name))});
    if (cfg.defense.enabled) {
        // Defended columns: every target repeated behind the configured defense.
        std::vector<ngi::TargetEntry> defended;
        for (const std::string& name : cfg.eval.targets)
            defended.push_back({name + "+" + cfg.defense.cfg.kind,
                                ngi::DefendedModel(store.get(name), cfg.defense.cfg)});
        for (auto& t : defended) targets.push_back(std::move(t));
    }

    std::vector<ngi::SurrogateSet> surrogates;
    for (const std::string& spec : cfg.eval.surrogates)
        surrogates.push_back({spec, store.ensemble(spec)});

    std::vector<ngi::MethodEntry> methods;
    for (const std::string& name : cfg.eval.methods) {
        ngi::AttackConfig a = cfg.attack.cfg;
        a.method = ngi::parse_method(name);
        methods.push_back({name, a});
    }

    // Filter on the undefended base models only.
    std::vector<ngi::TargetEntry> base_targets;
    for (const std::string& name : cfg.eval.targets)
        base_targets.push_back({name, ngi::DefendedModel(store.get(name))});
    ngi::Dataset slice = ngi::filter_correct(data.test, base_targets, cfg.eval.count);

    ngi::EvaluationReport report =
        ngi::run_transfer_matrix(surrogates, targets, methods, slice, &data.train, cfg.eval.min_filtered);
    report.resolved_config = ngi::emit_config(cfg);

    write_text(cfg.eval.output + ".csv", ngi::emit_csv(report));
    write_text(cfg.eval.output + ".md", ngi::emit_markdown(report));
    write_text(cfg.eval.output + ".config", report.resolved_config);
    std::printf("eval surrogates=%zu methods=%zu targets=%zu images=%zu wall=%.1fs -> %s.{csv,md,config}\n",
                surrogates.size(), methods.size(), targets.size(), slice.size(), report.wall_seconds,
                cfg.eval.output.c_str());
    return 0;
}

int cmd_sweep(const std::string& config_path) {
    ngi::RunConfig cfg = ngi::load_config(config_path);
    Datasets data = make_datasets(cfg);
    ModelStore store(cfg);
    if (cfg.eval.surrogates.empty() || cfg.eval.targets.empty())
        throw std::runtime_error("config: sweep needs [eval] surrogates and targets");

    const ngi::Model& surrogate = store.get(cfg.eval.surrogates.front());
    const std::string& target_name = cfg.eval.targets.back();  // held-out target
    ngi::DefendedModel target(store.get(target_name));

    std::vector<ngi::TargetEntry> base_targets;
    for (const std::string& name : cfg.eval.targets)
        base_targets.push_back({name, ngi::DefendedModel(store.get(name))});
    ngi::Dataset slice = ngi::filter_correct(data.test, base_targets, cfg.eval.count);
    if (slice.size() < cfg.eval.min_filtered)
        throw std::runtime_error("sweep: filtered evaluation set has only " + std::to_string(slice.size()) +
                                 " images");

    // Backtracking sweep over the default K grid (restricted to K < T).
    std::vector<std::size_t> k_values;
    for (std::size_t k : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{5}, std::size_t{7}})
        if (k < cfg.attack.cfg.iterations) k_values.push_back(k);
    auto rates = ngi::run_backtracking_sweep(surrogate, target, k_values, cfg.attack.cfg, slice);
    std::string sweep_csv = "k,rate\n";
    for (auto [k, r] : rates) sweep_csv += std::to_string(k) + "," + ngi::format_rate(r) + "\n";
    write_text(cfg.eval.output + "-backtrack.csv", sweep_csv);

    // Step-scaling comparison: baseline step vs doubled step at half the
    // iterations, split by normal / adversarially trained targets.
    auto pairs = ngi::run_step_scaling_comparison(surrogate, base_targets, cfg.attack.cfg, slice);
    std::string step_csv = "target,adversarial,base_rate,doubled_rate\n";
    for (const auto& p : pairs)
        step_csv += p.target + "," + (p.adversarial_target ? "1" : "0") + "," + ngi::format_rate(p.base_rate) +
                    "," + ngi::format_rate(p.doubled_rate) + "\n";
    write_text(cfg.eval.output + "-stepscale.csv", step_csv);

    std::printf("sweep surrogate=%s target=%s images=%zu k_grid=%zu -> %s-{backtrack,stepscale}.csv\n",
                cfg.eval.surrogates.front().c_str(), target_name.c_str(), slice.size(), k_values.size(),
                cfg.eval.output.c_str());
    for (auto [k, r] : rates) std::printf("  backtrack k=%zu rate=%.4f\n", k, r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial transfer-attack toolkit: train models, craft attacks, evaluate transfer"};
    app.require_subcommand(1);

    std::string train_cfg, attack_cfg, eval_cfg, sweep_cfg;
    app.add_subcommand("train", "Train the model zoo from a config file")
        ->add_option("config", train_cfg, "Path to INI config")->required();
    app.add_subcommand("attack", "Craft an adversarial batch from a config file")
        ->add_option("config", attack_cfg, "Path to INI config")->required();
    app.add_subcommand("eval", "Run a transfer matrix and emit reports")
        ->add_option("config", eval_cfg, "Path to INI config")->required();
    app.add_subcommand("sweep", "Run backtracking and step-scaling sweeps")
        ->add_option("config", sweep_cfg, "Path to INI config")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("train")) return cmd_train(train_cfg);
        if (app.got_subcommand("attack")) return cmd_attack(attack_cfg);
        if (app.got_subcommand("eval")) return cmd_eval(eval_cfg);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep_cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
