#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/attacks.hpp"
#include "ngi/dataset.hpp"
#include "ngi/defenses.hpp"
#include "ngi/model.hpp"

// Experiment drivers: transfer matrices over (surrogate, method, target)
// triples, the backtracking and step-scaling sweeps, and report rendering.

namespace ngi {

struct TransferCell {
    std::string surrogate;
    std::string method;
    std::string target;
    double rate = 0.0;
    std::size_t samples = 0;
    bool white_box = false;
};

struct TransferMatrix {
    std::vector<TransferCell> cells;
};

struct EvaluationReport {
    TransferMatrix matrix;
    std::string resolved_config;  // config text sufficient to re-run bit-exactly
    std::vector<std::pair<std::string, std::uint64_t>> model_fingerprints;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

struct SurrogateSet {
    std::string name;
    std::vector<const Model*> models;
};

struct TargetEntry {
    std::string name;
    DefendedModel target;
};

struct MethodEntry {
    std::string name;
    AttackConfig cfg;
};

// Fraction of images whose prediction differs from the ground-truth label.
inline double attack_success_rate(const DefendedModel& target, const Tensor& adv,
                                  const std::vector<std::size_t>& labels) {
    if (labels.empty()) throw std::invalid_argument("attack_success_rate: empty batch");
    auto pred = target.predict(adv);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] != labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

inline double attack_success_rate(const DefendedModel& target, const AdversarialBatch& batch) {
    return attack_success_rate(target, batch.adv, batch.labels);
}

// Evaluation-set filter: keep only images every target's base model classifies
// correctly, mirroring the convention that clean accuracy on the evaluation
// slice is 100%.
inline Dataset filter_correct(const Dataset& data, const std::vector<TargetEntry>& targets,
                              std::size_t limit = 0) {
    std::vector<bool> keep(data.size(), true);
    for (const auto& t : targets) {
        auto pred = t.target.model().predict(data.images);
        for (std::size_t i = 0; i < data.size(); ++i)
            if (pred[i] != data.labels[i]) keep[i] = false;
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (keep[i]) idx.push_back(i);
        if (limit && idx.size() == limit) break;
    }
    return data.select(idx);
}

inline bool surrogate_contains(const SurrogateSet& s, const Model& target) {
    for (const Model* m : s.models)
        if (m == &target || m->fingerprint() == target.fingerprint()) return true;
    return false;
}

// One adversarial batch per (surrogate set, method), evaluated against every
// target. The dataset slice must already be filtered; fewer than min_filtered
// images is rejected.
inline EvaluationReport run_transfer_matrix(const std::vector<SurrogateSet>& surrogates,
                                            const std::vector<TargetEntry>& targets,
                                            const std::vector<MethodEntry>& methods,
                                            const Dataset& slice, const Dataset* mix_pool = nullptr,
                                            std::size_t min_filtered = 50) {
    if (slice.size() < min_filtered)
        throw std::invalid_argument("transfer matrix: filtered evaluation set has only " +
                                    std::to_string(slice.size()) + " images (need >= " +
                                    std::to_string(min_filtered) + ")");
    auto t0 = std::chrono::steady_clock::now();
    EvaluationReport report;
    for (const auto& s : surrogates)
        for (const Model* m : s.models)
            report.model_fingerprints.emplace_back(s.name, m->fingerprint());
    for (const auto& t : targets)
        report.model_fingerprints.emplace_back(t.name, t.target.model().fingerprint());
    for (const auto& s : surrogates) {
        for (const auto& me : methods) {
            AdversarialBatch batch = run_attack(s.models, slice.images, slice.labels, me.cfg, mix_pool);
            report.seed = me.cfg.seed;
            for (const auto& t : targets) {
                TransferCell cell;
                cell.surrogate = s.name;
                cell.method = me.name;
                cell.target = t.name;
                cell.rate = attack_success_rate(t.target, batch);
                cell.samples = slice.size();
                cell.white_box = surrogate_contains(s, t.target.model());
                report.matrix.cells.push_back(std::move(cell));
            }
        }
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Transfer rate per backtracking step K against one held-out target, all runs
// from the same seed base.
inline std::vector<std::pair<std::size_t, double>> run_backtracking_sweep(
    const Model& surrogate, const DefendedModel& target, const std::vector<std::size_t>& k_values,
    const AttackConfig& base_cfg, const Dataset& slice) {
    std::vector<std::pair<std::size_t, double>> rates;
    for (std::size_t k : k_values) {
        AttackConfig cfg = base_cfg;
        cfg.method = Method::Ngi;
        cfg.backtrack_k = k;
        AdversarialBatch batch = run_attack({&surrogate}, slice.images, slice.labels, cfg);
        rates.emplace_back(k, attack_success_rate(target, batch));
    }
    return rates;
}

struct StepScalingResult {
    std::string target;
    bool adversarial_target = false;
    double base_rate = 0.0;     // MI-FGSM at alpha, T iterations
    double doubled_rate = 0.0;  // MI-FGSM at 2*alpha, T/2 iterations (same budget)
};

inline std::vector<StepScalingResult> run_step_scaling_comparison(const Model& surrogate,
                                                                  const std::vector<TargetEntry>& targets,
                                                                  const AttackConfig& base_cfg,
                                                                  const Dataset& slice) {
    AttackConfig mi = base_cfg;
    mi.method = Method::MiFgsm;
    AttackConfig doubled = mi;
    doubled.alpha = 2.0 * mi.step();
    doubled.iterations = std::max<std::size_t>(1, mi.iterations / 2);
    AdversarialBatch a = run_attack({&surrogate}, slice.images, slice.labels, mi);
    AdversarialBatch b = run_attack({&surrogate}, slice.images, slice.labels, doubled);
    std::vector<StepScalingResult> out;
    for (const auto& t : targets) {
        StepScalingResult r;
        r.target = t.name;
        r.adversarial_target = t.target.model().meta().adversarial;
        r.base_rate = attack_success_rate(t.target, a);
        r.doubled_rate = attack_success_rate(t.target, b);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

inline std::string format_rate(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", rate);
    return buf;
}

inline std::string emit_csv(const EvaluationReport& report) {
    std::string out = "surrogate,method,target,rate,n,white_box\n";
    for (const auto& c : report.matrix.cells) {
        out += c.surrogate + "," + c.method + "," + c.target + "," + format_rate(c.rate) + "," +
               std::to_string(c.samples) + "," + (c.white_box ? "1" : "0") + "\n";
    }
    return out;
}

inline TransferMatrix parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "surrogate,method,target,rate,n,white_box")
        throw std::invalid_argument("csv: missing or malformed header");
    TransferMatrix m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        TransferCell c;
        std::string rate, n, wb;
        if (!std::getline(row, c.surrogate, ',') || !std::getline(row, c.method, ',') ||
            !std::getline(row, c.target, ',') || !std::getline(row, rate, ',') ||
            !std::getline(row, n, ',') || !std::getline(row, wb))
            throw std::invalid_argument("csv: malformed row: " + line);
        c.rate = std::stod(rate);
        c.samples = std::stoul(n);
        c.white_box = wb == "1";
        m.cells.push_back(std::move(c));
    }
    return m;
}

// Markdown table in percent mode: rows are (surrogate, method), columns are
// targets, white-box cells starred.
inline std::string emit_markdown(const EvaluationReport& report) {
    std::vector<std::string> targets;
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& c : report.matrix.cells) {
        if (std::find(targets.begin(), targets.end(), c.target) == targets.end()) targets.push_back(c.target);
        std::pair<std::string, std::string> key{c.surrogate, c.method};
        if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
    }
    std::ostringstream os;
    os << "| surrogate | method |";
    for (const auto& t : targets) os << " " << t << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < targets.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& row : rows) {
        os << "| " << row.first << " | " << row.second << " |";
        for (const auto& t : targets) {
            bool found = false;
            for (const auto& c : report.matrix.cells)
                if (c.surrogate == row.first && c.method == row.second && c.target == t) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.1f", c.rate * 100.0);
                    os << " " << buf << (c.white_box ? "*" : "") << " |";
                    found = true;
                    break;
                }
            if (!found) os << " - |";
        }
        os << "\n";
    }
    return os.str();
}

inline std::string emit_report(const EvaluationReport& report, const std::string& format) {
    if (format == "csv") return emit_csv(report);
    if (format == "markdown") return emit_markdown(report);
    throw std::invalid_argument("emit_report: unknown format " + format);
}

}  // namespace ngi
