#pragma once

// Label correction machinery: the candidate margin, detection of the epoch at
// which warm-up has converged, and the per-sample correction rule (margin
// test, augmentation consistency, then moving the predicted non-candidate
// into the candidate set, optionally swapping the weakest candidate out).

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/io.hpp"
#include "irnet/model.hpp"
#include "irnet/rng.hpp"

namespace irnet {

// Highest candidate score minus highest non-candidate score. Undefined for an
// empty or full candidate set (one side has no labels).
inline double margin(const std::vector<double>& f, LabelSet candidates) {
    if (candidates.empty()) throw std::invalid_argument("margin: empty candidate set");
    if (candidates.count() == static_cast<int>(f.size()))
        throw std::invalid_argument("margin: full candidate set");
    return f[argmax_in(f, candidates)] - f[argmax_out(f, candidates)];
}

enum class E0Mode { ConvergenceCheck, FirstLocalMax, Fixed };

inline const char* to_string(E0Mode m) {
    switch (m) {
        case E0Mode::ConvergenceCheck: return "convergence";
        case E0Mode::FirstLocalMax: return "local_max";
        case E0Mode::Fixed: return "fixed";
    }
    return "?";
}

inline E0Mode e0_mode_from_string(const std::string& s) {
    if (s == "convergence") return E0Mode::ConvergenceCheck;
    if (s == "local_max") return E0Mode::FirstLocalMax;
    if (s == "fixed") return E0Mode::Fixed;
    throw ConfigError("unknown e0 mode: " + s);
}

// ConvergenceCheck: first epoch e >= 10 whose trailing 10-step accuracy gain
// sum drops below 1e-5. The sum of consecutive differences telescopes, so the
// condition is res[e] - res[e-10] < 1e-5 over the 0-indexed history.
inline std::optional<int> detect_e0_convergence(const std::vector<double>& val_history,
                                                double threshold = 1e-5) {
    for (int e = 10; e < static_cast<int>(val_history.size()); ++e)
        if (val_history[e] - val_history[e - 10] < threshold) return e;
    return std::nullopt;
}

// FirstLocalMax: first strict local maximum of the 5-epoch trailing-mean
// smoothed history. Only epochs with a full window and a known successor can
// qualify, so detection lags the maximum by one epoch.
inline std::optional<int> detect_e0_local_max(const std::vector<double>& val_history) {
    const int n = static_cast<int>(val_history.size());
    if (n < 6) return std::nullopt;
    auto smooth = [&](int e) {
        double s = 0.0;
        for (int i = e - 4; i <= e; ++i) s += val_history[i];
        return s / 5.0;
    };
    for (int e = 5; e + 1 < n; ++e)
        if (smooth(e) > smooth(e - 1) && smooth(e) > smooth(e + 1)) return e;
    return std::nullopt;
}

struct RefineConfig {
    bool enabled = true;
    double tau_eps = 0.008;       // margin threshold: correct when tau <= -tau_eps
    int num_augmentations = 1;    // consistency votes per candidate correction
    double aug_sigma = -1.0;      // jitter scale; < 0 means 0.05 * train feature std
    bool swapping = false;        // also drop the weakest candidate on correction
    E0Mode e0_mode = E0Mode::ConvergenceCheck;
    int e0_fixed = 0;             // used when e0_mode == Fixed

    void validate() const {
        if (enabled && (tau_eps <= 0.0 || tau_eps >= 1.0))
            throw ConfigError("refine.tau_eps must be in (0, 1)");
        if (num_augmentations < 0) throw ConfigError("refine.num_augmentations must be >= 0");
        if (e0_mode == E0Mode::Fixed && e0_fixed < 0)
            throw ConfigError("refine.e0_fixed must be >= 0");
    }
};

inline std::optional<int> detect_e0(const RefineConfig& cfg,
                                    const std::vector<double>& val_history) {
    switch (cfg.e0_mode) {
        case E0Mode::ConvergenceCheck: return detect_e0_convergence(val_history);
        case E0Mode::FirstLocalMax: return detect_e0_local_max(val_history);
        case E0Mode::Fixed:
            if (static_cast<int>(val_history.size()) > cfg.e0_fixed) return cfg.e0_fixed;
            return std::nullopt;
    }
    return std::nullopt;
}

// One applied correction. label_out is -1 unless swapping removed a label.
struct CorrectionEvent {
    int epoch = 0;
    int sample_id = 0;
    int label_in = 0;
    int label_out = -1;
    double margin_value = 0.0;
};

struct CorrectionDecision {
    int label_in = 0;
    int label_out = -1;  // -1: nothing leaves
    double margin_value = 0.0;
};

// Evaluates the correction rule for one sample against a fixed model state.
// Fires only when (a) the sample's margin is at or below -tau_eps, (b) every
// augmented copy also clears the margin test, and (c) every augmented copy
// agrees with the original's predicted non-candidate label. Augmentation
// draws derive from (aug_seed, epoch, sample_id), so they are independent of
// batch order and a larger vote count extends, rather than reshuffles, the
// smaller one's draws.
inline std::optional<CorrectionDecision> evaluate_correction(
    const Classifier& clf, const std::vector<double>& x, LabelSet candidates,
    const std::vector<double>& f, const RefineConfig& cfg, double aug_sigma,
    std::uint64_t aug_seed, int epoch, int sample_id) {
    if (candidates.empty() || candidates.count() == clf.num_classes()) return std::nullopt;
    if (margin(f, candidates) > -cfg.tau_eps) return std::nullopt;
    const int predicted = argmax_out(f, candidates);

    auto rng = derive_rng({aug_seed, seed_tag::augment, static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(sample_id)});
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<double> z(x.size());
    for (int k = 0; k < cfg.num_augmentations; ++k) {
        for (std::size_t d = 0; d < x.size(); ++d) z[d] = x[d] + aug_sigma * unit(rng);
        const auto fz = clf.forward(z);
        if (margin(fz, candidates) > -cfg.tau_eps) return std::nullopt;
        if (argmax_out(fz, candidates) != predicted) return std::nullopt;
    }

    CorrectionDecision d;
    d.label_in = predicted;
    d.margin_value = margin(f, candidates);
    if (cfg.swapping) d.label_out = argmin_in(f, candidates);
    return d;
}

// --- corrections log ---------------------------------------------------------
//
// One event per line after the header:
//   irnet-corrections v1
//   epoch sample_id label_in label_out margin
// label_out is -1 when the correction only added a label.

inline void write_corrections_log(std::ostream& out, const std::vector<CorrectionEvent>& events) {
    out << "irnet-corrections v1\n";
    out << "epoch sample_id label_in label_out margin\n";
    for (const auto& e : events)
        out << e.epoch << ' ' << e.sample_id << ' ' << e.label_in << ' ' << e.label_out << ' '
            << format_double(e.margin_value) << "\n";
}

inline void export_corrections_log(const std::filesystem::path& path,
                                   const std::vector<CorrectionEvent>& events) {
    atomic_write(path, [&](std::ostream& out) { write_corrections_log(out, events); });
}

inline std::vector<CorrectionEvent> import_corrections_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corrections log: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "irnet-corrections v1")
        throw ConfigError("corrections log: bad magic line");
    if (!std::getline(in, line) || line != "epoch sample_id label_in label_out margin")
        throw ConfigError("corrections log: bad column line");
    std::vector<CorrectionEvent> events;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        CorrectionEvent e;
        row >> e.epoch >> e.sample_id >> e.label_in >> e.label_out >> e.margin_value;
        if (!row) throw ConfigError("corrections log: malformed event line");
        events.push_back(e);
    }
    return events;
}

}  // namespace irnet
