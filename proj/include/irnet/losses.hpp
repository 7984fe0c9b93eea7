#pragma once

// Per-sample losses over a probability vector f. Two target shapes exist:
// candidate-weighted (the reweighted partial-label loss) and one-hot (the
// noise-robust family, fed with the candidate-restricted prediction as its
// pseudo label). Every loss exposes value and gradient with respect to f;
// the model chains that through softmax.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "irnet/common.hpp"

namespace irnet {

inline constexpr double log_clip = 1e-12;   // floor inside log()
inline constexpr double log_zero = -4.0;    // stand-in for log 0 in the reverse term

enum class LossName { Pll, Mae, Mse, Sce, Gce };

inline const char* to_string(LossName n) {
    switch (n) {
        case LossName::Pll: return "pll";
        case LossName::Mae: return "mae";
        case LossName::Mse: return "mse";
        case LossName::Sce: return "sce";
        case LossName::Gce: return "gce";
    }
    return "?";
}

inline LossName loss_from_string(const std::string& s) {
    if (s == "pll") return LossName::Pll;
    if (s == "mae") return LossName::Mae;
    if (s == "mse") return LossName::Mse;
    if (s == "sce") return LossName::Sce;
    if (s == "gce") return LossName::Gce;
    throw ConfigError("unknown loss kind: " + s);
}

struct LossKind {
    LossName name = LossName::Pll;
    double lambda_c = 1.0;  // symmetric loss, forward weight
    double lambda_r = 1.0;  // symmetric loss, reverse weight
    double lambda_g = 0.7;  // generalized loss exponent

    // Config-level validation pins the hyperparameters to their search grids.
    // The raw loss functions below stay permissive so they can be probed
    // outside the grids.
    void validate() const {
        auto in = [](double v, std::initializer_list<double> grid) {
            for (double g : grid)
                if (v == g) return true;
            return false;
        };
        if (name == LossName::Sce) {
            if (!in(lambda_c, {0.1, 1.0, 6.0}))
                throw ConfigError("loss.lambda_c must be one of {0.1, 1.0, 6.0}");
            if (!in(lambda_r, {0.1, 1.0}))
                throw ConfigError("loss.lambda_r must be one of {0.1, 1.0}");
        }
        if (name == LossName::Gce && !in(lambda_g, {0.5, 0.6, 0.7}))
            throw ConfigError("loss.lambda_g must be one of {0.5, 0.6, 0.7}");
    }
};

// Target for one sample, frozen before differentiation: either a weight
// vector over the candidate set (weights case) or a pseudo label (label >= 0).
struct TargetView {
    const std::vector<double>* weights = nullptr;
    int label = -1;
};

namespace loss_fn {

inline double pll(const std::vector<double>& f, const std::vector<double>& w) {
    double sum = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j)
        if (w[j] != 0.0) sum -= w[j] * std::log(std::max(f[j], log_clip));
    return sum;
}

inline void pll_grad(const std::vector<double>& f, const std::vector<double>& w,
                     std::vector<double>& g) {
    for (std::size_t j = 0; j < f.size(); ++j)
        g[j] = w[j] != 0.0 ? -w[j] / std::max(f[j], log_clip) : 0.0;
}

inline double mae(const std::vector<double>& f, int y) {
    double sum = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j)
        sum += std::abs((static_cast<int>(j) == y ? 1.0 : 0.0) - f[j]);
    return sum;
}

inline void mae_grad(const std::vector<double>& f, int y, std::vector<double>& g) {
    for (std::size_t j = 0; j < f.size(); ++j) {
        const double t = static_cast<int>(j) == y ? 1.0 : 0.0;
        g[j] = f[j] > t ? 1.0 : (f[j] < t ? -1.0 : 0.0);
    }
}

inline double mse(const std::vector<double>& f, int y) {
    double sum = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        const double d = (static_cast<int>(j) == y ? 1.0 : 0.0) - f[j];
        sum += d * d;
    }
    return sum;
}

inline void mse_grad(const std::vector<double>& f, int y, std::vector<double>& g) {
    for (std::size_t j = 0; j < f.size(); ++j)
        g[j] = 2.0 * (f[j] - (static_cast<int>(j) == y ? 1.0 : 0.0));
}

// Forward cross-entropy plus reverse cross-entropy; the reverse term treats
// log 0 as the finite constant log_zero, which collapses it to
// -log_zero * (1 - f_y).
inline double sce(const std::vector<double>& f, int y, double lc, double lr) {
    const double cce = -std::log(std::max(f[y], log_clip));
    // Reverse term: -sum_j f_j log(t_j) with log 0 standing in as log_zero;
    // only the off-target entries contribute. On the simplex this equals
    // -log_zero * (1 - f_y).
    double rce = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j)
        if (static_cast<int>(j) != y) rce += -log_zero * f[j];
    return lc * cce + lr * rce;
}

inline void sce_grad(const std::vector<double>& f, int y, double lc, double lr,
                     std::vector<double>& g) {
    for (std::size_t j = 0; j < f.size(); ++j)
        g[j] = static_cast<int>(j) == y ? lc * (-1.0 / std::max(f[y], log_clip)) : lr * -log_zero;
}

inline double gce(const std::vector<double>& f, int y, double lg) {
    return (1.0 - std::pow(std::max(f[y], log_clip), lg)) / lg;
}

inline void gce_grad(const std::vector<double>& f, int y, double lg, std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
    g[y] = -std::pow(std::max(f[y], log_clip), lg - 1.0);
}

}  // namespace loss_fn

inline double loss_value(const LossKind& kind, const std::vector<double>& f,
                         const TargetView& t) {
    switch (kind.name) {
        case LossName::Pll: return loss_fn::pll(f, *t.weights);
        case LossName::Mae: return loss_fn::mae(f, t.label);
        case LossName::Mse: return loss_fn::mse(f, t.label);
        case LossName::Sce: return loss_fn::sce(f, t.label, kind.lambda_c, kind.lambda_r);
        case LossName::Gce: return loss_fn::gce(f, t.label, kind.lambda_g);
    }
    throw std::invalid_argument("loss_value: bad kind");
}

inline void loss_grad_f(const LossKind& kind, const std::vector<double>& f, const TargetView& t,
                        std::vector<double>& g) {
    g.resize(f.size());
    switch (kind.name) {
        case LossName::Pll: loss_fn::pll_grad(f, *t.weights, g); return;
        case LossName::Mae: loss_fn::mae_grad(f, t.label, g); return;
        case LossName::Mse: loss_fn::mse_grad(f, t.label, g); return;
        case LossName::Sce: loss_fn::sce_grad(f, t.label, kind.lambda_c, kind.lambda_r, g); return;
        case LossName::Gce: loss_fn::gce_grad(f, t.label, kind.lambda_g, g); return;
    }
    throw std::invalid_argument("loss_grad_f: bad kind");
}

// Pseudo label for the one-hot losses inside partial-label training: the
// prediction restricted to the candidate set.
inline int candidate_restricted_label(const std::vector<double>& f, LabelSet candidates) {
    return argmax_in(f, candidates);
}

}  // namespace irnet
