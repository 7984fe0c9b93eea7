#pragma once

// Shared test helpers. The finite-difference gradient here is the reference
// oracle for every backprop check: it only ever calls forward() and
// loss_value(), never the analytic gradient path.

#include <cmath>
#include <random>
#include <vector>

#include "irnet/losses.hpp"
#include "irnet/model.hpp"

namespace testsupport {

inline std::vector<const std::vector<double>*> batch_view(
    const std::vector<std::vector<double>>& xs) {
    std::vector<const std::vector<double>*> view;
    view.reserve(xs.size());
    for (const auto& x : xs) view.push_back(&x);
    return view;
}

inline double batch_loss_only(const irnet::Classifier& clf, const irnet::LossKind& kind,
                              const std::vector<const std::vector<double>*>& xs,
                              const std::vector<irnet::TargetView>& targets) {
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        total += irnet::loss_value(kind, clf.forward(*xs[i]), targets[i]);
    return total / static_cast<double>(xs.size());
}

// Central differences over every parameter.
inline std::vector<double> fd_gradient(irnet::Classifier& clf, const irnet::LossKind& kind,
                                       const std::vector<const std::vector<double>*>& xs,
                                       const std::vector<irnet::TargetView>& targets,
                                       double h = 1e-5) {
    std::vector<double> grad(clf.params().size(), 0.0);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double keep = clf.params()[i];
        clf.params()[i] = keep + h;
        const double up = batch_loss_only(clf, kind, xs, targets);
        clf.params()[i] = keep - h;
        const double down = batch_loss_only(clf, kind, xs, targets);
        clf.params()[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Relative error with an absolute floor so near-zero entries compare on
// absolute terms.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max(floor, std::abs(a[i]) + std::abs(b[i]));
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline std::vector<double> random_unit_box(std::mt19937_64& rng, int dim, double lo = -1.0,
                                           double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> x(dim);
    for (auto& v : x) v = u(rng);
    return x;
}

// Random point on the probability simplex, bounded away from zero.
inline std::vector<double> random_simplex(std::mt19937_64& rng, int dim) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> f(dim);
    double sum = 0.0;
    for (auto& v : f) {
        v = u(rng);
        sum += v;
    }
    for (auto& v : f) v /= sum;
    return f;
}

}  // namespace testsupport
