#pragma once

// Finite-population simulation of the level-set refinement argument. An
// oracle population carries exact posteriors with a known top-two gap u per
// instance; a simulated classifier is the posterior plus a perturbation no
// larger than alpha * (conditional noisy mass above u) + epsilon/6. Each
// round picks the next purity boundary from the admissible bracket, swaps
// candidate sets where the non-candidate margin clears boundary - epsilon,
// and verifies that the level set above the new boundary stays pure.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/io.hpp"
#include "irnet/rng.hpp"

namespace irnet {

struct TheoryParams {
    double alpha = 1.0;      // perturbation gain on the conditional noisy mass
    double epsilon = 0.1;    // target boundary and slack unit
    double c_lower = 2.0 / 3.0;  // density lower level
    double c_upper = 4.0 / 3.0;  // density upper level
    double eta_init = 0.2;   // initial noisy fraction
    double m_init = 0.5;     // initial pure boundary
    int num_classes = 5;

    double ratio() const { return c_upper / c_lower; }
    // Two-level density: c_upper on [0, split), c_lower on [split, 1].
    double split() const { return (1.0 - c_lower) / (c_upper - c_lower); }

    double cdf(double u) const {
        const double s = split();
        if (u <= 0.0) return 0.0;
        if (u >= 1.0) return 1.0;
        return u <= s ? c_upper * u : c_upper * s + c_lower * (u - s);
    }

    double inverse_cdf(double v) const {
        const double s = split();
        const double knee = c_upper * s;
        return v <= knee ? v / c_upper : s + (v - knee) / c_lower;
    }

    void validate() const {
        if (alpha <= 0.0) throw ConfigError("theory.alpha must be positive");
        if (epsilon <= 0.0 || epsilon >= 1.0) throw ConfigError("theory.epsilon must be in (0, 1)");
        if (!(0.0 < c_lower && c_lower < c_upper))
            throw ConfigError("theory density levels need 0 < c_lower < c_upper");
        if (c_lower > 1.0 || c_upper < 1.0)
            throw ConfigError("theory density cannot integrate to one: need c_lower <= 1 <= c_upper");
        if (num_classes < 2 || num_classes > LabelSet::max_labels)
            throw ConfigError("theory.num_classes must be in [2, 64]");
        if (eta_init < 0.0 || eta_init >= 1.0) throw ConfigError("theory.eta_init must be in [0, 1)");
        if (m_init <= 0.0 || m_init >= 1.0) throw ConfigError("theory.m_init must be in (0, 1)");
        if (m_init < epsilon)
            throw ConfigError("theory.m_init must be at least epsilon");
        if (m_init <= 2.0 * alpha * eta_init + epsilon / 3.0)
            throw ConfigError("theory.m_init must exceed 2*alpha*eta_init + epsilon/3");
        if (eta_init > cdf(m_init))
            throw ConfigError("theory.eta_init exceeds the mass below m_init; "
                              "noisy instances cannot all sit under the boundary");
    }
};

// One simulated instance. The posterior puts its two largest values on
// y_star and o_star with gap exactly u; the remaining labels share strictly
// smaller equal mass. f is the latest simulated classifier output.
struct OracleInstance {
    double u = 0.0;
    int y_star = 0;
    int o_star = 1;
    std::vector<double> posterior;
    LabelSet candidates;
    std::vector<double> f;

    bool noisy() const { return !candidates.contains(y_star); }
};

using OraclePopulation = std::vector<OracleInstance>;

inline std::vector<double> make_posterior(int num_classes, double u, int y_star, int o_star) {
    const double runner_up = (1.0 - u) * (num_classes + 2) / (4.0 * num_classes);
    const double rest = (1.0 - u) / (2.0 * num_classes);
    std::vector<double> p(num_classes, rest);
    p[o_star] = runner_up;
    p[y_star] = runner_up + u;
    return p;
}

// Population with confidences drawn from the two-level density and all noisy
// instances placed strictly below m_init, so the level set above m_init
// starts pure. Candidate sets are singletons: {y_star} when clean, a random
// other label when noisy.
inline OraclePopulation sample_population(const TheoryParams& params, int n, std::uint64_t seed) {
    params.validate();
    if (n < 1) throw ConfigError("theory population size must be positive");
    auto rng = derive_rng({seed, seed_tag::theory});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double below_mass = params.cdf(params.m_init);
    const double p_noisy_below = params.eta_init > 0.0 ? params.eta_init / below_mass : 0.0;

    OraclePopulation pop(n);
    for (auto& inst : pop) {
        inst.u = params.inverse_cdf(unit(rng));
        inst.y_star = std::uniform_int_distribution<int>(0, params.num_classes - 1)(rng);
        const int shift = std::uniform_int_distribution<int>(1, params.num_classes - 1)(rng);
        inst.o_star = (inst.y_star + shift) % params.num_classes;
        inst.posterior = make_posterior(params.num_classes, inst.u, inst.y_star, inst.o_star);
        const bool noisy = inst.u < params.m_init && unit(rng) < p_noisy_below;
        if (noisy) {
            const int wrong_shift = std::uniform_int_distribution<int>(1, params.num_classes - 1)(rng);
            inst.candidates = LabelSet::singleton((inst.y_star + wrong_shift) % params.num_classes);
        } else {
            inst.candidates = LabelSet::singleton(inst.y_star);
        }
    }
    return pop;
}

inline double noisy_mass(const OraclePopulation& pop) {
    std::size_t noisy = 0;
    for (const auto& inst : pop) noisy += inst.noisy();
    return pop.empty() ? 0.0 : static_cast<double>(noisy) / pop.size();
}

// Conditional noisy fraction among instances with u(z) >= u(x), x included.
// Instances with equal u share the same value.
inline std::vector<double> conditional_noisy_mass(const OraclePopulation& pop) {
    const int n = static_cast<int>(pop.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return pop[a].u > pop[b].u; });
    std::vector<double> beta(n, 0.0);
    int total = 0, noisy = 0;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && pop[idx[j]].u == pop[idx[i]].u) ++j;
        for (int k = i; k < j; ++k) {
            ++total;
            noisy += pop[idx[k]].noisy();
        }
        const double b = static_cast<double>(noisy) / total;
        for (int k = i; k < j; ++k) beta[idx[k]] = b;
        i = j;
    }
    return beta;
}

enum class PerturbMode { None, AdversarialAtBound, UniformRandom };

inline const char* to_string(PerturbMode m) {
    switch (m) {
        case PerturbMode::None: return "none";
        case PerturbMode::AdversarialAtBound: return "adversarial";
        case PerturbMode::UniformRandom: return "uniform";
    }
    return "?";
}

inline PerturbMode perturb_mode_from_string(const std::string& s) {
    if (s == "none") return PerturbMode::None;
    if (s == "adversarial") return PerturbMode::AdversarialAtBound;
    if (s == "uniform") return PerturbMode::UniformRandom;
    throw ConfigError("unknown perturbation mode: " + s);
}

// Classifier for one instance: posterior plus perturbation within
// alpha * beta + epsilon/6. Adversarial mode stresses the margin chain by
// pushing the top label down and the runner-up up by the full bound.
inline std::vector<double> simulate_classifier(const OracleInstance& inst, double beta,
                                               const TheoryParams& params, PerturbMode mode,
                                               std::mt19937_64* rng = nullptr) {
    const double bound = params.alpha * beta + params.epsilon / 6.0;
    std::vector<double> f = inst.posterior;
    switch (mode) {
        case PerturbMode::None:
            break;
        case PerturbMode::AdversarialAtBound:
            f[inst.y_star] = std::max(0.0, f[inst.y_star] - bound);
            f[inst.o_star] = std::min(1.0, f[inst.o_star] + bound);
            break;
        case PerturbMode::UniformRandom: {
            if (rng == nullptr) throw std::invalid_argument("uniform perturbation needs an rng");
            std::uniform_real_distribution<double> shift(-bound, bound);
            for (auto& v : f) v = std::clamp(v + shift(*rng), 0.0, 1.0);
            break;
        }
    }
    return f;
}

inline void simulate_population_classifier(OraclePopulation& pop, const TheoryParams& params,
                                           PerturbMode mode, std::uint64_t seed, int round) {
    const auto beta = conditional_noisy_mass(pop);
    auto rng = derive_rng({seed, seed_tag::theory, 0xf00dull, static_cast<std::uint64_t>(round)});
    for (std::size_t i = 0; i < pop.size(); ++i)
        pop[i].f = simulate_classifier(pop[i], beta[i], params, mode, &rng);
}

// Exact scan: every instance at or above the boundary must hold y_star in its
// candidate set and have the classifier rank y_star first.
inline bool level_set_pure(const OraclePopulation& pop, double boundary) {
    for (const auto& inst : pop)
        if (inst.u >= boundary &&
            (inst.noisy() || argmax_all(inst.f) != inst.y_star))
            return false;
    return true;
}

struct RoundResult {
    int round = 0;
    double m_prev = 0.0;
    double m_new = 0.0;
    double bracket_low = 0.0;   // admissible interval for 1 - m_new
    double bracket_high = 0.0;
    int corrections = 0;
    bool pre_purity_ok = true;
    bool post_purity_ok = true;
    double noisy_mass_after = 0.0;
};

// One refinement round at boundary m. Uses the slowest admissible boundary
// step (the bracket's low end), corrects every instance whose non-candidate
// margin reaches m_new - epsilon, retrains (resimulates) the classifier, and
// scans the new level set for purity.
inline RoundResult one_round_refine(OraclePopulation& pop, double m, const TheoryParams& params,
                                    PerturbMode mode, std::uint64_t seed, int round) {
    RoundResult r;
    r.round = round;
    r.m_prev = m;
    r.pre_purity_ok = level_set_pure(pop, m);

    const double growth_low = 1.0 + params.epsilon / (6.0 * params.alpha * params.ratio());
    const double growth_high = 1.0 + params.epsilon / (3.0 * params.alpha * params.ratio());
    r.bracket_low = growth_low * (1.0 - m);
    r.bracket_high = growth_high * (1.0 - m);
    r.m_new = 1.0 - r.bracket_low;

    // The boundary rule corrects at margin m_new - epsilon. The last round may
    // push m_new below epsilon; the threshold clamps at zero there (the rule
    // evaluated at its epsilon limit) so a margin can never qualify merely by
    // being negative.
    const double threshold = std::max(r.m_new, params.epsilon) - params.epsilon;
    for (auto& inst : pop) {
        const double swap_margin =
            inst.f[argmax_out(inst.f, inst.candidates)] - inst.f[argmax_in(inst.f, inst.candidates)];
        if (swap_margin >= threshold) {
            const int in = argmax_out(inst.f, inst.candidates);
            const int out = argmin_in(inst.f, inst.candidates);
            inst.candidates.add(in);
            inst.candidates.remove(out);
            ++r.corrections;
        }
    }

    simulate_population_classifier(pop, params, mode, seed, round + 1);
    r.post_purity_ok = level_set_pure(pop, r.m_new);
    r.noisy_mass_after = noisy_mass(pop);
    return r;
}

struct RefinementReport {
    TheoryParams params;
    int n = 0;
    std::uint64_t seed = 0;
    PerturbMode mode = PerturbMode::AdversarialAtBound;
    double initial_noisy_mass = 0.0;
    bool initial_purity_ok = true;
    std::vector<RoundResult> rounds;
    double final_boundary = 0.0;
    double round_bound = 0.0;  // (6 l alpha / epsilon) * log((1-eps)/(1-m_init))
    bool round_count_ok = true;
    double final_noisy_mass = 0.0;
    double final_disagreement = 0.0;
    double guarantee = 0.0;  // c_upper * epsilon
    bool noisy_mass_ok = true;
    bool disagreement_ok = true;
    bool purity_all_ok = true;
    bool bracket_all_ok = true;

    bool all_ok() const {
        return initial_purity_ok && round_count_ok && noisy_mass_ok && disagreement_ok &&
               purity_all_ok && bracket_all_ok;
    }
};

inline double round_count_bound(const TheoryParams& p) {
    return (6.0 * p.ratio() * p.alpha / p.epsilon) *
           std::log((1.0 - p.epsilon) / (1.0 - p.m_init));
}

// Runs rounds until the boundary reaches epsilon (the last step may overshoot
// slightly below; every step stays inside the bracket). Verifies the round
// count against the slowest-schedule bound and the final guarantees.
inline RefinementReport multi_round_refine(const TheoryParams& params, int n, std::uint64_t seed,
                                           PerturbMode mode = PerturbMode::AdversarialAtBound) {
    params.validate();
    RefinementReport rep;
    rep.params = params;
    rep.n = n;
    rep.seed = seed;
    rep.mode = mode;
    rep.guarantee = params.c_upper * params.epsilon;
    rep.round_bound = round_count_bound(params);

    OraclePopulation pop = sample_population(params, n, seed);
    rep.initial_noisy_mass = noisy_mass(pop);
    simulate_population_classifier(pop, params, mode, seed, 0);
    rep.initial_purity_ok = level_set_pure(pop, params.m_init);

    double m = params.m_init;
    int round = 0;
    while (m > params.epsilon) {
        auto r = one_round_refine(pop, m, params, mode, seed, round++);
        m = r.m_new;
        rep.purity_all_ok = rep.purity_all_ok && r.pre_purity_ok && r.post_purity_ok;
        const double one_minus = 1.0 - r.m_new;
        rep.bracket_all_ok = rep.bracket_all_ok && one_minus >= r.bracket_low - 1e-12 &&
                             one_minus <= r.bracket_high + 1e-12;
        rep.rounds.push_back(std::move(r));
    }

    rep.final_boundary = m;
    const int used = static_cast<int>(rep.rounds.size());
    rep.round_count_ok = used == 0 ? params.m_init <= params.epsilon
                                   : static_cast<double>(used) > rep.round_bound;
    rep.final_noisy_mass = noisy_mass(pop);
    std::size_t disagree = 0;
    for (const auto& inst : pop) disagree += argmax_all(inst.f) != inst.y_star;
    rep.final_disagreement = pop.empty() ? 0.0 : static_cast<double>(disagree) / pop.size();
    rep.noisy_mass_ok = rep.final_noisy_mass < rep.guarantee;
    rep.disagreement_ok = rep.final_disagreement < rep.guarantee;
    return rep;
}

// --- report serialization ----------------------------------------------------

inline void write_refinement_report(std::ostream& out, const RefinementReport& rep) {
    const auto& p = rep.params;
    out << "irnet-theory v1\n";
    out << "alpha " << format_double(p.alpha) << " epsilon " << format_double(p.epsilon)
        << " c_lower " << format_double(p.c_lower) << " c_upper " << format_double(p.c_upper)
        << " ratio " << format_double(p.ratio()) << " eta_init " << format_double(p.eta_init)
        << " m_init " << format_double(p.m_init) << " classes " << p.num_classes << "\n";
    out << "n " << rep.n << " seed " << rep.seed << " mode " << to_string(rep.mode) << "\n";
    out << "initial noisy_mass " << format_double(rep.initial_noisy_mass) << " purity "
        << (rep.initial_purity_ok ? "ok" : "violated") << "\n";
    for (const auto& r : rep.rounds)
        out << "round " << r.round << " m " << format_double(r.m_prev) << " -> "
            << format_double(r.m_new) << " bracket [" << format_double(r.bracket_low) << ", "
            << format_double(r.bracket_high) << "] corrections " << r.corrections << " purity "
            << (r.pre_purity_ok && r.post_purity_ok ? "ok" : "violated") << " noisy_mass "
            << format_double(r.noisy_mass_after) << "\n";
    out << "rounds " << rep.rounds.size() << " bound " << format_double(rep.round_bound)
        << " round_count " << (rep.round_count_ok ? "ok" : "violated") << "\n";
    out << "final boundary " << format_double(rep.final_boundary) << " noisy_mass "
        << format_double(rep.final_noisy_mass) << " disagreement "
        << format_double(rep.final_disagreement) << " guarantee " << format_double(rep.guarantee)
        << " noisy_mass " << (rep.noisy_mass_ok ? "ok" : "violated") << " disagreement "
        << (rep.disagreement_ok ? "ok" : "violated") << "\n";
    out << "verdict " << (rep.all_ok() ? "ok" : "violated") << "\n";
}

inline void export_refinement_report(const std::filesystem::path& path,
                                     const RefinementReport& rep) {
    atomic_write(path, [&](std::ostream& out) { write_refinement_report(out, rep); });
}

}  // namespace irnet
