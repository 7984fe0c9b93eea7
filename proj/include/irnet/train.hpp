#pragma once

// The training engine: warm-up partial-label training until validation
// accuracy converges, then per-batch label correction. Candidate sets are
// corrected in place; every epoch appends one metrics record.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/datagen.hpp"
#include "irnet/losses.hpp"
#include "irnet/metrics.hpp"
#include "irnet/model.hpp"
#include "irnet/refine.hpp"
#include "irnet/rng.hpp"

namespace irnet {

enum class Phase { WarmUp, Correcting };

struct RefineState {
    Phase phase = Phase::WarmUp;
    std::optional<int> e0;
    std::vector<double> val_history;
    std::vector<CorrectionEvent> corrections;
    int skipped_full = 0;  // corrections dropped because S(x) would become full
    double resolved_aug_sigma = 0.0;
};

struct MetricsConfig {
    int tau_bins = 100;

    void validate() const {
        if (tau_bins < 1) throw ConfigError("metrics.tau_bins must be positive");
    }
};

struct TrainResult {
    Classifier clf;
    std::vector<MetricsRecord> metrics;
    RefineState refine;
};

// Pooled standard deviation of every feature value in the training split;
// the default augmentation jitter is 5% of it.
inline double pooled_feature_std(const std::vector<PartialSample>& train) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : train)
        for (double v : s.x) {
            sum += v;
            sq += v * v;
            ++n;
        }
    if (n == 0) return 0.0;
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

namespace detail {

inline std::vector<std::vector<double>> forward_split(const Classifier& clf,
                                                      const std::vector<PartialSample>& split) {
    std::vector<std::vector<double>> f(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) f[i] = clf.forward(split[i].x);
    return f;
}

inline double label_accuracy(const Classifier& clf, const std::vector<PartialSample>& split) {
    if (split.empty()) throw ConfigError("accuracy over empty split");
    std::size_t hits = 0;
    for (const auto& s : split) hits += argmax_all(clf.forward(s.x)) == s.y;
    return static_cast<double>(hits) / split.size();
}

inline double test_accuracy(const Classifier& clf, const std::vector<TestSample>& split) {
    if (split.empty()) throw ConfigError("accuracy over empty split");
    std::size_t hits = 0;
    for (const auto& s : split) hits += argmax_all(clf.forward(s.x)) == s.y;
    return static_cast<double>(hits) / split.size();
}

}  // namespace detail

// Trains `clf` on ds.train, mutating candidate sets once correction starts.
// The run consumes three independent random streams derived from run_seed:
// batch shuffling, augmentation jitter, and nothing else, so disabling
// correction does not shift the training trajectory.
inline TrainResult run_training(SplitDataset& ds, Classifier clf, const LossKind& loss,
                                const OptimizerConfig& opt_cfg, const RefineConfig& refine_cfg,
                                const MetricsConfig& metrics_cfg, std::uint64_t run_seed) {
    opt_cfg.validate();
    refine_cfg.validate();
    metrics_cfg.validate();
    if (ds.train.empty()) throw ConfigError("training split is empty");
    if (clf.num_classes() != ds.num_classes || clf.input_dim() != ds.feature_dim)
        throw ConfigError("classifier shape disagrees with dataset");
    for (const auto& s : ds.train)
        if (s.candidates.empty()) throw ConfigError("training sample with empty candidate set");

    const int n = static_cast<int>(ds.train.size());
    const int num_classes = ds.num_classes;

    TrainResult result{std::move(clf), {}, {}};
    result.refine.resolved_aug_sigma = refine_cfg.aug_sigma >= 0.0
                                           ? refine_cfg.aug_sigma
                                           : 0.05 * pooled_feature_std(ds.train);

    // Candidate weights for the reweighted loss: start uniform over S(x),
    // refreshed each epoch (and at corrections) from the current predictions.
    std::vector<std::vector<double>> weights(n, std::vector<double>(num_classes, 0.0));
    auto reset_weights_uniform = [&](int i) {
        auto& w = weights[i];
        std::fill(w.begin(), w.end(), 0.0);
        const auto set = ds.train[i].candidates;
        const double u = 1.0 / set.count();
        for (int j = 0; j < num_classes; ++j)
            if (set.contains(j)) w[j] = u;
    };
    auto refresh_weights_from = [&](int i, const std::vector<double>& f) {
        auto& w = weights[i];
        const auto set = ds.train[i].candidates;
        double sum = 0.0;
        for (int j = 0; j < num_classes; ++j)
            if (set.contains(j)) sum += f[j];
        if (sum <= 0.0) {
            reset_weights_uniform(i);
            return;
        }
        for (int j = 0; j < num_classes; ++j) w[j] = set.contains(j) ? f[j] / sum : 0.0;
    };
    if (loss.name == LossName::Pll)
        for (int i = 0; i < n; ++i) reset_weights_uniform(i);

    SgdOptimizer opt(opt_cfg);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grads;
    std::vector<double> gf;

    struct PendingCorrection {
        int sample;
        CorrectionDecision decision;
        std::vector<double> f;  // pre-step prediction, for the weight refresh
    };

    for (int epoch = 0; epoch < opt_cfg.max_epochs; ++epoch) {
        auto shuffle_rng = derive_rng({run_seed, seed_tag::shuffle,
                                       static_cast<std::uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        const bool correcting = refine_cfg.enabled && result.refine.phase == Phase::Correcting;

        for (int start = 0; start < n; start += opt_cfg.batch_size) {
            const int stop = std::min(n, start + opt_cfg.batch_size);
            const double scale = 1.0 / (stop - start);
            grads.assign(result.clf.params().size(), 0.0);
            std::vector<PendingCorrection> pending;

            for (int k = start; k < stop; ++k) {
                const int i = order[k];
                const auto& sample = ds.train[i];
                auto acts = result.clf.forward_cached(sample.x);
                const auto& f = acts.output();

                TargetView target;
                if (loss.name == LossName::Pll)
                    target.weights = &weights[i];
                else
                    target.label = candidate_restricted_label(f, sample.candidates);

                const double v = loss_value(loss, f, target);
                if (!std::isfinite(v))
                    throw NumericalError("non-finite loss for sample " + std::to_string(i) +
                                         " at epoch " + std::to_string(epoch));
                loss_grad_f(loss, f, target, gf);
                result.clf.accumulate_grad(acts, gf, scale, grads);

                if (correcting && sample.candidates.count() < num_classes) {
                    auto decision = evaluate_correction(
                        result.clf, sample.x, sample.candidates, f, refine_cfg,
                        result.refine.resolved_aug_sigma, run_seed, epoch, i);
                    if (decision) pending.push_back({i, *decision, f});
                }
            }

            opt.step(result.clf, grads, epoch);

            // Decisions were made against the pre-step model; the candidate
            // sets change only after the gradient step.
            for (auto& p : pending) {
                auto& s = ds.train[p.sample];
                if (p.decision.label_out < 0 && s.candidates.count() + 1 == num_classes) {
                    ++result.refine.skipped_full;
                    continue;
                }
                s.candidates.add(p.decision.label_in);
                if (p.decision.label_out >= 0) s.candidates.remove(p.decision.label_out);
                if (loss.name == LossName::Pll) refresh_weights_from(p.sample, p.f);
                result.refine.corrections.push_back({epoch, p.sample, p.decision.label_in,
                                                     p.decision.label_out,
                                                     p.decision.margin_value});
            }
        }

        // Post-epoch bookkeeping: metrics, weight refresh, phase transition.
        const auto train_f = detail::forward_split(result.clf, ds.train);

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_noise_level = noise_level(ds.train);
        const auto hits = hit_accuracy(ds.train, train_f);
        rec.phi_c = hits.clean;
        rec.phi_n = hits.noisy;
        rec.transductive_acc = transductive_accuracy(ds.train, train_f);
        TauHistogram hist(metrics_cfg.tau_bins);
        for (int i = 0; i < n; ++i) {
            const auto set = ds.train[i].candidates;
            if (set.empty() || set.count() == num_classes) continue;
            hist.add(margin(train_f[i], set), ds.train[i].omega());
        }
        rec.bayes_error = bayes_error(hist);
        if (!ds.validation.empty()) {
            const double va = detail::label_accuracy(result.clf, ds.validation);
            rec.val_acc = va;
            result.refine.val_history.push_back(va);
        }
        if (!ds.test.empty()) rec.test_acc = detail::test_accuracy(result.clf, ds.test);
        result.metrics.push_back(rec);

        if (loss.name == LossName::Pll)
            for (int i = 0; i < n; ++i) refresh_weights_from(i, train_f[i]);

        if (result.refine.phase == Phase::WarmUp) {
            if (auto e0 = detect_e0(refine_cfg, result.refine.val_history)) {
                result.refine.e0 = *e0;
                result.refine.phase = Phase::Correcting;
            }
        }
    }

    return result;
}

}  // namespace irnet
