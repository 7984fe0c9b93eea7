#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "irnet/datagen.hpp"
#include "irnet/refine.hpp"
#include "irnet/train.hpp"

using namespace irnet;
using Catch::Matchers::WithinAbs;

namespace fs = std::filesystem;

namespace {

// With identity weights and zero bias the network computes softmax(x), so
// x = log(p) makes it emit exactly the probability vector p.
Classifier softmax_identity(int c) {
    Classifier clf({c, c}, 1);
    auto& p = clf.params();
    std::fill(p.begin(), p.end(), 0.0);
    for (int i = 0; i < c; ++i) p[i * c + i] = 1.0;
    return clf;
}

std::vector<double> log_probe(const std::vector<double>& p) {
    std::vector<double> x(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) x[i] = std::log(p[i]);
    return x;
}

RefineConfig basic_refine() {
    RefineConfig cfg;
    cfg.tau_eps = 0.008;
    cfg.num_augmentations = 1;
    return cfg;
}

}  // namespace

TEST_CASE("candidate margin separates in-set and out-of-set confidence") {
    const std::vector<double> f{0.5, 0.3, 0.2};
    CHECK_THAT(margin(f, LabelSet::singleton(0)), WithinAbs(0.2, 1e-15));
    auto s = LabelSet::singleton(1);
    s.add(2);
    CHECK_THAT(margin(f, s), WithinAbs(-0.2, 1e-15));
    CHECK_THROWS_AS(margin(f, LabelSet::from_mask(0)), std::invalid_argument);
    CHECK_THROWS_AS(margin(f, LabelSet::full(3)), std::invalid_argument);
}

TEST_CASE("convergence detection waits for a flat ten-epoch window") {
    // Strictly rising: never triggers.
    std::vector<double> rising;
    for (int e = 0; e < 60; ++e) rising.push_back(0.2 + 0.01 * e);
    CHECK_FALSE(detect_e0_convergence(rising).has_value());

    // Constant after epoch 3: first flat lookback at 13.
    std::vector<double> plateau{0.2, 0.4, 0.6};
    while (plateau.size() < 30) plateau.push_back(0.85);
    auto e0 = detect_e0_convergence(plateau);
    REQUIRE(e0.has_value());
    CHECK(*e0 == 13);

    // Rising until 40, then creeping by 1e-7: triggers at 50.
    std::vector<double> creep;
    for (int e = 0; e < 40; ++e) creep.push_back(0.2 + 0.015 * e);
    for (int e = 40; e < 60; ++e) creep.push_back(0.8 + 1e-7 * (e - 40));
    e0 = detect_e0_convergence(creep);
    REQUIRE(e0.has_value());
    CHECK(*e0 == 50);
}

TEST_CASE("local-max detection finds the first smoothed peak") {
    std::vector<double> rising;
    for (int e = 0; e < 30; ++e) rising.push_back(0.01 * e);
    CHECK_FALSE(detect_e0_local_max(rising).has_value());

    const std::vector<double> bump{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0};
    // Trailing-5 means peak at epoch 7 with both neighbours strictly lower.
    auto e0 = detect_e0_local_max(bump);
    REQUIRE(e0.has_value());
    CHECK(*e0 == 7);

    CHECK_FALSE(detect_e0_local_max({0.1, 0.2, 0.3}).has_value());
}

TEST_CASE("fixed-epoch detection fires once history reaches it") {
    RefineConfig cfg = basic_refine();
    cfg.e0_mode = E0Mode::Fixed;
    cfg.e0_fixed = 4;
    CHECK_FALSE(detect_e0(cfg, {0.1, 0.2, 0.3, 0.4}).has_value());
    const auto e0 = detect_e0(cfg, {0.1, 0.2, 0.3, 0.4, 0.5});
    REQUIRE(e0.has_value());
    CHECK(*e0 == 4);
}

TEST_CASE("refine config rejects out-of-range settings") {
    RefineConfig cfg = basic_refine();
    CHECK_NOTHROW(cfg.validate());
    cfg.tau_eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = basic_refine();
    cfg.num_augmentations = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = basic_refine();
    cfg.e0_mode = E0Mode::Fixed;
    cfg.e0_fixed = -2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    // Disabled refinement does not police the unused threshold.
    cfg = basic_refine();
    cfg.enabled = false;
    cfg.tau_eps = 0.0;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("corrections need the margin test, not just a wrong argmax") {
    const auto clf = softmax_identity(3);
    const std::vector<double> p{0.5, 0.3, 0.2};
    const auto x = log_probe(p);
    const auto f = clf.forward(x);
    RefineConfig cfg = basic_refine();

    // Positive margin: model already prefers a candidate.
    CHECK_FALSE(evaluate_correction(clf, x, LabelSet::singleton(0), f, cfg, 0.0, 1, 0, 0)
                    .has_value());

    // Negative margin on {1,2}: label 0 should be pulled in.
    auto s = LabelSet::singleton(1);
    s.add(2);
    cfg.num_augmentations = 3;
    const auto d = evaluate_correction(clf, x, s, f, cfg, 0.0, 1, 0, 0);
    REQUIRE(d.has_value());
    CHECK(d->label_in == 0);
    CHECK(d->label_out == -1);
    CHECK_THAT(d->margin_value, WithinAbs(-0.2, 1e-12));

    // Swapping also names the weakest candidate.
    cfg.swapping = true;
    const auto ds = evaluate_correction(clf, x, s, f, cfg, 0.0, 1, 0, 0);
    REQUIRE(ds.has_value());
    CHECK(ds->label_in == 0);
    CHECK(ds->label_out == 2);

    // Degenerate sets never fire.
    cfg.swapping = false;
    CHECK_FALSE(
        evaluate_correction(clf, x, LabelSet::from_mask(0), f, cfg, 0.0, 1, 0, 0).has_value());
    CHECK_FALSE(
        evaluate_correction(clf, x, LabelSet::full(3), f, cfg, 0.0, 1, 0, 0).has_value());
}

TEST_CASE("zero augmentations reduce the rule to the margin test alone") {
    const auto clf = softmax_identity(3);
    const auto x = log_probe({0.5, 0.3, 0.2});
    const auto f = clf.forward(x);
    RefineConfig cfg = basic_refine();
    cfg.num_augmentations = 0;
    auto s = LabelSet::singleton(1);
    s.add(2);
    CHECK(evaluate_correction(clf, x, s, f, cfg, 1.0, 99, 3, 5).has_value());
}

TEST_CASE("augmented copies can veto through the margin condition") {
    // softmax([x, -x]) has margin tanh(x) on S = {0}; x sits just below the
    // threshold so jitter pushes roughly half the copies back above it. The
    // single non-candidate label means predicted-label agreement can never
    // veto, isolating condition (b).
    Classifier clf({1, 2}, 1);
    clf.params() = {1.0, -1.0, 0.0, 0.0};
    const std::vector<double> x{-0.009};
    const auto f = clf.forward(x);
    RefineConfig cfg = basic_refine();
    REQUIRE(margin(f, LabelSet::singleton(0)) < -cfg.tau_eps);

    int fired = 0;
    const int trials = 500;
    for (int id = 0; id < trials; ++id)
        fired += evaluate_correction(clf, x, LabelSet::singleton(0), f, cfg, 0.002, 7, 2, id)
                     .has_value();
    CHECK(fired > 100);
    CHECK(fired < 450);

    // With zero jitter every copy repeats the original and all trials fire.
    int fired_zero = 0;
    for (int id = 0; id < trials; ++id)
        fired_zero += evaluate_correction(clf, x, LabelSet::singleton(0), f, cfg, 0.0, 7, 2, id)
                          .has_value();
    CHECK(fired_zero == trials);
}

TEST_CASE("augmented copies can veto through predicted-label disagreement") {
    // Logits [z, 0.02 - z, -30]: the two non-candidates of S = {2} swap their
    // argmax when the jittered input crosses 0.01, while the margin stays far
    // below any threshold. Only condition (c) can veto here.
    Classifier clf({1, 3}, 1);
    clf.params() = {1.0, -1.0, 0.0, 0.0, 0.02, -30.0};
    const std::vector<double> x{0.005};
    const auto f = clf.forward(x);
    RefineConfig cfg = basic_refine();

    int fired = 0;
    std::set<int> fired_k1;
    const int trials = 500;
    for (int id = 0; id < trials; ++id) {
        if (evaluate_correction(clf, x, LabelSet::singleton(2), f, cfg, 0.05, 7, 2, id)
                .has_value()) {
            ++fired;
            fired_k1.insert(id);
        }
    }
    CHECK(fired > 100);
    CHECK(fired < 450);

    // More augmentation votes only extend the draw sequence: the accepted set
    // shrinks monotonically with the vote count.
    std::set<int> fired_k2, fired_k3;
    cfg.num_augmentations = 2;
    for (int id = 0; id < trials; ++id)
        if (evaluate_correction(clf, x, LabelSet::singleton(2), f, cfg, 0.05, 7, 2, id)
                .has_value())
            fired_k2.insert(id);
    cfg.num_augmentations = 3;
    for (int id = 0; id < trials; ++id)
        if (evaluate_correction(clf, x, LabelSet::singleton(2), f, cfg, 0.05, 7, 2, id)
                .has_value())
            fired_k3.insert(id);

    for (int id : fired_k2) CHECK(fired_k1.count(id) == 1);
    for (int id : fired_k3) CHECK(fired_k2.count(id) == 1);
    CHECK(fired_k3.size() <= fired_k2.size());
    CHECK(fired_k2.size() <= fired_k1.size());
}

TEST_CASE("corrections log round-trips exactly") {
    std::vector<CorrectionEvent> events{
        {3, 17, 2, -1, -0.12345678901234567},
        {4, 99, 0, 3, -0.5},
    };
    const auto path = fs::temp_directory_path() /
                      ("corr_roundtrip_" + std::to_string(::getpid()) + ".log");
    export_corrections_log(path, events);
    const auto back = import_corrections_log(path);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].epoch == events[i].epoch);
        CHECK(back[i].sample_id == events[i].sample_id);
        CHECK(back[i].label_in == events[i].label_in);
        CHECK(back[i].label_out == events[i].label_out);
        CHECK(back[i].margin_value == events[i].margin_value);
    }
    fs::remove(path);
}

namespace {

SplitDataset easy_dataset(int classes, int n, double q, double eta, double sep,
                          std::uint64_t seed) {
    DatasetSpec spec;
    spec.num_classes = classes;
    spec.num_samples = n;
    spec.feature_dim = 2;
    spec.class_separation = sep;
    spec.train_fraction = 0.7;
    spec.val_fraction = 0.15;
    spec.seed = seed;
    auto ds = generate_dataset(spec);
    corrupt_train(ds, q, eta, seed + 1);
    return ds;
}

OptimizerConfig quick_opt(int epochs) {
    OptimizerConfig cfg;
    cfg.initial_lr = 0.05;
    cfg.momentum = 0.9;
    cfg.max_epochs = epochs;
    cfg.batch_size = 16;
    return cfg;
}

}  // namespace

TEST_CASE("training with corrections never raises the noise level") {
    auto ds = easy_dataset(4, 160, 0.3, 0.3, 6.0, 21);
    Classifier clf({2, 16, 4}, 3);
    RefineConfig refine = basic_refine();
    refine.e0_mode = E0Mode::Fixed;
    refine.e0_fixed = 1;

    auto result = run_training(ds, clf, LossKind{LossName::Pll}, quick_opt(14), refine,
                               MetricsConfig{}, 5);
    REQUIRE(result.metrics.size() == 14);
    REQUIRE(result.refine.e0.has_value());
    CHECK(*result.refine.e0 == 1);
    for (std::size_t e = 1; e < result.metrics.size(); ++e)
        CHECK(*result.metrics[e].train_noise_level <=
              *result.metrics[e - 1].train_noise_level + 1e-12);
    for (const auto& ev : result.refine.corrections) {
        CHECK(ev.epoch >= 2);  // corrections begin the epoch after e0
        CHECK(ev.sample_id >= 0);
        CHECK(ev.sample_id < static_cast<int>(ds.train.size()));
        CHECK(ev.label_out == -1);
        CHECK(ev.margin_value <= -refine.tau_eps);
    }
}

TEST_CASE("the corrections log replays to the final candidate sets") {
    auto ds = easy_dataset(4, 160, 0.3, 0.3, 6.0, 22);
    std::vector<LabelSet> masks;
    for (const auto& s : ds.train) masks.push_back(s.candidates);

    Classifier clf({2, 16, 4}, 4);
    RefineConfig refine = basic_refine();
    refine.e0_mode = E0Mode::Fixed;
    refine.e0_fixed = 1;
    refine.swapping = GENERATE(false, true);

    auto result = run_training(ds, clf, LossKind{LossName::Pll}, quick_opt(12), refine,
                               MetricsConfig{}, 6);
    for (const auto& ev : result.refine.corrections) {
        auto& m = masks[ev.sample_id];
        const int before = m.count();
        m.add(ev.label_in);
        if (ev.label_out >= 0) m.remove(ev.label_out);
        if (refine.swapping)
            CHECK(m.count() == before);  // swap keeps the candidate count
        else
            CHECK(m.count() == before + 1);  // pure addition grows it by one
    }
    for (std::size_t i = 0; i < masks.size(); ++i) CHECK(masks[i] == ds.train[i].candidates);
}

TEST_CASE("disabled refinement and a never-firing detector train identically") {
    auto ds_a = easy_dataset(3, 120, 0.3, 0.2, 5.0, 31);
    auto ds_b = ds_a;
    Classifier clf({2, 8, 3}, 9);

    RefineConfig off = basic_refine();
    off.enabled = false;
    RefineConfig never = basic_refine();
    never.e0_mode = E0Mode::Fixed;
    never.e0_fixed = 1000;  // beyond the schedule: detection never fires

    const auto a = run_training(ds_a, clf, LossKind{LossName::Pll}, quick_opt(10), off,
                                MetricsConfig{}, 77);
    const auto b = run_training(ds_b, clf, LossKind{LossName::Pll}, quick_opt(10), never,
                                MetricsConfig{}, 77);

    CHECK(a.refine.corrections.empty());
    CHECK(b.refine.corrections.empty());
    REQUIRE(a.clf.params().size() == b.clf.params().size());
    for (std::size_t i = 0; i < a.clf.params().size(); ++i)
        CHECK(a.clf.params()[i] == b.clf.params()[i]);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t e = 0; e < a.metrics.size(); ++e) {
        CHECK(a.metrics[e].train_noise_level == b.metrics[e].train_noise_level);
        CHECK(a.metrics[e].val_acc == b.metrics[e].val_acc);
        CHECK(a.metrics[e].test_acc == b.metrics[e].test_acc);
    }
}

TEST_CASE("a clean dataset draws almost no corrections") {
    auto ds = easy_dataset(4, 200, 0.3, 0.0, 7.0, 41);
    const std::size_t n_train = ds.train.size();
    Classifier clf({2, 16, 4}, 11);
    RefineConfig refine = basic_refine();
    refine.e0_mode = E0Mode::Fixed;
    refine.e0_fixed = 8;

    auto result = run_training(ds, clf, LossKind{LossName::Pll}, quick_opt(25), refine,
                               MetricsConfig{}, 13);
    CHECK(static_cast<double>(result.refine.corrections.size()) <
          0.02 * static_cast<double>(n_train));
}

TEST_CASE("two-class corrections skip when the set would become full") {
    auto ds = easy_dataset(2, 120, 0.0, 0.25, 8.0, 51);
    auto ds_swap = ds;
    Classifier clf({2, 8, 2}, 17);
    RefineConfig refine = basic_refine();
    refine.e0_mode = E0Mode::Fixed;
    refine.e0_fixed = 3;

    const double initial_noise = noise_level(ds.train);
    REQUIRE(initial_noise > 0.1);

    auto plain = run_training(ds, clf, LossKind{LossName::Pll}, quick_opt(20), refine,
                              MetricsConfig{}, 23);
    CHECK(plain.refine.corrections.empty());
    CHECK(plain.refine.skipped_full > 0);
    for (const auto& s : ds.train) CHECK(s.candidates.count() == 1);
    CHECK_THAT(noise_level(ds.train), WithinAbs(initial_noise, 1e-12));

    refine.swapping = true;
    auto swapped = run_training(ds_swap, clf, LossKind{LossName::Pll}, quick_opt(20), refine,
                                MetricsConfig{}, 23);
    CHECK(swapped.refine.corrections.size() > 0);
    CHECK(swapped.refine.skipped_full == 0);
    for (const auto& s : ds_swap.train) CHECK(s.candidates.count() == 1);
    CHECK(noise_level(ds_swap.train) < initial_noise);
}

TEST_CASE("the resolved jitter scale defaults to five percent of the feature spread") {
    auto ds = easy_dataset(3, 90, 0.2, 0.1, 5.0, 61);
    const double expected = 0.05 * pooled_feature_std(ds.train);
    Classifier clf({2, 8, 3}, 19);
    RefineConfig refine = basic_refine();
    refine.e0_mode = E0Mode::Fixed;
    refine.e0_fixed = 100;

    auto by_default = run_training(ds, clf, LossKind{LossName::Pll}, quick_opt(3), refine,
                                   MetricsConfig{}, 29);
    CHECK_THAT(by_default.refine.resolved_aug_sigma, WithinAbs(expected, 1e-12));

    refine.aug_sigma = 0.25;
    auto explicit_sigma = run_training(ds, clf, LossKind{LossName::Pll}, quick_opt(3), refine,
                                       MetricsConfig{}, 29);
    CHECK_THAT(explicit_sigma.refine.resolved_aug_sigma, WithinAbs(0.25, 1e-15));
}
