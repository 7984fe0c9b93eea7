#pragma once

// Synthetic partially-labeled datasets. Generation places C Gaussian clusters
// so that neighboring means sit class_separation apart; corruption first
// inflates candidate sets (each wrong label joins with probability q) and then
// converts a fraction eta of samples to noisy by swapping the ground truth out
// of the candidate set for a random non-candidate.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/io.hpp"
#include "irnet/rng.hpp"

namespace irnet {

struct DatasetSpec {
    int num_classes = 10;
    int num_samples = 1000;
    int feature_dim = 2;
    double ambiguity_q = 0.3;       // P(wrong label joins the candidate set)
    double noise_eta = 0.3;         // P(sample becomes noisy)
    double class_separation = 5.0;  // distance between neighboring cluster means
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_classes < 2 || num_classes > LabelSet::max_labels)
            throw ConfigError("dataset.num_classes must be in [2, 64]");
        if (num_samples < 1) throw ConfigError("dataset.num_samples must be positive");
        if (feature_dim < 1) throw ConfigError("dataset.feature_dim must be positive");
        if (ambiguity_q < 0.0 || ambiguity_q > 1.0)
            throw ConfigError("dataset.ambiguity_q must be in [0, 1]");
        if (noise_eta < 0.0 || noise_eta > 1.0)
            throw ConfigError("dataset.noise_eta must be in [0, 1]");
        if (noise_eta > 0.0 && ambiguity_q == 1.0)
            throw ConfigError("degenerate corruption: noise_eta > 0 requires ambiguity_q < 1 "
                              "(with q = 1 every candidate set is already full)");
        if (class_separation <= 0.0) throw ConfigError("dataset.class_separation must be positive");
        if (train_fraction < 0.0 || val_fraction < 0.0 ||
            train_fraction + val_fraction > 1.0 + 1e-12)
            throw ConfigError("dataset split fractions must be nonnegative and sum to at most 1");
    }
};

// Cluster means: on a line for 1-d features, otherwise on a circle in the
// first two coordinates so neighboring means are exactly class_separation
// apart and the layout is symmetric across classes.
inline std::vector<std::vector<double>> cluster_means(const DatasetSpec& spec) {
    std::vector<std::vector<double>> means(spec.num_classes,
                                           std::vector<double>(spec.feature_dim, 0.0));
    if (spec.feature_dim == 1) {
        for (int j = 0; j < spec.num_classes; ++j) means[j][0] = j * spec.class_separation;
        return means;
    }
    const double radius =
        spec.class_separation / (2.0 * std::sin(std::numbers::pi / spec.num_classes));
    for (int j = 0; j < spec.num_classes; ++j) {
        const double angle = 2.0 * std::numbers::pi * j / spec.num_classes;
        means[j][0] = radius * std::cos(angle);
        means[j][1] = radius * std::sin(angle);
    }
    return means;
}

// Balanced classes (label = index mod C), seeded shuffle, then split by the
// configured fractions. Candidate sets start as singletons {y}.
inline SplitDataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    const auto means = cluster_means(spec);
    auto rng = derive_rng({spec.seed, seed_tag::dataset});
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<PartialSample> all(spec.num_samples);
    for (int i = 0; i < spec.num_samples; ++i) {
        const int label = i % spec.num_classes;
        all[i].y = label;
        all[i].candidates = LabelSet::singleton(label);
        all[i].x.resize(spec.feature_dim);
        for (int k = 0; k < spec.feature_dim; ++k) all[i].x[k] = means[label][k] + unit(rng);
    }
    std::shuffle(all.begin(), all.end(), rng);

    const int n_train = static_cast<int>(std::llround(spec.train_fraction * spec.num_samples));
    const int n_val = static_cast<int>(std::llround(spec.val_fraction * spec.num_samples));
    if (n_train + n_val > spec.num_samples)
        throw ConfigError("dataset split fractions leave no room for the test split");

    SplitDataset ds;
    ds.num_classes = spec.num_classes;
    ds.feature_dim = spec.feature_dim;
    ds.train.assign(all.begin(), all.begin() + n_train);
    ds.validation.assign(all.begin() + n_train, all.begin() + n_train + n_val);
    for (int i = n_train + n_val; i < spec.num_samples; ++i)
        ds.test.push_back({std::move(all[i].x), all[i].y});
    return ds;
}

namespace detail {

inline void corrupt_one(PartialSample& s, int num_classes, double q, double eta,
                        std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int j = 0; j < num_classes; ++j) {
        if (j == s.y) continue;
        if (coin(rng) < q) s.candidates.add(j);
    }
    if (eta > 0.0 && coin(rng) < eta) {
        std::vector<int> outside;
        for (int j = 0; j < num_classes; ++j)
            if (!s.candidates.contains(j)) outside.push_back(j);
        // A full candidate set admits no swap; the sample stays clean.
        if (!outside.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, outside.size() - 1);
            s.candidates.add(outside[pick(rng)]);
            s.candidates.remove(s.y);
        }
    }
}

}  // namespace detail

// In-place corruption of the training split. Precondition: singleton
// candidate sets (generation output). Validation and test stay untouched.
inline void corrupt_train(SplitDataset& ds, double q, double eta, std::uint64_t seed) {
    if (q < 0.0 || q > 1.0) throw ConfigError("ambiguity q must be in [0, 1]");
    if (eta < 0.0 || eta > 1.0) throw ConfigError("noise eta must be in [0, 1]");
    if (eta > 0.0 && q == 1.0)
        throw ConfigError("degenerate corruption: eta > 0 requires q < 1");
    auto rng = derive_rng({seed, seed_tag::corrupt});
    for (auto& s : ds.train) detail::corrupt_one(s, ds.num_classes, q, eta, rng);
}

// Folds the validation split into training, corrupting the incoming samples
// with the same (q, eta) the training split saw. Used when a run has finished
// consuming validation accuracy and wants the extra data.
inline void merge_validation_into_train(SplitDataset& ds, double q, double eta,
                                        std::uint64_t seed) {
    if (eta > 0.0 && q == 1.0)
        throw ConfigError("degenerate corruption: eta > 0 requires q < 1");
    auto rng = derive_rng({seed, seed_tag::merge});
    for (auto& s : ds.validation) {
        detail::corrupt_one(s, ds.num_classes, q, eta, rng);
        ds.train.push_back(std::move(s));
    }
    ds.validation.clear();
}

inline double noise_level(const std::vector<PartialSample>& samples) {
    if (samples.empty()) return 0.0;
    std::size_t noisy = 0;
    for (const auto& s : samples) noisy += s.omega() == Omega::Noisy;
    return static_cast<double>(noisy) / samples.size();
}

inline double mean_clean_candidate_count(const std::vector<PartialSample>& samples) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples)
        if (s.omega() == Omega::Clean) {
            sum += s.candidates.count();
            ++n;
        }
    if (n == 0) throw ConfigError("no clean samples present");
    return sum / n;
}

// --- serialization ---------------------------------------------------------
//
// Line-oriented text, one record per line after a two-line header:
//   irnet-dataset v1
//   classes <C> dim <d> train <n> val <n> test <n>
//   <tag> <x_0> ... <x_{d-1}> <y> <candidate mask, hex> <c|n>
// Tags: t = train, v = validation, s = test. Test rows carry the singleton
// mask of their label. Floats are written with round-trip precision, so
// import reproduces the exported dataset bit for bit.

inline void write_dataset(std::ostream& out, const SplitDataset& ds) {
    out << "irnet-dataset v1\n";
    out << "classes " << ds.num_classes << " dim " << ds.feature_dim << " train "
        << ds.train.size() << " val " << ds.validation.size() << " test " << ds.test.size()
        << "\n";
    auto row = [&](char tag, const std::vector<double>& x, int y, LabelSet set) {
        out << tag;
        for (double v : x) out << ' ' << format_double(v);
        out << ' ' << y << ' ' << std::hex << set.mask() << std::dec << ' '
            << (set.contains(y) ? 'c' : 'n') << "\n";
    };
    for (const auto& s : ds.train) row('t', s.x, s.y, s.candidates);
    for (const auto& s : ds.validation) row('v', s.x, s.y, s.candidates);
    for (const auto& s : ds.test) row('s', s.x, s.y, LabelSet::singleton(s.y));
}

inline void export_dataset(const std::filesystem::path& path, const SplitDataset& ds) {
    atomic_write(path, [&](std::ostream& out) { write_dataset(out, ds); });
}

inline SplitDataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "irnet-dataset v1")
        throw ConfigError("dataset file: bad magic line");
    if (!std::getline(in, line)) throw ConfigError("dataset file: missing header");
    SplitDataset ds;
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    {
        std::istringstream hdr(line);
        std::string k1, k2, k3, k4, k5;
        hdr >> k1 >> ds.num_classes >> k2 >> ds.feature_dim >> k3 >> n_train >> k4 >> n_val >>
            k5 >> n_test;
        if (!hdr || k1 != "classes" || k2 != "dim" || k3 != "train" || k4 != "val" ||
            k5 != "test")
            throw ConfigError("dataset file: malformed header");
    }
    if (ds.num_classes < 2 || ds.num_classes > LabelSet::max_labels || ds.feature_dim < 1)
        throw ConfigError("dataset file: header out of range");

    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string tag;
        row >> tag;
        std::vector<double> x(ds.feature_dim);
        for (auto& v : x) row >> v;
        int y = -1;
        std::uint64_t mask = 0;
        char flag = '?';
        row >> y >> std::hex >> mask >> std::dec >> flag;
        if (!row || y < 0 || y >= ds.num_classes)
            throw ConfigError("dataset file: malformed record at line " + std::to_string(line_no));
        LabelSet set = LabelSet::from_mask(mask);
        const bool mask_overflow = ds.num_classes < 64 && (mask >> ds.num_classes) != 0;
        if (set.empty() || mask_overflow)
            throw ConfigError("dataset file: candidate mask out of range at line " +
                              std::to_string(line_no));
        const char expect_flag = set.contains(y) ? 'c' : 'n';
        if (flag != expect_flag)
            throw ConfigError("dataset file: omega flag contradicts mask at line " +
                              std::to_string(line_no));
        if (tag == "t") {
            ds.train.push_back({std::move(x), y, set});
        } else if (tag == "v") {
            ds.validation.push_back({std::move(x), y, set});
        } else if (tag == "s") {
            if (set != LabelSet::singleton(y))
                throw ConfigError("dataset file: test mask must be the label singleton, line " +
                                  std::to_string(line_no));
            ds.test.push_back({std::move(x), y});
        } else {
            throw ConfigError("dataset file: unknown split tag at line " + std::to_string(line_no));
        }
    }
    if (ds.train.size() != n_train || ds.validation.size() != n_val || ds.test.size() != n_test)
        throw ConfigError("dataset file: record counts disagree with header");
    return ds;
}

inline SplitDataset import_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset file: " + path.string());
    return read_dataset(in);
}

}  // namespace irnet
