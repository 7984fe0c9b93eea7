#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace irnet {

// Raised for invalid configuration or file contents. CLI maps it to exit 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when training produces a non-finite quantity. CLI maps it to exit 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Candidate label set over at most 64 classes, stored as a bitmask.
class LabelSet {
  public:
    static constexpr int max_labels = 64;

    LabelSet() = default;
    static LabelSet singleton(int label) { return LabelSet(1ull << label); }
    static LabelSet from_mask(std::uint64_t mask) { return LabelSet(mask); }
    static LabelSet full(int num_labels) {
        return LabelSet(num_labels == 64 ? ~0ull : (1ull << num_labels) - 1);
    }

    bool contains(int label) const { return (mask_ >> label) & 1ull; }
    void add(int label) { mask_ |= 1ull << label; }
    void remove(int label) { mask_ &= ~(1ull << label); }
    int count() const { return std::popcount(mask_); }
    bool empty() const { return mask_ == 0; }
    std::uint64_t mask() const { return mask_; }

    bool operator==(const LabelSet&) const = default;

  private:
    explicit LabelSet(std::uint64_t mask) : mask_(mask) {}
    std::uint64_t mask_ = 0;
};

enum class Omega : std::uint8_t { Clean, Noisy };

// Argmax/argmin helpers. Ties break to the lowest index, everywhere, so that
// every consumer (accuracy, hit rates, correction picks) agrees.
inline int argmax_all(const std::vector<double>& f) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(f.size()); ++j)
        if (f[j] > f[best]) best = j;
    return best;
}

inline int argmax_in(const std::vector<double>& f, LabelSet set) {
    int best = -1;
    for (int j = 0; j < static_cast<int>(f.size()); ++j)
        if (set.contains(j) && (best < 0 || f[j] > f[best])) best = j;
    if (best < 0) throw std::invalid_argument("argmax_in: empty label set");
    return best;
}

inline int argmax_out(const std::vector<double>& f, LabelSet set) {
    int best = -1;
    for (int j = 0; j < static_cast<int>(f.size()); ++j)
        if (!set.contains(j) && (best < 0 || f[j] > f[best])) best = j;
    if (best < 0) throw std::invalid_argument("argmax_out: full label set");
    return best;
}

inline int argmin_in(const std::vector<double>& f, LabelSet set) {
    int best = -1;
    for (int j = 0; j < static_cast<int>(f.size()); ++j)
        if (set.contains(j) && (best < 0 || f[j] < f[best])) best = j;
    if (best < 0) throw std::invalid_argument("argmin_in: empty label set");
    return best;
}

// One training sample: features, hidden ground truth, candidate set, and the
// clean/noisy flag implied by candidate membership of the ground truth.
struct PartialSample {
    std::vector<double> x;
    int y = 0;
    LabelSet candidates;

    Omega omega() const { return candidates.contains(y) ? Omega::Clean : Omega::Noisy; }
};

struct TestSample {
    std::vector<double> x;
    int y = 0;
};

struct SplitDataset {
    int num_classes = 0;
    int feature_dim = 0;
    std::vector<PartialSample> train;
    std::vector<PartialSample> validation;  // candidate sets stay singleton {y}
    std::vector<TestSample> test;
};

}  // namespace irnet
