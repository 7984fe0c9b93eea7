#pragma once

// Evaluation quantities tracked per epoch, plus their CSV serialization.
// Metrics over an empty subset are undefined and stay unset; the CSV writes
// the literal sentinel "nan" for them rather than a silent zero.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/io.hpp"

namespace irnet {

// Hit accuracy of the clean subset (prediction restricted to candidates) and
// of the noisy subset (prediction restricted to non-candidates).
struct HitAccuracy {
    std::optional<double> clean;
    std::optional<double> noisy;
};

inline HitAccuracy hit_accuracy(const std::vector<PartialSample>& samples,
                                const std::vector<std::vector<double>>& f) {
    std::size_t n_clean = 0, n_noisy = 0, hit_clean = 0, hit_noisy = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.omega() == Omega::Clean) {
            ++n_clean;
            hit_clean += argmax_in(f[i], s.candidates) == s.y;
        } else {
            ++n_noisy;
            hit_noisy += argmax_out(f[i], s.candidates) == s.y;
        }
    }
    HitAccuracy out;
    if (n_clean > 0) out.clean = static_cast<double>(hit_clean) / n_clean;
    if (n_noisy > 0) out.noisy = static_cast<double>(hit_noisy) / n_noisy;
    return out;
}

// Histogram of the candidate margin, kept separately for the clean and noisy
// subsets. Margins land in `bins` equal cells over [lo, hi]; the edges clamp.
struct TauHistogram {
    int bins = 100;
    double lo = -1.0;
    double hi = 1.0;
    std::vector<std::int64_t> clean_counts;
    std::vector<std::int64_t> noisy_counts;
    std::int64_t clean_total = 0;
    std::int64_t noisy_total = 0;

    explicit TauHistogram(int bins_ = 100, double lo_ = -1.0, double hi_ = 1.0)
        : bins(bins_), lo(lo_), hi(hi_), clean_counts(bins_, 0), noisy_counts(bins_, 0) {
        if (bins_ < 1 || !(lo_ < hi_)) throw ConfigError("tau histogram: bad bin layout");
    }

    int bin_of(double tau) const {
        const double t = (tau - lo) / (hi - lo);
        int b = static_cast<int>(t * bins);
        if (b < 0) b = 0;
        if (b >= bins) b = bins - 1;
        return b;
    }

    void add(double tau, Omega w) {
        if (w == Omega::Clean) {
            ++clean_counts[bin_of(tau)];
            ++clean_total;
        } else {
            ++noisy_counts[bin_of(tau)];
            ++noisy_total;
        }
    }
};

// Bayes error of the two-class decision (clean vs noisy from the margin
// alone) with both priors fixed at 1/2: 0.5 * sum_b min(phat_c, phat_n) * w.
// The bin width cancels against the density normalization. Undefined until
// both subsets have mass.
inline std::optional<double> bayes_error(const TauHistogram& h) {
    if (h.clean_total == 0 || h.noisy_total == 0) return std::nullopt;
    double sum = 0.0;
    for (int b = 0; b < h.bins; ++b) {
        const double pc = static_cast<double>(h.clean_counts[b]) / h.clean_total;
        const double pn = static_cast<double>(h.noisy_counts[b]) / h.noisy_total;
        sum += std::min(pc, pn);
    }
    return 0.5 * sum;
}

inline double transductive_accuracy(const std::vector<PartialSample>& samples,
                                    const std::vector<std::vector<double>>& f) {
    if (samples.empty()) throw ConfigError("transductive accuracy over empty split");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        hits += argmax_all(f[i]) == samples[i].y;
    return static_cast<double>(hits) / samples.size();
}

// Running best/last pair for an accuracy stream, and their gap. The gap is a
// stability probe: large best-minus-last means the run degraded after its
// peak.
class BestLastTracker {
  public:
    void push(double v) {
        last_ = v;
        if (!best_ || v > *best_) best_ = v;
    }
    bool empty() const { return !best_.has_value(); }
    double best() const { return require(best_); }
    double last() const { return require(last_); }
    double delta() const { return best() - last(); }

  private:
    static double require(const std::optional<double>& v) {
        if (!v) throw std::logic_error("best/last tracker is empty");
        return *v;
    }
    std::optional<double> best_;
    std::optional<double> last_;
};

// --- per-epoch records and CSV ----------------------------------------------

struct MetricsRecord {
    int epoch = 0;
    std::optional<double> train_noise_level;
    std::optional<double> phi_c;
    std::optional<double> phi_n;
    std::optional<double> val_acc;
    std::optional<double> test_acc;
    std::optional<double> transductive_acc;
    std::optional<double> bayes_error;
};

inline constexpr const char* metrics_csv_header =
    "epoch,train_noise_level,phi_c,phi_n,val_acc,test_acc,transductive_acc,bayes_error";

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
    out << metrics_csv_header << "\n";
    auto cell = [&](const std::optional<double>& v) {
        out << ',' << (v ? format_fixed6(*v) : "nan");
    };
    for (const auto& r : records) {
        out << r.epoch;
        cell(r.train_noise_level);
        cell(r.phi_c);
        cell(r.phi_n);
        cell(r.val_acc);
        cell(r.test_acc);
        cell(r.transductive_acc);
        cell(r.bayes_error);
        out << "\n";
    }
}

inline void export_metrics_csv(const std::filesystem::path& path,
                               const std::vector<MetricsRecord>& records) {
    atomic_write(path, [&](std::ostream& out) { write_metrics_csv(out, records); });
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != metrics_csv_header)
        throw ConfigError("metrics csv: bad header");
    std::vector<MetricsRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        while (true) {
            auto comma = line.find(',', pos);
            cells.push_back(line.substr(pos, comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != 8) throw ConfigError("metrics csv: wrong column count");
        MetricsRecord r;
        r.epoch = std::stoi(cells[0]);
        auto opt = [](const std::string& s) -> std::optional<double> {
            if (s == "nan") return std::nullopt;
            return std::stod(s);
        };
        r.train_noise_level = opt(cells[1]);
        r.phi_c = opt(cells[2]);
        r.phi_n = opt(cells[3]);
        r.val_acc = opt(cells[4]);
        r.test_acc = opt(cells[5]);
        r.transductive_acc = opt(cells[6]);
        r.bayes_error = opt(cells[7]);
        records.push_back(r);
    }
    return records;
}

inline std::vector<MetricsRecord> import_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics csv: " + path.string());
    return read_metrics_csv(in);
}

}  // namespace irnet
