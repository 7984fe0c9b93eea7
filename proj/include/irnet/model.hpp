#pragma once

// Small fully-connected classifier: tanh hidden layers, softmax output,
// analytic backprop. Parameters live in one flat vector (layer by layer,
// weights row-major then bias) so the optimizer, the checkpoint writer and
// finite-difference probes all see the same layout.

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/io.hpp"
#include "irnet/losses.hpp"
#include "irnet/rng.hpp"

namespace irnet {

class Classifier {
  public:
    // layer_sizes = {input_dim, hidden..., num_classes}. Weights start as
    // uniform noise in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases at zero.
    Classifier(std::vector<int> layer_sizes, std::uint64_t init_seed)
        : sizes_(std::move(layer_sizes)) {
        if (sizes_.size() < 2) throw ConfigError("classifier needs at least input and output");
        for (int s : sizes_)
            if (s < 1) throw ConfigError("classifier layer sizes must be positive");
        offsets_.resize(num_layers());
        std::size_t total = 0;
        for (int l = 0; l < num_layers(); ++l) {
            offsets_[l] = total;
            total += static_cast<std::size_t>(out_dim(l)) * in_dim(l) + out_dim(l);
        }
        params_.assign(total, 0.0);
        auto rng = derive_rng({init_seed, seed_tag::init});
        for (int l = 0; l < num_layers(); ++l) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim(l)));
            std::uniform_real_distribution<double> u(-scale, scale);
            double* w = weights(l);
            for (int i = 0; i < out_dim(l) * in_dim(l); ++i) w[i] = u(rng);
        }
    }

    int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
    int input_dim() const { return sizes_.front(); }
    int num_classes() const { return sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return sizes_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // Post-activation values per layer; back() is the softmax output.
    struct Activations {
        std::vector<std::vector<double>> a;
        const std::vector<double>& output() const { return a.back(); }
    };

    Activations forward_cached(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != input_dim())
            throw std::invalid_argument("forward: input dimension mismatch");
        Activations acts;
        acts.a.resize(num_layers() + 1);
        acts.a[0] = x;
        for (int l = 0; l < num_layers(); ++l) {
            const auto& in = acts.a[l];
            auto& out = acts.a[l + 1];
            out.assign(out_dim(l), 0.0);
            const double* w = weights(l);
            const double* b = bias(l);
            for (int i = 0; i < out_dim(l); ++i) {
                double z = b[i];
                const double* row = w + static_cast<std::size_t>(i) * in_dim(l);
                for (int j = 0; j < in_dim(l); ++j) z += row[j] * in[j];
                out[i] = z;
            }
            if (l + 1 < num_layers())
                for (auto& v : out) v = std::tanh(v);
            else
                softmax_inplace(out);
        }
        return acts;
    }

    std::vector<double> forward(const std::vector<double>& x) const {
        return forward_cached(x).a.back();
    }

    // Backprop one sample's dL/df (gradient w.r.t. the softmax output) into a
    // flat gradient accumulator, scaled by `scale` (1/batch for means).
    void accumulate_grad(const Activations& acts, const std::vector<double>& grad_f,
                         double scale, std::vector<double>& grad_out) const {
        const auto& f = acts.a.back();
        std::vector<double> dz(f.size());
        double dot = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) dot += grad_f[j] * f[j];
        for (std::size_t j = 0; j < f.size(); ++j) dz[j] = f[j] * (grad_f[j] - dot);

        for (int l = num_layers() - 1; l >= 0; --l) {
            const auto& in = acts.a[l];
            double* gw = grad_out.data() + offsets_[l];
            double* gb = gw + static_cast<std::size_t>(out_dim(l)) * in_dim(l);
            const double* w = weights(l);
            std::vector<double> din(in_dim(l), 0.0);
            for (int i = 0; i < out_dim(l); ++i) {
                const double d = dz[i] * scale;
                double* grow = gw + static_cast<std::size_t>(i) * in_dim(l);
                const double* wrow = w + static_cast<std::size_t>(i) * in_dim(l);
                for (int j = 0; j < in_dim(l); ++j) {
                    grow[j] += d * in[j];
                    din[j] += dz[i] * wrow[j];
                }
                gb[i] += d;
            }
            if (l > 0) {
                // chain through tanh of the previous layer's output
                dz.assign(in_dim(l), 0.0);
                for (int j = 0; j < in_dim(l); ++j) dz[j] = din[j] * (1.0 - in[j] * in[j]);
            }
        }
    }

  private:
    int in_dim(int layer) const { return sizes_[layer]; }
    int out_dim(int layer) const { return sizes_[layer + 1]; }
    double* weights(int layer) { return params_.data() + offsets_[layer]; }
    const double* weights(int layer) const { return params_.data() + offsets_[layer]; }
    double* bias(int layer) {
        return weights(layer) + static_cast<std::size_t>(out_dim(layer)) * in_dim(layer);
    }
    const double* bias(int layer) const {
        return weights(layer) + static_cast<std::size_t>(out_dim(layer)) * in_dim(layer);
    }

    static void softmax_inplace(std::vector<double>& z) {
        double m = z[0];
        for (double v : z) m = std::max(m, v);
        double sum = 0.0;
        for (auto& v : z) {
            v = std::exp(v - m);
            sum += v;
        }
        for (auto& v : z) v /= sum;
    }

    std::vector<int> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

// Mean loss and flat gradient over a batch. `targets` must be frozen before
// the call; a non-finite per-sample loss aborts with the offending index.
inline double batch_loss_and_grad(const Classifier& clf, const LossKind& kind,
                                  const std::vector<const std::vector<double>*>& xs,
                                  const std::vector<TargetView>& targets,
                                  std::vector<double>& grad_out) {
    grad_out.assign(clf.params().size(), 0.0);
    if (xs.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(xs.size());
    double total = 0.0;
    std::vector<double> gf;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        auto acts = clf.forward_cached(*xs[i]);
        const double v = loss_value(kind, acts.output(), targets[i]);
        if (!std::isfinite(v))
            throw NumericalError("non-finite loss at batch position " + std::to_string(i));
        total += v;
        loss_grad_f(kind, acts.output(), targets[i], gf);
        clf.accumulate_grad(acts, gf, scale, grad_out);
    }
    return total * scale;
}

struct OptimizerConfig {
    double initial_lr = 0.01;
    double momentum = 0.9;
    int max_epochs = 300;
    int batch_size = 64;

    void validate() const {
        if (initial_lr <= 0.0) throw ConfigError("opt.initial_lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("opt.momentum must be in [0, 1)");
        if (max_epochs < 1) throw ConfigError("opt.max_epochs must be positive");
        if (batch_size < 1) throw ConfigError("opt.batch_size must be positive");
    }

    // Cosine decay from initial_lr at epoch 0 toward 0 at max_epochs.
    double learning_rate(int epoch) const {
        if (epoch < 0 || epoch >= max_epochs)
            throw std::invalid_argument("learning_rate: epoch out of schedule");
        return initial_lr * 0.5 *
               (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(max_epochs)));
    }
};

class SgdOptimizer {
  public:
    explicit SgdOptimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const OptimizerConfig& config() const { return cfg_; }

    void step(Classifier& clf, const std::vector<double>& grad, int epoch) {
        auto& p = clf.params();
        if (grad.size() != p.size()) throw std::invalid_argument("step: gradient size mismatch");
        if (velocity_.size() != p.size()) velocity_.assign(p.size(), 0.0);
        const double lr = cfg_.learning_rate(epoch);
        for (std::size_t i = 0; i < p.size(); ++i) {
            velocity_[i] = cfg_.momentum * velocity_[i] + grad[i];
            p[i] -= lr * velocity_[i];
        }
    }

  private:
    OptimizerConfig cfg_;
    std::vector<double> velocity_;
};

// --- checkpoints ------------------------------------------------------------
//
// Text header followed by the flat parameter block as little-endian IEEE
// doubles (same order as Classifier::params):
//   irnet-checkpoint v1
//   layers <input> <hidden...> <classes>
//   seed <seed>
//   epoch <epoch>
//   params <count>
//   <count * 8 bytes>

inline void write_le_double(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline double read_le_double(std::istream& in) {
    char b[8];
    in.read(b, 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

struct Checkpoint {
    Classifier clf;
    std::uint64_t seed = 0;
    int epoch = 0;
};

inline void save_checkpoint(const std::filesystem::path& path, const Classifier& clf,
                            std::uint64_t seed, int epoch) {
    atomic_write(
        path,
        [&](std::ostream& out) {
            out << "irnet-checkpoint v1\nlayers";
            for (int s : clf.layer_sizes()) out << ' ' << s;
            out << "\nseed " << seed << "\nepoch " << epoch << "\nparams "
                << clf.params().size() << "\n";
            for (double v : clf.params()) write_le_double(out, v);
        },
        /*binary=*/true);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "irnet-checkpoint v1")
        throw ConfigError("checkpoint: bad magic line");
    if (!std::getline(in, line) || line.rfind("layers ", 0) != 0)
        throw ConfigError("checkpoint: missing layers line");
    std::vector<int> sizes;
    {
        std::istringstream ls(line.substr(7));
        int v;
        while (ls >> v) sizes.push_back(v);
    }
    auto parse_field = [&](const char* key, auto& value) {
        if (!std::getline(in, line)) throw ConfigError(std::string("checkpoint: missing ") + key);
        std::istringstream fs(line);
        std::string k;
        fs >> k >> value;
        if (!fs || k != key) throw ConfigError(std::string("checkpoint: malformed ") + key);
    };
    std::uint64_t seed = 0;
    int epoch = 0;
    std::size_t count = 0;
    parse_field("seed", seed);
    parse_field("epoch", epoch);
    parse_field("params", count);

    Checkpoint ck{Classifier(sizes, 0), seed, epoch};
    if (ck.clf.params().size() != count)
        throw ConfigError("checkpoint: parameter count disagrees with layer sizes");
    for (auto& v : ck.clf.params()) v = read_le_double(in);
    if (!in) throw ConfigError("checkpoint: truncated parameter block");
    return ck;
}

}  // namespace irnet
