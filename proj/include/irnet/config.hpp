#pragma once

// Flat key = value configuration with dotted keys, plus environment
// overrides. Known keys only; anything else is rejected. Every key can be
// overridden by IRNET_<KEY> with dots replaced by underscores and letters
// uppercased (e.g. dataset.noise_eta -> IRNET_DATASET_NOISE_ETA).

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irnet/common.hpp"
#include "irnet/datagen.hpp"
#include "irnet/losses.hpp"
#include "irnet/model.hpp"
#include "irnet/refine.hpp"
#include "irnet/theory.hpp"
#include "irnet/train.hpp"

namespace irnet {

inline constexpr const char* env_prefix = "IRNET_";

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "dataset.num_classes", "dataset.num_samples", "dataset.feature_dim",
        "dataset.ambiguity_q", "dataset.noise_eta", "dataset.class_separation",
        "dataset.train_fraction", "dataset.val_fraction", "dataset.seed", "dataset.merge_val",
        "model.hidden",
        "opt.initial_lr", "opt.momentum", "opt.max_epochs", "opt.batch_size",
        "loss.kind", "loss.lambda_c", "loss.lambda_r", "loss.lambda_g",
        "refine.enabled", "refine.tau_eps", "refine.num_augmentations", "refine.aug_sigma",
        "refine.swapping", "refine.e0_mode", "refine.e0_fixed",
        "metrics.tau_bins",
        "theory.alpha", "theory.epsilon", "theory.c_lower", "theory.c_upper",
        "theory.eta_init", "theory.m_init", "theory.num_classes", "theory.n",
        "theory.perturbation",
        "run.seeds", "run.output_dir", "run.workers",
        "sweep.tau_eps", "sweep.e0", "sweep.swapping",
    };
    return keys;
}

inline std::string env_name_for(const std::string& key) {
    std::string name = env_prefix;
    for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(c));
    return name;
}

using ConfigMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline ConfigMap parse_config_text(std::istream& in) {
    ConfigMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        bool known = false;
        for (const auto& k : known_config_keys()) known = known || k == key;
        if (!known)
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
        if (map.count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");
        map[key] = value;
    }
    return map;
}

inline ConfigMap load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    return parse_config_text(in);
}

// Environment wins over the file: the fixed key table is scanned, so stray
// IRNET_* variables that match no key are ignored rather than guessed at.
inline void apply_env_overrides(ConfigMap& map) {
    for (const auto& key : known_config_keys())
        if (const char* v = std::getenv(env_name_for(key).c_str())) map[key] = v;
}

// --- typed readers -----------------------------------------------------------

namespace cfgdetail {

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return i;
    } catch (...) {
        throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace cfgdetail

class ConfigReader {
  public:
    explicit ConfigReader(ConfigMap map) : map_(std::move(map)) {}

    bool has(const std::string& key) const { return map_.count(key) != 0; }

    double number(const std::string& key, double fallback) const {
        auto it = map_.find(key);
        return it == map_.end() ? fallback : cfgdetail::to_double(key, it->second);
    }
    int integer(const std::string& key, int fallback) const {
        auto it = map_.find(key);
        return it == map_.end() ? fallback
                                : static_cast<int>(cfgdetail::to_int(key, it->second));
    }
    std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) const {
        auto it = map_.find(key);
        if (it == map_.end()) return fallback;
        const long long v = cfgdetail::to_int(key, it->second);
        if (v < 0) throw ConfigError("config key '" + key + "': must be nonnegative");
        return static_cast<std::uint64_t>(v);
    }
    bool boolean(const std::string& key, bool fallback) const {
        auto it = map_.find(key);
        return it == map_.end() ? fallback : cfgdetail::to_bool(key, it->second);
    }
    std::string text(const std::string& key, std::string fallback) const {
        auto it = map_.find(key);
        return it == map_.end() ? std::move(fallback) : it->second;
    }
    std::optional<std::vector<std::string>> list(const std::string& key) const {
        auto it = map_.find(key);
        if (it == map_.end()) return std::nullopt;
        return cfgdetail::split_list(it->second);
    }

  private:
    ConfigMap map_;
};

// --- run configuration --------------------------------------------------------

enum class RunMode { Train, TheorySim, Sweep };

struct SweepGrid {
    std::vector<double> tau_eps;
    std::vector<int> e0;        // negative entry = keep the automatic detector
    std::vector<bool> swapping;
};

struct RunConfig {
    RunMode mode = RunMode::Train;
    DatasetSpec dataset;
    bool merge_val = false;
    std::vector<int> hidden = {64, 64};
    OptimizerConfig opt;
    LossKind loss;
    RefineConfig refine;
    MetricsConfig metrics;
    TheoryParams theory;
    int theory_n = 10000;
    PerturbMode perturbation = PerturbMode::AdversarialAtBound;
    SweepGrid sweep;
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "out";
    int workers = 1;

    std::vector<int> layer_sizes() const {
        std::vector<int> sizes = {dataset.feature_dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(dataset.num_classes);
        return sizes;
    }

    void validate() const {
        if (seeds.empty()) throw ConfigError("run.seeds must name at least one seed");
        if (workers < 1) throw ConfigError("run.workers must be positive");
        if (output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
        if (mode == RunMode::TheorySim) {
            theory.validate();
            if (theory_n < 1) throw ConfigError("theory.n must be positive");
            return;
        }
        dataset.validate();
        for (int h : hidden)
            if (h < 1) throw ConfigError("model.hidden entries must be positive");
        opt.validate();
        loss.validate();
        refine.validate();
        metrics.validate();
        if (mode == RunMode::Sweep) {
            if (sweep.tau_eps.empty() && sweep.e0.empty() && sweep.swapping.empty())
                throw ConfigError("sweep grid is empty: set sweep.tau_eps, sweep.e0 or "
                                  "sweep.swapping");
            for (double t : sweep.tau_eps)
                if (t <= 0.0 || t >= 1.0)
                    throw ConfigError("sweep.tau_eps entries must be in (0, 1)");
            // sweep.e0 entries may be negative: that row keeps the automatic
            // start-epoch detector instead of pinning a fixed epoch.
        }
    }
};

inline RunConfig build_run_config(const ConfigReader& cfg, RunMode mode) {
    RunConfig rc;
    rc.mode = mode;

    rc.dataset.num_classes = cfg.integer("dataset.num_classes", rc.dataset.num_classes);
    rc.dataset.num_samples = cfg.integer("dataset.num_samples", rc.dataset.num_samples);
    rc.dataset.feature_dim = cfg.integer("dataset.feature_dim", rc.dataset.feature_dim);
    rc.dataset.ambiguity_q = cfg.number("dataset.ambiguity_q", rc.dataset.ambiguity_q);
    rc.dataset.noise_eta = cfg.number("dataset.noise_eta", rc.dataset.noise_eta);
    rc.dataset.class_separation = cfg.number("dataset.class_separation", rc.dataset.class_separation);
    rc.dataset.train_fraction = cfg.number("dataset.train_fraction", rc.dataset.train_fraction);
    rc.dataset.val_fraction = cfg.number("dataset.val_fraction", rc.dataset.val_fraction);
    rc.dataset.seed = cfg.unsigned64("dataset.seed", rc.dataset.seed);
    rc.merge_val = cfg.boolean("dataset.merge_val", rc.merge_val);

    if (auto hidden = cfg.list("model.hidden")) {
        rc.hidden.clear();
        for (const auto& h : *hidden)
            rc.hidden.push_back(static_cast<int>(cfgdetail::to_int("model.hidden", h)));
    }

    rc.opt.initial_lr = cfg.number("opt.initial_lr", rc.opt.initial_lr);
    rc.opt.momentum = cfg.number("opt.momentum", rc.opt.momentum);
    rc.opt.max_epochs = cfg.integer("opt.max_epochs", rc.opt.max_epochs);
    rc.opt.batch_size = cfg.integer("opt.batch_size", rc.opt.batch_size);

    rc.loss.name = loss_from_string(cfg.text("loss.kind", to_string(rc.loss.name)));
    rc.loss.lambda_c = cfg.number("loss.lambda_c", rc.loss.lambda_c);
    rc.loss.lambda_r = cfg.number("loss.lambda_r", rc.loss.lambda_r);
    rc.loss.lambda_g = cfg.number("loss.lambda_g", rc.loss.lambda_g);

    rc.refine.enabled = cfg.boolean("refine.enabled", rc.refine.enabled);
    rc.refine.tau_eps = cfg.number("refine.tau_eps", rc.refine.tau_eps);
    rc.refine.num_augmentations = cfg.integer("refine.num_augmentations", rc.refine.num_augmentations);
    const std::string sigma = cfg.text("refine.aug_sigma", "auto");
    rc.refine.aug_sigma = sigma == "auto" ? -1.0 : cfgdetail::to_double("refine.aug_sigma", sigma);
    rc.refine.swapping = cfg.boolean("refine.swapping", rc.refine.swapping);
    rc.refine.e0_mode = e0_mode_from_string(cfg.text("refine.e0_mode", to_string(rc.refine.e0_mode)));
    rc.refine.e0_fixed = cfg.integer("refine.e0_fixed", rc.refine.e0_fixed);

    rc.metrics.tau_bins = cfg.integer("metrics.tau_bins", rc.metrics.tau_bins);

    rc.theory.alpha = cfg.number("theory.alpha", rc.theory.alpha);
    rc.theory.epsilon = cfg.number("theory.epsilon", rc.theory.epsilon);
    rc.theory.c_lower = cfg.number("theory.c_lower", rc.theory.c_lower);
    rc.theory.c_upper = cfg.number("theory.c_upper", rc.theory.c_upper);
    rc.theory.eta_init = cfg.number("theory.eta_init", rc.theory.eta_init);
    rc.theory.m_init = cfg.number("theory.m_init", rc.theory.m_init);
    rc.theory.num_classes = cfg.integer("theory.num_classes", rc.theory.num_classes);
    rc.theory_n = cfg.integer("theory.n", rc.theory_n);
    rc.perturbation =
        perturb_mode_from_string(cfg.text("theory.perturbation", to_string(rc.perturbation)));

    if (auto seeds = cfg.list("run.seeds")) {
        rc.seeds.clear();
        for (const auto& s : *seeds) {
            const long long v = cfgdetail::to_int("run.seeds", s);
            if (v < 0) throw ConfigError("run.seeds entries must be nonnegative");
            rc.seeds.push_back(static_cast<std::uint64_t>(v));
        }
    }
    rc.output_dir = cfg.text("run.output_dir", rc.output_dir);
    rc.workers = cfg.integer("run.workers", rc.workers);

    if (auto taus = cfg.list("sweep.tau_eps"))
        for (const auto& t : *taus)
            rc.sweep.tau_eps.push_back(cfgdetail::to_double("sweep.tau_eps", t));
    if (auto e0s = cfg.list("sweep.e0"))
        for (const auto& e : *e0s)
            rc.sweep.e0.push_back(static_cast<int>(cfgdetail::to_int("sweep.e0", e)));
    if (auto swaps = cfg.list("sweep.swapping"))
        for (const auto& s : *swaps) rc.sweep.swapping.push_back(cfgdetail::to_bool("sweep.swapping", s));

    rc.validate();
    return rc;
}

}  // namespace irnet
