#pragma once

// Mode orchestration behind the CLI: per-seed training runs with their file
// outputs, the theory simulation, and the sweep over refinement settings.

#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "irnet/config.hpp"
#include "irnet/datagen.hpp"
#include "irnet/io.hpp"
#include "irnet/metrics.hpp"
#include "irnet/model.hpp"
#include "irnet/refine.hpp"
#include "irnet/theory.hpp"
#include "irnet/train.hpp"

namespace irnet {

struct SeedRunStats {
    std::uint64_t seed = 0;
    double test_best = 0.0;
    double test_last = 0.0;
    double final_noise = 0.0;
    int e0 = -1;
    int corrections = 0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    for (double x : xs) ms.mean += x;
    ms.mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(var / xs.size());
    return ms;
}

// One complete training run: dataset build, corruption, training, exports.
// All randomness derives from (dataset.seed, run seed), so rerunning the same
// configuration reproduces every output byte.
inline SeedRunStats run_train_seed(const RunConfig& cfg, std::uint64_t seed,
                                   const std::filesystem::path& out_dir) {
    const std::uint64_t data_seed = mix_seed({cfg.dataset.seed, seed});
    DatasetSpec spec = cfg.dataset;
    spec.seed = data_seed;
    SplitDataset ds = generate_dataset(spec);
    corrupt_train(ds, spec.ambiguity_q, spec.noise_eta, data_seed);
    if (cfg.merge_val) merge_validation_into_train(ds, spec.ambiguity_q, spec.noise_eta, data_seed);
    export_dataset(out_dir / "dataset.txt", ds);

    Classifier clf(cfg.layer_sizes(), seed);
    auto result = run_training(ds, std::move(clf), cfg.loss, cfg.opt, cfg.refine, cfg.metrics, seed);

    export_metrics_csv(out_dir / "metrics.csv", result.metrics);
    export_corrections_log(out_dir / "corrections.log", result.refine.corrections);
    save_checkpoint(out_dir / "checkpoint.bin", result.clf, seed, cfg.opt.max_epochs);

    SeedRunStats stats;
    stats.seed = seed;
    BestLastTracker acc;
    for (const auto& r : result.metrics)
        if (r.test_acc) acc.push(*r.test_acc);
    if (!acc.empty()) {
        stats.test_best = acc.best();
        stats.test_last = acc.last();
    }
    stats.final_noise = result.metrics.empty()
                            ? 0.0
                            : result.metrics.back().train_noise_level.value_or(0.0);
    stats.e0 = result.refine.e0.value_or(-1);
    stats.corrections = static_cast<int>(result.refine.corrections.size());
    return stats;
}

inline void write_train_summary(const std::filesystem::path& path,
                                const std::vector<SeedRunStats>& rows) {
    std::vector<double> best, last, noise;
    for (const auto& r : rows) {
        best.push_back(r.test_best);
        last.push_back(r.test_last);
        noise.push_back(r.final_noise);
    }
    const auto mb = mean_std(best), ml = mean_std(last), mn = mean_std(noise);
    atomic_write(path, [&](std::ostream& out) {
        out << "seed,test_acc_best,test_acc_last,delta,final_noise_level,e0,corrections\n";
        for (const auto& r : rows)
            out << r.seed << ',' << format_fixed6(r.test_best) << ',' << format_fixed6(r.test_last)
                << ',' << format_fixed6(r.test_best - r.test_last) << ','
                << format_fixed6(r.final_noise) << ',' << r.e0 << ',' << r.corrections << "\n";
        out << "mean," << format_fixed6(mb.mean) << ',' << format_fixed6(ml.mean) << ','
            << format_fixed6(mb.mean - ml.mean) << ',' << format_fixed6(mn.mean) << ",,\n";
        out << "std," << format_fixed6(mb.std) << ',' << format_fixed6(ml.std) << ",,"
            << format_fixed6(mn.std) << ",,\n";
    });
}

inline int run_train_mode(const RunConfig& cfg, std::ostream& log) {
    std::vector<SeedRunStats> rows;
    for (std::uint64_t seed : cfg.seeds) {
        const auto dir = std::filesystem::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
        auto stats = run_train_seed(cfg, seed, dir);
        log << "seed " << seed << ": test best " << format_fixed6(stats.test_best) << " last "
            << format_fixed6(stats.test_last) << " final noise "
            << format_fixed6(stats.final_noise) << " e0 " << stats.e0 << " corrections "
            << stats.corrections << "\n";
        rows.push_back(stats);
    }
    write_train_summary(std::filesystem::path(cfg.output_dir) / "summary.csv", rows);
    return 0;
}

inline int run_theory_mode(const RunConfig& cfg, std::ostream& log) {
    std::vector<std::string> lines;
    bool all_ok = true;
    for (std::uint64_t seed : cfg.seeds) {
        auto rep = multi_round_refine(cfg.theory, cfg.theory_n, seed, cfg.perturbation);
        const auto path = std::filesystem::path(cfg.output_dir) /
                          ("theory_report_seed_" + std::to_string(seed) + ".txt");
        export_refinement_report(path, rep);
        std::ostringstream row;
        row << seed << ',' << rep.rounds.size() << ',' << format_fixed6(rep.final_noisy_mass)
            << ',' << format_fixed6(rep.final_disagreement) << ','
            << (rep.all_ok() ? "ok" : "violated");
        lines.push_back(row.str());
        all_ok = all_ok && rep.all_ok();
        log << "seed " << seed << ": rounds " << rep.rounds.size() << " final noisy mass "
            << format_fixed6(rep.final_noisy_mass) << " disagreement "
            << format_fixed6(rep.final_disagreement) << " guarantees "
            << (rep.all_ok() ? "ok" : "violated") << "\n";
    }
    atomic_write(std::filesystem::path(cfg.output_dir) / "summary.csv", [&](std::ostream& out) {
        out << "seed,rounds,final_noisy_mass,final_disagreement,guarantees\n";
        for (const auto& l : lines) out << l << "\n";
    });
    return 0;
}

struct SweepCell {
    double tau_eps = 0.0;
    int e0 = -1;  // negative: keep the automatic detector
    bool swapping = false;
    std::string dir_name;
};

inline std::vector<SweepCell> sweep_cells(const RunConfig& cfg) {
    auto taus = cfg.sweep.tau_eps.empty() ? std::vector<double>{cfg.refine.tau_eps}
                                          : cfg.sweep.tau_eps;
    auto e0s = cfg.sweep.e0.empty() ? std::vector<int>{-1} : cfg.sweep.e0;
    auto swaps = cfg.sweep.swapping.empty() ? std::vector<bool>{cfg.refine.swapping}
                                            : cfg.sweep.swapping;
    std::vector<SweepCell> cells;
    for (double t : taus)
        for (int e : e0s)
            for (bool s : swaps) {
                SweepCell cell{t, e, s, ""};
                std::ostringstream name;
                name << "cell_tau" << format_compact(t) << "_e0"
                     << (e < 0 ? std::string("auto") : std::to_string(e)) << "_swap"
                     << (s ? "on" : "off");
                cell.dir_name = name.str();
                cells.push_back(cell);
            }
    return cells;
}

inline int run_sweep_mode(const RunConfig& cfg, std::ostream& log) {
    const auto cells = sweep_cells(cfg);
    struct CellRow {
        SweepCell cell;
        MeanStd best, last, noise;
    };
    std::vector<CellRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;

    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const auto& cell = cells[i];
            RunConfig cell_cfg = cfg;
            cell_cfg.refine.tau_eps = cell.tau_eps;
            cell_cfg.refine.swapping = cell.swapping;
            if (cell.e0 >= 0) {
                cell_cfg.refine.e0_mode = E0Mode::Fixed;
                cell_cfg.refine.e0_fixed = cell.e0;
            }
            std::vector<double> best, last, noise;
            for (std::uint64_t seed : cfg.seeds) {
                const auto dir = std::filesystem::path(cfg.output_dir) / cell.dir_name /
                                 ("seed_" + std::to_string(seed));
                auto stats = run_train_seed(cell_cfg, seed, dir);
                best.push_back(stats.test_best);
                last.push_back(stats.test_last);
                noise.push_back(stats.final_noise);
            }
            rows[i] = {cell, mean_std(best), mean_std(last), mean_std(noise)};
            std::lock_guard<std::mutex> guard(log_mutex);
            log << cell.dir_name << ": test best " << format_fixed6(rows[i].best.mean) << " +/- "
                << format_fixed6(rows[i].best.std) << " last " << format_fixed6(rows[i].last.mean)
                << " +/- " << format_fixed6(rows[i].last.std) << "\n";
        }
    };

    const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    atomic_write(std::filesystem::path(cfg.output_dir) / "index.csv", [&](std::ostream& out) {
        out << "cell,tau_eps,e0,swapping,dir,mean_test_best,std_test_best,mean_test_last,"
               "std_test_last,mean_final_noise\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            out << i << ',' << format_double(r.cell.tau_eps) << ','
                << (r.cell.e0 < 0 ? std::string("auto") : std::to_string(r.cell.e0)) << ','
                << (r.cell.swapping ? "on" : "off") << ',' << r.cell.dir_name << ','
                << format_fixed6(r.best.mean) << ',' << format_fixed6(r.best.std) << ','
                << format_fixed6(r.last.mean) << ',' << format_fixed6(r.last.std) << ','
                << format_fixed6(r.noise.mean) << "\n";
        }
    });
    return 0;
}

inline int run_mode(const RunConfig& cfg, std::ostream& log) {
    std::filesystem::create_directories(cfg.output_dir);
    switch (cfg.mode) {
        case RunMode::Train: return run_train_mode(cfg, log);
        case RunMode::TheorySim: return run_theory_mode(cfg, log);
        case RunMode::Sweep: return run_sweep_mode(cfg, log);
    }
    throw ConfigError("unknown run mode");
}

}  // namespace irnet
