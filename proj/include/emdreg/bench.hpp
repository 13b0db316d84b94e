#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "emdreg/bias_field.hpp"
#include "emdreg/errors.hpp"
#include "emdreg/ffd.hpp"
#include "emdreg/image.hpp"
#include "emdreg/metrics.hpp"
#include "emdreg/registration.hpp"
#include "emdreg/rng.hpp"
#include "emdreg/similarity.hpp"

namespace emdreg {

enum class Method { Intensity, LrEmd, AfrEmd };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Intensity: return "intensity";
        case Method::LrEmd: return "lr-emd";
        case Method::AfrEmd: return "afr-emd";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "intensity") return Method::Intensity;
    if (s == "lr-emd") return Method::LrEmd;
    if (s == "afr-emd") return Method::AfrEmd;
    throw std::invalid_argument("unknown method '" + s + "'");
}

inline MeasureKind::Type measure_from_name(const std::string& s) {
    if (s == "ssd") return MeasureKind::SSD;
    if (s == "cc") return MeasureKind::CC;
    if (s == "rc") return MeasureKind::RC;
    if (s == "mi") return MeasureKind::MI;
    throw std::invalid_argument("unknown measure '" + s + "'");
}

inline std::string measure_type_name(MeasureKind::Type t) {
    MeasureKind m;
    m.type = t;
    return measure_name(m);
}

/// One full sweep: method x measure x kernel-count cells, `runs` seeded
/// trials per cell. Trials derive their seeds from the master seed and the
/// cell coordinates, so any single trial can be reproduced in isolation.
struct ExperimentConfig {
    std::string input_path;
    std::vector<Method> methods{Method::Intensity, Method::LrEmd, Method::AfrEmd};
    std::vector<MeasureKind::Type> measures{MeasureKind::SSD, MeasureKind::CC, MeasureKind::RC,
                                            MeasureKind::MI};
    std::vector<int> kernel_counts{0, 1, 2, 3, 4};
    int runs = 15;
    double perturb_amplitude = 6.0;
    int grid_nx = 14;
    int grid_ny = 14;
    int emd_levels = 3;
    std::uint64_t master_seed = 1;
    std::string out_dir = "bench_out";
    int workers = 0;  // 0 = hardware concurrency
    int mi_bins = 64;
    double rc_alpha = 0.05;
    double sigma_frac = 16.0;
    OptimizerOptions optimizer;
};

struct RunRecord {
    Method method = Method::Intensity;
    MeasureKind::Type measure = MeasureKind::SSD;
    int kernels = 0;
    int run = 0;
    std::uint64_t seed = 0;
    double t_rmse = 0.0;
    double i_rmse = 0.0;
    bool converged = false;
    bool failed = false;
    double wall_time_s = 0.0;
};

struct SummaryRow {
    std::string method;
    std::string measure;
    int kernels = 0;       // -1 aggregates across all kernel counts
    int runs = 0;
    int converged = 0;
    double convergence_pct = 0.0;
    double t_rmse_mean = 0.0, t_rmse_sd = 0.0;  // over converged runs only
    double i_rmse_mean = 0.0, i_rmse_sd = 0.0;
};

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t master, Method method, MeasureKind::Type measure,
                                int kernels, int run) {
    std::uint64_t s = master;
    s = mix_seed(s, static_cast<std::uint64_t>(method) + 1);
    s = mix_seed(s, static_cast<std::uint64_t>(measure) + 1);
    s = mix_seed(s, static_cast<std::uint64_t>(kernels) + 1);
    s = mix_seed(s, static_cast<std::uint64_t>(run) + 1);
    return s;
}

inline MeasureKind make_measure(const ExperimentConfig& cfg, MeasureKind::Type t) {
    MeasureKind m;
    m.type = t;
    m.mi_bins = cfg.mi_bins;
    m.rc_alpha = cfg.rc_alpha;
    return m;
}

} // namespace detail

/// Runs one seeded trial: perturb a ground-truth lattice, distort the base
/// image with it to form the registration target, corrupt both inputs with
/// independent K-kernel bias fields, register, and score against the truth.
/// The fixed/reference input is the geometrically distorted image and the
/// moving/floating input is the undistorted base, so the estimated backward
/// transform is directly comparable with the ground truth.
inline RunRecord run_trial(const ImageGrid& base, const ExperimentConfig& cfg, Method method,
                           MeasureKind::Type measure, int kernels, int run_index) {
    RunRecord rec;
    rec.method = method;
    rec.measure = measure;
    rec.kernels = kernels;
    rec.run = run_index;
    rec.seed = detail::trial_seed(cfg.master_seed, method, measure, kernels, run_index);

    FfdTransform t_true = perturb_grid(make_uniform_grid(base.width, base.height, cfg.grid_nx, cfg.grid_ny),
                                       cfg.perturb_amplitude, mix_seed(rec.seed, 1));
    ImageGrid ref_clean = warp_image(base, t_true);
    const ImageGrid& flo_clean = base;

    ImageGrid ref = ref_clean;
    ImageGrid flo = flo_clean;
    if (kernels > 0) {
        BiasFieldConfig bf;
        bf.kernel_count = kernels;
        bf.sigma = base.width / cfg.sigma_frac;
        bf.seed = mix_seed(rec.seed, 2);
        ref = apply_bias(ref, generate_bias_field(base.width, base.height, bf));
        bf.seed = mix_seed(rec.seed, 3);
        flo = apply_bias(flo, generate_bias_field(base.width, base.height, bf));
    }

    auto start = std::chrono::steady_clock::now();
    try {
        MeasureKind m = detail::make_measure(cfg, measure);
        RegistrationResult result;
        switch (method) {
            case Method::Intensity:
                result = register_intensity_hier(ref, flo, cfg.emd_levels, m, cfg.optimizer,
                                                 cfg.grid_nx, cfg.grid_ny);
                break;
            case Method::LrEmd:
                result = register_lr_emd(ref, flo, cfg.emd_levels, m, cfg.optimizer, cfg.grid_nx,
                                         cfg.grid_ny);
                break;
            case Method::AfrEmd:
                result = register_afr_emd(ref, flo, cfg.emd_levels, m, cfg.optimizer, cfg.grid_nx,
                                          cfg.grid_ny);
                break;
        }
        TrialScore score = score_trial(dense_displacement(t_true), dense_displacement(result.transform),
                                       ref_clean, warp_image(flo_clean, result.transform));
        rec.t_rmse = score.t_rmse;
        rec.i_rmse = score.i_rmse;
        rec.converged = score.converged;
    } catch (const std::exception&) {
        rec.failed = true;
        rec.converged = false;
        rec.t_rmse = std::numeric_limits<double>::quiet_NaN();
        rec.i_rmse = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

namespace detail {

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct MeanSd {
    int n = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample SD (n-1); 0 when n < 2
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd r;
    r.n = static_cast<int>(xs.size());
    if (r.n == 0) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / r.n;
    if (r.n > 1) {
        double q = 0.0;
        for (double x : xs) q += (x - r.mean) * (x - r.mean);
        r.sd = std::sqrt(q / (r.n - 1));
    }
    return r;
}

} // namespace detail

/// Per-cell summaries (mean/SD of the error measures over converged runs
/// only, convergence percentage over all runs), plus one aggregate row per
/// method x measure across all kernel counts (kernels = -1).
inline std::vector<SummaryRow> summarize_records(const std::vector<RunRecord>& records) {
    struct Key {
        std::string method, measure;
        int kernels;
        bool operator<(const Key& o) const {
            return std::tie(measure, method, kernels) < std::tie(o.measure, o.method, o.kernels);
        }
    };
    // Preserve first-appearance order of cells, which follows config order.
    std::vector<Key> order;
    auto cell_of = [&](const RunRecord& r, int k) {
        return Key{method_name(r.method), measure_type_name(r.measure), k};
    };
    auto find_or_add = [&](const Key& k) {
        for (size_t i = 0; i < order.size(); ++i)
            if (order[i].method == k.method && order[i].measure == k.measure && order[i].kernels == k.kernels)
                return i;
        order.push_back(k);
        return order.size() - 1;
    };
    std::vector<std::vector<const RunRecord*>> cells;
    for (const auto& r : records) {
        for (int k : {r.kernels, -1}) {
            size_t i = find_or_add(cell_of(r, k));
            if (cells.size() <= i) cells.resize(i + 1);
            cells[i].push_back(&r);
        }
    }
    std::vector<SummaryRow> rows;
    for (size_t i = 0; i < order.size(); ++i) {
        SummaryRow row;
        row.method = order[i].method;
        row.measure = order[i].measure;
        row.kernels = order[i].kernels;
        std::vector<double> ts, is;
        for (const RunRecord* r : cells[i]) {
            ++row.runs;
            if (r->converged) {
                ++row.converged;
                ts.push_back(r->t_rmse);
                is.push_back(r->i_rmse);
            }
        }
        row.convergence_pct = 100.0 * row.converged / row.runs;
        auto t = detail::mean_sd(ts), ii = detail::mean_sd(is);
        row.t_rmse_mean = t.mean;
        row.t_rmse_sd = t.sd;
        row.i_rmse_mean = ii.mean;
        row.i_rmse_sd = ii.sd;
        rows.push_back(row);
    }
    return rows;
}

inline const char* kRecordsHeader =
    "method,measure,kernels,run,seed,t_rmse,i_rmse,converged,failed,wall_time_s";

inline void write_records_csv(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << kRecordsHeader << "\n";
    for (const auto& r : records) {
        out << method_name(r.method) << ',' << measure_type_name(r.measure) << ',' << r.kernels
            << ',' << r.run << ',' << r.seed << ',' << detail::fmt_double(r.t_rmse) << ','
            << detail::fmt_double(r.i_rmse) << ',' << (r.converged ? 1 : 0) << ','
            << (r.failed ? 1 : 0) << ',';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", r.wall_time_s);
        out << buf << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << "measure,method,kernels,runs,converged,convergence_pct,"
           "t_rmse_mean,t_rmse_sd,i_rmse_mean,i_rmse_sd\n";
    for (const auto& r : rows) {
        out << r.measure << ',' << r.method << ','
            << (r.kernels < 0 ? std::string("all") : std::to_string(r.kernels)) << ',' << r.runs
            << ',' << r.converged << ',' << detail::fmt_double(r.convergence_pct) << ',';
        if (r.converged > 0) {
            out << detail::fmt_double(r.t_rmse_mean) << ',' << detail::fmt_double(r.t_rmse_sd)
                << ',' << detail::fmt_double(r.i_rmse_mean) << ',' << detail::fmt_double(r.i_rmse_sd);
        } else {
            out << ",,,";
        }
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

/// Plot-ready convergence-rate data: one row per (measure, method, K).
inline void write_convergence_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << "measure,method,kernels,convergence_pct\n";
    for (const auto& r : rows) {
        if (r.kernels < 0) continue;
        out << r.measure << ',' << r.method << ',' << r.kernels << ','
            << detail::fmt_double(r.convergence_pct) << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

struct ExperimentResult {
    std::vector<RunRecord> records;
    std::vector<SummaryRow> summary;
    bool had_failures = false;
};

/// Executes the full sweep. Trials run concurrently up to the configured
/// worker count; records are stored in (cell, run-index) order regardless of
/// completion order, so outputs are reproducible byte-for-byte except for the
/// wall_time_s column.
inline ExperimentResult run_experiment(const ImageGrid& base, const ExperimentConfig& cfg) {
    if (cfg.runs < 1) throw std::invalid_argument("run_experiment: runs must be >= 1");
    struct Task {
        Method method;
        MeasureKind::Type measure;
        int kernels;
        int run;
    };
    std::vector<Task> tasks;
    for (Method m : cfg.methods)
        for (MeasureKind::Type s : cfg.measures)
            for (int k : cfg.kernel_counts)
                for (int r = 0; r < cfg.runs; ++r) tasks.push_back({m, s, k, r});

    ExperimentResult result;
    result.records.resize(tasks.size());
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    int workers = cfg.workers > 0 ? cfg.workers : std::max(1, hw);
    workers = std::min<int>(workers, static_cast<int>(tasks.size()));

    ExperimentConfig trial_cfg = cfg;
    trial_cfg.optimizer.threads = workers > 1 ? 1 : 0;

    std::atomic<size_t> next{0};
    auto body = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            const Task& t = tasks[i];
            result.records[i] = run_trial(base, trial_cfg, t.method, t.measure, t.kernels, t.run);
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& th : pool) th.join();
    }
    for (const auto& r : result.records) result.had_failures = result.had_failures || r.failed;
    result.summary = summarize_records(result.records);
    return result;
}

inline void write_manifest(const ExperimentConfig& cfg, const ImageGrid& base, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["tool"] = "emdreg";
    nlohmann::json c;
    c["input"] = cfg.input_path;
    std::vector<std::string> ms;
    for (auto m : cfg.methods) ms.push_back(method_name(m));
    c["methods"] = ms;
    std::vector<std::string> ss;
    for (auto s : cfg.measures) ss.push_back(measure_type_name(s));
    c["measures"] = ss;
    c["kernels"] = cfg.kernel_counts;
    c["runs"] = cfg.runs;
    c["perturb_amplitude"] = cfg.perturb_amplitude;
    c["grid_nx"] = cfg.grid_nx;
    c["grid_ny"] = cfg.grid_ny;
    c["emd_levels"] = cfg.emd_levels;
    c["master_seed"] = cfg.master_seed;
    c["mi_bins"] = cfg.mi_bins;
    c["rc_alpha"] = cfg.rc_alpha;
    c["sigma_frac"] = cfg.sigma_frac;
    c["workers"] = cfg.workers;
    j["config"] = c;
    j["image"] = {{"width", base.width}, {"height", base.height}};
    j["outputs"] = {{"records", "records.csv"},
                    {"summary", "summary.csv"},
                    {"convergence", "convergence.csv"}};
    j["seed_scheme"] = "splitmix64 chain over (master, method, measure, kernels, run)";
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

/// Sweep + all output files under cfg.out_dir.
inline ExperimentResult run_and_write_experiment(const ImageGrid& base, const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    ExperimentResult res = run_experiment(base, cfg);
    write_records_csv(res.records, (fs::path(cfg.out_dir) / "records.csv").string());
    write_summary_csv(res.summary, (fs::path(cfg.out_dir) / "summary.csv").string());
    write_convergence_csv(res.summary, (fs::path(cfg.out_dir) / "convergence.csv").string());
    write_manifest(cfg, base, (fs::path(cfg.out_dir) / "manifest.json").string());
    return res;
}

/// Parses a records.csv written by write_records_csv. Errors name the
/// offending row (1-based, counting the header as row 1).
inline std::vector<RunRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kRecordsHeader)
        throw parse_error(path + ": row 1: bad or missing header");
    std::vector<RunRecord> records;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        if (line.back() == ',') f.push_back("");
        if (f.size() != 10)
            throw parse_error(path + ": row " + std::to_string(row) + ": expected 10 fields, got " +
                              std::to_string(f.size()));
        try {
            RunRecord r;
            r.method = method_from_name(f[0]);
            r.measure = measure_from_name(f[1]);
            r.kernels = std::stoi(f[2]);
            r.run = std::stoi(f[3]);
            r.seed = std::stoull(f[4]);
            r.t_rmse = std::stod(f[5]);
            r.i_rmse = std::stod(f[6]);
            r.converged = std::stoi(f[7]) != 0;
            r.failed = std::stoi(f[8]) != 0;
            r.wall_time_s = std::stod(f[9]);
            records.push_back(r);
        } catch (const std::exception& e) {
            throw parse_error(path + ": row " + std::to_string(row) + ": " + e.what());
        }
    }
    if (records.empty()) throw parse_error(path + ": no data rows");
    return records;
}

/// Regenerates summary.csv and convergence.csv from stored records without
/// re-running anything.
inline void report_from_records(const std::string& records_path, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::vector<RunRecord> records = read_records_csv(records_path);
    fs::create_directories(out_dir);
    auto rows = summarize_records(records);
    write_summary_csv(rows, (fs::path(out_dir) / "summary.csv").string());
    write_convergence_csv(rows, (fs::path(out_dir) / "convergence.csv").string());
}

} // namespace emdreg
