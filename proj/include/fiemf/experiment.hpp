#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiemf/baselines.hpp"
#include "fiemf/error.hpp"
#include "fiemf/fiemf_model.hpp"
#include "fiemf/fuzzy_similarity.hpp"
#include "fiemf/metrics.hpp"
#include "fiemf/qos_matrix.hpp"
#include "fiemf/reference_results.hpp"
#include "fiemf/region_bias.hpp"
#include "fiemf/user_regions.hpp"

// Experiment harness: runs (method, density, seed) cells against held-out
// test entries, aggregates MAE/RMSE across seeds, sweeps single parameters,
// and writes CSV/JSON reports with the published reference numbers embedded
// for side-by-side comparison.

namespace fiemf {

enum class Method { kUMean, kIMean, kUipcc, kPmf, kBiasedMf, kFiemf };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::kUMean: return "umean";
        case Method::kIMean: return "imean";
        case Method::kUipcc: return "uipcc";
        case Method::kPmf: return "pmf";
        case Method::kBiasedMf: return "biasedmf";
        case Method::kFiemf: return "fiemf";
    }
    return "?";
}

inline Method parse_method(const std::string& name) {
    if (name == "umean") return Method::kUMean;
    if (name == "imean") return Method::kIMean;
    if (name == "uipcc") return Method::kUipcc;
    if (name == "pmf") return Method::kPmf;
    if (name == "biasedmf") return Method::kBiasedMf;
    if (name == "fiemf") return Method::kFiemf;
    throw ArgumentError("unknown method '" + name + "'");
}

/// Everything a full experiment needs. Mirrors the JSON config file; CLI
/// flags override individual fields.
struct ExperimentConfig {
    std::string rt_path;
    std::string users_path;
    std::string id_column = "[User ID]";
    std::string country_column = "[Country]";
    std::vector<double> densities = {0.05, 0.10, 0.15, 0.20};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<Method> methods = {Method::kUMean, Method::kIMean, Method::kUipcc, Method::kPmf,
                                   Method::kBiasedMf, Method::kFiemf};
    std::string out_dir = "out";
    std::string cache_dir; ///< empty = <out_dir>/cache
    int workers = 1;       ///< concurrent experiment cells
    int sim_threads = 0;   ///< threads for similarity matrices; 0 = auto
    bool clamp_predictions = true;
    bool mu_include_self = false;

    FiemfHyperparams fiemf;
    MfConfig pmf;
    MfConfig biasedmf;
    UipccConfig uipcc;
    SimilarityOptions similarity;

    void validate() const {
        for (double d : densities)
            if (!(d > 0.0 && d < 1.0)) throw ArgumentError("densities must lie in (0,1)");
        if (seeds.empty()) throw ArgumentError("at least one seed is required");
        if (methods.empty()) throw ArgumentError("at least one method is required");
        if (workers < 1) throw ArgumentError("workers must be >= 1");
        fiemf.validate();
        uipcc.validate();
        pmf.sgd_options().validate();
        biasedmf.sgd_options().validate();
    }

    std::filesystem::path resolved_cache_dir() const {
        return cache_dir.empty() ? std::filesystem::path(out_dir) / "cache"
                                 : std::filesystem::path(cache_dir);
    }
};

/// One evaluated (method, density, seed) cell.
struct CellResult {
    Method method;
    double density = 0.0;
    std::uint64_t seed = 0;
    double mae = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double wall_time_s = 0.0;
    std::string status = "ok"; ///< "ok" or "error: ..."
    std::string fingerprint;   ///< hash of (dataset, method config, density, seed)

    bool ok() const { return status == "ok"; }
};

/// Mean and sample standard deviation of a metric across seeds.
struct CellAggregate {
    Method method;
    double density = 0.0;
    int seeds = 0;
    double mae_mean = std::numeric_limits<double>::quiet_NaN();
    double mae_std = 0.0;
    double rmse_mean = std::numeric_limits<double>::quiet_NaN();
    double rmse_std = 0.0;
};

struct EvalReport {
    std::vector<CellResult> cells;
    std::vector<CellAggregate> aggregates;
};

namespace detail {

inline std::uint64_t fnv1a_text(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

/// Compact text summary of the method-relevant config, hashed into the cell
/// fingerprint so reports identify exactly what ran.
inline std::string method_config_text(const ExperimentConfig& config, Method method) {
    std::string s = method_name(method);
    auto add = [&s](const std::string& k, double v) { s += ";" + k + "=" + format_double(v); };
    switch (method) {
        case Method::kUMean:
        case Method::kIMean:
            break;
        case Method::kUipcc:
            add("top_k", config.uipcc.top_k);
            add("blend", config.uipcc.blend);
            add("min_corated", config.uipcc.min_corated);
            add("sig", config.uipcc.significance_weighting ? 1 : 0);
            add("max_service_neighbors", config.uipcc.max_service_neighbors);
            break;
        case Method::kPmf:
        case Method::kBiasedMf: {
            const MfConfig& c = method == Method::kPmf ? config.pmf : config.biasedmf;
            add("d", c.dim);
            add("lambda", c.lambda);
            add("eta", c.eta);
            add("eta_decay", c.eta_decay);
            add("iters", c.max_iters);
            break;
        }
        case Method::kFiemf: {
            const FiemfHyperparams& h = config.fiemf;
            add("alpha", h.alpha);
            add("lambda", h.lambda);
            add("gamma", h.gamma);
            add("d", h.dim);
            add("k", h.k_neighbors);
            add("eta", h.eta);
            add("eta_decay", h.eta_decay);
            add("iters", h.max_iters);
            add("rmed", config.similarity.r_med_mode == RMedMode::kPerUser ? 0 : 1);
            add("cap", config.similarity.pair_cap);
            add("mu_self", config.mu_include_self ? 1 : 0);
            add("grad", h.neighbor_gradient == NeighborGradient::kLocal ? 0 : 1);
            break;
        }
    }
    s += ";clamp=" + std::string(config.clamp_predictions ? "1" : "0");
    return s;
}

inline std::string cell_fingerprint(const ExperimentConfig& config, Method method, double density,
                                    std::uint64_t seed, const QosMatrix& source) {
    std::uint64_t h = fnv1a_text(method_config_text(config, method));
    h = fnv1a_text(format_double(density), h);
    h = fnv1a_text(std::to_string(seed), h);
    h = fnv1a_text(source.fingerprint_hex(), h);
    return hex64(h);
}

/// Evaluates a predictor over every test entry. Predictions are clamped to
/// the training value range when requested; metrics use the clamped values.
template <typename Predict>
std::pair<double, double> evaluate_predictor(const QosMatrix& test, Predict&& predict,
                                             bool clamp, double lo, double hi) {
    std::vector<PredictionPair> pairs;
    pairs.reserve(test.size());
    for (const QosEntry& e : test.entries()) {
        double v = predict(e.user, e.service);
        if (clamp) v = std::clamp(v, lo, hi);
        pairs.push_back({e.value, v});
    }
    return {mae(pairs), rmse(pairs)};
}

inline std::string neighbor_cache_name(const QosMatrix& source, double density,
                                       std::uint64_t seed, const SimilarityOptions& opts, int k) {
    std::string key = source.fingerprint_hex();
    key += "_d" + format_double(density);
    key += "_s" + std::to_string(seed);
    key += opts.r_med_mode == RMedMode::kPerUser ? "_per_user" : "_global";
    key += "_cap" + std::to_string(opts.pair_cap);
    key += "_k" + std::to_string(k);
    return "neighbors_" + key + ".csv";
}

} // namespace detail

/// Neighbor sets for a train split, read from the cache when present.
inline std::vector<NeighborSet> neighbors_for_split(const QosMatrix& source,
                                                    const QosMatrix& train, double density,
                                                    std::uint64_t seed,
                                                    const SimilarityOptions& opts, int k,
                                                    int threads,
                                                    const std::filesystem::path& cache_dir,
                                                    SimilarityStats* stats = nullptr) {
    std::filesystem::path cache_file;
    if (!cache_dir.empty()) {
        cache_file = cache_dir / detail::neighbor_cache_name(source, density, seed, opts, k);
        if (std::filesystem::exists(cache_file))
            return load_neighbors_csv(cache_file, train.num_users());
    }
    auto sets = all_top_k_neighbors(train, k, opts, threads, stats);
    if (!cache_file.empty()) {
        std::filesystem::create_directories(cache_dir);
        save_neighbors_csv(sets, cache_file);
    }
    return sets;
}

/// Runs one experiment cell. Never throws for training failures; those come
/// back with status "error: ...".
inline CellResult run_cell(const ExperimentConfig& config, const QosMatrix& source,
                           const UserRegionTable& regions, Method method, double density,
                           std::uint64_t seed) {
    CellResult cell;
    cell.method = method;
    cell.density = density;
    cell.seed = seed;
    cell.fingerprint = detail::cell_fingerprint(config, method, density, seed, source);
    const auto start = std::chrono::steady_clock::now();
    try {
        Split sp = split(source, density, seed);
        const bool clamp = config.clamp_predictions;
        const double lo = sp.train.value_min();
        const double hi = sp.train.value_max();
        const int threads = config.sim_threads > 0
                                ? config.sim_threads
                                : std::max(1u, std::thread::hardware_concurrency());
        std::pair<double, double> scores;
        switch (method) {
            case Method::kUMean: {
                const MeanModel mm = build_mean_model(sp.train);
                scores = detail::evaluate_predictor(
                    sp.test, [&](int u, int) { return umean_predict(mm, u); }, clamp, lo, hi);
                break;
            }
            case Method::kIMean: {
                const MeanModel mm = build_mean_model(sp.train);
                scores = detail::evaluate_predictor(
                    sp.test, [&](int, int s) { return imean_predict(mm, s); }, clamp, lo, hi);
                break;
            }
            case Method::kUipcc: {
                const UipccModel model(sp.train, config.uipcc, threads);
                scores = detail::evaluate_predictor(
                    sp.test, [&](int u, int s) { return model.predict(u, s); }, clamp, lo, hi);
                break;
            }
            case Method::kPmf: {
                MfConfig c = config.pmf;
                c.init_seed = mix_seed(seed, 0x504d46ull);
                const LatentModel model = pmf_train(sp.train, c);
                scores = detail::evaluate_predictor(
                    sp.test, [&](int u, int s) { return model.predict_unchecked(u, s); }, clamp,
                    lo, hi);
                break;
            }
            case Method::kBiasedMf: {
                MfConfig c = config.biasedmf;
                c.init_seed = mix_seed(seed, 0x424d46ull);
                const LatentModel model = biasedmf_train(sp.train, c);
                scores = detail::evaluate_predictor(
                    sp.test, [&](int u, int s) { return model.predict_unchecked(u, s); }, clamp,
                    lo, hi);
                break;
            }
            case Method::kFiemf: {
                SimilarityOptions opts = config.similarity;
                detail::resolve_global_median(sp.train, opts);
                auto neighbors = neighbors_for_split(source, sp.train, density, seed, opts,
                                                     config.fiemf.k_neighbors, threads,
                                                     config.resolved_cache_dir());
                const RegionModel region_model =
                    build_region_model(sp.train, regions, config.mu_include_self);
                FiemfHyperparams hyper = config.fiemf;
                hyper.init_seed = mix_seed(seed, 0x4649454d46ull);
                const FiemfModel model = train_fiemf(sp.train, neighbors, region_model, hyper);
                scores = detail::evaluate_predictor(
                    sp.test, [&](int u, int s) { return model.predict_unchecked(u, s); }, clamp,
                    lo, hi);
                break;
            }
        }
        cell.mae = scores.first;
        cell.rmse = scores.second;
    } catch (const std::exception& e) {
        cell.status = std::string("error: ") + e.what();
    }
    cell.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return cell;
}

/// Aggregates per-(method, density) statistics over the seeds that succeeded.
inline std::vector<CellAggregate> aggregate_cells(const std::vector<CellResult>& cells) {
    std::vector<CellAggregate> out;
    auto find = [&out](Method m, double d) -> CellAggregate* {
        for (CellAggregate& a : out)
            if (a.method == m && std::abs(a.density - d) < 1e-12) return &a;
        return nullptr;
    };
    // two passes: means first, then deviations
    for (const CellResult& c : cells) {
        if (!c.ok()) continue;
        CellAggregate* a = find(c.method, c.density);
        if (a == nullptr) {
            out.push_back({c.method, c.density, 0, 0.0, 0.0, 0.0, 0.0});
            a = &out.back();
        }
        a->seeds += 1;
        a->mae_mean += c.mae;
        a->rmse_mean += c.rmse;
    }
    for (CellAggregate& a : out) {
        a.mae_mean /= a.seeds;
        a.rmse_mean /= a.seeds;
    }
    for (const CellResult& c : cells) {
        if (!c.ok()) continue;
        CellAggregate* a = find(c.method, c.density);
        a->mae_std += (c.mae - a->mae_mean) * (c.mae - a->mae_mean);
        a->rmse_std += (c.rmse - a->rmse_mean) * (c.rmse - a->rmse_mean);
    }
    for (CellAggregate& a : out) {
        a.mae_std = a.seeds > 1 ? std::sqrt(a.mae_std / (a.seeds - 1)) : 0.0;
        a.rmse_std = a.seeds > 1 ? std::sqrt(a.rmse_std / (a.seeds - 1)) : 0.0;
    }
    return out;
}

/// Runs every (method, density, seed) cell. Cells are independent; up to
/// config.workers run concurrently. A failed cell is recorded and the rest
/// continue. `progress` (optional) fires after each finished cell.
inline EvalReport run_experiment(const ExperimentConfig& config, const QosMatrix& source,
                                 const UserRegionTable& regions,
                                 const std::function<void(const CellResult&)>& progress = {}) {
    config.validate();
    struct CellSpec {
        Method method;
        double density;
        std::uint64_t seed;
    };
    std::vector<CellSpec> specs;
    for (const Method m : config.methods)
        for (const double d : config.densities)
            for (const std::uint64_t s : config.seeds) specs.push_back({m, d, s});

    EvalReport report;
    report.cells.resize(specs.size());
    std::mutex progress_mutex;
    detail::parallel_for(specs.size(), config.workers, [&](std::size_t i) {
        const CellSpec& sp = specs[i];
        report.cells[i] = run_cell(config, source, regions, sp.method, sp.density, sp.seed);
        if (progress) {
            const std::lock_guard<std::mutex> lock(progress_mutex);
            progress(report.cells[i]);
        }
    });
    report.aggregates = aggregate_cells(report.cells);
    return report;
}

// ---------------------------------------------------------------------------
// report files

inline void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open report for writing: " + path.string());
    out << "method,density,seed,mae,rmse,wall_time_s,status,fingerprint\n";
    for (const CellResult& c : report.cells) {
        out << method_name(c.method) << ',' << detail::format_double(c.density) << ',' << c.seed
            << ',' << detail::format_double(c.mae) << ',' << detail::format_double(c.rmse) << ','
            << detail::format_double(c.wall_time_s) << ",\"" << c.status << "\","
            << c.fingerprint << '\n';
    }
}

/// JSON summary: aggregates, per-cell results, and the published reference
/// rows (provenance "paper") next to the fresh ones (provenance "run").
inline void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["cells"] = nlohmann::json::array();
    for (const CellResult& c : report.cells) {
        j["cells"].push_back({{"method", method_name(c.method)},
                              {"density", c.density},
                              {"seed", c.seed},
                              {"mae", c.mae},
                              {"rmse", c.rmse},
                              {"wall_time_s", c.wall_time_s},
                              {"status", c.status},
                              {"fingerprint", c.fingerprint}});
    }
    j["aggregates"] = nlohmann::json::array();
    for (const CellAggregate& a : report.aggregates) {
        j["aggregates"].push_back({{"method", method_name(a.method)},
                                   {"density", a.density},
                                   {"seeds", a.seeds},
                                   {"provenance", "run"},
                                   {"mae_mean", a.mae_mean},
                                   {"mae_std", a.mae_std},
                                   {"rmse_mean", a.rmse_mean},
                                   {"rmse_std", a.rmse_std}});
    }
    j["reference"] = nlohmann::json::array();
    for (const ReferenceRow& row : kReferenceResults) {
        for (std::size_t i = 0; i < kReferenceDensities.size(); ++i) {
            j["reference"].push_back({{"method", std::string(row.method)},
                                      {"density", kReferenceDensities[i]},
                                      {"provenance", "paper"},
                                      {"runnable", row.runnable},
                                      {"mae", row.mae[i]},
                                      {"rmse", row.rmse[i]}});
        }
    }
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open report for writing: " + path.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// parameter sweeps

enum class SweepParam { kAlpha, kGamma, kDim };

inline std::string sweep_param_name(SweepParam p) {
    switch (p) {
        case SweepParam::kAlpha: return "alpha";
        case SweepParam::kGamma: return "gamma";
        case SweepParam::kDim: return "d";
    }
    return "?";
}

inline SweepParam parse_sweep_param(const std::string& name) {
    if (name == "alpha") return SweepParam::kAlpha;
    if (name == "gamma") return SweepParam::kGamma;
    if (name == "d" || name == "dim") return SweepParam::kDim;
    throw ArgumentError("unknown sweep parameter '" + name + "' (expected alpha, gamma or d)");
}

struct SweepPoint {
    double value;
    std::uint64_t seed;
    double mae = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";
};

struct SweepTable {
    SweepParam param;
    double density;
    std::vector<SweepPoint> points;

    /// Seed-mean MAE/RMSE per value, skipping failed points.
    std::vector<std::array<double, 3>> value_means() const {
        std::vector<std::array<double, 3>> rows;
        for (const SweepPoint& pt : points) {
            if (pt.status != "ok") continue;
            bool found = false;
            for (auto& r : rows) {
                if (r[0] == pt.value) {
                    found = true;
                    break;
                }
            }
            if (!found) rows.push_back({pt.value, 0.0, 0.0});
        }
        for (auto& r : rows) {
            int n = 0;
            double mae_sum = 0.0;
            double rmse_sum = 0.0;
            for (const SweepPoint& pt : points) {
                if (pt.status != "ok" || pt.value != r[0]) continue;
                mae_sum += pt.mae;
                rmse_sum += pt.rmse;
                ++n;
            }
            r[1] = mae_sum / n;
            r[2] = rmse_sum / n;
        }
        return rows;
    }
};

/// Re-trains the fused model per sweep value at one density, reusing each
/// seed's split, region model and neighbor sets across values (none of the
/// swept parameters affect them). Alpha sweeps must include both endpoints.
inline SweepTable sweep(SweepParam param, const std::vector<double>& values,
                        const ExperimentConfig& config, const QosMatrix& source,
                        const UserRegionTable& regions, double density,
                        const std::function<void(const SweepPoint&)>& progress = {}) {
    config.validate();
    if (values.empty()) throw ArgumentError("sweep needs at least one value");
    for (const double v : values) {
        switch (param) {
            case SweepParam::kAlpha:
                if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("alpha values must lie in [0,1]");
                break;
            case SweepParam::kGamma:
                if (v < 0.0) throw ArgumentError("gamma values must be >= 0");
                break;
            case SweepParam::kDim:
                if (v < 1.0 || v != std::floor(v))
                    throw ArgumentError("d values must be positive integers");
                break;
        }
    }
    if (param == SweepParam::kAlpha) {
        const bool has0 = std::find(values.begin(), values.end(), 0.0) != values.end();
        const bool has1 = std::find(values.begin(), values.end(), 1.0) != values.end();
        if (!has0 || !has1)
            throw ArgumentError("alpha sweeps must include the endpoints 0 and 1");
    }

    SweepTable table;
    table.param = param;
    table.density = density;
    const int threads = config.sim_threads > 0 ? config.sim_threads
                                               : std::max(1u, std::thread::hardware_concurrency());
    for (const std::uint64_t seed : config.seeds) {
        Split sp = split(source, density, seed);
        SimilarityOptions opts = config.similarity;
        detail::resolve_global_median(sp.train, opts);
        const auto neighbors =
            neighbors_for_split(source, sp.train, density, seed, opts, config.fiemf.k_neighbors,
                                threads, config.resolved_cache_dir());
        const RegionModel region_model =
            build_region_model(sp.train, regions, config.mu_include_self);
        for (const double value : values) {
            SweepPoint pt;
            pt.value = value;
            pt.seed = seed;
            try {
                FiemfHyperparams hyper = config.fiemf;
                switch (param) {
                    case SweepParam::kAlpha: hyper.alpha = value; break;
                    case SweepParam::kGamma: hyper.gamma = value; break;
                    case SweepParam::kDim: hyper.dim = static_cast<int>(value); break;
                }
                hyper.init_seed = mix_seed(seed, 0x4649454d46ull);
                const FiemfModel model = train_fiemf(sp.train, neighbors, region_model, hyper);
                auto scores = detail::evaluate_predictor(
                    sp.test, [&](int u, int s) { return model.predict_unchecked(u, s); },
                    config.clamp_predictions, sp.train.value_min(), sp.train.value_max());
                pt.mae = scores.first;
                pt.rmse = scores.second;
            } catch (const std::exception& e) {
                pt.status = std::string("error: ") + e.what();
            }
            if (progress) progress(pt);
            table.points.push_back(std::move(pt));
        }
    }
    return table;
}

/// Long-form sweep rows: value,seed,mae,rmse,status.
inline void write_sweep_csv(const SweepTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open sweep file for writing: " + path.string());
    out << sweep_param_name(table.param) << ",seed,mae,rmse,status\n";
    for (const SweepPoint& pt : table.points) {
        out << detail::format_double(pt.value) << ',' << pt.seed << ','
            << detail::format_double(pt.mae) << ',' << detail::format_double(pt.rmse) << ",\""
            << pt.status << "\"\n";
    }
}

/// Seed-mean sweep rows: value,mae,rmse.
inline void write_sweep_summary_csv(const SweepTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open sweep file for writing: " + path.string());
    out << sweep_param_name(table.param) << ",mae,rmse\n";
    for (const auto& row : table.value_means()) {
        out << detail::format_double(row[0]) << ',' << detail::format_double(row[1]) << ','
            << detail::format_double(row[2]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// comparison table ("report" subcommand)

/// Pivots aggregates into the benchmark-table layout: one row per
/// (method, provenance), MAE and RMSE columns per density, and an average
/// relative improvement of the fused model over the row, computed per
/// density and then averaged (our aggregation).
inline void write_comparison_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open comparison for writing: " + path.string());

    const std::array<double, 4>& ds = kReferenceDensities;
    auto run_value = [&](Method m, double d, bool use_rmse) -> std::optional<double> {
        for (const CellAggregate& a : report.aggregates)
            if (a.method == m && std::abs(a.density - d) < 1e-9)
                return use_rmse ? a.rmse_mean : a.mae_mean;
        return std::nullopt;
    };

    out << "method,provenance";
    for (const double d : ds) out << ",mae_" << static_cast<int>(d * 100 + 0.5) << "pct";
    out << ",mae_improve_pct";
    for (const double d : ds) out << ",rmse_" << static_cast<int>(d * 100 + 0.5) << "pct";
    out << ",rmse_improve_pct\n";

    auto improvement = [&](const std::array<std::optional<double>, 4>& row,
                           const std::array<std::optional<double>, 4>& fiemf_row) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            if (!row[i] || !fiemf_row[i] || *row[i] == 0.0) continue;
            sum += (*row[i] - *fiemf_row[i]) / *row[i] * 100.0;
            ++n;
        }
        return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
    };

    auto emit = [&](const std::string& method, const std::string& provenance,
                    const std::array<std::optional<double>, 4>& mae_row,
                    const std::array<std::optional<double>, 4>& rmse_row,
                    const std::array<std::optional<double>, 4>& fiemf_mae,
                    const std::array<std::optional<double>, 4>& fiemf_rmse) {
        out << method << ',' << provenance;
        auto cell = [&](const std::optional<double>& v) {
            out << ',';
            if (v) out << detail::format_double(*v);
        };
        for (const auto& v : mae_row) cell(v);
        cell(method == "fiemf" ? std::nullopt : improvement(mae_row, fiemf_mae));
        for (const auto& v : rmse_row) cell(v);
        cell(method == "fiemf" ? std::nullopt : improvement(rmse_row, fiemf_rmse));
        out << '\n';
    };

    std::array<std::optional<double>, 4> run_fiemf_mae;
    std::array<std::optional<double>, 4> run_fiemf_rmse;
    for (std::size_t i = 0; i < 4; ++i) {
        run_fiemf_mae[i] = run_value(Method::kFiemf, ds[i], false);
        run_fiemf_rmse[i] = run_value(Method::kFiemf, ds[i], true);
    }
    const ReferenceRow fiemf_ref = *reference_row("fiemf");
    std::array<std::optional<double>, 4> ref_fiemf_mae;
    std::array<std::optional<double>, 4> ref_fiemf_rmse;
    for (std::size_t i = 0; i < 4; ++i) {
        ref_fiemf_mae[i] = fiemf_ref.mae[i];
        ref_fiemf_rmse[i] = fiemf_ref.rmse[i];
    }

    for (const ReferenceRow& ref : kReferenceResults) {
        // fresh results first, when the method ran
        if (ref.runnable) {
            Method m;
            try {
                m = parse_method(std::string(ref.method));
            } catch (const ArgumentError&) {
                continue;
            }
            std::array<std::optional<double>, 4> mae_row;
            std::array<std::optional<double>, 4> rmse_row;
            bool any = false;
            for (std::size_t i = 0; i < 4; ++i) {
                mae_row[i] = run_value(m, ds[i], false);
                rmse_row[i] = run_value(m, ds[i], true);
                any = any || mae_row[i].has_value();
            }
            if (any)
                emit(std::string(ref.method), "run", mae_row, rmse_row, run_fiemf_mae,
                     run_fiemf_rmse);
        }
        std::array<std::optional<double>, 4> mae_row;
        std::array<std::optional<double>, 4> rmse_row;
        for (std::size_t i = 0; i < 4; ++i) {
            mae_row[i] = ref.mae[i];
            rmse_row[i] = ref.rmse[i];
        }
        emit(std::string(ref.method), "paper", mae_row, rmse_row, ref_fiemf_mae, ref_fiemf_rmse);
    }
}

// ---------------------------------------------------------------------------
// config file (JSON)

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    std::vector<std::string> methods;
    for (const Method m : c.methods) methods.push_back(method_name(m));
    j = nlohmann::json{
        {"rt_path", c.rt_path},
        {"users_path", c.users_path},
        {"id_column", c.id_column},
        {"country_column", c.country_column},
        {"densities", c.densities},
        {"seeds", c.seeds},
        {"methods", methods},
        {"out_dir", c.out_dir},
        {"cache_dir", c.cache_dir},
        {"workers", c.workers},
        {"sim_threads", c.sim_threads},
        {"clamp_predictions", c.clamp_predictions},
        {"mu_include_self", c.mu_include_self},
        {"fiemf",
         {{"alpha", c.fiemf.alpha},
          {"lambda", c.fiemf.lambda},
          {"gamma", c.fiemf.gamma},
          {"dim", c.fiemf.dim},
          {"k_neighbors", c.fiemf.k_neighbors},
          {"eta", c.fiemf.eta},
          {"eta_decay", c.fiemf.eta_decay},
          {"max_iters", c.fiemf.max_iters},
          {"tolerance", c.fiemf.tolerance},
          {"init_scale", c.fiemf.init_scale},
          {"full_neighbor_gradient", c.fiemf.neighbor_gradient == NeighborGradient::kFull}}},
        {"pmf",
         {{"dim", c.pmf.dim},
          {"lambda", c.pmf.lambda},
          {"eta", c.pmf.eta},
          {"eta_decay", c.pmf.eta_decay},
          {"max_iters", c.pmf.max_iters},
          {"tolerance", c.pmf.tolerance},
          {"init_scale", c.pmf.init_scale}}},
        {"biasedmf",
         {{"dim", c.biasedmf.dim},
          {"lambda", c.biasedmf.lambda},
          {"eta", c.biasedmf.eta},
          {"eta_decay", c.biasedmf.eta_decay},
          {"max_iters", c.biasedmf.max_iters},
          {"tolerance", c.biasedmf.tolerance},
          {"init_scale", c.biasedmf.init_scale}}},
        {"uipcc",
         {{"top_k", c.uipcc.top_k},
          {"blend", c.uipcc.blend},
          {"min_corated", c.uipcc.min_corated},
          {"significance_weighting", c.uipcc.significance_weighting},
          {"max_service_neighbors", c.uipcc.max_service_neighbors}}},
        {"similarity",
         {{"r_med_mode", c.similarity.r_med_mode == RMedMode::kPerUser ? "per_user" : "global"},
          {"min_corated", c.similarity.min_corated},
          {"pair_cap", c.similarity.pair_cap}}}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.rt_path = j.value("rt_path", c.rt_path);
    c.users_path = j.value("users_path", c.users_path);
    c.id_column = j.value("id_column", c.id_column);
    c.country_column = j.value("country_column", c.country_column);
    c.densities = j.value("densities", c.densities);
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& name : j.at("methods")) c.methods.push_back(parse_method(name));
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    c.workers = j.value("workers", c.workers);
    c.sim_threads = j.value("sim_threads", c.sim_threads);
    c.clamp_predictions = j.value("clamp_predictions", c.clamp_predictions);
    c.mu_include_self = j.value("mu_include_self", c.mu_include_self);
    if (j.contains("fiemf")) {
        const auto& f = j.at("fiemf");
        c.fiemf.alpha = f.value("alpha", c.fiemf.alpha);
        c.fiemf.lambda = f.value("lambda", c.fiemf.lambda);
        c.fiemf.gamma = f.value("gamma", c.fiemf.gamma);
        c.fiemf.dim = f.value("dim", c.fiemf.dim);
        c.fiemf.k_neighbors = f.value("k_neighbors", c.fiemf.k_neighbors);
        c.fiemf.eta = f.value("eta", c.fiemf.eta);
        c.fiemf.eta_decay = f.value("eta_decay", c.fiemf.eta_decay);
        c.fiemf.max_iters = f.value("max_iters", c.fiemf.max_iters);
        c.fiemf.tolerance = f.value("tolerance", c.fiemf.tolerance);
        c.fiemf.init_scale = f.value("init_scale", c.fiemf.init_scale);
        if (f.value("full_neighbor_gradient", false))
            c.fiemf.neighbor_gradient = NeighborGradient::kFull;
    }
    auto read_mf = [](const nlohmann::json& src, MfConfig& dst) {
        dst.dim = src.value("dim", dst.dim);
        dst.lambda = src.value("lambda", dst.lambda);
        dst.eta = src.value("eta", dst.eta);
        dst.eta_decay = src.value("eta_decay", dst.eta_decay);
        dst.max_iters = src.value("max_iters", dst.max_iters);
        dst.tolerance = src.value("tolerance", dst.tolerance);
        dst.init_scale = src.value("init_scale", dst.init_scale);
    };
    if (j.contains("pmf")) read_mf(j.at("pmf"), c.pmf);
    if (j.contains("biasedmf")) read_mf(j.at("biasedmf"), c.biasedmf);
    if (j.contains("uipcc")) {
        const auto& u = j.at("uipcc");
        c.uipcc.top_k = u.value("top_k", c.uipcc.top_k);
        c.uipcc.blend = u.value("blend", c.uipcc.blend);
        c.uipcc.min_corated = u.value("min_corated", c.uipcc.min_corated);
        c.uipcc.significance_weighting =
            u.value("significance_weighting", c.uipcc.significance_weighting);
        c.uipcc.max_service_neighbors =
            u.value("max_service_neighbors", c.uipcc.max_service_neighbors);
    }
    if (j.contains("similarity")) {
        const auto& s = j.at("similarity");
        const std::string mode = s.value("r_med_mode", std::string("per_user"));
        if (mode == "per_user") {
            c.similarity.r_med_mode = RMedMode::kPerUser;
        } else if (mode == "global") {
            c.similarity.r_med_mode = RMedMode::kGlobal;
        } else {
            throw ArgumentError("unknown r_med_mode '" + mode + "'");
        }
        c.similarity.min_corated = s.value("min_corated", c.similarity.min_corated);
        c.similarity.pair_cap = s.value("pair_cap", c.similarity.pair_cap);
    }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid config JSON: " + std::string(e.what()));
    }
    ExperimentConfig c;
    from_json(j, c);
    return c;
}

inline void save_experiment_config(const ExperimentConfig& config,
                                   const std::filesystem::path& path) {
    nlohmann::json j = config;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open config file for writing: " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace fiemf
