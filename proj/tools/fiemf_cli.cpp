// Command-line front end: dataset validation, split export, neighbor
// precomputation, single-model training, the full evaluation protocol,
// parameter sweeps and comparison-table assembly.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fiemf/fiemf.hpp"

namespace {

namespace fs = std::filesystem;

struct GlobalArgs {
    fiemf::ExperimentConfig config;
    std::optional<std::uint64_t> seed; ///< --seed shorthand for a single seed
};

fiemf::ExperimentConfig preload_config(int argc, char** argv) {
    // --config is applied before CLI11 sees the flags, so explicit flags win
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config")
            return fiemf::load_experiment_config(argv[i + 1]);
    }
    return {};
}

std::pair<fiemf::QosMatrix, fiemf::UserRegionTable> load_dataset(
    const fiemf::ExperimentConfig& config) {
    if (config.rt_path.empty()) throw fiemf::ArgumentError("--rt is required");
    if (config.users_path.empty()) throw fiemf::ArgumentError("--users is required");
    fiemf::QosMatrix matrix = fiemf::load_rt_matrix(config.rt_path);
    fiemf::UserRegionTable regions =
        fiemf::load_user_regions(config.users_path, config.id_column, config.country_column);
    if (regions.num_users() != matrix.num_users())
        throw fiemf::IntegrityError("user list covers " + std::to_string(regions.num_users()) +
                                    " users, matrix has " + std::to_string(matrix.num_users()));
    return {std::move(matrix), std::move(regions)};
}

void add_dataset_flags(CLI::App* cmd, fiemf::ExperimentConfig& config) {
    cmd->add_option("--rt", config.rt_path, "response-time matrix file");
    cmd->add_option("--users", config.users_path, "tab-separated user list with region column");
    cmd->add_option("--id-col", config.id_column, "user-id column name in the user list");
    cmd->add_option("--country-col", config.country_column, "country column name in the user list");
}

void add_fiemf_flags(CLI::App* cmd, fiemf::ExperimentConfig& config, bool& full_gradient) {
    cmd->add_option("--alpha", config.fiemf.alpha, "interaction/bias mix");
    cmd->add_option("--lambda", config.fiemf.lambda, "weight decay coefficient");
    cmd->add_option("--gamma", config.fiemf.gamma, "neighborhood regularizer coefficient");
    cmd->add_option("--dim", config.fiemf.dim, "latent dimension");
    cmd->add_option("--k", config.fiemf.k_neighbors, "neighbor count K");
    cmd->add_option("--eta", config.fiemf.eta, "learning rate");
    cmd->add_option("--eta-decay", config.fiemf.eta_decay, "per-epoch learning-rate decay");
    cmd->add_option("--max-iters", config.fiemf.max_iters, "maximum training epochs");
    cmd->add_option("--init-scale", config.fiemf.init_scale,
                    "factor init scale (0 = auto from the training mean)");
    cmd->add_flag("--full-neighbor-gradient", full_gradient,
                  "include neighborhood cross-terms in the U updates");
}

void add_similarity_flags(CLI::App* cmd, fiemf::ExperimentConfig& config, std::string& r_med_mode) {
    cmd->add_option("--r-med-mode", r_med_mode, "per_user or global")
        ->check(CLI::IsMember({"per_user", "global"}));
    cmd->add_option("--min-corated", config.similarity.min_corated,
                    "minimum co-rated services per pair");
    cmd->add_option("--pair-cap", config.similarity.pair_cap,
                    "co-rated set size cap (deterministic subsample above it)");
    cmd->add_option("--sim-threads", config.sim_threads, "similarity worker threads (0 = auto)");
}

void apply_r_med_mode(fiemf::ExperimentConfig& config, const std::string& mode) {
    config.similarity.r_med_mode =
        mode == "global" ? fiemf::RMedMode::kGlobal : fiemf::RMedMode::kPerUser;
}

std::vector<double> parse_double_list(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& s : items) out.push_back(std::stod(s));
    return out;
}

int cmd_prepare(const fiemf::ExperimentConfig& config) {
    auto [matrix, regions] = load_dataset(config);
    std::printf("%d users, %d services, %zu records\n", matrix.num_users(), matrix.num_services(),
                matrix.size());
    std::printf("value range: [%g, %g]\n", matrix.value_min(), matrix.value_max());
    std::printf("mean value: %g\n", matrix.value_mean());
    std::printf("%d regions\n", regions.num_regions());
    std::printf("dataset fingerprint: %s\n", matrix.fingerprint_hex().c_str());
    return 0;
}

int cmd_split(const fiemf::ExperimentConfig& config, double density, std::uint64_t seed,
              const std::string& out_train, const std::string& out_test) {
    fiemf::QosMatrix matrix = fiemf::load_rt_matrix(config.rt_path);
    fiemf::Split sp = fiemf::split(matrix, density, seed);
    fiemf::save_triplets_csv(sp.train, out_train);
    fiemf::save_triplets_csv(sp.test, out_test);
    std::printf("train: %zu entries -> %s\n", sp.train.size(), out_train.c_str());
    std::printf("test:  %zu entries -> %s\n", sp.test.size(), out_test.c_str());
    return 0;
}

int cmd_neighbors(const fiemf::ExperimentConfig& config, double density, std::uint64_t seed,
                  const std::string& out_path) {
    fiemf::QosMatrix matrix = fiemf::load_rt_matrix(config.rt_path);
    fiemf::Split sp = fiemf::split(matrix, density, seed);
    fiemf::SimilarityOptions opts = config.similarity;
    fiemf::detail::resolve_global_median(sp.train, opts);
    const int threads = config.sim_threads > 0
                            ? config.sim_threads
                            : std::max(1u, std::thread::hardware_concurrency());
    fiemf::SimilarityStats stats;
    auto sets = fiemf::all_top_k_neighbors(sp.train, config.fiemf.k_neighbors, opts, threads,
                                           &stats);
    fiemf::save_neighbors_csv(sets, out_path);
    std::size_t with_neighbors = 0;
    for (const auto& s : sets)
        if (!s.neighbors.empty()) ++with_neighbors;
    std::printf("%zu/%zu users with neighbors -> %s\n", with_neighbors, sets.size(),
                out_path.c_str());
    std::printf("pairs evaluated: %ld, below co-rating threshold: %ld, capped: %ld, clamped: %ld\n",
                stats.pairs_evaluated.load(), stats.pairs_below_min_corated.load(),
                stats.pairs_capped.load(), stats.clamp_events.load());
    return 0;
}

int cmd_train(const fiemf::ExperimentConfig& config, const std::string& method_name,
              double density, std::uint64_t seed, const std::string& out_path,
              const std::string& neighbors_path, const std::string& region_means_path) {
    const fiemf::Method method = fiemf::parse_method(method_name);
    auto [matrix, regions] = load_dataset(config);
    fiemf::Split sp = fiemf::split(matrix, density, seed);
    const int threads = config.sim_threads > 0
                            ? config.sim_threads
                            : std::max(1u, std::thread::hardware_concurrency());
    if (!region_means_path.empty()) {
        const auto region_model =
            fiemf::build_region_model(sp.train, regions, config.mu_include_self);
        fiemf::save_region_means_csv(region_model, region_means_path);
        std::printf("region means -> %s\n", region_means_path.c_str());
    }
    switch (method) {
        case fiemf::Method::kUMean:
        case fiemf::Method::kIMean: {
            const fiemf::MeanModel mm = fiemf::build_mean_model(sp.train);
            fiemf::save_mean_checkpoint(mm, method_name, sp.train, out_path);
            break;
        }
        case fiemf::Method::kUipcc:
            fiemf::save_uipcc_checkpoint(config.uipcc, sp.train, out_path);
            break;
        case fiemf::Method::kPmf: {
            fiemf::MfConfig c = config.pmf;
            c.init_seed = fiemf::mix_seed(seed, 0x504d46ull);
            fiemf::TrainTrace trace;
            const fiemf::LatentModel model = fiemf::pmf_train(sp.train, c, &trace);
            fiemf::save_latent_checkpoint(model, "pmf", sp.train, out_path);
            std::printf("epochs: %d, final objective: %g\n", trace.epochs,
                        trace.epoch_objective.back());
            break;
        }
        case fiemf::Method::kBiasedMf: {
            fiemf::MfConfig c = config.biasedmf;
            c.init_seed = fiemf::mix_seed(seed, 0x424d46ull);
            fiemf::TrainTrace trace;
            const fiemf::LatentModel model = fiemf::biasedmf_train(sp.train, c, &trace);
            fiemf::save_latent_checkpoint(model, "biasedmf", sp.train, out_path);
            std::printf("epochs: %d, final objective: %g\n", trace.epochs,
                        trace.epoch_objective.back());
            break;
        }
        case fiemf::Method::kFiemf: {
            fiemf::SimilarityOptions opts = config.similarity;
            fiemf::detail::resolve_global_median(sp.train, opts);
            std::vector<fiemf::NeighborSet> neighbors;
            if (!neighbors_path.empty()) {
                neighbors = fiemf::load_neighbors_csv(neighbors_path, sp.train.num_users());
            } else {
                neighbors = fiemf::neighbors_for_split(matrix, sp.train, density, seed, opts,
                                                       config.fiemf.k_neighbors, threads,
                                                       config.resolved_cache_dir());
            }
            const fiemf::RegionModel region_model =
                fiemf::build_region_model(sp.train, regions, config.mu_include_self);
            fiemf::FiemfHyperparams hyper = config.fiemf;
            hyper.init_seed = fiemf::mix_seed(seed, 0x4649454d46ull);
            fiemf::TrainTrace trace;
            const fiemf::FiemfModel model =
                fiemf::train_fiemf(sp.train, neighbors, region_model, hyper, &trace);
            fiemf::save_latent_checkpoint(model, "fiemf", sp.train, out_path);
            std::printf("epochs: %d, final objective: %g\n", trace.epochs,
                        trace.epoch_objective.back());
            break;
        }
    }
    std::printf("checkpoint -> %s\n", out_path.c_str());
    return 0;
}

int cmd_evaluate(fiemf::ExperimentConfig config, const std::vector<std::string>& method_names,
                 const std::vector<std::string>& density_items) {
    if (!method_names.empty()) {
        config.methods.clear();
        for (const auto& name : method_names) config.methods.push_back(fiemf::parse_method(name));
    }
    if (!density_items.empty()) config.densities = parse_double_list(density_items);
    auto [matrix, regions] = load_dataset(config);
    fs::create_directories(config.out_dir);
    const fiemf::EvalReport report =
        fiemf::run_experiment(config, matrix, regions, [](const fiemf::CellResult& c) {
            std::printf("[%s d=%g seed=%llu] mae=%.4f rmse=%.4f (%.1fs) %s\n",
                        fiemf::method_name(c.method).c_str(), c.density,
                        static_cast<unsigned long long>(c.seed), c.mae, c.rmse, c.wall_time_s,
                        c.status.c_str());
            std::fflush(stdout);
        });
    const fs::path out_dir(config.out_dir);
    fiemf::write_report_csv(report, out_dir / "report.csv");
    fiemf::write_report_json(report, out_dir / "report.json");
    fiemf::write_comparison_csv(report, out_dir / "comparison.csv");
    std::printf("report -> %s\n", (out_dir / "report.csv").string().c_str());
    for (const fiemf::CellAggregate& a : report.aggregates) {
        std::printf("%-9s d=%4.2f  mae %.4f +/- %.4f   rmse %.4f +/- %.4f  (%d seeds)\n",
                    fiemf::method_name(a.method).c_str(), a.density, a.mae_mean, a.mae_std,
                    a.rmse_mean, a.rmse_std, a.seeds);
    }
    bool any_error = false;
    for (const fiemf::CellResult& c : report.cells)
        if (!c.ok()) {
            std::fprintf(stderr, "cell %s d=%g seed=%llu failed: %s\n",
                         fiemf::method_name(c.method).c_str(), c.density,
                         static_cast<unsigned long long>(c.seed), c.status.c_str());
            any_error = true;
        }
    return any_error ? 1 : 0;
}

int cmd_sweep(fiemf::ExperimentConfig config, const std::string& param_name,
              const std::vector<std::string>& value_items, double density) {
    const fiemf::SweepParam param = fiemf::parse_sweep_param(param_name);
    const std::vector<double> values = parse_double_list(value_items);
    auto [matrix, regions] = load_dataset(config);
    fs::create_directories(config.out_dir);
    const fiemf::SweepTable table =
        fiemf::sweep(param, values, config, matrix, regions, density,
                     [&](const fiemf::SweepPoint& pt) {
                         std::printf("[%s=%g seed=%llu] mae=%.4f rmse=%.4f %s\n",
                                     param_name.c_str(), pt.value,
                                     static_cast<unsigned long long>(pt.seed), pt.mae, pt.rmse,
                                     pt.status.c_str());
                         std::fflush(stdout);
                     });
    const fs::path out_dir(config.out_dir);
    fiemf::write_sweep_csv(table, out_dir / ("sweep_" + param_name + ".csv"));
    fiemf::write_sweep_summary_csv(table, out_dir / ("sweep_" + param_name + "_summary.csv"));
    std::printf("sweep -> %s\n", (out_dir / ("sweep_" + param_name + ".csv")).string().c_str());
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& out_path) {
    // rebuild aggregates from a long-form report.csv
    std::ifstream in(in_path);
    if (!in) throw fiemf::FormatError("cannot open report: " + in_path);
    std::string line;
    if (!std::getline(in, line)) throw fiemf::FormatError("report is empty: " + in_path);
    fiemf::EvalReport report;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        for (const char ch : line) {
            if (ch == '"') {
                quoted = !quoted;
            } else if (ch == ',' && !quoted) {
                fields.push_back(field);
                field.clear();
            } else if (ch != '\r') {
                field += ch;
            }
        }
        fields.push_back(field);
        if (fields.size() < 8)
            throw fiemf::ParseError("line " + std::to_string(line_no) + ": expected 8 columns");
        fiemf::CellResult cell;
        cell.method = fiemf::parse_method(fields[0]);
        cell.density = std::stod(fields[1]);
        cell.seed = std::stoull(fields[2]);
        cell.mae = std::stod(fields[3]);
        cell.rmse = std::stod(fields[4]);
        cell.wall_time_s = std::stod(fields[5]);
        cell.status = fields[6];
        cell.fingerprint = fields[7];
        report.cells.push_back(std::move(cell));
    }
    report.aggregates = fiemf::aggregate_cells(report.cells);
    fiemf::write_comparison_csv(report, out_path);
    std::printf("comparison -> %s\n", out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FIEMF: QoS prediction via fuzzy-entropy neighbors and region-biased"
                 " matrix factorization"};
    app.require_subcommand(1);

    GlobalArgs args;
    try {
        args.config = preload_config(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    fiemf::ExperimentConfig& config = args.config;

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override its values)");
    app.add_option("--out-dir", config.out_dir, "output directory");
    app.add_option("--cache-dir", config.cache_dir, "neighbor cache directory");
    app.add_option("--workers", config.workers, "concurrent experiment cells");
    std::uint64_t global_seed = 1;
    auto* global_seed_opt =
        app.add_option("--seed", global_seed, "default split seed for every subcommand");

    std::string r_med_mode = config.similarity.r_med_mode == fiemf::RMedMode::kGlobal
                                 ? "global"
                                 : "per_user";
    bool full_gradient = config.fiemf.neighbor_gradient == fiemf::NeighborGradient::kFull;

    auto* prepare = app.add_subcommand("prepare", "validate dataset files and print stats");
    add_dataset_flags(prepare, config);

    auto* split_cmd = app.add_subcommand("split", "export one train/test split as triplet CSVs");
    add_dataset_flags(split_cmd, config);
    double split_density = 0.05;
    std::uint64_t split_seed = 1;
    std::string out_train = "train.csv";
    std::string out_test = "test.csv";
    split_cmd->add_option("--density", split_density, "training density in (0,1)")->required();
    auto* split_seed_opt = split_cmd->add_option("--seed", split_seed, "split seed");
    split_cmd->add_option("--out-train", out_train, "training triplet CSV path");
    split_cmd->add_option("--out-test", out_test, "test triplet CSV path");

    auto* neighbors_cmd =
        app.add_subcommand("neighbors", "precompute Top-K neighbor sets for one split");
    add_dataset_flags(neighbors_cmd, config);
    add_similarity_flags(neighbors_cmd, config, r_med_mode);
    double nb_density = 0.05;
    std::uint64_t nb_seed = 1;
    std::string nb_out = "neighbors.csv";
    neighbors_cmd->add_option("--density", nb_density, "training density")->required();
    auto* nb_seed_opt = neighbors_cmd->add_option("--seed", nb_seed, "split seed");
    neighbors_cmd->add_option("--k", config.fiemf.k_neighbors, "neighbor count K");
    neighbors_cmd->add_option("--out", nb_out, "neighbor CSV path");

    auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
    add_dataset_flags(train_cmd, config);
    add_similarity_flags(train_cmd, config, r_med_mode);
    add_fiemf_flags(train_cmd, config, full_gradient);
    std::string train_method = "fiemf";
    double train_density = 0.05;
    std::uint64_t train_seed = 1;
    std::string train_out = "model.json";
    std::string train_neighbors;
    std::string train_region_means;
    train_cmd->add_option("--method", train_method,
                          "umean, imean, uipcc, pmf, biasedmf or fiemf");
    auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "split seed");
    train_cmd->add_option("--density", train_density, "training density")->required();
    train_cmd->add_option("--out", train_out, "checkpoint path");
    train_cmd->add_option("--neighbors", train_neighbors,
                          "precomputed neighbor CSV (skips similarity computation)");
    train_cmd->add_option("--region-means", train_region_means,
                          "also export region means as CSV (region_label,mean,entry_count)");

    auto* evaluate_cmd =
        app.add_subcommand("evaluate", "run (method, density, seed) cells and write reports");
    add_dataset_flags(evaluate_cmd, config);
    add_similarity_flags(evaluate_cmd, config, r_med_mode);
    add_fiemf_flags(evaluate_cmd, config, full_gradient);
    std::vector<std::string> eval_methods;
    std::vector<std::string> eval_densities;
    evaluate_cmd->add_option("--methods", eval_methods, "methods to run")->delimiter(',');
    evaluate_cmd->add_option("--densities", eval_densities, "training densities")->delimiter(',');
    evaluate_cmd->add_option("--density", eval_densities, "alias for --densities")->delimiter(',');
    auto* eval_seeds_opt =
        evaluate_cmd->add_option("--seeds", config.seeds, "split seeds")->delimiter(',');
    std::uint64_t single_seed = 0;
    auto* seed_opt = evaluate_cmd->add_option("--seed", single_seed, "single split seed");

    auto* sweep_cmd = app.add_subcommand("sweep", "re-train the fused model over one parameter");
    add_dataset_flags(sweep_cmd, config);
    add_similarity_flags(sweep_cmd, config, r_med_mode);
    add_fiemf_flags(sweep_cmd, config, full_gradient);
    std::string sweep_param = "gamma";
    std::vector<std::string> sweep_values;
    double sweep_density = 0.10;
    sweep_cmd->add_option("--param", sweep_param, "alpha, gamma or d")->required();
    sweep_cmd->add_option("--values", sweep_values, "sweep values")->required()->delimiter(',');
    sweep_cmd->add_option("--density", sweep_density, "training density");
    auto* sweep_seeds_opt =
        sweep_cmd->add_option("--seeds", config.seeds, "split seeds")->delimiter(',');

    auto* report_cmd =
        app.add_subcommand("report", "merge a report.csv into the comparison-table layout");
    std::string report_in = "out/report.csv";
    std::string report_out = "out/comparison.csv";
    report_cmd->add_option("--in", report_in, "long-form report.csv");
    report_cmd->add_option("--out", report_out, "comparison CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage error
    }

    apply_r_med_mode(config, r_med_mode);
    config.fiemf.neighbor_gradient = full_gradient ? fiemf::NeighborGradient::kFull
                                                   : fiemf::NeighborGradient::kLocal;
    if (global_seed_opt->count() > 0) {
        // --seed before the subcommand seeds everything not given explicitly
        if (split_seed_opt->count() == 0) split_seed = global_seed;
        if (nb_seed_opt->count() == 0) nb_seed = global_seed;
        if (train_seed_opt->count() == 0) train_seed = global_seed;
        if (eval_seeds_opt->count() == 0 && sweep_seeds_opt->count() == 0)
            config.seeds = {global_seed};
    }

    try {
        if (prepare->parsed()) return cmd_prepare(config);
        if (split_cmd->parsed())
            return cmd_split(config, split_density, split_seed, out_train, out_test);
        if (neighbors_cmd->parsed()) return cmd_neighbors(config, nb_density, nb_seed, nb_out);
        if (train_cmd->parsed())
            return cmd_train(config, train_method, train_density, train_seed, train_out,
                             train_neighbors, train_region_means);
        if (evaluate_cmd->parsed()) {
            if (seed_opt->count() > 0) config.seeds = {single_seed};
            return cmd_evaluate(config, eval_methods, eval_densities);
        }
        if (sweep_cmd->parsed()) return cmd_sweep(config, sweep_param, sweep_values, sweep_density);
        if (report_cmd->parsed()) return cmd_report(report_in, report_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
