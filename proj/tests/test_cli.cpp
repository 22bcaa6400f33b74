#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "fiemf/qos_matrix.hpp"
#include "support/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code;
    std::string output;
};

CommandResult run_cli(const std::string& args) {
    const fs::path out_file =
        fs::temp_directory_path() / "fiemf_tests" / ("cli_out_" + std::to_string(::getpid()));
    fs::create_directories(out_file.parent_path());
    const std::string command =
        std::string(FIEMF_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(command.c_str());
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    const int code = WEXITSTATUS(status);
    return {code, ss.str()};
}

struct CliFixture {
    fs::path dir;
    fs::path rt;
    fs::path users;

    CliFixture() {
        dir = fs::temp_directory_path() / "fiemf_tests" / "cli_data";
        fs::remove_all(dir);
        fs::create_directories(dir);
        const auto [matrix, regions] = synth::make_dataset(15, 25, 4, 2024, 1.0);
        rt = dir / "rtMatrix.txt";
        users = dir / "userlist.txt";
        fiemf::save_rt_matrix(matrix, rt);
        synth::write_userlist(regions, users);
    }
};

} // namespace

TEST_CASE("cli prepare prints the dataset summary") {
    CliFixture fx;
    const auto r = run_cli("prepare --rt " + fx.rt.string() + " --users " + fx.users.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("15 users, 25 services, 375 records") != std::string::npos);
    REQUIRE(r.output.find("regions") != std::string::npos);
}

TEST_CASE("cli rejects unknown flags and subcommands with exit code 2") {
    const auto bad_flag = run_cli("prepare --no-such-flag");
    REQUIRE(bad_flag.exit_code == 2);
    const auto bad_cmd = run_cli("frobnicate");
    REQUIRE(bad_cmd.exit_code == 2);
}

TEST_CASE("cli fails cleanly on a missing dataset") {
    const auto r = run_cli("prepare --rt /nonexistent/rt.txt --users /nonexistent/u.txt");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("error:") != std::string::npos);
}

TEST_CASE("cli split writes both triplet files") {
    CliFixture fx;
    const auto train_path = fx.dir / "train.csv";
    const auto test_path = fx.dir / "test.csv";
    const auto r = run_cli("split --rt " + fx.rt.string() + " --density 0.2 --seed 7 --out-train " +
                           train_path.string() + " --out-test " + test_path.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const auto train = fiemf::load_triplets_csv(train_path, 15, 25);
    const auto test = fiemf::load_triplets_csv(test_path, 15, 25);
    REQUIRE(train.size() == 75); // round(0.2 * 375)
    REQUIRE(train.size() + test.size() == 375);
}

TEST_CASE("cli neighbors then train consumes the cached file") {
    CliFixture fx;
    const auto nb_path = fx.dir / "neighbors.csv";
    const auto r1 = run_cli("neighbors --rt " + fx.rt.string() + " --density 0.5 --seed 3 --k 4" +
                            " --out " + nb_path.string());
    INFO(r1.output);
    REQUIRE(r1.exit_code == 0);
    REQUIRE(fs::exists(nb_path));

    const auto ckpt = fx.dir / "model.json";
    const auto r2 = run_cli("train --rt " + fx.rt.string() + " --users " + fx.users.string() +
                            " --method fiemf --density 0.5 --seed 3 --k 4 --lambda 0.05" +
                            " --gamma 0.05 --dim 3 --max-iters 15 --neighbors " + nb_path.string() +
                            " --out " + ckpt.string());
    INFO(r2.output);
    REQUIRE(r2.exit_code == 0);
    REQUIRE(fs::exists(ckpt));
}

TEST_CASE("cli evaluate writes reports honoring --methods and --seed") {
    CliFixture fx;
    const auto out_dir = fx.dir / "out";
    const auto r = run_cli("--out-dir " + out_dir.string() + " evaluate --rt " + fx.rt.string() +
                           " --users " + fx.users.string() +
                           " --methods umean,imean --densities 0.4 --seed 1");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(out_dir / "report.csv"));
    REQUIRE(fs::exists(out_dir / "report.json"));
    REQUIRE(fs::exists(out_dir / "comparison.csv"));
    std::ifstream in(out_dir / "report.csv");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(text.find("umean") != std::string::npos);
    REQUIRE(text.find("imean") != std::string::npos);
    REQUIRE(text.find("fiemf,") == std::string::npos); // not requested
}

TEST_CASE("cli config file values are overridden by flags") {
    CliFixture fx;
    const auto config_path = fx.dir / "config.json";
    {
        std::ofstream out(config_path);
        out << R"({"rt_path": ")" << fx.rt.string() << R"(", "users_path": ")"
            << fx.users.string() << R"(", "densities": [0.4], "seeds": [1],
                 "methods": ["umean"], "out_dir": ")"
            << (fx.dir / "cfg_out").string() << R"("})";
    }
    const auto r = run_cli("--config " + config_path.string() + " evaluate --methods imean");
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    std::ifstream in(fx.dir / "cfg_out" / "report.csv");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(text.find("imean") != std::string::npos); // flag overrode the config file
    REQUIRE(text.find("umean") == std::string::npos);
}

TEST_CASE("cli report rebuilds the comparison from a report csv") {
    CliFixture fx;
    const auto out_dir = fx.dir / "out2";
    // density 0.05 lines up with a column of the comparison layout
    const auto r1 = run_cli("--out-dir " + out_dir.string() + " evaluate --rt " + fx.rt.string() +
                            " --users " + fx.users.string() +
                            " --methods umean --densities 0.05 --seed 1");
    REQUIRE(r1.exit_code == 0);
    const auto table_path = fx.dir / "table.csv";
    const auto r2 = run_cli("report --in " + (out_dir / "report.csv").string() + " --out " +
                            table_path.string());
    INFO(r2.output);
    REQUIRE(r2.exit_code == 0);
    std::ifstream in(table_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(text.find("method,provenance") == 0);
    REQUIRE(text.find("umean,run") != std::string::npos);
}
