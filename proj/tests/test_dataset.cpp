#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "fiemf/qos_matrix.hpp"
#include "fiemf/user_regions.hpp"
#include "support/synth.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "fiemf_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

} // namespace

TEST_CASE("rt matrix loading strips missing markers") {
    const auto path = temp_file("rt_small.txt");
    write_file(path, "1.0 2.0\n-1 0.5\n");
    const auto m = fiemf::load_rt_matrix(path);
    REQUIRE(m.num_users() == 2);
    REQUIRE(m.num_services() == 2);
    REQUIRE(m.entries() == std::vector<fiemf::QosEntry>{{0, 0, 1.0}, {0, 1, 2.0}, {1, 1, 0.5}});
}

TEST_CASE("rt matrix loading rejects bad input") {
    SECTION("non-numeric token names the line") {
        const auto path = temp_file("rt_bad_token.txt");
        write_file(path, "1.0 x\n");
        REQUIRE_THROWS_MATCHES(fiemf::load_rt_matrix(path), fiemf::ParseError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("line 1")));
    }
    SECTION("ragged row names the line") {
        const auto path = temp_file("rt_ragged.txt");
        write_file(path, "1.0 2.0\n1.0\n");
        REQUIRE_THROWS_MATCHES(fiemf::load_rt_matrix(path), fiemf::ParseError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("line 2")));
    }
    SECTION("empty file") {
        const auto path = temp_file("rt_empty.txt");
        write_file(path, "");
        REQUIRE_THROWS_AS(fiemf::load_rt_matrix(path), fiemf::FormatError);
    }
    SECTION("zero and negative values are missing, not errors") {
        const auto path = temp_file("rt_zero.txt");
        write_file(path, "0 -3.5 0.25\n");
        const auto m = fiemf::load_rt_matrix(path);
        REQUIRE(m.size() == 1);
        REQUIRE(m.entries()[0].service == 2);
    }
}

TEST_CASE("QosMatrix enforces its invariants") {
    REQUIRE_THROWS_AS(fiemf::QosMatrix(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), fiemf::IntegrityError);
    REQUIRE_THROWS_AS(fiemf::QosMatrix(2, 2, {{0, 5, 1.0}}), fiemf::ArgumentError);
    REQUIRE_THROWS_AS(fiemf::QosMatrix(2, 2, {{0, 0, -1.0}}), fiemf::ArgumentError);
    REQUIRE_THROWS_AS(fiemf::QosMatrix(0, 2, {}), fiemf::ArgumentError);
}

TEST_CASE("rt matrix text format round-trips") {
    std::mt19937_64 gen(7);
    const auto m = synth::random_matrix(12, 20, 2, 15, gen);
    const auto path = temp_file("rt_roundtrip.txt");
    fiemf::save_rt_matrix(m, path);
    const auto loaded = fiemf::load_rt_matrix(path);
    REQUIRE(loaded.num_users() == m.num_users());
    REQUIRE(loaded.num_services() == m.num_services());
    REQUIRE(loaded.entries() == m.entries());
    REQUIRE(loaded.fingerprint() == m.fingerprint());
}

TEST_CASE("triplet csv round-trips") {
    std::mt19937_64 gen(8);
    const auto m = synth::random_matrix(6, 9, 1, 8, gen);
    const auto path = temp_file("triplets.csv");
    fiemf::save_triplets_csv(m, path);
    const auto loaded = fiemf::load_triplets_csv(path, m.num_users(), m.num_services());
    REQUIRE(loaded.entries() == m.entries());
}

TEST_CASE("split cardinality and partition") {
    std::mt19937_64 gen(9);
    const auto source = synth::random_matrix(10, 20, 10, 10, gen); // exactly 100 entries
    REQUIRE(source.size() == 100);
    const auto sp = fiemf::split(source, 0.05, 42);
    REQUIRE(sp.train.size() == 5);
    REQUIRE(sp.test.size() == 95);

    std::set<std::pair<int, int>> train_keys;
    for (const auto& e : sp.train.entries()) train_keys.insert({e.user, e.service});
    for (const auto& e : sp.test.entries())
        REQUIRE(train_keys.count({e.user, e.service}) == 0);

    std::vector<fiemf::QosEntry> merged = sp.train.entries();
    merged.insert(merged.end(), sp.test.entries().begin(), sp.test.entries().end());
    const fiemf::QosMatrix reunion(source.num_users(), source.num_services(), std::move(merged));
    REQUIRE(reunion.entries() == source.entries());
}

TEST_CASE("split is deterministic in (source, density, seed)") {
    std::mt19937_64 gen(10);
    const auto source = synth::random_matrix(8, 15, 3, 12, gen);
    const auto a = fiemf::split(source, 0.3, 1234);
    const auto b = fiemf::split(source, 0.3, 1234);
    REQUIRE(a.train.entries() == b.train.entries());
    REQUIRE(a.test.entries() == b.test.entries());
    const auto c = fiemf::split(source, 0.3, 1235);
    REQUIRE(a.train.entries() != c.train.entries());
}

TEST_CASE("split partition property over densities and seeds") {
    std::mt19937_64 gen(11);
    const auto source = synth::random_matrix(7, 11, 2, 9, gen);
    for (const double density : {0.1, 0.25, 0.5, 0.9}) {
        for (const std::uint64_t seed : {1ull, 99ull}) {
            const auto sp = fiemf::split(source, density, seed);
            REQUIRE(sp.train.size() + sp.test.size() == source.size());
            const auto expected =
                static_cast<std::size_t>(std::llround(density * static_cast<double>(source.size())));
            REQUIRE(sp.train.size() == expected);
        }
    }
    REQUIRE_THROWS_AS(fiemf::split(source, 0.0, 1), fiemf::ArgumentError);
    REQUIRE_THROWS_AS(fiemf::split(source, 1.0, 1), fiemf::ArgumentError);
}

TEST_CASE("user list parsing") {
    SECTION("happy path with extra columns and CRLF") {
        const auto path = temp_file("userlist.txt");
        write_file(path,
                   "[User ID]\t[IP Address]\t[Country]\t[Latitude]\r\n"
                   "0\t1.2.3.4\tUnited States\t38.0\r\n"
                   "1\t4.3.2.1\t United States \t40.0\r\n"
                   "2\t2.2.2.2\tChina\t30.0\r\n");
        const auto table = fiemf::load_user_regions(path);
        REQUIRE(table.num_users() == 3);
        REQUIRE(table.num_regions() == 2);
        REQUIRE(table.region_of_user[1] == "United States"); // trimmed
    }
    SECTION("missing country column") {
        const auto path = temp_file("userlist_nocountry.txt");
        write_file(path, "[User ID]\t[IP Address]\n0\t1.2.3.4\n");
        REQUIRE_THROWS_AS(fiemf::load_user_regions(path), fiemf::FormatError);
    }
    SECTION("gap in user ids is named") {
        const auto path = temp_file("userlist_gap.txt");
        std::string content = "[User ID]\t[Country]\n";
        for (int u = 0; u < 10; ++u) {
            if (u == 5) continue;
            content += std::to_string(u) + "\tChina\n";
        }
        write_file(path, content);
        REQUIRE_THROWS_MATCHES(fiemf::load_user_regions(path), fiemf::IntegrityError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("5")));
    }
    SECTION("custom column names") {
        const auto path = temp_file("userlist_custom.txt");
        write_file(path, "uid\tland\n0\tBrazil\n1\tBrazil\n");
        const auto table = fiemf::load_user_regions(path, "uid", "land");
        REQUIRE(table.num_regions() == 1);
    }
}
