#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fiemf/fiemf_model.hpp"
#include "fiemf/region_bias.hpp"
#include "support/synth.hpp"

using Catch::Matchers::WithinAbs;

namespace {

fiemf::UserRegionTable table_of(std::vector<std::string> labels) {
    fiemf::UserRegionTable t;
    t.region_of_user = std::move(labels);
    return t;
}

} // namespace

TEST_CASE("assign_regions interns country labels") {
    const auto table = table_of({"US", "US", "CN"});
    const auto [region_of_user, labels] = fiemf::assign_regions(table);
    REQUIRE(labels == std::vector<std::string>{"US", "CN"});
    REQUIRE(region_of_user == std::vector<int>{0, 0, 1});
}

TEST_CASE("region mean excludes the user and falls back to the global mean") {
    SECTION("region mate contributes its entries") {
        // user 0 and 1 share a region; 1 observed {2.0, 4.0}
        const fiemf::QosMatrix train(2, 3, {{0, 2, 9.0}, {1, 0, 2.0}, {1, 1, 4.0}});
        const auto model = fiemf::build_region_model(train, table_of({"US", "US"}));
        REQUIRE_THAT(fiemf::region_mean(model, 0), WithinAbs(3.0, 1e-15));
        // user 0's own 9.0 is excluded from its center but counts for user 1
        REQUIRE_THAT(fiemf::region_mean(model, 1), WithinAbs(9.0, 1e-15));
    }
    SECTION("singleton region falls back to the global mean") {
        const fiemf::QosMatrix train(2, 2, {{0, 0, 1.0}, {1, 0, 3.0}, {1, 1, 5.0}});
        const auto model = fiemf::build_region_model(train, table_of({"US", "CN"}));
        REQUIRE_THAT(fiemf::region_mean(model, 0), WithinAbs(3.0, 1e-15)); // (1+3+5)/3
        REQUIRE(model.global_mean == fiemf::region_mean(model, 0));
    }
    SECTION("two region mates pool their entries") {
        // mates of user 0 observed {1.0} and {2.0, 3.0}; pooled mean 2.0
        const fiemf::QosMatrix train(3, 3,
                                     {{1, 0, 1.0}, {2, 1, 2.0}, {2, 2, 3.0}});
        const auto model = fiemf::build_region_model(train, table_of({"DE", "DE", "DE"}));
        REQUIRE_THAT(fiemf::region_mean(model, 0), WithinAbs(2.0, 1e-15));
    }
}

TEST_CASE("include_self switches to the inclusive reading") {
    const fiemf::QosMatrix train(2, 2, {{0, 0, 2.0}, {1, 0, 4.0}});
    const auto exclusive = fiemf::build_region_model(train, table_of({"US", "US"}), false);
    const auto inclusive = fiemf::build_region_model(train, table_of({"US", "US"}), true);
    REQUIRE_THAT(fiemf::region_mean(exclusive, 0), WithinAbs(4.0, 1e-15));
    REQUIRE_THAT(fiemf::region_mean(inclusive, 0), WithinAbs(3.0, 1e-15));
}

TEST_CASE("every user gets a finite bias center") {
    const auto [matrix, regions] = synth::make_dataset(25, 40, 5, 99, 0.3);
    const auto sp = fiemf::split(matrix, 0.5, 3);
    const auto model = fiemf::build_region_model(sp.train, regions);
    for (int u = 0; u < sp.train.num_users(); ++u)
        REQUIRE(std::isfinite(fiemf::region_mean(model, u)));
}

TEST_CASE("single region: center is the mean of everyone else's entries") {
    const fiemf::QosMatrix train(3, 2, {{0, 0, 1.0}, {1, 0, 2.0}, {1, 1, 6.0}, {2, 1, 3.0}});
    const auto model = fiemf::build_region_model(train, table_of({"X", "X", "X"}));
    REQUIRE_THAT(fiemf::region_mean(model, 0), WithinAbs((2.0 + 6.0 + 3.0) / 3.0, 1e-15));
    REQUIRE_THAT(fiemf::region_mean(model, 1), WithinAbs((1.0 + 3.0) / 2.0, 1e-15));
}

TEST_CASE("mu depends only on training entries, not entry order") {
    std::vector<fiemf::QosEntry> entries = {{0, 0, 1.0}, {1, 1, 2.0}, {2, 0, 3.0}, {2, 1, 4.0}};
    const fiemf::QosMatrix a(3, 2, entries);
    std::reverse(entries.begin(), entries.end());
    const fiemf::QosMatrix b(3, 2, entries);
    const auto table = table_of({"A", "A", "B"});
    const auto ma = fiemf::build_region_model(a, table);
    const auto mb = fiemf::build_region_model(b, table);
    REQUIRE(ma.mu == mb.mu);
}

TEST_CASE("bias_predict adds the parts") {
    const fiemf::QosMatrix train(1, 1, {{0, 0, 3.0}});
    const auto model = fiemf::build_region_model(train, table_of({"US"}));
    fiemf::BiasVectors biases;
    biases.b = {0.0};
    biases.p = {0.0};
    REQUIRE_THAT(fiemf::bias_predict(model, 0, 0, biases), WithinAbs(3.0, 1e-15));
    biases.b = {0.5};
    biases.p = {-0.2};
    REQUIRE_THAT(fiemf::bias_predict(model, 0, 0, biases), WithinAbs(3.3, 1e-15));
    REQUIRE_THROWS_AS(fiemf::bias_predict(model, 5, 0, biases), fiemf::ArgumentError);
    REQUIRE_THROWS_AS(fiemf::bias_predict(model, 0, 9, biases), fiemf::ArgumentError);
}

TEST_CASE("one traced SGD step reproduces the bias model") {
    // two singleton regions and disjoint services, so the two entries touch
    // disjoint parameters: after one epoch b_i = p_j = eta * (v - mu_i)
    const double v = 2.0;
    const double w = 0.5;
    const fiemf::QosMatrix train(2, 2, {{0, 0, v}, {1, 1, w}});
    const auto region_model = fiemf::build_region_model(train, table_of({"US", "CN"}));
    const double mu0 = fiemf::region_mean(region_model, 0); // global-mean fallback
    const double mu1 = fiemf::region_mean(region_model, 1);
    REQUIRE(mu0 == region_model.global_mean);

    fiemf::FiemfHyperparams hyper;
    hyper.alpha = 0.0;
    hyper.lambda = 0.0;
    hyper.gamma = 0.0;
    hyper.dim = 1;
    hyper.eta = 0.1;
    hyper.max_iters = 1;
    std::vector<fiemf::NeighborSet> neighbors(2);
    neighbors[0].user_id = 0;
    neighbors[1].user_id = 1;
    const auto model = fiemf::train_fiemf(train, neighbors, region_model, hyper);

    const double e0 = v - mu0;
    const double e1 = w - mu1;
    REQUIRE_THAT(model.b[0], WithinAbs(hyper.eta * e0, 1e-15));
    REQUIRE_THAT(model.p[0], WithinAbs(hyper.eta * e0, 1e-15));
    REQUIRE_THAT(model.b[1], WithinAbs(hyper.eta * e1, 1e-15));
    REQUIRE_THAT(model.p[1], WithinAbs(hyper.eta * e1, 1e-15));
    const fiemf::BiasVectors biases{model.b, model.p};
    REQUIRE_THAT(fiemf::bias_predict(region_model, 0, 0, biases),
                 WithinAbs(model.predict(0, 0), 1e-15));
}

TEST_CASE("region means csv export") {
    const fiemf::QosMatrix train(2, 2, {{0, 0, 1.0}, {1, 1, 3.0}});
    const auto model = fiemf::build_region_model(train, table_of({"US", "CN"}));
    const auto path = std::filesystem::temp_directory_path() / "fiemf_tests" / "regions.csv";
    std::filesystem::create_directories(path.parent_path());
    fiemf::save_region_means_csv(model, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "region_label,mean,entry_count");
    std::string line;
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 2);
}
