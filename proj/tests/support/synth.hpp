#pragma once

// Deterministic synthetic QoS data shaped like the real corpus: positive
// response times with region structure, user/service effects and a weak
// low-rank component. Used by integration tests and the dataset-free
// acceptance criteria.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fiemf/qos_matrix.hpp"
#include "fiemf/rng.hpp"
#include "fiemf/user_regions.hpp"

namespace synth {

struct Dataset {
    fiemf::QosMatrix matrix;
    fiemf::UserRegionTable regions;
};

inline Dataset make_dataset(int num_users, int num_services, int num_regions,
                            std::uint64_t seed, double observe_fraction = 1.0) {
    std::mt19937_64 gen(seed);
    const int rank = 3;
    std::vector<double> region_base(static_cast<std::size_t>(num_regions));
    for (double& x : region_base) x = 0.3 + 1.2 * fiemf::uniform01(gen);
    std::vector<int> region_of_user(static_cast<std::size_t>(num_users));
    for (int u = 0; u < num_users; ++u)
        region_of_user[static_cast<std::size_t>(u)] =
            static_cast<int>(fiemf::bounded(gen, static_cast<std::uint64_t>(num_regions)));
    std::vector<double> user_effect(static_cast<std::size_t>(num_users));
    for (double& x : user_effect) x = -0.15 + 0.3 * fiemf::uniform01(gen);
    std::vector<double> service_effect(static_cast<std::size_t>(num_services));
    for (double& x : service_effect) x = 0.8 * fiemf::uniform01(gen);
    std::vector<double> uf(static_cast<std::size_t>(num_users * rank));
    std::vector<double> sf(static_cast<std::size_t>(num_services * rank));
    for (double& x : uf) x = 0.5 * fiemf::uniform01(gen);
    for (double& x : sf) x = 0.5 * fiemf::uniform01(gen);

    std::vector<fiemf::QosEntry> entries;
    for (int u = 0; u < num_users; ++u) {
        for (int s = 0; s < num_services; ++s) {
            if (observe_fraction < 1.0 && fiemf::uniform01(gen) >= observe_fraction) continue;
            double dot = 0.0;
            for (int k = 0; k < rank; ++k)
                dot += uf[static_cast<std::size_t>(u * rank + k)] *
                       sf[static_cast<std::size_t>(s * rank + k)];
            const double noise = -0.05 + 0.1 * fiemf::uniform01(gen);
            const double value = region_base[static_cast<std::size_t>(
                                     region_of_user[static_cast<std::size_t>(u)])] +
                                 user_effect[static_cast<std::size_t>(u)] +
                                 service_effect[static_cast<std::size_t>(s)] + dot + noise;
            entries.push_back({u, s, std::max(0.05, value)});
        }
    }

    fiemf::UserRegionTable table;
    table.region_of_user.resize(static_cast<std::size_t>(num_users));
    for (int u = 0; u < num_users; ++u)
        table.region_of_user[static_cast<std::size_t>(u)] =
            "Region-" + std::to_string(region_of_user[static_cast<std::size_t>(u)]);
    return {fiemf::QosMatrix(num_users, num_services, std::move(entries)), std::move(table)};
}

/// Writes the WS-DREAM-style user list for a region table.
inline void write_userlist(const fiemf::UserRegionTable& table,
                           const std::filesystem::path& path) {
    std::ofstream out(path);
    out << "[User ID]\t[IP Address]\t[Country]\t[Latitude]\t[Longitude]\n";
    for (int u = 0; u < table.num_users(); ++u) {
        out << u << "\t0.0.0.0\t" << table.region_of_user[static_cast<std::size_t>(u)]
            << "\t0.0\t0.0\n";
    }
}

/// A random sparse positive matrix with no particular structure, for
/// property tests. Guarantees every listed user has >= min_per_user entries.
inline fiemf::QosMatrix random_matrix(int num_users, int num_services, int min_per_user,
                                      int max_per_user, std::mt19937_64& gen) {
    std::vector<fiemf::QosEntry> entries;
    for (int u = 0; u < num_users; ++u) {
        const int count =
            min_per_user + static_cast<int>(fiemf::bounded(
                               gen, static_cast<std::uint64_t>(max_per_user - min_per_user + 1)));
        auto services = fiemf::sample_indices(static_cast<std::size_t>(num_services),
                                              static_cast<std::size_t>(count), gen);
        for (const std::size_t s : services)
            entries.push_back({u, static_cast<int>(s), 0.05 + 3.0 * fiemf::uniform01(gen)});
    }
    return fiemf::QosMatrix(num_users, num_services, std::move(entries));
}

} // namespace synth
