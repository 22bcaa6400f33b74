#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fiemf/error.hpp"
#include "fiemf/qos_matrix.hpp"
#include "fiemf/user_regions.hpp"

namespace fiemf {

/// Learned per-user and per-service offsets. Start at zero before training.
struct BiasVectors {
    std::vector<double> b; ///< per user
    std::vector<double> p; ///< per service
};

/// Country-level clustering of users with per-region training means.
///
/// mu[i] is the bias center of user i: the mean of all training values
/// observed by i's region mates (user i's own entries excluded), falling back
/// to the global training mean when the region contributes nothing.
struct RegionModel {
    std::vector<std::string> region_labels; ///< per region id
    std::vector<int> region_of_user;        ///< user id -> region id
    std::vector<double> mu;                 ///< per user bias center
    std::vector<double> region_mean;        ///< per region id, self-inclusive mean
    std::vector<long> region_entry_count;   ///< per region id, training entries
    double global_mean = 0.0;

    int num_regions() const { return static_cast<int>(region_labels.size()); }
};

/// Interns the table's country labels into dense region ids.
inline std::pair<std::vector<int>, std::vector<std::string>> assign_regions(
    const UserRegionTable& table) {
    std::vector<int> region_of_user(table.region_of_user.size());
    std::vector<std::string> labels;
    std::unordered_map<std::string, int> id_of_label;
    for (std::size_t u = 0; u < table.region_of_user.size(); ++u) {
        const std::string& label = table.region_of_user[u];
        auto [it, inserted] = id_of_label.try_emplace(label, static_cast<int>(labels.size()));
        if (inserted) labels.push_back(label);
        region_of_user[u] = it->second;
    }
    return {std::move(region_of_user), std::move(labels)};
}

/// Builds the region model from a training matrix and a region table.
///
/// `include_self` switches to the inclusive reading where a user's own
/// training entries count toward the user's bias center.
inline RegionModel build_region_model(const QosMatrix& train, const UserRegionTable& table,
                                      bool include_self = false) {
    if (train.empty()) throw ArgumentError("cannot build a region model from an empty matrix");
    if (table.num_users() != train.num_users())
        throw IntegrityError("region table covers " + std::to_string(table.num_users()) +
                             " users but the matrix has " + std::to_string(train.num_users()));
    RegionModel model;
    auto [region_of_user, labels] = assign_regions(table);
    model.region_of_user = std::move(region_of_user);
    model.region_labels = std::move(labels);
    model.global_mean = train.value_mean();

    const std::size_t r = model.region_labels.size();
    std::vector<double> region_sum(r, 0.0);
    std::vector<long> region_count(r, 0);
    const int m = train.num_users();
    std::vector<double> own_sum(static_cast<std::size_t>(m), 0.0);
    std::vector<long> own_count(static_cast<std::size_t>(m), 0);
    for (const QosEntry& e : train.entries()) {
        const auto reg = static_cast<std::size_t>(model.region_of_user[static_cast<std::size_t>(e.user)]);
        region_sum[reg] += e.value;
        region_count[reg] += 1;
        own_sum[static_cast<std::size_t>(e.user)] += e.value;
        own_count[static_cast<std::size_t>(e.user)] += 1;
    }

    model.region_mean.resize(r);
    model.region_entry_count.resize(r);
    for (std::size_t reg = 0; reg < r; ++reg) {
        model.region_entry_count[reg] = region_count[reg];
        model.region_mean[reg] =
            region_count[reg] > 0 ? region_sum[reg] / static_cast<double>(region_count[reg])
                                  : model.global_mean;
    }

    model.mu.resize(static_cast<std::size_t>(m));
    for (int u = 0; u < m; ++u) {
        const auto reg = static_cast<std::size_t>(model.region_of_user[static_cast<std::size_t>(u)]);
        double sum = region_sum[reg];
        long count = region_count[reg];
        if (!include_self) {
            sum -= own_sum[static_cast<std::size_t>(u)];
            count -= own_count[static_cast<std::size_t>(u)];
        }
        model.mu[static_cast<std::size_t>(u)] = count > 0 ? sum / static_cast<double>(count)
                                                          : model.global_mean;
    }
    return model;
}

/// Region bias center of one user (already precomputed in the model).
inline double region_mean(const RegionModel& model, int user) {
    if (user < 0 || user >= static_cast<int>(model.mu.size()))
        throw ArgumentError("user id out of range");
    return model.mu[static_cast<std::size_t>(user)];
}

/// Linear bias prediction: mu(i) + b_i + p_j.
inline double bias_predict(const RegionModel& model, int user, int service,
                           const BiasVectors& biases) {
    if (user < 0 || user >= static_cast<int>(model.mu.size()))
        throw ArgumentError("user id out of range");
    if (service < 0 || service >= static_cast<int>(biases.p.size()))
        throw ArgumentError("service id out of range");
    return model.mu[static_cast<std::size_t>(user)] + biases.b[static_cast<std::size_t>(user)] +
           biases.p[static_cast<std::size_t>(service)];
}

/// Writes `region_label,mean,entry_count` rows.
inline void save_region_means_csv(const RegionModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open file for writing: " + path.string());
    out << "region_label,mean,entry_count\n";
    char buf[32];
    for (int r = 0; r < model.num_regions(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", model.region_mean[static_cast<std::size_t>(r)]);
        out << '"' << model.region_labels[static_cast<std::size_t>(r)] << "\"," << buf << ','
            << model.region_entry_count[static_cast<std::size_t>(r)] << '\n';
    }
}

} // namespace fiemf
