#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiemf/baselines.hpp"
#include "fiemf/error.hpp"
#include "fiemf/latent_model.hpp"
#include "fiemf/qos_matrix.hpp"

// Model checkpoints. One self-describing JSON format family for every
// method, tagged by method name and bound to a dataset fingerprint. Loading
// refuses checkpoints whose dimensions do not match the given dataset.

namespace fiemf {

inline constexpr const char* kCheckpointFormat = "fiemf-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Saves a trained latent model (fiemf, pmf or biasedmf).
inline void save_latent_checkpoint(const LatentModel& model, const std::string& method,
                                   const QosMatrix& train_source,
                                   const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["method"] = method;
    j["dataset_fingerprint"] = train_source.fingerprint_hex();
    j["num_users"] = model.m;
    j["num_services"] = model.n;
    j["dim"] = model.d;
    j["interaction_coeff"] = model.spec.interaction_coeff;
    j["bias_coeff"] = model.spec.bias_coeff;
    j["use_biases"] = model.spec.use_biases;
    j["use_mu"] = model.spec.use_mu;
    j["gamma"] = model.spec.gamma;
    j["train_min"] = model.train_min;
    j["train_max"] = model.train_max;
    j["U"] = model.U;
    j["S"] = model.S;
    j["b"] = model.b;
    j["p"] = model.p;
    j["mu"] = model.mu;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
    out << j.dump();
}

namespace detail {

inline nlohmann::json read_checkpoint_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid checkpoint JSON: " + std::string(e.what()));
    }
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
        throw FormatError("not a model checkpoint: " + path.string());
    return j;
}

inline void check_dims(const nlohmann::json& j, const QosMatrix& dataset,
                       const std::filesystem::path& path) {
    const int m = j.value("num_users", -1);
    const int n = j.value("num_services", -1);
    if (m != dataset.num_users() || n != dataset.num_services())
        throw IntegrityError("checkpoint " + path.string() + " is for a " + std::to_string(m) +
                             "x" + std::to_string(n) + " matrix, dataset is " +
                             std::to_string(dataset.num_users()) + "x" +
                             std::to_string(dataset.num_services()));
}

} // namespace detail

/// Method tag stored in a checkpoint, without loading the parameters.
inline std::string checkpoint_method(const std::filesystem::path& path) {
    return detail::read_checkpoint_json(path).value("method", "");
}

/// Loads a latent checkpoint, refusing dimension mismatches against `dataset`.
inline LatentModel load_latent_checkpoint(const std::filesystem::path& path,
                                          const QosMatrix& dataset) {
    const nlohmann::json j = detail::read_checkpoint_json(path);
    detail::check_dims(j, dataset, path);
    LatentModel model;
    model.m = j.at("num_users").get<int>();
    model.n = j.at("num_services").get<int>();
    model.d = j.at("dim").get<int>();
    model.spec.interaction_coeff = j.at("interaction_coeff").get<double>();
    model.spec.bias_coeff = j.at("bias_coeff").get<double>();
    model.spec.use_biases = j.at("use_biases").get<bool>();
    model.spec.use_mu = j.at("use_mu").get<bool>();
    model.spec.gamma = j.at("gamma").get<double>();
    model.train_min = j.at("train_min").get<double>();
    model.train_max = j.at("train_max").get<double>();
    model.U = j.at("U").get<std::vector<double>>();
    model.S = j.at("S").get<std::vector<double>>();
    model.b = j.at("b").get<std::vector<double>>();
    model.p = j.at("p").get<std::vector<double>>();
    model.mu = j.at("mu").get<std::vector<double>>();
    const auto md = static_cast<std::size_t>(model.m) * static_cast<std::size_t>(model.d);
    const auto nd = static_cast<std::size_t>(model.n) * static_cast<std::size_t>(model.d);
    if (model.U.size() != md || model.S.size() != nd)
        throw IntegrityError("checkpoint factor sizes do not match its dimensions");
    return model;
}

/// Saves a mean model (umean / imean).
inline void save_mean_checkpoint(const MeanModel& model, const std::string& method,
                                 const QosMatrix& train_source,
                                 const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["method"] = method;
    j["dataset_fingerprint"] = train_source.fingerprint_hex();
    j["num_users"] = static_cast<int>(model.user_mean.size());
    j["num_services"] = static_cast<int>(model.service_mean.size());
    j["global_mean"] = model.global_mean;
    j["train_min"] = model.train_min;
    j["train_max"] = model.train_max;
    j["user_mean"] = model.user_mean;
    j["service_mean"] = model.service_mean;
    j["user_count"] = model.user_count;
    j["service_count"] = model.service_count;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
    out << j.dump();
}

inline MeanModel load_mean_checkpoint(const std::filesystem::path& path,
                                      const QosMatrix& dataset) {
    const nlohmann::json j = detail::read_checkpoint_json(path);
    detail::check_dims(j, dataset, path);
    MeanModel model;
    model.global_mean = j.at("global_mean").get<double>();
    model.train_min = j.at("train_min").get<double>();
    model.train_max = j.at("train_max").get<double>();
    model.user_mean = j.at("user_mean").get<std::vector<double>>();
    model.service_mean = j.at("service_mean").get<std::vector<double>>();
    model.user_count = j.at("user_count").get<std::vector<long>>();
    model.service_count = j.at("service_count").get<std::vector<long>>();
    return model;
}

/// Saves a uipcc checkpoint: configuration and dataset binding. The
/// similarity tables are rebuilt from the training split on load (they are
/// pure functions of split + config).
inline void save_uipcc_checkpoint(const UipccConfig& config, const QosMatrix& train_source,
                                  const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["method"] = "uipcc";
    j["dataset_fingerprint"] = train_source.fingerprint_hex();
    j["num_users"] = train_source.num_users();
    j["num_services"] = train_source.num_services();
    j["top_k"] = config.top_k;
    j["blend"] = config.blend;
    j["min_corated"] = config.min_corated;
    j["significance_weighting"] = config.significance_weighting;
    j["max_service_neighbors"] = config.max_service_neighbors;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
    out << j.dump();
}

/// Rebuilds a uipcc model from its checkpoint and the matching training
/// split. Refuses both dimension and fingerprint mismatches (the model's
/// predictions depend on the exact split).
inline UipccModel load_uipcc_checkpoint(const std::filesystem::path& path, const QosMatrix& train,
                                        int threads = 1) {
    const nlohmann::json j = detail::read_checkpoint_json(path);
    detail::check_dims(j, train, path);
    if (j.value("dataset_fingerprint", "") != train.fingerprint_hex())
        throw IntegrityError("uipcc checkpoint was built on a different training split");
    UipccConfig config;
    config.top_k = j.at("top_k").get<int>();
    config.blend = j.at("blend").get<double>();
    config.min_corated = j.at("min_corated").get<int>();
    config.significance_weighting = j.at("significance_weighting").get<bool>();
    config.max_service_neighbors = j.at("max_service_neighbors").get<int>();
    return UipccModel(train, config, threads);
}

} // namespace fiemf
