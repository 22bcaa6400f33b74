#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fiemf/error.hpp"
#include "fiemf/latent_model.hpp"
#include "fiemf/qos_matrix.hpp"

// Reference predictors for the comparison harness: user mean, service mean,
// blended user/item PCC collaborative filtering, plain matrix factorization
// and bias-augmented matrix factorization. PMF and BiasedMF run on the same
// SGD core as the fused model, so comparisons differ only in the predictor
// structure.

namespace fiemf {

/// Per-user and per-service training means with a global fallback.
struct MeanModel {
    std::vector<double> user_mean;    ///< global mean where a user has no entries
    std::vector<double> service_mean; ///< global mean where a service has none
    std::vector<long> user_count;
    std::vector<long> service_count;
    double global_mean = 0.0;
    double train_min = 0.0;
    double train_max = 0.0;
};

inline MeanModel build_mean_model(const QosMatrix& train) {
    MeanModel model;
    const auto m = static_cast<std::size_t>(train.num_users());
    const auto n = static_cast<std::size_t>(train.num_services());
    model.user_mean.assign(m, 0.0);
    model.service_mean.assign(n, 0.0);
    model.user_count.assign(m, 0);
    model.service_count.assign(n, 0);
    model.global_mean = train.value_mean();
    model.train_min = train.value_min();
    model.train_max = train.value_max();
    for (const QosEntry& e : train.entries()) {
        model.user_mean[static_cast<std::size_t>(e.user)] += e.value;
        model.user_count[static_cast<std::size_t>(e.user)] += 1;
        model.service_mean[static_cast<std::size_t>(e.service)] += e.value;
        model.service_count[static_cast<std::size_t>(e.service)] += 1;
    }
    for (std::size_t u = 0; u < m; ++u)
        model.user_mean[u] = model.user_count[u] > 0
                                 ? model.user_mean[u] / static_cast<double>(model.user_count[u])
                                 : model.global_mean;
    for (std::size_t s = 0; s < n; ++s)
        model.service_mean[s] =
            model.service_count[s] > 0
                ? model.service_mean[s] / static_cast<double>(model.service_count[s])
                : model.global_mean;
    return model;
}

/// Mean of the target user's training values (global mean when none).
inline double umean_predict(const MeanModel& model, int user) {
    if (user < 0 || user >= static_cast<int>(model.user_mean.size()))
        throw ArgumentError("user id out of range");
    return model.user_mean[static_cast<std::size_t>(user)];
}

/// Mean of the target service's training values (global mean when none).
inline double imean_predict(const MeanModel& model, int service) {
    if (service < 0 || service >= static_cast<int>(model.service_mean.size()))
        throw ArgumentError("service id out of range");
    return model.service_mean[static_cast<std::size_t>(service)];
}

/// UIPCC knobs.
struct UipccConfig {
    int top_k = 10;
    double blend = 0.5; ///< weight on the user-based part
    int min_corated = 2;
    bool significance_weighting = true; ///< damp sims by 2|I_a ^ I_b| / (|I_a| + |I_b|)
    /// Per-service candidate list length for the item-based part; 0 = keep
    /// every positive similarity (exact but memory-heavy on large splits).
    int max_service_neighbors = 300;

    void validate() const {
        if (top_k < 1) throw ArgumentError("top_k must be >= 1");
        if (!(blend >= 0.0 && blend <= 1.0)) throw ArgumentError("blend must lie in [0,1]");
        if (min_corated < 2) throw ArgumentError("min_corated must be >= 2");
    }
};

namespace detail {

/// PCC of two aligned vectors around their own means. NaN when undefined.
inline double pcc(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double num = 0.0;
    double dx2 = 0.0;
    double dy2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        num += dx * dy;
        dx2 += dx * dx;
        dy2 += dy * dy;
    }
    if (dx2 == 0.0 || dy2 == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / std::sqrt(dx2 * dy2);
}

struct ScoredId {
    double sim;
    int id;
};

} // namespace detail

/// Blended user- and item-based collaborative filtering with PCC similarity.
/// Falls back through user mean, service mean and global mean, so it always
/// returns a finite prediction.
class UipccModel {
public:
    UipccModel(const QosMatrix& train, UipccConfig config, int threads = 1)
        : config_(config), means_(build_mean_model(train)), train_(&train) {
        config_.validate();
        build_user_sims(train, threads);
        build_service_sims(train, threads);
    }

    const MeanModel& means() const { return means_; }
    const UipccConfig& config() const { return config_; }

    double predict(int user, int service) const {
        const double up = user_part(user, service);
        const double ip = item_part(user, service);
        const bool has_u = !std::isnan(up);
        const bool has_i = !std::isnan(ip);
        if (has_u && has_i) return config_.blend * up + (1.0 - config_.blend) * ip;
        if (has_u) return up;
        if (has_i) return ip;
        if (means_.user_count[static_cast<std::size_t>(user)] > 0) return umean_predict(means_, user);
        if (means_.service_count[static_cast<std::size_t>(service)] > 0)
            return imean_predict(means_, service);
        return means_.global_mean;
    }

private:
    struct Rater {
        int id;
        double value;
    };

    /// Significance-damped PCC over the co-rated set; NaN when undefined.
    /// Both spans must be sorted by their key field.
    template <typename Keyed>
    double entity_similarity(std::span<const Keyed> ea, std::span<const Keyed> eb) const {
        std::vector<double> xa;
        std::vector<double> xb;
        std::size_t i = 0;
        std::size_t j = 0;
        while (i < ea.size() && j < eb.size()) {
            const int ka = co_key(ea[i]);
            const int kb = co_key(eb[j]);
            if (ka < kb) {
                ++i;
            } else if (ka > kb) {
                ++j;
            } else {
                xa.push_back(ea[i].value);
                xb.push_back(eb[j].value);
                ++i;
                ++j;
            }
        }
        if (static_cast<int>(xa.size()) < config_.min_corated)
            return std::numeric_limits<double>::quiet_NaN();
        double sim = detail::pcc(xa, xb);
        if (std::isnan(sim)) return sim;
        if (config_.significance_weighting) {
            sim *= 2.0 * static_cast<double>(xa.size()) /
                   static_cast<double>(ea.size() + eb.size());
        }
        return sim;
    }

    static int co_key(const QosEntry& e) { return e.service; }
    static int co_key(const Rater& r) { return r.id; }

    void build_user_sims(const QosMatrix& train, int threads) {
        const int m = train.num_users();
        user_sims_.assign(static_cast<std::size_t>(m),
                          std::vector<double>(static_cast<std::size_t>(m), 0.0));
        detail::parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t a) {
            auto ea = train.user_entries(static_cast<int>(a));
            for (int b = static_cast<int>(a) + 1; b < m; ++b) {
                const double sim = entity_similarity<QosEntry>(ea, train.user_entries(b));
                user_sims_[a][static_cast<std::size_t>(b)] = std::isnan(sim) ? 0.0 : sim;
            }
        });
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < a; ++b)
                user_sims_[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                    user_sims_[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];
    }

    void build_service_sims(const QosMatrix& train, int threads) {
        const int n = train.num_services();
        service_raters_.assign(static_cast<std::size_t>(n), {});
        // canonical entry order is (user, service), so each per-service list
        // below ends up sorted by user id
        for (const QosEntry& e : train.entries())
            service_raters_[static_cast<std::size_t>(e.service)].push_back({e.user, e.value});
        service_neighbors_.assign(static_cast<std::size_t>(n), {});
        detail::parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t j) {
            const auto& ej = service_raters_[j];
            if (static_cast<int>(ej.size()) < config_.min_corated) return;
            std::vector<detail::ScoredId> positive;
            for (int j2 = 0; j2 < n; ++j2) {
                if (j2 == static_cast<int>(j)) continue;
                const auto& e2 = service_raters_[static_cast<std::size_t>(j2)];
                if (static_cast<int>(e2.size()) < config_.min_corated) continue;
                const double sim = entity_similarity<Rater>(ej, e2);
                if (!std::isnan(sim) && sim > 0.0) positive.push_back({sim, j2});
            }
            std::sort(positive.begin(), positive.end(), [](const auto& x, const auto& y) {
                return x.sim != y.sim ? x.sim > y.sim : x.id < y.id;
            });
            if (config_.max_service_neighbors > 0 &&
                static_cast<int>(positive.size()) > config_.max_service_neighbors)
                positive.resize(static_cast<std::size_t>(config_.max_service_neighbors));
            service_neighbors_[j] = std::move(positive);
        });
    }

    /// User-based part: mean_i + weighted deviations of similar users on j.
    double user_part(int user, int service) const {
        if (means_.user_count[static_cast<std::size_t>(user)] == 0)
            return std::numeric_limits<double>::quiet_NaN();
        std::vector<detail::ScoredId> candidates;
        const auto& sims = user_sims_[static_cast<std::size_t>(user)];
        for (const Rater& r : service_raters_[static_cast<std::size_t>(service)]) {
            if (r.id == user) continue;
            const double sim = sims[static_cast<std::size_t>(r.id)];
            if (sim > 0.0) candidates.push_back({sim, r.id});
        }
        if (candidates.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
            return x.sim != y.sim ? x.sim > y.sim : x.id < y.id;
        });
        if (static_cast<int>(candidates.size()) > config_.top_k)
            candidates.resize(static_cast<std::size_t>(config_.top_k));
        double num = 0.0;
        double den = 0.0;
        for (const auto& c : candidates) {
            num += c.sim * (train_->value_or_nan(c.id, service) -
                            means_.user_mean[static_cast<std::size_t>(c.id)]);
            den += c.sim;
        }
        return means_.user_mean[static_cast<std::size_t>(user)] + num / den;
    }

    /// Item-based part, symmetric over the user's rated services.
    double item_part(int user, int service) const {
        if (means_.service_count[static_cast<std::size_t>(service)] == 0)
            return std::numeric_limits<double>::quiet_NaN();
        std::vector<detail::ScoredId> candidates;
        for (const auto& cand : service_neighbors_[static_cast<std::size_t>(service)]) {
            if (!std::isnan(train_->value_or_nan(user, cand.id))) candidates.push_back(cand);
            if (config_.top_k > 0 && static_cast<int>(candidates.size()) == config_.top_k) break;
        }
        if (candidates.empty()) return std::numeric_limits<double>::quiet_NaN();
        double num = 0.0;
        double den = 0.0;
        for (const auto& c : candidates) {
            num += c.sim * (train_->value_or_nan(user, c.id) -
                            means_.service_mean[static_cast<std::size_t>(c.id)]);
            den += c.sim;
        }
        return means_.service_mean[static_cast<std::size_t>(service)] + num / den;
    }

    UipccConfig config_;
    MeanModel means_;
    const QosMatrix* train_;
    std::vector<std::vector<double>> user_sims_;
    std::vector<std::vector<Rater>> service_raters_;
    std::vector<std::vector<detail::ScoredId>> service_neighbors_;
};

/// SGD knobs for the MF baselines.
struct MfConfig {
    int dim = 10;
    double lambda = 0.01;
    double eta = 0.01;
    double eta_decay = 0.95;
    int max_iters = 300;
    double tolerance = 1e-6;
    std::uint64_t init_seed = 1;
    double init_scale = 0.0;
    double divergence_threshold = 1e12;

    SgdOptions sgd_options() const {
        SgdOptions o;
        o.dim = dim;
        o.lambda = lambda;
        o.eta = eta;
        o.eta_decay = eta_decay;
        o.max_iters = max_iters;
        o.tolerance = tolerance;
        o.init_seed = init_seed;
        o.init_scale = init_scale;
        o.divergence_threshold = divergence_threshold;
        return o;
    }
};

inline LatentSpec pmf_spec() {
    LatentSpec spec;
    spec.interaction_coeff = 1.0;
    spec.bias_coeff = 0.0;
    spec.use_biases = false;
    spec.use_mu = false;
    spec.gamma = 0.0;
    return spec;
}

inline LatentSpec biasedmf_spec() {
    LatentSpec spec;
    spec.interaction_coeff = 1.0;
    spec.bias_coeff = 1.0;
    spec.use_biases = true;
    spec.use_mu = false;
    spec.gamma = 0.0;
    return spec;
}

/// Plain matrix factorization: q^ = <U_i, S_j>.
inline LatentModel pmf_train(const QosMatrix& train, const MfConfig& config,
                             TrainTrace* trace = nullptr) {
    return sgd_train(train, pmf_spec(), config.sgd_options(), nullptr, nullptr, trace);
}

/// Bias-augmented factorization: q^ = <U_i, S_j> + b_i + p_j.
inline LatentModel biasedmf_train(const QosMatrix& train, const MfConfig& config,
                                  TrainTrace* trace = nullptr) {
    return sgd_train(train, biasedmf_spec(), config.sgd_options(), nullptr, nullptr, trace);
}

} // namespace fiemf
