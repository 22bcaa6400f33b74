#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fiemf/error.hpp"
#include "fiemf/fuzzy_similarity.hpp"
#include "fiemf/qos_matrix.hpp"
#include "fiemf/rng.hpp"

// Shared latent-factor machinery. One SGD core trains three predictor
// structures:
//
//   full model   q^ = a * <U_i, S_j> + (1 - a) * (mu_i + b_i + p_j)
//   biased MF    q^ = <U_i, S_j> + b_i + p_j
//   plain MF     q^ = <U_i, S_j>
//
// all under the objective
//
//   L = 1/2 sum_observed (q - q^)^2
//     + lambda/2 (|U|^2 + |S|^2 + |b|^2 + |p|^2)
//     + gamma/2 sum_i |U_i - sum_{a in N(i)} w_a U_a|^2

namespace fiemf {

/// How the per-entry update treats occurrences of U_i inside *other* users'
/// neighborhood terms.
enum class NeighborGradient {
    kLocal, ///< only user i's own term contributes (the published update rule)
    kFull   ///< cross-terms from users that list i as a neighbor are included
};

/// Structure of the predictor: coefficient on the interaction term, on the
/// bias chain, and which parts exist at all.
struct LatentSpec {
    double interaction_coeff = 1.0; ///< weight on <U_i, S_j>
    double bias_coeff = 0.0;        ///< weight on (mu_i + b_i + p_j)
    bool use_biases = false;        ///< learn b and p
    bool use_mu = false;            ///< add the per-user region center
    double gamma = 0.0;             ///< neighborhood regularizer weight
    NeighborGradient neighbor_gradient = NeighborGradient::kLocal;
};

/// SGD knobs shared by every latent model.
struct SgdOptions {
    int dim = 10;
    double lambda = 18.0;
    double eta = 0.01;
    double eta_decay = 0.95;
    int max_iters = 300;
    double tolerance = 1e-6; ///< stop when the epoch-mean |update| drops below
    std::uint64_t init_seed = 1;
    double init_scale = 0.0; ///< 0 = auto: 0.1 * sqrt(train_mean / dim)
    double divergence_threshold = 1e12;

    void validate() const {
        if (dim < 1) throw ArgumentError("latent dimension must be >= 1");
        if (lambda < 0.0) throw ArgumentError("lambda must be >= 0");
        if (!(eta > 0.0)) throw ArgumentError("eta must be > 0");
        if (!(eta_decay > 0.0)) throw ArgumentError("eta decay must be > 0");
        if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
        if (init_scale < 0.0) throw ArgumentError("init_scale must be >= 0");
    }
};

/// Per-epoch record of a training run.
struct TrainTrace {
    std::vector<double> epoch_objective;
    int epochs = 0;
    bool converged = false;
    double final_mean_abs_update = 0.0;
};

/// A trained latent model. Prediction is read-only and thread-safe.
struct LatentModel {
    LatentSpec spec;
    int m = 0; ///< users
    int n = 0; ///< services
    int d = 0; ///< latent dimension
    std::vector<double> U; ///< m x d row-major
    std::vector<double> S; ///< n x d row-major
    std::vector<double> b; ///< per user (empty when unused)
    std::vector<double> p; ///< per service
    std::vector<double> mu; ///< per user center (empty when unused)
    double train_min = 0.0;
    double train_max = 0.0;

    std::span<const double> user_factors(int i) const {
        return {U.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d),
                static_cast<std::size_t>(d)};
    }
    std::span<const double> service_factors(int j) const {
        return {S.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d),
                static_cast<std::size_t>(d)};
    }

    /// Raw model output.
    double predict(int i, int j) const {
        if (i < 0 || i >= m) throw ArgumentError("user id out of range");
        if (j < 0 || j >= n) throw ArgumentError("service id out of range");
        return predict_unchecked(i, j);
    }

    /// Model output clamped to the observed training value range. Response
    /// times cannot be negative, so reported predictions stay in range.
    double predict_clamped(int i, int j) const {
        const double raw = predict(i, j);
        return std::clamp(raw, train_min, train_max);
    }

    double predict_unchecked(int i, int j) const {
        double dot = 0.0;
        const double* ui = U.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d);
        const double* sj = S.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d);
        for (int k = 0; k < d; ++k) dot += ui[k] * sj[k];
        double value = spec.interaction_coeff * dot;
        if (spec.bias_coeff != 0.0) {
            double chain = 0.0;
            if (spec.use_mu) chain += mu[static_cast<std::size_t>(i)];
            if (spec.use_biases)
                chain += b[static_cast<std::size_t>(i)] + p[static_cast<std::size_t>(j)];
            value += spec.bias_coeff * chain;
        }
        return value;
    }
};

namespace detail {

inline void check_finite_params(const LatentModel& model, int epoch, double last_loss) {
    auto scan = [&](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x))
                throw TrainingError("training diverged: non-finite parameter at epoch " +
                                        std::to_string(epoch),
                                    epoch, last_loss);
    };
    scan(model.U);
    scan(model.S);
    scan(model.b);
    scan(model.p);
}

/// w-weighted combination of neighbor factor rows: sum_{a in N(i)} w_a U_a.
inline void neighbor_combination(const std::vector<double>& U, int d, const NeighborSet& set,
                                 double* out) {
    for (int k = 0; k < d; ++k) out[k] = 0.0;
    for (const Neighbor& nb : set.neighbors) {
        const double* ua = U.data() + static_cast<std::size_t>(nb.id) * static_cast<std::size_t>(d);
        for (int k = 0; k < d; ++k) out[k] += nb.weight * ua[k];
    }
}

/// Reverse adjacency: for each user i, the (c, w_i_in_c) pairs of users c
/// whose neighbor list contains i. Only needed in full-gradient mode.
inline std::vector<std::vector<std::pair<int, double>>> reverse_neighbors(
    const std::vector<NeighborSet>& sets, int m) {
    std::vector<std::vector<std::pair<int, double>>> rev(static_cast<std::size_t>(m));
    for (const NeighborSet& set : sets)
        for (const Neighbor& nb : set.neighbors)
            rev[static_cast<std::size_t>(nb.id)].emplace_back(set.user_id, nb.weight);
    return rev;
}

} // namespace detail

/// Full objective value for a model state (all observed entries plus both
/// regularizers, with terms switched off when the structure lacks them).
inline double latent_objective(const QosMatrix& train, const LatentModel& model, double lambda,
                               const std::vector<NeighborSet>* neighbors = nullptr) {
    double loss = 0.0;
    for (const QosEntry& e : train.entries()) {
        const double diff = e.value - model.predict_unchecked(e.user, e.service);
        loss += 0.5 * diff * diff;
    }
    double reg = 0.0;
    for (double x : model.U) reg += x * x;
    for (double x : model.S) reg += x * x;
    if (model.spec.use_biases) {
        for (double x : model.b) reg += x * x;
        for (double x : model.p) reg += x * x;
    }
    loss += 0.5 * lambda * reg;
    if (model.spec.gamma > 0.0 && neighbors != nullptr) {
        std::vector<double> comb(static_cast<std::size_t>(model.d));
        double nreg = 0.0;
        for (const NeighborSet& set : *neighbors) {
            detail::neighbor_combination(model.U, model.d, set, comb.data());
            const double* ui = model.U.data() +
                               static_cast<std::size_t>(set.user_id) * static_cast<std::size_t>(model.d);
            for (int k = 0; k < model.d; ++k) {
                const double diff = ui[k] - comb[static_cast<std::size_t>(k)];
                nreg += diff * diff;
            }
        }
        loss += 0.5 * model.spec.gamma * nreg;
    }
    return loss;
}

/// Gradient contributions of one observed entry (i, j) with residual
/// e = q - q^, exactly as the SGD loop applies them. In local mode the
/// neighborhood pull on U_i comes only from user i's own regularizer term;
/// full mode adds `cross`, the per-user gradient pieces from every other user
/// c whose neighbor set contains i.
struct EntryGradients {
    std::vector<double> dU_i;
    std::vector<double> dS_j;
    double db_i = 0.0;
    double dp_j = 0.0;
    std::vector<std::pair<int, std::vector<double>>> cross; ///< (c, d-vector) pairs, unused for updates to U_c
};

inline EntryGradients entry_gradients(int i, int j, double residual, const LatentModel& model,
                                      double lambda,
                                      const std::vector<NeighborSet>* neighbors = nullptr) {
    const int d = model.d;
    EntryGradients g;
    g.dU_i.assign(static_cast<std::size_t>(d), 0.0);
    g.dS_j.assign(static_cast<std::size_t>(d), 0.0);
    const double* ui = model.U.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d);
    const double* sj = model.S.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d);
    const double ic = model.spec.interaction_coeff;
    std::vector<double> comb(static_cast<std::size_t>(d), 0.0);
    const bool with_neighbors = model.spec.gamma > 0.0 && neighbors != nullptr;
    if (with_neighbors)
        detail::neighbor_combination(model.U, d, (*neighbors)[static_cast<std::size_t>(i)],
                                     comb.data());
    for (int k = 0; k < d; ++k) {
        double grad = lambda * ui[k] - ic * residual * sj[k];
        if (with_neighbors) grad += model.spec.gamma * (ui[k] - comb[static_cast<std::size_t>(k)]);
        g.dU_i[static_cast<std::size_t>(k)] = grad;
        g.dS_j[static_cast<std::size_t>(k)] = lambda * sj[k] - ic * residual * ui[k];
    }
    if (model.spec.use_biases) {
        const double bc = model.spec.bias_coeff;
        g.db_i = lambda * model.b[static_cast<std::size_t>(i)] - bc * residual;
        g.dp_j = lambda * model.p[static_cast<std::size_t>(j)] - bc * residual;
    }
    if (with_neighbors && model.spec.neighbor_gradient == NeighborGradient::kFull) {
        const auto rev = detail::reverse_neighbors(*neighbors, model.m);
        std::vector<double> comb_c(static_cast<std::size_t>(d));
        for (const auto& [c, w_i] : rev[static_cast<std::size_t>(i)]) {
            detail::neighbor_combination(model.U, d, (*neighbors)[static_cast<std::size_t>(c)],
                                         comb_c.data());
            const double* uc = model.U.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(d);
            std::vector<double> piece(static_cast<std::size_t>(d));
            for (int k = 0; k < d; ++k) {
                const double diff = uc[k] - comb_c[static_cast<std::size_t>(k)];
                piece[static_cast<std::size_t>(k)] = -model.spec.gamma * w_i * diff;
                g.dU_i[static_cast<std::size_t>(k)] += piece[static_cast<std::size_t>(k)];
            }
            g.cross.emplace_back(c, std::move(piece));
        }
    }
    return g;
}

/// Analytic gradient of the full objective with respect to every parameter,
/// including neighborhood cross-terms. Used to verify the SGD gradients
/// against finite differences; not used by the training loop.
struct ObjectiveGradient {
    std::vector<double> dU; ///< m x d
    std::vector<double> dS; ///< n x d
    std::vector<double> db;
    std::vector<double> dp;
};

inline ObjectiveGradient latent_objective_gradient(const QosMatrix& train,
                                                   const LatentModel& model, double lambda,
                                                   const std::vector<NeighborSet>* neighbors =
                                                       nullptr) {
    const int d = model.d;
    ObjectiveGradient g;
    g.dU.assign(model.U.size(), 0.0);
    g.dS.assign(model.S.size(), 0.0);
    g.db.assign(model.b.size(), 0.0);
    g.dp.assign(model.p.size(), 0.0);
    const double ic = model.spec.interaction_coeff;
    const double bc = model.spec.bias_coeff;
    for (const QosEntry& e : train.entries()) {
        const double residual = e.value - model.predict_unchecked(e.user, e.service);
        const double* ui = model.U.data() + static_cast<std::size_t>(e.user) * static_cast<std::size_t>(d);
        const double* sj = model.S.data() + static_cast<std::size_t>(e.service) * static_cast<std::size_t>(d);
        double* gu = g.dU.data() + static_cast<std::size_t>(e.user) * static_cast<std::size_t>(d);
        double* gs = g.dS.data() + static_cast<std::size_t>(e.service) * static_cast<std::size_t>(d);
        for (int k = 0; k < d; ++k) {
            gu[k] -= ic * residual * sj[k];
            gs[k] -= ic * residual * ui[k];
        }
        if (model.spec.use_biases) {
            g.db[static_cast<std::size_t>(e.user)] -= bc * residual;
            g.dp[static_cast<std::size_t>(e.service)] -= bc * residual;
        }
    }
    for (std::size_t k = 0; k < model.U.size(); ++k) g.dU[k] += lambda * model.U[k];
    for (std::size_t k = 0; k < model.S.size(); ++k) g.dS[k] += lambda * model.S[k];
    if (model.spec.use_biases) {
        for (std::size_t k = 0; k < model.b.size(); ++k) g.db[k] += lambda * model.b[k];
        for (std::size_t k = 0; k < model.p.size(); ++k) g.dp[k] += lambda * model.p[k];
    }
    if (model.spec.gamma > 0.0 && neighbors != nullptr) {
        std::vector<double> comb(static_cast<std::size_t>(d));
        for (const NeighborSet& set : *neighbors) {
            detail::neighbor_combination(model.U, d, set, comb.data());
            const double* ui = model.U.data() +
                               static_cast<std::size_t>(set.user_id) * static_cast<std::size_t>(d);
            double* gu = g.dU.data() +
                         static_cast<std::size_t>(set.user_id) * static_cast<std::size_t>(d);
            std::vector<double> diff(static_cast<std::size_t>(d));
            for (int k = 0; k < d; ++k) {
                diff[static_cast<std::size_t>(k)] = ui[k] - comb[static_cast<std::size_t>(k)];
                gu[k] += model.spec.gamma * diff[static_cast<std::size_t>(k)];
            }
            for (const Neighbor& nb : set.neighbors) {
                double* ga = g.dU.data() +
                             static_cast<std::size_t>(nb.id) * static_cast<std::size_t>(d);
                for (int k = 0; k < d; ++k)
                    ga[k] -= model.spec.gamma * nb.weight * diff[static_cast<std::size_t>(k)];
            }
        }
    }
    return g;
}

/// Trains a latent model by SGD.
///
/// Every epoch visits all training entries in a seeded-shuffled order and
/// steps each touched parameter against its entry gradient. Stops at
/// max_iters or when the epoch-mean absolute update drops below tolerance.
/// Throws TrainingError on divergence. Identical inputs (data, spec, options,
/// mu, neighbors) give bit-identical parameters on one platform.
inline LatentModel sgd_train(const QosMatrix& train, const LatentSpec& spec,
                             const SgdOptions& opts,
                             const std::vector<double>* mu = nullptr,
                             const std::vector<NeighborSet>* neighbors = nullptr,
                             TrainTrace* trace_out = nullptr) {
    opts.validate();
    if (train.empty()) throw ArgumentError("cannot train on an empty matrix");
    if (spec.use_mu && (mu == nullptr || static_cast<int>(mu->size()) != train.num_users()))
        throw ArgumentError("model uses region centers but mu is missing or mis-sized");
    if (spec.gamma > 0.0 && neighbors != nullptr &&
        static_cast<int>(neighbors->size()) != train.num_users())
        throw ArgumentError("neighbor sets must cover every user");

    const int m = train.num_users();
    const int n = train.num_services();
    const int d = opts.dim;

    LatentModel model;
    model.spec = spec;
    model.m = m;
    model.n = n;
    model.d = d;
    model.train_min = train.value_min();
    model.train_max = train.value_max();
    if (spec.use_mu) model.mu = *mu;
    model.b.assign(spec.use_biases ? static_cast<std::size_t>(m) : 0, 0.0);
    model.p.assign(spec.use_biases ? static_cast<std::size_t>(n) : 0, 0.0);

    double scale = opts.init_scale;
    if (scale == 0.0) scale = 0.1 * std::sqrt(train.value_mean() / static_cast<double>(d));
    std::mt19937_64 init_gen(opts.init_seed);
    model.U.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(d));
    model.S.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
    for (double& x : model.U) x = uniform01(init_gen) * scale;
    for (double& x : model.S) x = uniform01(init_gen) * scale;

    const bool with_neighbors = spec.gamma > 0.0 && neighbors != nullptr;
    std::vector<std::vector<std::pair<int, double>>> rev;
    if (with_neighbors && spec.neighbor_gradient == NeighborGradient::kFull)
        rev = detail::reverse_neighbors(*neighbors, m);

    const auto& entries = train.entries();
    std::vector<std::uint32_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    std::mt19937_64 shuffle_gen(mix_seed(opts.init_seed, 0x5351554653484646ull));

    TrainTrace trace;
    double eta = opts.eta;
    double last_finite_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> comb(static_cast<std::size_t>(d));
    std::vector<double> grad_u(static_cast<std::size_t>(d));
    const double ic = spec.interaction_coeff;
    const double bc = spec.bias_coeff;

    for (int epoch = 0; epoch < opts.max_iters; ++epoch) {
        deterministic_shuffle(order, shuffle_gen);
        double abs_update_sum = 0.0;
        std::size_t update_count = 0;
        for (const std::uint32_t idx : order) {
            const QosEntry& e = entries[idx];
            const int i = e.user;
            const int j = e.service;
            double* ui = model.U.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d);
            double* sj = model.S.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d);
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += ui[k] * sj[k];
            double prediction = ic * dot;
            if (bc != 0.0) {
                double chain = 0.0;
                if (spec.use_mu) chain += model.mu[static_cast<std::size_t>(i)];
                if (spec.use_biases)
                    chain += model.b[static_cast<std::size_t>(i)] +
                             model.p[static_cast<std::size_t>(j)];
                prediction += bc * chain;
            }
            const double residual = e.value - prediction;
            if (!std::isfinite(residual))
                throw TrainingError("training diverged: non-finite residual at epoch " +
                                        std::to_string(epoch),
                                    epoch, last_finite_loss);

            if (with_neighbors)
                detail::neighbor_combination(model.U, d,
                                             (*neighbors)[static_cast<std::size_t>(i)],
                                             comb.data());
            for (int k = 0; k < d; ++k) {
                double gu = opts.lambda * ui[k] - ic * residual * sj[k];
                if (with_neighbors)
                    gu += spec.gamma * (ui[k] - comb[static_cast<std::size_t>(k)]);
                grad_u[static_cast<std::size_t>(k)] = gu;
            }
            if (with_neighbors && spec.neighbor_gradient == NeighborGradient::kFull) {
                std::vector<double> comb_c(static_cast<std::size_t>(d));
                for (const auto& [c, w_i] : rev[static_cast<std::size_t>(i)]) {
                    detail::neighbor_combination(model.U, d,
                                                 (*neighbors)[static_cast<std::size_t>(c)],
                                                 comb_c.data());
                    const double* uc = model.U.data() +
                                       static_cast<std::size_t>(c) * static_cast<std::size_t>(d);
                    for (int k = 0; k < d; ++k)
                        grad_u[static_cast<std::size_t>(k)] -=
                            spec.gamma * w_i * (uc[k] - comb_c[static_cast<std::size_t>(k)]);
                }
            }
            for (int k = 0; k < d; ++k) {
                const double gs = opts.lambda * sj[k] - ic * residual * ui[k];
                const double du = eta * grad_u[static_cast<std::size_t>(k)];
                const double ds = eta * gs;
                ui[k] -= du;
                sj[k] -= ds;
                abs_update_sum += std::abs(du) + std::abs(ds);
            }
            update_count += 2 * static_cast<std::size_t>(d);
            if (spec.use_biases) {
                double& bi = model.b[static_cast<std::size_t>(i)];
                double& pj = model.p[static_cast<std::size_t>(j)];
                const double db = eta * (opts.lambda * bi - bc * residual);
                const double dp = eta * (opts.lambda * pj - bc * residual);
                bi -= db;
                pj -= dp;
                abs_update_sum += std::abs(db) + std::abs(dp);
                update_count += 2;
            }
        }

        const double objective = latent_objective(train, model, opts.lambda, neighbors);
        if (!std::isfinite(objective) || objective > opts.divergence_threshold) {
            throw TrainingError("training diverged: objective " + std::to_string(objective) +
                                    " at epoch " + std::to_string(epoch),
                                epoch, last_finite_loss);
        }
        last_finite_loss = objective;
        trace.epoch_objective.push_back(objective);
        trace.epochs = epoch + 1;
        trace.final_mean_abs_update =
            update_count > 0 ? abs_update_sum / static_cast<double>(update_count) : 0.0;
        if (trace.final_mean_abs_update < opts.tolerance) {
            trace.converged = true;
            break;
        }
        eta *= opts.eta_decay;
    }
    detail::check_finite_params(model, trace.epochs, last_finite_loss);
    if (trace_out) *trace_out = trace;
    return model;
}

} // namespace fiemf
