#pragma once

#include <cstdint>
#include <vector>

#include "fiemf/error.hpp"
#include "fiemf/fuzzy_similarity.hpp"
#include "fiemf/latent_model.hpp"
#include "fiemf/qos_matrix.hpp"
#include "fiemf/region_bias.hpp"

namespace fiemf {

/// Hyperparameters of the fused predictor
/// q^_ij = alpha * <U_i, S_j> + (1 - alpha) * (mu_i + b_i + p_j).
struct FiemfHyperparams {
    double alpha = 0.15;  ///< interaction / bias mix, in [0,1]
    double lambda = 18.0; ///< weight decay
    double gamma = 18.0;  ///< neighborhood regularizer weight
    int dim = 10;         ///< latent dimension
    int k_neighbors = 10; ///< Top-K neighbor count
    double eta = 0.01;
    double eta_decay = 0.95;
    int max_iters = 300;
    double tolerance = 1e-6;
    std::uint64_t init_seed = 1;
    double init_scale = 0.0; ///< 0 = auto
    double divergence_threshold = 1e12;
    NeighborGradient neighbor_gradient = NeighborGradient::kLocal;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0,1]");
        if (gamma < 0.0) throw ArgumentError("gamma must be >= 0");
        if (k_neighbors < 1) throw ArgumentError("K must be >= 1");
        sgd_options().validate();
    }

    LatentSpec latent_spec() const {
        LatentSpec spec;
        spec.interaction_coeff = alpha;
        spec.bias_coeff = 1.0 - alpha;
        spec.use_biases = true;
        spec.use_mu = true;
        spec.gamma = gamma;
        spec.neighbor_gradient = neighbor_gradient;
        return spec;
    }

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

using FiemfModel = LatentModel;

/// Fused prediction from raw parts: alpha * <u, s> + (1-alpha) * (mu + b + p).
inline double fiemf_predict(std::span<const double> user_factors,
                            std::span<const double> service_factors, double mu_i, double b_i,
                            double p_j, double alpha) {
    if (user_factors.size() != service_factors.size())
        throw ArgumentError("factor vectors must share a dimension");
    double dot = 0.0;
    for (std::size_t k = 0; k < user_factors.size(); ++k) dot += user_factors[k] * service_factors[k];
    return alpha * dot + (1.0 - alpha) * (mu_i + b_i + p_j);
}

/// The regularized objective of the fused model (see latent_model.hpp).
inline double fiemf_objective(const QosMatrix& train, const FiemfModel& model,
                              const FiemfHyperparams& hyper,
                              const std::vector<NeighborSet>& neighbors) {
    return latent_objective(train, model, hyper.lambda, &neighbors);
}

/// Trains the fused model. `neighbors` must be precomputed on `train` (one
/// set per user; empty sets are fine) and the region model built on the same
/// split.
inline FiemfModel train_fiemf(const QosMatrix& train, const std::vector<NeighborSet>& neighbors,
                              const RegionModel& region_model, const FiemfHyperparams& hyper,
                              TrainTrace* trace = nullptr) {
    hyper.validate();
    if (static_cast<int>(region_model.mu.size()) != train.num_users())
        throw ArgumentError("region model does not cover every user");
    return sgd_train(train, hyper.latent_spec(), hyper.sgd_options(), &region_model.mu,
                     &neighbors, trace);
}

} // namespace fiemf
