#pragma once

// Brute-force oracles, coded independently of the library implementations
// they check. The similarity oracle translates the defining formulas
// directly; the objective oracle evaluates the regularized loss with naive
// loops; the finite-difference helpers differentiate any callable.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "fiemf/fuzzy_similarity.hpp"
#include "fiemf/latent_model.hpp"
#include "fiemf/qos_matrix.hpp"

namespace oracle {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Dense relationship matrix by direct formula translation.
inline std::vector<std::vector<double>> relationship(const std::vector<double>& r, double r_med) {
    const std::size_t n = r.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
            const double diff = std::fabs(r[x] - r[y]);
            m[x][y] = diff < r_med ? std::exp(-diff / 2.0) : 0.0;
        }
    }
    return m;
}

inline double entropy(const std::vector<std::vector<double>>& m) {
    const std::size_t n = m.size();
    double total = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        double row = 0.0;
        for (std::size_t y = 0; y < n; ++y) row += m[x][y];
        total += std::log(row / static_cast<double>(n));
    }
    return -total / static_cast<double>(n);
}

inline double joint_entropy(const std::vector<std::vector<double>>& a,
                            const std::vector<std::vector<double>>& b) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y) m[x][y] = std::min(a[x][y], b[x][y]);
    return entropy(m);
}

/// End-to-end similarity oracle. Mirrors the documented decision rules:
/// co-rated restriction, a minimum of two shared services, per-user or
/// global median threshold, the flat-pair degenerate case, and clamping.
inline double fie_similarity(int ua, int ub, const fiemf::QosMatrix& train,
                             fiemf::RMedMode mode = fiemf::RMedMode::kPerUser,
                             int min_corated = 2) {
    std::map<int, double> ra;
    std::map<int, double> rb;
    for (const auto& e : train.user_entries(ua)) ra[e.service] = e.value;
    for (const auto& e : train.user_entries(ub)) rb[e.service] = e.value;
    std::vector<double> va;
    std::vector<double> vb;
    for (const auto& [service, value] : ra) {
        auto it = rb.find(service);
        if (it != rb.end()) {
            va.push_back(value);
            vb.push_back(it->second);
        }
    }
    if (static_cast<int>(va.size()) < std::max(min_corated, 2)) return 0.0;

    double med_a;
    double med_b;
    if (mode == fiemf::RMedMode::kGlobal) {
        std::vector<double> all;
        for (const auto& e : train.entries()) all.push_back(e.value);
        med_a = med_b = median(all);
    } else {
        med_a = median(va);
        med_b = median(vb);
    }
    const auto ma = relationship(va, med_a);
    const auto mb = relationship(vb, med_b);
    const double fha = entropy(ma);
    const double fhb = entropy(mb);
    if (fha + fhb == 0.0) return 1.0;
    const double fmi = fha + fhb - joint_entropy(ma, mb);
    const double sim = 2.0 * fmi * std::exp(-std::fabs(fha - fhb)) / (fha + fhb);
    return std::min(1.0, std::max(0.0, sim));
}

/// Naive evaluation of the regularized objective:
/// squared residuals over observed entries, weight decay on every learned
/// parameter, and the neighborhood pull on user factors.
inline double objective(const fiemf::QosMatrix& train, const fiemf::LatentModel& model,
                        double lambda, const std::vector<fiemf::NeighborSet>* neighbors) {
    const int d = model.d;
    double total = 0.0;
    for (const auto& e : train.entries()) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k)
            dot += model.U[static_cast<std::size_t>(e.user * d + k)] *
                   model.S[static_cast<std::size_t>(e.service * d + k)];
        double pred = model.spec.interaction_coeff * dot;
        double chain = 0.0;
        if (model.spec.use_mu) chain += model.mu[static_cast<std::size_t>(e.user)];
        if (model.spec.use_biases)
            chain += model.b[static_cast<std::size_t>(e.user)] +
                     model.p[static_cast<std::size_t>(e.service)];
        pred += model.spec.bias_coeff * chain;
        total += 0.5 * (e.value - pred) * (e.value - pred);
    }
    double sq = 0.0;
    for (const double x : model.U) sq += x * x;
    for (const double x : model.S) sq += x * x;
    if (model.spec.use_biases) {
        for (const double x : model.b) sq += x * x;
        for (const double x : model.p) sq += x * x;
    }
    total += lambda / 2.0 * sq;
    if (model.spec.gamma > 0.0 && neighbors != nullptr) {
        double pull = 0.0;
        for (const auto& set : *neighbors) {
            for (int k = 0; k < d; ++k) {
                double comb = 0.0;
                for (const auto& nb : set.neighbors)
                    comb += nb.weight * model.U[static_cast<std::size_t>(nb.id * d + k)];
                const double diff =
                    model.U[static_cast<std::size_t>(set.user_id * d + k)] - comb;
                pull += diff * diff;
            }
        }
        total += model.spec.gamma / 2.0 * pull;
    }
    return total;
}

/// Central finite difference of f around x.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Relative agreement check suited to gradient values of order <= 1.
inline double rel_error(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-3});
}

} // namespace oracle
