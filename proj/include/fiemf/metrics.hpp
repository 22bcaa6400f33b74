#pragma once

#include <cmath>
#include <span>

#include "fiemf/error.hpp"

namespace fiemf {

/// One evaluated test entry.
struct PredictionPair {
    double truth;
    double prediction;
};

/// Mean absolute error over a non-empty pair list.
inline double mae(std::span<const PredictionPair> pairs) {
    if (pairs.empty()) throw ArgumentError("mae of an empty pair list is undefined");
    double sum = 0.0;
    for (const PredictionPair& p : pairs) sum += std::abs(p.truth - p.prediction);
    return sum / static_cast<double>(pairs.size());
}

/// Root mean squared error over a non-empty pair list. Never below mae.
inline double rmse(std::span<const PredictionPair> pairs) {
    if (pairs.empty()) throw ArgumentError("rmse of an empty pair list is undefined");
    double sum = 0.0;
    for (const PredictionPair& p : pairs) {
        const double d = p.truth - p.prediction;
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pairs.size()));
}

} // namespace fiemf
