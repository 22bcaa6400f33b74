#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fiemf/error.hpp"
#include "fiemf/qos_matrix.hpp"
#include "fiemf/rng.hpp"

// Fuzzy-information-entropy similarity between users.
//
// A user's relationship matrix holds fuzzy equivalence degrees between pairs
// of services based on how close the user rated them. From it we derive a
// fuzzy information entropy per user, a joint entropy per user pair (via the
// element-wise minimum), their mutual information, and finally a normalized
// similarity used to pick Top-K neighbors with weights.

namespace fiemf {

/// Where the rating-difference threshold r_med comes from.
enum class RMedMode {
    kPerUser, ///< median of the current user's ratings over the active index set
    kGlobal   ///< one median over all training values
};

/// Knobs for pairwise similarity computation.
struct SimilarityOptions {
    RMedMode r_med_mode = RMedMode::kPerUser;
    /// Used in kGlobal mode. 0 means "compute from the training matrix".
    double global_r_med = 0.0;
    /// Pairs sharing fewer co-rated services than this get similarity 0.
    int min_corated = 2;
    /// Co-rated sets larger than this are deterministically subsampled.
    int pair_cap = 1000;
    /// Extra seed material for the pair-cap subsample.
    std::uint64_t cap_seed = 0;
};

/// Counters reported by similarity computations.
struct SimilarityStats {
    std::atomic<long> pairs_evaluated{0};
    std::atomic<long> pairs_below_min_corated{0};
    std::atomic<long> pairs_capped{0};
    /// Times the raw similarity fell outside [0,1] and was clamped.
    std::atomic<long> clamp_events{0};
};

/// Dense square fuzzy-equivalence matrix of one user over an ordered set of
/// services. Symmetric with unit diagonal; cells in [0,1].
struct RelationshipMatrix {
    std::vector<int> index_set; ///< service ids, in cell order
    std::vector<double> cells;  ///< n*n row-major

    int n() const { return static_cast<int>(index_set.size()); }
    double at(int x, int y) const {
        return cells[static_cast<std::size_t>(x) * index_set.size() + static_cast<std::size_t>(y)];
    }
};

/// Per-user fuzzy information entropy over the user's full rated set.
struct EntropyProfile {
    int user_id;
    double fie;
};

struct Neighbor {
    int id;
    double similarity;
    double weight;
};

/// Top-K most similar users with normalized weights.
struct NeighborSet {
    int user_id = -1;
    std::vector<Neighbor> neighbors;
};

/// Fuzzy equivalence degree between two ratings of one user:
/// exp(-|r_ux - r_uy| / 2) when the difference is below r_med, else 0.
inline double relationship_value(double r_ux, double r_uy, double r_med) {
    if (!(r_med > 0.0)) throw ArgumentError("r_med must be positive");
    const double diff = std::abs(r_ux - r_uy);
    if (diff >= r_med) return 0.0;
    return std::exp(-0.5 * diff);
}

/// Builds the relationship matrix of one user. `ratings[i]` is the user's
/// rating of `index_set[i]`.
inline RelationshipMatrix relationship_matrix(std::span<const double> ratings,
                                              std::vector<int> index_set, double r_med) {
    if (index_set.empty()) throw ArgumentError("index set must be non-empty");
    if (ratings.size() != index_set.size())
        throw ArgumentError("ratings and index set sizes differ");
    if (!(r_med > 0.0)) throw ArgumentError("r_med must be positive");
    const std::size_t n = index_set.size();
    RelationshipMatrix m;
    m.index_set = std::move(index_set);
    m.cells.resize(n * n);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y)
            m.cells[x * n + y] = relationship_value(ratings[x], ratings[y], r_med);
    return m;
}

/// Fuzzy information entropy: -(1/n) * sum_x ln(row_mean_x). In [0, ln n].
inline double fuzzy_entropy(const RelationshipMatrix& m) {
    const std::size_t n = m.index_set.size();
    if (n == 0) throw ArgumentError("relationship matrix is empty");
    double acc = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        double row_sum = 0.0;
        for (std::size_t y = 0; y < n; ++y) row_sum += m.cells[x * n + y];
        acc += std::log(row_sum / static_cast<double>(n));
    }
    return -acc / static_cast<double>(n);
}

/// Joint entropy of two users over the same index set, computed on the
/// element-wise minimum of their relationship matrices. Always >= the larger
/// of the two individual entropies.
inline double fuzzy_joint_entropy(const RelationshipMatrix& a, const RelationshipMatrix& b) {
    if (a.index_set != b.index_set)
        throw ArgumentError("joint entropy requires identical index sets");
    const std::size_t n = a.index_set.size();
    if (n == 0) throw ArgumentError("relationship matrix is empty");
    double acc = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        double row_sum = 0.0;
        for (std::size_t y = 0; y < n; ++y)
            row_sum += std::min(a.cells[x * n + y], b.cells[x * n + y]);
        acc += std::log(row_sum / static_cast<double>(n));
    }
    return -acc / static_cast<double>(n);
}

/// FMI(a,b) = FH(a) + FH(b) - FH(a,b). At most min(FH(a), FH(b)).
inline double fuzzy_mutual_information(const RelationshipMatrix& a, const RelationshipMatrix& b) {
    return fuzzy_entropy(a) + fuzzy_entropy(b) - fuzzy_joint_entropy(a, b);
}

namespace detail {

inline double median_sorted(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median of all observed training values.
inline double global_value_median(const QosMatrix& train) {
    if (train.empty()) throw ArgumentError("cannot take the median of an empty matrix");
    std::vector<double> values;
    values.reserve(train.size());
    for (const QosEntry& e : train.entries()) values.push_back(e.value);
    return median_sorted(values);
}

/// One co-rated service with both users' ratings.
struct CoRating {
    int service;
    double ra;
    double rb;
};

inline std::vector<CoRating> co_rated(const QosMatrix& train, int a, int b) {
    auto ea = train.user_entries(a);
    auto eb = train.user_entries(b);
    std::vector<CoRating> out;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ea.size() && j < eb.size()) {
        if (ea[i].service < eb[j].service) {
            ++i;
        } else if (ea[i].service > eb[j].service) {
            ++j;
        } else {
            out.push_back({ea[i].service, ea[i].value, eb[j].value});
            ++i;
            ++j;
        }
    }
    return out;
}

/// FH(Ma), FH(Mb) and the joint entropy in one fused pass, without
/// materializing the matrices. Same accumulation order as the matrix-based
/// functions above.
struct PairEntropies {
    double fh_a;
    double fh_b;
    double fh_joint;
};

inline PairEntropies pair_entropies(std::span<const double> ra, std::span<const double> rb,
                                    double med_a, double med_b) {
    const std::size_t n = ra.size();
    double acc_a = 0.0;
    double acc_b = 0.0;
    double acc_j = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        double row_a = 0.0;
        double row_b = 0.0;
        double row_j = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            const double da = std::abs(ra[x] - ra[y]);
            const double db = std::abs(rb[x] - rb[y]);
            const double va = da < med_a ? std::exp(-0.5 * da) : 0.0;
            const double vb = db < med_b ? std::exp(-0.5 * db) : 0.0;
            row_a += va;
            row_b += vb;
            row_j += std::min(va, vb);
        }
        const double dn = static_cast<double>(n);
        acc_a += std::log(row_a / dn);
        acc_b += std::log(row_b / dn);
        acc_j += std::log(row_j / dn);
    }
    const double dn = static_cast<double>(n);
    return {-acc_a / dn, -acc_b / dn, -acc_j / dn};
}

} // namespace detail

/// Normalized FIE similarity of two distinct users, in [0,1].
///
/// Built over their co-rated training services; pairs with fewer than
/// `min_corated` shared services get 0. When both entropies vanish the users
/// share a flat, identical preference structure and the similarity is 1.
inline double fie_similarity(int a, int b, const QosMatrix& train,
                             const SimilarityOptions& opts = {},
                             SimilarityStats* stats = nullptr) {
    if (a == b) throw ArgumentError("self-similarity is undefined");
    if (stats) stats->pairs_evaluated.fetch_add(1, std::memory_order_relaxed);

    auto co = detail::co_rated(train, a, b);
    if (static_cast<int>(co.size()) < std::max(opts.min_corated, 2)) {
        if (stats) stats->pairs_below_min_corated.fetch_add(1, std::memory_order_relaxed);
        return 0.0;
    }
    if (opts.pair_cap > 0 && static_cast<int>(co.size()) > opts.pair_cap) {
        // deterministic subsample, symmetric in (a, b)
        const std::uint64_t pair_seed =
            mix_seed(opts.cap_seed, (static_cast<std::uint64_t>(std::min(a, b)) << 32) |
                                        static_cast<std::uint64_t>(std::max(a, b)));
        std::mt19937_64 gen(pair_seed);
        auto keep = sample_indices(co.size(), static_cast<std::size_t>(opts.pair_cap), gen);
        std::vector<detail::CoRating> reduced;
        reduced.reserve(keep.size());
        for (std::size_t idx : keep) reduced.push_back(co[idx]);
        co = std::move(reduced);
        if (stats) stats->pairs_capped.fetch_add(1, std::memory_order_relaxed);
    }

    std::vector<double> ra(co.size());
    std::vector<double> rb(co.size());
    for (std::size_t i = 0; i < co.size(); ++i) {
        ra[i] = co[i].ra;
        rb[i] = co[i].rb;
    }

    double med_a;
    double med_b;
    if (opts.r_med_mode == RMedMode::kGlobal) {
        med_a = opts.global_r_med > 0.0 ? opts.global_r_med : detail::global_value_median(train);
        med_b = med_a;
    } else {
        std::vector<double> ta = ra;
        std::vector<double> tb = rb;
        med_a = detail::median_sorted(ta);
        med_b = detail::median_sorted(tb);
    }

    const auto ent = detail::pair_entropies(ra, rb, med_a, med_b);
    const double denom = ent.fh_a + ent.fh_b;
    if (denom == 0.0) return 1.0; // both users flat and identical in structure
    const double fmi = ent.fh_a + ent.fh_b - ent.fh_joint;
    const double sim = 2.0 * fmi * std::exp(-std::abs(ent.fh_a - ent.fh_b)) / denom;
    if (sim < 0.0 || sim > 1.0) {
        if (stats) stats->clamp_events.fetch_add(1, std::memory_order_relaxed);
        return std::clamp(sim, 0.0, 1.0);
    }
    return sim;
}

/// FIE of one user over the user's full rated training set.
inline EntropyProfile user_entropy_profile(int user, const QosMatrix& train,
                                           const SimilarityOptions& opts = {}) {
    auto span = train.user_entries(user);
    if (span.empty()) return {user, 0.0};
    std::vector<int> services;
    std::vector<double> ratings;
    services.reserve(span.size());
    ratings.reserve(span.size());
    for (const QosEntry& e : span) {
        services.push_back(e.service);
        ratings.push_back(e.value);
    }
    double med;
    if (opts.r_med_mode == RMedMode::kGlobal) {
        med = opts.global_r_med > 0.0 ? opts.global_r_med : detail::global_value_median(train);
    } else {
        std::vector<double> t = ratings;
        med = detail::median_sorted(t);
    }
    const auto m = relationship_matrix(ratings, std::move(services), med);
    return {user, fuzzy_entropy(m)};
}

namespace detail {

inline void resolve_global_median(const QosMatrix& train, SimilarityOptions& opts) {
    if (opts.r_med_mode == RMedMode::kGlobal && opts.global_r_med <= 0.0)
        opts.global_r_med = global_value_median(train);
}

/// Runs fn(i) for i in [0, n) over `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(threads, static_cast<int>(n));
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

} // namespace detail

/// Full symmetric user-user similarity matrix. Pairs are independent, so the
/// loop parallelizes over the first index; results do not depend on the
/// thread count.
inline std::vector<std::vector<double>> similarity_matrix(const QosMatrix& train,
                                                          SimilarityOptions opts = {},
                                                          int threads = 1,
                                                          SimilarityStats* stats = nullptr) {
    detail::resolve_global_median(train, opts);
    const int m = train.num_users();
    std::vector<std::vector<double>> sim(static_cast<std::size_t>(m),
                                         std::vector<double>(static_cast<std::size_t>(m), 0.0));
    detail::parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t a) {
        for (int b = static_cast<int>(a) + 1; b < m; ++b)
            sim[a][static_cast<std::size_t>(b)] =
                fie_similarity(static_cast<int>(a), b, train, opts, stats);
    });
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < a; ++b)
            sim[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                sim[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)];
    return sim;
}

namespace detail {

/// Selects the K highest-similarity users (ties by ascending id) and
/// normalizes their weights.
inline NeighborSet select_top_k(int user, int k, std::span<const double> sims) {
    NeighborSet set;
    set.user_id = user;
    std::vector<std::pair<double, int>> candidates;
    for (int other = 0; other < static_cast<int>(sims.size()); ++other) {
        if (other == user) continue;
        if (sims[static_cast<std::size_t>(other)] > 0.0)
            candidates.emplace_back(sims[static_cast<std::size_t>(other)], other);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    if (static_cast<int>(candidates.size()) > k) candidates.resize(static_cast<std::size_t>(k));
    double total = 0.0;
    for (auto& [s, id] : candidates) total += s;
    for (auto& [s, id] : candidates) set.neighbors.push_back({id, s, s / total});
    return set;
}

} // namespace detail

/// Top-K neighbors of one user (fewer when fewer users have positive
/// similarity). Weights sum to 1 whenever the set is non-empty.
inline NeighborSet top_k_neighbors(int user, int k, const QosMatrix& train,
                                   SimilarityOptions opts = {}, SimilarityStats* stats = nullptr) {
    if (k < 1) throw ArgumentError("K must be >= 1");
    detail::resolve_global_median(train, opts);
    const int m = train.num_users();
    std::vector<double> sims(static_cast<std::size_t>(m), 0.0);
    for (int other = 0; other < m; ++other) {
        if (other == user) continue;
        sims[static_cast<std::size_t>(other)] = fie_similarity(user, other, train, opts, stats);
    }
    return detail::select_top_k(user, k, sims);
}

/// Neighbor sets for every user, from one shared similarity matrix.
inline std::vector<NeighborSet> all_top_k_neighbors(const QosMatrix& train, int k,
                                                    SimilarityOptions opts = {}, int threads = 1,
                                                    SimilarityStats* stats = nullptr) {
    if (k < 1) throw ArgumentError("K must be >= 1");
    const auto sim = similarity_matrix(train, opts, threads, stats);
    std::vector<NeighborSet> sets;
    sets.reserve(sim.size());
    for (int u = 0; u < train.num_users(); ++u)
        sets.push_back(detail::select_top_k(u, k, sim[static_cast<std::size_t>(u)]));
    return sets;
}

/// Writes neighbor sets as `user_id,neighbor_id,similarity,weight` rows.
/// Values keep full precision so a round-trip is exact.
inline void save_neighbors_csv(const std::vector<NeighborSet>& sets,
                               const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open file for writing: " + path.string());
    out << "user_id,neighbor_id,similarity,weight\n";
    char buf[64];
    for (const NeighborSet& set : sets) {
        for (const Neighbor& nb : set.neighbors) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g", set.user_id, nb.id, nb.similarity,
                          nb.weight);
            out << buf << '\n';
        }
    }
}

/// Reads the CSV layout written by save_neighbors_csv. `num_users` sizes the
/// result; users without rows get empty sets.
inline std::vector<NeighborSet> load_neighbors_csv(const std::filesystem::path& path,
                                                   int num_users) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open neighbor file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("neighbor file is empty: " + path.string());
    std::vector<NeighborSet> sets(static_cast<std::size_t>(num_users));
    for (int u = 0; u < num_users; ++u) sets[static_cast<std::size_t>(u)].user_id = u;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::string_view view(line);
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        std::array<std::string_view, 4> f;
        std::size_t start = 0;
        for (int i = 0; i < 4; ++i) {
            const std::size_t pos = i < 3 ? view.find(',', start) : std::string_view::npos;
            if (i < 3 && pos == std::string_view::npos)
                throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
            f[static_cast<std::size_t>(i)] =
                view.substr(start, pos == std::string_view::npos ? view.size() - start : pos - start);
            start = pos + 1;
        }
        const int user = static_cast<int>(detail::parse_double_token(f[0], line_no));
        const int id = static_cast<int>(detail::parse_double_token(f[1], line_no));
        const double s = detail::parse_double_token(f[2], line_no);
        const double w = detail::parse_double_token(f[3], line_no);
        if (user < 0 || user >= num_users || id < 0 || id >= num_users)
            throw IntegrityError("line " + std::to_string(line_no) + ": user id out of range");
        if (!std::isfinite(s) || !std::isfinite(w))
            throw IntegrityError("line " + std::to_string(line_no) + ": non-finite value");
        sets[static_cast<std::size_t>(user)].neighbors.push_back({id, s, w});
    }
    return sets;
}

} // namespace fiemf
