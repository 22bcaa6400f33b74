#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fiemf/error.hpp"
#include "fiemf/rng.hpp"

namespace fiemf {

/// One observed invocation: user `user` saw QoS value `value` on service `service`.
struct QosEntry {
    int user;
    int service;
    double value;

    friend bool operator==(const QosEntry&, const QosEntry&) = default;
};

/// Sparse user x service matrix of observed QoS values.
///
/// Entries are canonically ordered by (user, service), every value is finite
/// and > 0, indices are in range and pairs are unique. Immutable after
/// construction, so safe to share across threads.
class QosMatrix {
public:
    QosMatrix(int num_users, int num_services, std::vector<QosEntry> entries)
        : num_users_(num_users), num_services_(num_services), entries_(std::move(entries)) {
        if (num_users_ <= 0 || num_services_ <= 0)
            throw ArgumentError("QosMatrix dimensions must be positive");
        std::sort(entries_.begin(), entries_.end(), [](const QosEntry& a, const QosEntry& b) {
            return a.user != b.user ? a.user < b.user : a.service < b.service;
        });
        user_begin_.assign(static_cast<std::size_t>(num_users_) + 1, 0);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const QosEntry& e = entries_[i];
            if (e.user < 0 || e.user >= num_users_ || e.service < 0 || e.service >= num_services_)
                throw ArgumentError("QosMatrix entry index out of range");
            if (!std::isfinite(e.value) || e.value <= 0.0)
                throw ArgumentError("QosMatrix entry value must be finite and > 0");
            if (i > 0 && entries_[i - 1].user == e.user && entries_[i - 1].service == e.service)
                throw IntegrityError("duplicate (user, service) pair in QosMatrix");
            ++user_begin_[static_cast<std::size_t>(e.user) + 1];
        }
        for (std::size_t u = 1; u < user_begin_.size(); ++u) user_begin_[u] += user_begin_[u - 1];
        if (!entries_.empty()) {
            value_min_ = entries_.front().value;
            value_max_ = value_min_;
            for (const QosEntry& e : entries_) {
                value_min_ = std::min(value_min_, e.value);
                value_max_ = std::max(value_max_, e.value);
                value_sum_ += e.value;
            }
        }
        fingerprint_ = compute_fingerprint();
    }

    int num_users() const { return num_users_; }
    int num_services() const { return num_services_; }
    const std::vector<QosEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    /// Entries of one user, ordered by service id.
    std::span<const QosEntry> user_entries(int user) const {
        check_user(user);
        const std::size_t b = user_begin_[static_cast<std::size_t>(user)];
        const std::size_t e = user_begin_[static_cast<std::size_t>(user) + 1];
        return {entries_.data() + b, e - b};
    }

    /// Observed value at (user, service), or NaN if missing.
    double value_or_nan(int user, int service) const {
        auto span = user_entries(user);
        auto it = std::lower_bound(span.begin(), span.end(), service,
                                   [](const QosEntry& e, int s) { return e.service < s; });
        if (it != span.end() && it->service == service) return it->value;
        return std::numeric_limits<double>::quiet_NaN();
    }

    bool has(int user, int service) const { return !std::isnan(value_or_nan(user, service)); }

    double value_min() const { return value_min_; }
    double value_max() const { return value_max_; }
    double value_mean() const { return entries_.empty() ? 0.0 : value_sum_ / static_cast<double>(entries_.size()); }

    /// FNV-1a hash over dimensions and canonical entries. Stable across
    /// platforms; used to key neighbor caches and validate checkpoints.
    std::uint64_t fingerprint() const { return fingerprint_; }

    std::string fingerprint_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint_));
        return std::string(buf);
    }

private:
    void check_user(int user) const {
        if (user < 0 || user >= num_users_) throw ArgumentError("user id out of range");
    }

    std::uint64_t compute_fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto feed = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xffu;
                h *= 0x100000001b3ull;
            }
        };
        feed(static_cast<std::uint64_t>(num_users_));
        feed(static_cast<std::uint64_t>(num_services_));
        feed(entries_.size());
        for (const QosEntry& e : entries_) {
            feed(static_cast<std::uint64_t>(e.user));
            feed(static_cast<std::uint64_t>(e.service));
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(e.value));
            std::memcpy(&bits, &e.value, sizeof(bits));
            feed(bits);
        }
        return h;
    }

    int num_users_;
    int num_services_;
    std::vector<QosEntry> entries_;
    std::vector<std::size_t> user_begin_;
    double value_min_ = 0.0;
    double value_max_ = 0.0;
    double value_sum_ = 0.0;
    std::uint64_t fingerprint_ = 0;
};

/// Density-controlled partition of a QosMatrix into train and test.
struct Split {
    QosMatrix train;
    QosMatrix test;
    double density;
    std::uint64_t seed;
};

namespace detail {

inline double parse_double_token(std::string_view token, std::size_t line_no) {
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid numeric token '" +
                         std::string(token) + "'");
    }
    return value;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace detail

/// Loads a response-time matrix in the WS-DREAM text layout: one row per
/// user, whitespace-separated decimal values, -1 (or any value <= 0) marking
/// a missing observation.
inline QosMatrix load_rt_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open matrix file: " + path.string());
    std::vector<QosEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    int num_services = -1;
    int user = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto tokens = detail::split_ws(line);
        if (tokens.empty()) continue; // tolerate trailing blank lines
        if (num_services < 0) {
            num_services = static_cast<int>(tokens.size());
        } else if (static_cast<int>(tokens.size()) != num_services) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(num_services) + " columns, got " +
                             std::to_string(tokens.size()));
        }
        for (int s = 0; s < num_services; ++s) {
            const double v = detail::parse_double_token(tokens[static_cast<std::size_t>(s)], line_no);
            if (std::isfinite(v) && v > 0.0) entries.push_back({user, s, v});
        }
        ++user;
    }
    if (user == 0) throw FormatError("matrix file is empty: " + path.string());
    return QosMatrix(user, num_services, std::move(entries));
}

/// Writes the WS-DREAM text layout produced by load_rt_matrix.
inline void save_rt_matrix(const QosMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open file for writing: " + path.string());
    char buf[32];
    for (int u = 0; u < m.num_users(); ++u) {
        auto span = m.user_entries(u);
        std::size_t k = 0;
        for (int s = 0; s < m.num_services(); ++s) {
            if (s > 0) out << ' ';
            if (k < span.size() && span[k].service == s) {
                std::snprintf(buf, sizeof(buf), "%.17g", span[k].value);
                out << buf;
                ++k;
            } else {
                out << "-1";
            }
        }
        out << '\n';
    }
}

/// Writes entries as `user_id,service_id,value` rows with a header.
inline void save_triplets_csv(const QosMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open file for writing: " + path.string());
    out << "user_id,service_id,value\n";
    char buf[32];
    for (const QosEntry& e : m.entries()) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.value);
        out << e.user << ',' << e.service << ',' << buf << '\n';
    }
}

/// Reads a triplet CSV written by save_triplets_csv.
inline QosMatrix load_triplets_csv(const std::filesystem::path& path, int num_users,
                                   int num_services) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open triplet file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("triplet file is empty: " + path.string());
    std::vector<QosEntry> entries;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::string_view view(line);
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        const auto c1 = view.find(',');
        const auto c2 = view.find(',', c1 == std::string_view::npos ? c1 : c1 + 1);
        if (c1 == std::string_view::npos || c2 == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 3 comma-separated fields");
        const int u = static_cast<int>(detail::parse_double_token(view.substr(0, c1), line_no));
        const int s = static_cast<int>(detail::parse_double_token(view.substr(c1 + 1, c2 - c1 - 1), line_no));
        const double v = detail::parse_double_token(view.substr(c2 + 1), line_no);
        entries.push_back({u, s, v});
    }
    return QosMatrix(num_users, num_services, std::move(entries));
}

/// Partitions `source` at the given training density.
///
/// round(density * |entries|) uniformly chosen entries become the training
/// set and the rest the test set. A pure function of (source, density, seed):
/// the draw uses mt19937_64 with a Fisher-Yates shuffle, so the same inputs
/// give the same split on every platform.
inline Split split(const QosMatrix& source, double density, std::uint64_t seed) {
    if (!(density > 0.0 && density < 1.0))
        throw ArgumentError("density must lie strictly between 0 and 1");
    const std::size_t total = source.size();
    const auto train_count =
        static_cast<std::size_t>(std::llround(density * static_cast<double>(total)));
    std::vector<std::uint32_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = static_cast<std::uint32_t>(i);
    std::mt19937_64 gen(seed);
    deterministic_shuffle(order, gen);
    std::vector<QosEntry> train_entries;
    std::vector<QosEntry> test_entries;
    train_entries.reserve(train_count);
    test_entries.reserve(total - train_count);
    const auto& entries = source.entries();
    for (std::size_t i = 0; i < total; ++i) {
        if (i < train_count)
            train_entries.push_back(entries[order[i]]);
        else
            test_entries.push_back(entries[order[i]]);
    }
    return Split{QosMatrix(source.num_users(), source.num_services(), std::move(train_entries)),
                 QosMatrix(source.num_users(), source.num_services(), std::move(test_entries)),
                 density, seed};
}

} // namespace fiemf
