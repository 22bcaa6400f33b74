#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fiemf/error.hpp"

namespace fiemf {

/// Per-user region label (country name), indexed by user id.
struct UserRegionTable {
    std::vector<std::string> region_of_user;

    int num_users() const { return static_cast<int>(region_of_user.size()); }

    int num_regions() const {
        std::set<std::string_view> distinct(region_of_user.begin(), region_of_user.end());
        return static_cast<int>(distinct.size());
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

} // namespace detail

/// Loads a tab-separated user list with a header row. Defaults match the
/// WS-DREAM column names "[User ID]" and "[Country]".
inline UserRegionTable load_user_regions(const std::filesystem::path& path,
                                         const std::string& id_column = "[User ID]",
                                         const std::string& country_column = "[Country]") {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open user list: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("user list is empty: " + path.string());

    int id_col = -1;
    int country_col = -1;
    {
        auto header = detail::split_tabs(line);
        for (std::size_t i = 0; i < header.size(); ++i) {
            const std::string name = detail::trim(header[i]);
            if (name == id_column) id_col = static_cast<int>(i);
            if (name == country_column) country_col = static_cast<int>(i);
        }
    }
    if (id_col < 0)
        throw FormatError("user list header has no '" + id_column + "' column");
    if (country_col < 0)
        throw FormatError("user list header has no '" + country_column + "' column");

    std::vector<std::pair<int, std::string>> rows;
    int max_id = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_tabs(line);
        if (static_cast<int>(fields.size()) <= std::max(id_col, country_col))
            throw ParseError("line " + std::to_string(line_no) + ": too few columns");
        const std::string id_text = detail::trim(fields[static_cast<std::size_t>(id_col)]);
        int user_id = -1;
        try {
            std::size_t consumed = 0;
            user_id = std::stoi(id_text, &consumed);
            if (consumed != id_text.size()) throw std::invalid_argument(id_text);
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid user id '" + id_text + "'");
        }
        if (user_id < 0)
            throw ParseError("line " + std::to_string(line_no) + ": negative user id");
        rows.emplace_back(user_id, detail::trim(fields[static_cast<std::size_t>(country_col)]));
        max_id = std::max(max_id, user_id);
    }
    if (rows.empty()) throw FormatError("user list has no data rows: " + path.string());

    UserRegionTable table;
    table.region_of_user.assign(static_cast<std::size_t>(max_id) + 1, std::string());
    std::vector<bool> seen(static_cast<std::size_t>(max_id) + 1, false);
    for (auto& [id, country] : rows) {
        if (seen[static_cast<std::size_t>(id)])
            throw IntegrityError("duplicate user id " + std::to_string(id) + " in user list");
        seen[static_cast<std::size_t>(id)] = true;
        table.region_of_user[static_cast<std::size_t>(id)] = std::move(country);
    }
    std::string missing;
    for (std::size_t id = 0; id < seen.size(); ++id) {
        if (!seen[id]) {
            if (!missing.empty()) missing += ", ";
            missing += std::to_string(id);
        }
    }
    if (!missing.empty())
        throw IntegrityError("user list has gaps; missing user ids: " + missing);
    return table;
}

} // namespace fiemf
