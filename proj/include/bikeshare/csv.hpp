#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bikeshare/errors.hpp"

namespace bikeshare::csv {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Splits one delimited line. Double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_line(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string quote_if_needed(const std::string& s, char delim = ',') {
    if (s.find_first_of(std::string{delim, '"', '\n'}) == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q.push_back('"');
        q.push_back(ch);
    }
    q.push_back('"');
    return q;
}

/// Header plus rows of numeric columns.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw IngestError("csv: no column named '" + std::string(name) + "'");
    }
};

inline void write_table(std::ostream& os, const Table& t) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (i) os << ',';
        os << quote_if_needed(t.header[i]);
    }
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << format_double(row[i]);
        }
        os << '\n';
    }
}

inline void write_table(const std::string& path, const Table& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestError("csv: cannot open " + path + " for writing");
    write_table(os, t);
    if (!os) throw IngestError("csv: write failed for " + path);
}

/// Reads a numeric table; every data cell must parse as a number.
inline Table read_table(std::istream& is) {
    Table t;
    std::string line;
    if (!std::getline(is, line)) throw IngestError("csv: missing header row");
    t.header = split_line(line);
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() != t.header.size())
            throw IngestError("csv: wrong field count on line " + std::to_string(line_no));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            const auto v = parse_double(c);
            if (!v) throw IngestError("csv: non-numeric cell on line " + std::to_string(line_no));
            row.push_back(*v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("csv: cannot open " + path);
    return read_table(is);
}

}  // namespace bikeshare::csv
