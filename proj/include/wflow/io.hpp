#ifndef WFLOW_IO_HPP
#define WFLOW_IO_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wflow/measures.hpp"

namespace wflow {

/// Formats a double with 17 significant digits, enough to round-trip.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline double parse_double(const std::string& field, const std::string& where) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &pos);
    } catch (...) {
        throw InvalidArgument(where + ": cannot parse '" + field + "' as a number");
    }
    while (pos < field.size() && (field[pos] == ' ' || field[pos] == '\r' || field[pos] == '\t')) ++pos;
    if (pos != field.size()) throw InvalidArgument(where + ": trailing characters in '" + field + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Point-cloud CSV: one particle per line, d comma-separated fields, no header.
inline void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud) {
    const Matrix& x = cloud.positions();
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index c = 0; c < x.cols(); ++c) {
            if (c) os << ',';
            os << format_double(x(i, c));
        }
        os << '\n';
    }
}

inline void write_cloud_csv(const std::string& path, const ParticleCloud& cloud) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_cloud_csv(os, cloud);
}

inline ParticleCloud read_cloud_csv(std::istream& is, const std::string& name = "<stream>") {
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        std::vector<double> row;
        for (const auto& f : detail::split_csv_line(line)) row.push_back(detail::parse_double(f, where));
        if (!rows.empty() && row.size() != rows.front().size())
            throw InvalidArgument(where + ": expected " + std::to_string(rows.front().size()) + " fields, got " +
                                  std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InvalidArgument(name + ": empty point cloud");
    Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < x.rows(); ++i)
        for (Index c = 0; c < x.cols(); ++c) x(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    return ParticleCloud(std::move(x));
}

inline ParticleCloud read_cloud_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_cloud_csv(is, path);
}

}  // namespace wflow

#endif  // WFLOW_IO_HPP
