#pragma once

#include <sigk/geometry.hpp>

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sigk::io {

/// Shortest round-trip text for a double (17 significant digits).
[[nodiscard]] inline std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class Seq>
[[nodiscard]] std::string join(const Seq& s)
{
    std::string out;
    bool first = true;
    for (const auto& v : s) {
        if (!first) out += ',';
        first = false;
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
            out += fmt(v);
        else
            out += std::to_string(v);
    }
    return out;
}

inline void write_header(std::ostream& os, const Grid& g)
{
    os << "n=" << g.n << '\n';
    os << "dims=" << join(g.dims) << '\n';
    os << "spacing=" << join(std::vector<double>(g.spacing.data(), g.spacing.data() + g.n)) << '\n';
    os << "origin=" << join(std::vector<double>(g.origin.data(), g.origin.data() + g.n)) << '\n';
}

/// Rows of the given column count, row-major node order.
inline void write_rows(std::ostream& os, const std::vector<std::vector<double>>& rows)
{
    for (const auto& r : rows) os << join(r) << '\n';
}

inline void write_scalar(std::ostream& os, const GridFunction& w)
{
    write_header(os, w.grid);
    for (std::size_t i = 0; i < w.grid.size(); ++i) os << fmt(w[i]) << '\n';
}

/// Metric samples as the n(n+1)/2 upper-triangle entries per node.
inline void write_metric(std::ostream& os, const MetricChart& c)
{
    write_header(os, c.grid);
    const int n = c.dim();
    for (const Mat& g : c.g) {
        std::vector<double> row;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) row.push_back(g(i, j));
        os << join(row) << '\n';
    }
}

struct GridFile {
    Grid grid;
    std::vector<std::vector<double>> rows;
};

namespace detail {

inline std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        try {
            out.push_back(std::stod(item, &used));
        } catch (const std::exception&) {
            throw domain_error("grid file: bad number '" + item + "'");
        }
    }
    return out;
}

inline std::string expect_key(std::istream& is, const std::string& key)
{
    std::string line;
    if (!std::getline(is, line) || line.rfind(key + "=", 0) != 0)
        throw domain_error("grid file: expected header '" + key + "='");
    return line.substr(key.size() + 1);
}

} // namespace detail

[[nodiscard]] inline GridFile read(std::istream& is)
{
    const int n = std::stoi(detail::expect_key(is, "n"));
    const auto d = detail::parse_list(detail::expect_key(is, "dims"));
    const auto h = detail::parse_list(detail::expect_key(is, "spacing"));
    const auto o = detail::parse_list(detail::expect_key(is, "origin"));
    if (static_cast<int>(d.size()) != n || static_cast<int>(h.size()) != n || static_cast<int>(o.size()) != n)
        throw domain_error("grid file: header lengths disagree with n");
    std::vector<int> dims;
    for (double v : d) dims.push_back(static_cast<int>(v));
    GridFile f;
    f.grid = Grid(dims, Eigen::Map<const Vec>(h.data(), n), Eigen::Map<const Vec>(o.data(), n));
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) f.rows.push_back(detail::parse_list(line));
    if (f.rows.size() != f.grid.size()) throw domain_error("grid file: row count does not match dims");
    return f;
}

[[nodiscard]] inline GridFunction read_scalar(std::istream& is)
{
    const GridFile f = read(is);
    GridFunction w(f.grid);
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
        if (f.rows[i].size() != 1) throw domain_error("grid file: scalar field needs one column");
        w[i] = f.rows[i][0];
    }
    return w;
}

[[nodiscard]] inline MetricChart read_metric(std::istream& is, DomainKind kind = DomainKind::box, double a = 0.0,
                                             double b = 0.0)
{
    const GridFile f = read(is);
    const int n = f.grid.n;
    const std::size_t cols = static_cast<std::size_t>(n * (n + 1) / 2);
    std::vector<Mat> gs;
    gs.reserve(f.rows.size());
    for (const auto& r : f.rows) {
        if (r.size() != cols) throw domain_error("grid file: metric needs n(n+1)/2 columns");
        Mat g(n, n);
        std::size_t c = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) g(i, j) = g(j, i) = r[c++];
        gs.push_back(g);
    }
    return MetricChart::from_samples(f.grid, std::move(gs), kind, a, b);
}

} // namespace sigk::io
