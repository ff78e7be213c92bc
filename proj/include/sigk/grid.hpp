#pragma once

#include <sigk/symfun.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <type_traits>
#include <vector>

namespace sigk {

/// Uniform Cartesian grid, row-major (last axis fastest).
struct Grid {
    int n = 0;
    std::vector<int> dims;
    Vec spacing;
    Vec origin;

    Grid() = default;
    Grid(std::vector<int> d, Vec h, Vec o) : n(static_cast<int>(d.size())), dims(std::move(d)), spacing(std::move(h)), origin(std::move(o))
    {
        validate();
    }

    /// Grid covering [lo, hi] with the given step on every axis.
    static Grid box(const Vec& lo, const Vec& hi, double h)
    {
        std::vector<int> d(static_cast<std::size_t>(lo.size()));
        Vec step(lo.size());
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
            d[static_cast<std::size_t>(i)] = static_cast<int>(std::lround((hi(i) - lo(i)) / h)) + 1;
            step(i) = (hi(i) - lo(i)) / (d[static_cast<std::size_t>(i)] - 1);
        }
        return Grid(d, step, lo);
    }

    void validate() const
    {
        if (n < 1 || static_cast<int>(dims.size()) != n || spacing.size() != n || origin.size() != n)
            throw domain_error("Grid: inconsistent dimensions");
        for (int i = 0; i < n; ++i) {
            if (dims[static_cast<std::size_t>(i)] < 5) throw domain_error("Grid: at least 5 points per axis");
            if (!(spacing(i) > 0.0)) throw domain_error("Grid: spacing must be positive");
        }
    }

    [[nodiscard]] std::size_t size() const
    {
        std::size_t s = 1;
        for (int d : dims) s *= static_cast<std::size_t>(d);
        return s;
    }

    [[nodiscard]] std::size_t stride(int axis) const
    {
        std::size_t s = 1;
        for (int i = n - 1; i > axis; --i) s *= static_cast<std::size_t>(dims[static_cast<std::size_t>(i)]);
        return s;
    }

    [[nodiscard]] int pos(std::size_t node, int axis) const
    {
        return static_cast<int>((node / stride(axis)) % static_cast<std::size_t>(dims[static_cast<std::size_t>(axis)]));
    }

    [[nodiscard]] std::vector<int> multi(std::size_t node) const
    {
        std::vector<int> m(static_cast<std::size_t>(n));
        for (int i = n - 1; i >= 0; --i) {
            const auto d = static_cast<std::size_t>(dims[static_cast<std::size_t>(i)]);
            m[static_cast<std::size_t>(i)] = static_cast<int>(node % d);
            node /= d;
        }
        return m;
    }

    [[nodiscard]] std::size_t index(const std::vector<int>& m) const
    {
        std::size_t idx = 0;
        for (int i = 0; i < n; ++i)
            idx = idx * static_cast<std::size_t>(dims[static_cast<std::size_t>(i)]) + static_cast<std::size_t>(m[static_cast<std::size_t>(i)]);
        return idx;
    }

    [[nodiscard]] Vec coord(std::size_t node) const
    {
        Vec x(n);
        for (int i = n - 1; i >= 0; --i) {
            const auto d = static_cast<std::size_t>(dims[static_cast<std::size_t>(i)]);
            x(i) = origin(i) + spacing(i) * static_cast<double>(node % d);
            node /= d;
        }
        return x;
    }

    [[nodiscard]] bool on_edge(std::size_t node) const
    {
        for (int i = 0; i < n; ++i) {
            const int p = pos(node, i);
            if (p == 0 || p == dims[static_cast<std::size_t>(i)] - 1) return true;
        }
        return false;
    }

    /// Node nearest to x (clamped to the grid).
    [[nodiscard]] std::size_t nearest(const Vec& x) const
    {
        std::vector<int> m(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int p = static_cast<int>(std::lround((x(i) - origin(i)) / spacing(i)));
            m[static_cast<std::size_t>(i)] = std::clamp(p, 0, dims[static_cast<std::size_t>(i)] - 1);
        }
        return index(m);
    }

    [[nodiscard]] bool operator==(const Grid& o) const
    {
        return n == o.n && dims == o.dims && spacing == o.spacing && origin == o.origin;
    }
};

/// First derivative of a nodal quantity along one axis: centered where both
/// neighbors exist, second-order one-sided at the grid edge.
template <class F>
[[nodiscard]] auto diff1(const Grid& grid, F&& f, std::size_t node, int axis)
{
    using R = std::decay_t<std::invoke_result_t<F&, std::size_t>>;
    const int p = grid.pos(node, axis);
    const int last = grid.dims[static_cast<std::size_t>(axis)] - 1;
    const std::size_t s = grid.stride(axis);
    const double h = grid.spacing(axis);
    if (p == 0) return R(((-3.0) * f(node) + 4.0 * f(node + s) - f(node + 2 * s)) / (2.0 * h));
    if (p == last) return R((3.0 * f(node) - 4.0 * f(node - s) + f(node - 2 * s)) / (2.0 * h));
    return R((f(node + s) - f(node - s)) / (2.0 * h));
}

/// Pure second derivative along one axis, second order everywhere.
template <class F>
[[nodiscard]] auto diff2(const Grid& grid, F&& f, std::size_t node, int axis)
{
    using R = std::decay_t<std::invoke_result_t<F&, std::size_t>>;
    const int p = grid.pos(node, axis);
    const int last = grid.dims[static_cast<std::size_t>(axis)] - 1;
    const std::size_t s = grid.stride(axis);
    const double h2 = grid.spacing(axis) * grid.spacing(axis);
    if (p == 0) return R((2.0 * f(node) - 5.0 * f(node + s) + 4.0 * f(node + 2 * s) - f(node + 3 * s)) / h2);
    if (p == last) return R((2.0 * f(node) - 5.0 * f(node - s) + 4.0 * f(node - 2 * s) - f(node - 3 * s)) / h2);
    return R((f(node + s) - 2.0 * f(node) + f(node - s)) / h2);
}

/// Scalar nodal field with boundary flags.
struct GridFunction {
    Grid grid;
    Vec values;
    std::vector<std::uint8_t> boundary;

    GridFunction() = default;
    explicit GridFunction(const Grid& g) : grid(g), values(Vec::Zero(static_cast<Eigen::Index>(g.size()))), boundary(g.size(), 0)
    {
        for (std::size_t i = 0; i < g.size(); ++i) boundary[i] = g.on_edge(i) ? 1 : 0;
    }

    static GridFunction from(const Grid& g, const std::function<double(const Vec&)>& fn)
    {
        GridFunction w(g);
        for (std::size_t i = 0; i < g.size(); ++i) w.values(static_cast<Eigen::Index>(i)) = fn(g.coord(i));
        return w;
    }

    [[nodiscard]] double operator[](std::size_t i) const { return values(static_cast<Eigen::Index>(i)); }
    double& operator[](std::size_t i) { return values(static_cast<Eigen::Index>(i)); }

    [[nodiscard]] Vec gradient(std::size_t node) const
    {
        Vec p(grid.n);
        auto f = [&](std::size_t j) { return (*this)[j]; };
        for (int a = 0; a < grid.n; ++a) p(a) = diff1(grid, f, node, a);
        return p;
    }

    [[nodiscard]] Mat hessian(std::size_t node) const
    {
        const int n = grid.n;
        Mat h(n, n);
        auto f = [&](std::size_t j) { return (*this)[j]; };
        for (int a = 0; a < n; ++a) {
            h(a, a) = diff2(grid, f, node, a);
            for (int b = a + 1; b < n; ++b) {
                auto fa = [&](std::size_t j) { return diff1(grid, f, j, a); };
                h(a, b) = h(b, a) = diff1(grid, fa, node, b);
            }
        }
        return h;
    }
};

} // namespace sigk
