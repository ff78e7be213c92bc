#pragma once

#include <sigk/cones.hpp>
#include <sigk/grid.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace sigk {

enum class DomainKind { box, annulus, half_space_slab };

/// Christoffel symbols Gamma^k_ij stored at [k*n*n + i*n + j].
using Christoffel = std::vector<double>;

[[nodiscard]] inline double& gam(Christoffel& c, int n, int k, int i, int j)
{
    return c[static_cast<std::size_t>((k * n + i) * n + j)];
}
[[nodiscard]] inline double gam(const Christoffel& c, int n, int k, int i, int j)
{
    return c[static_cast<std::size_t>((k * n + i) * n + j)];
}

/// Gamma^k_ij = 1/2 g^{kl}(d_i g_jl + d_j g_il - d_l g_ij), dg[l] = d_l g.
[[nodiscard]] inline Christoffel christoffel_from(const Mat& ginv, const std::vector<Mat>& dg)
{
    const int n = static_cast<int>(ginv.rows());
    Christoffel c(static_cast<std::size_t>(n * n * n), 0.0);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double s = 0.0;
                for (int l = 0; l < n; ++l) s += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                gam(c, n, k, i, j) = gam(c, n, k, j, i) = 0.5 * s;
            }
    return c;
}

/// Ric_ij = d_k G^k_ij - d_j G^k_ik + G^k_kl G^l_ij - G^k_jl G^l_ik, dG[m] = d_m Gamma.
[[nodiscard]] inline Mat ricci_from(const Christoffel& c, const std::vector<Christoffel>& dc, int n)
{
    Mat ric = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) {
                s += gam(dc[static_cast<std::size_t>(k)], n, k, i, j) - gam(dc[static_cast<std::size_t>(j)], n, k, i, k);
                for (int l = 0; l < n; ++l)
                    s += gam(c, n, k, k, l) * gam(c, n, l, i, j) - gam(c, n, k, j, l) * gam(c, n, l, i, k);
            }
            ric(i, j) = ric(j, i) = s;
        }
    return ric;
}

/// A = (Ric - tau Sc/(2(n-1)) g)/(n-2).
[[nodiscard]] inline Mat schouten_from(const Mat& ric, const Mat& g, const Mat& ginv, double tau = 1.0)
{
    const int n = static_cast<int>(g.rows());
    if (n < 3) throw domain_error("schouten: n >= 3 required");
    const double sc = (ginv.array() * ric.array()).sum();
    return (ric - tau * sc / (2.0 * (n - 1)) * g) / (n - 2.0);
}

/// Grid-sampled Riemannian metric.
struct MetricChart {
    Grid grid;
    DomainKind kind = DomainKind::box;
    double inner = 0.0;  ///< annulus radii
    double outer = 0.0;
    std::vector<Mat> g, ginv, w;  ///< w = sqrt(g^{-1})
    std::vector<std::uint8_t> inside;

    static MetricChart sample(const Grid& grid, const std::function<Mat(const Vec&)>& metric,
                              DomainKind kind = DomainKind::box, double a = 0.0, double b = 0.0)
    {
        std::vector<Mat> gs;
        gs.reserve(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) gs.push_back(metric(grid.coord(i)));
        return from_samples(grid, std::move(gs), kind, a, b);
    }

    static MetricChart flat(const Grid& grid, DomainKind kind = DomainKind::box, double a = 0.0, double b = 0.0)
    {
        const int n = grid.n;
        return sample(grid, [n](const Vec&) { return Mat(Mat::Identity(n, n)); }, kind, a, b);
    }

    static MetricChart from_samples(const Grid& grid, std::vector<Mat> gs, DomainKind kind = DomainKind::box,
                                    double a = 0.0, double b = 0.0)
    {
        grid.validate();
        if (gs.size() != grid.size()) throw domain_error("MetricChart: sample count mismatch");
        MetricChart c;
        c.grid = grid;
        c.kind = kind;
        c.inner = a;
        c.outer = b;
        c.g = std::move(gs);
        c.ginv.reserve(grid.size());
        c.w.reserve(grid.size());
        c.inside.assign(grid.size(), 1);
        const Mat id = Mat::Identity(grid.n, grid.n);
        const bool flat_samples = std::all_of(c.g.begin(), c.g.end(), [&](const Mat& m) { return m == id; });
        for (std::size_t i = 0; i < grid.size(); ++i) {
            c.g[i] = symmetrized(c.g[i]);
            if (flat_samples) {
                c.ginv.push_back(Mat::Identity(grid.n, grid.n));
                c.w.push_back(Mat::Identity(grid.n, grid.n));
                continue;
            }
            const SymEigen e = jacobi_eigen(c.g[i]);
            if (!(e.values(0) > 1e-10)) throw domain_error("MetricChart: metric not positive definite");
            const Mat inv = e.vectors * e.values.cwiseInverse().asDiagonal() * e.vectors.transpose();
            c.ginv.push_back(0.5 * (inv + inv.transpose()));
            const Mat wi = e.vectors * e.values.cwiseInverse().cwiseSqrt().asDiagonal() * e.vectors.transpose();
            c.w.push_back(0.5 * (wi + wi.transpose()));
        }
        if (kind == DomainKind::annulus) {
            if (!(0.0 < a && a < b)) throw domain_error("MetricChart: annulus needs 0 < a < b");
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const double r = grid.coord(i).norm();
                c.inside[i] = (r >= a - 1e-12 && r <= b + 1e-12) ? 1 : 0;
            }
        }
        return c;
    }

    [[nodiscard]] int dim() const { return grid.n; }

    /// Inside the domain with every stencil neighbor (including diagonals) inside.
    [[nodiscard]] bool interior(std::size_t node) const
    {
        if (!inside[node] || grid.on_edge(node)) return false;
        if (kind != DomainKind::annulus) return true;
        const int n = grid.n;
        for (int a = 0; a < n; ++a)
            for (int sa : {-1, 1}) {
                const std::size_t na = static_cast<std::size_t>(static_cast<long long>(node) + sa * static_cast<long long>(grid.stride(a)));
                if (!inside[na]) return false;
                for (int b = a + 1; b < n; ++b)
                    for (int sb : {-1, 1}) {
                        const auto nb = static_cast<std::size_t>(static_cast<long long>(na) + sb * static_cast<long long>(grid.stride(b)));
                        if (!inside[nb]) return false;
                    }
            }
        return true;
    }

    [[nodiscard]] Christoffel christoffel_at(std::size_t node) const
    {
        const int n = grid.n;
        std::vector<Mat> dg(static_cast<std::size_t>(n));
        for (int l = 0; l < n; ++l) dg[static_cast<std::size_t>(l)] = diff1(grid, [&](std::size_t j) { return Mat(g[j]); }, node, l);
        return christoffel_from(ginv[node], dg);
    }

    [[nodiscard]] Mat ricci_at(std::size_t node) const
    {
        const int n = grid.n;
        std::vector<Christoffel> dc(static_cast<std::size_t>(n));
        for (int m = 0; m < n; ++m) {
            auto cm = [&](std::size_t j) {
                const Christoffel c = christoffel_at(j);
                return Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size())).eval();
            };
            const Vec d = diff1(grid, cm, node, m);
            dc[static_cast<std::size_t>(m)] = Christoffel(d.data(), d.data() + d.size());
        }
        return ricci_from(christoffel_at(node), dc, n);
    }

    [[nodiscard]] Mat schouten_at(std::size_t node, double tau = 1.0) const
    {
        return schouten_from(ricci_at(node), g[node], ginv[node], tau);
    }
};

[[nodiscard]] inline std::vector<Christoffel> christoffel(const MetricChart& chart)
{
    std::vector<Christoffel> out(chart.grid.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = chart.christoffel_at(i);
    return out;
}

[[nodiscard]] inline std::vector<Mat> schouten(const MetricChart& chart)
{
    if (chart.dim() < 3) throw domain_error("schouten: n >= 3 required");
    const int n = chart.dim();
    const std::size_t N = chart.grid.size();
    const std::vector<Christoffel> cs = christoffel(chart);
    std::vector<Mat> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<Christoffel> dc(static_cast<std::size_t>(n));
        for (int m = 0; m < n; ++m) {
            auto cm = [&](std::size_t j) {
                return Eigen::Map<const Vec>(cs[j].data(), static_cast<Eigen::Index>(cs[j].size())).eval();
            };
            const Vec d = diff1(chart.grid, cm, i, m);
            dc[static_cast<std::size_t>(m)] = Christoffel(d.data(), d.data() + d.size());
        }
        out[i] = schouten_from(ricci_from(cs[i], dc, n), chart.g[i], chart.ginv[i]);
    }
    return out;
}

/// Lower-order terms of W(D^2 w + L(x, Dw))W for the negative-cone operator
///   L0 = -A_g, L1_ij = -Gamma^k_ij p_k, L2 = -p p^T + 1/2 |p|_g^2 g,
/// so that W(D^2 w + L)W = -e^{2w} g_w^{-1} A_{g_w} in the W frame.
/// Data are callables of a point so that rescaled problems can evaluate off-grid.
struct LowerOrderTerms {
    int n = 3;
    std::function<Mat(const Vec&)> schouten;      ///< A_g(x)
    std::function<Christoffel(const Vec&)> gamma;  ///< Gamma(x)
    std::function<Mat(const Vec&)> metric;        ///< g(x)
    std::function<Mat(const Vec&)> metric_inv;    ///< g^{-1}(x)
    std::function<Mat(const Vec&)> w;             ///< sqrt(g^{-1})(x)
    bool flat = false;

    [[nodiscard]] Mat L0(const Vec& x) const { return flat ? Mat(Mat::Zero(n, n)) : Mat(-schouten(x)); }

    [[nodiscard]] Mat L1(const Vec& x, const Vec& p) const
    {
        if (flat) return Mat::Zero(n, n);
        const Christoffel c = gamma(x);
        Mat m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int k = 0; k < n; ++k) s += gam(c, n, k, i, j) * p(k);
                m(i, j) = -s;
            }
        return m;
    }

    [[nodiscard]] Mat L2(const Vec& x, const Vec& p) const
    {
        if (flat) return Mat(-p * p.transpose() + 0.5 * p.squaredNorm() * Mat::Identity(n, n));
        const Mat gi = metric_inv(x);
        return -p * p.transpose() + 0.5 * p.dot(gi * p) * metric(x);
    }

    [[nodiscard]] Mat L(const Vec& x, const Vec& p) const { return L0(x) + L1(x, p) + L2(x, p); }

    /// d L_ij / d p_s.
    [[nodiscard]] std::vector<Mat> dL_dp(const Vec& x, const Vec& p) const
    {
        std::vector<Mat> out(static_cast<std::size_t>(n));
        const Mat g = flat ? Mat(Mat::Identity(n, n)) : metric(x);
        const Mat gi = flat ? Mat(Mat::Identity(n, n)) : metric_inv(x);
        const Vec gip = gi * p;
        Christoffel c;
        if (!flat) c = gamma(x);
        for (int s = 0; s < n; ++s) {
            Mat d = Mat::Zero(n, n);
            Vec es = Vec::Zero(n);
            es(s) = 1.0;
            d -= es * p.transpose() + p * es.transpose();
            d += gip(s) * g;
            if (!flat)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) d(i, j) -= gam(c, n, s, i, j);
            out[static_cast<std::size_t>(s)] = d;
        }
        return out;
    }

    [[nodiscard]] Mat W(const Vec& x) const { return flat ? Mat(Mat::Identity(n, n)) : w(x); }

    static LowerOrderTerms flat_space(int n)
    {
        LowerOrderTerms t;
        t.n = n;
        t.flat = true;
        return t;
    }
};

/// Lower-order terms of a chart, evaluated at the nearest node (exact at nodes).
[[nodiscard]] inline LowerOrderTerms assemble_L(const MetricChart& chart)
{
    const int n = chart.dim();
    auto a = std::make_shared<std::vector<Mat>>(schouten(chart));
    auto cs = std::make_shared<std::vector<Christoffel>>(christoffel(chart));
    auto ch = std::make_shared<MetricChart>(chart);
    LowerOrderTerms t;
    t.n = n;
    t.schouten = [a, ch](const Vec& x) { return (*a)[ch->grid.nearest(x)]; };
    t.gamma = [cs, ch](const Vec& x) { return (*cs)[ch->grid.nearest(x)]; };
    t.metric = [ch](const Vec& x) { return ch->g[ch->grid.nearest(x)]; };
    t.metric_inv = [ch](const Vec& x) { return ch->ginv[ch->grid.nearest(x)]; };
    t.w = [ch](const Vec& x) { return ch->w[ch->grid.nearest(x)]; };
    return t;
}

/// Lower-order terms of an analytic metric; Christoffel and Schouten by
/// centered differences of metric samples with step h.
[[nodiscard]] inline LowerOrderTerms analytic_L(int n, std::function<Mat(const Vec&)> metric, double h = 1e-3)
{
    auto gfun = std::make_shared<std::function<Mat(const Vec&)>>(std::move(metric));
    auto inv = [gfun](const Vec& x) { return Mat((*gfun)(x).inverse()); };
    auto gamma = [gfun, inv, n, h](const Vec& x) {
        std::vector<Mat> dg(static_cast<std::size_t>(n));
        for (int l = 0; l < n; ++l) {
            Vec xp = x, xm = x;
            xp(l) += h;
            xm(l) -= h;
            dg[static_cast<std::size_t>(l)] = ((*gfun)(xp) - (*gfun)(xm)) / (2 * h);
        }
        return christoffel_from(inv(x), dg);
    };
    LowerOrderTerms t;
    t.n = n;
    t.metric = *gfun;
    t.metric_inv = inv;
    t.gamma = gamma;
    t.w = [gfun](const Vec& x) { return sqrt_spd(Mat((*gfun)(x).inverse())); };
    t.schouten = [gfun, inv, gamma, n, h](const Vec& x) {
        std::vector<Christoffel> dc(static_cast<std::size_t>(n));
        for (int m = 0; m < n; ++m) {
            Vec xp = x, xm = x;
            xp(m) += h;
            xm(m) -= h;
            const Christoffel cp = gamma(xp), cm = gamma(xm);
            Christoffel d(cp.size());
            for (std::size_t q = 0; q < d.size(); ++q) d[q] = (cp[q] - cm[q]) / (2 * h);
            dc[static_cast<std::size_t>(m)] = d;
        }
        return schouten_from(ricci_from(gamma(x), dc, n), (*gfun)(x), inv(x));
    };
    return t;
}

/// Field of symmetric matrices with cached spectra.
struct AugmentedField {
    std::vector<Mat> matrices;
    std::vector<Spectrum> spectra;
    std::vector<std::uint8_t> valid;  ///< node carries a value

    void finalize()
    {
        spectra.resize(matrices.size());
        for (std::size_t i = 0; i < matrices.size(); ++i)
            if (valid[i]) spectra[i] = eigenvalues(matrices[i]);
    }
};

/// Adds c tr(M) I with c = (1 - tau)/(n - 2): the tau-modified Schouten term
/// in the W frame.
[[nodiscard]] inline Mat tau_shift(const Mat& m, double tau)
{
    const auto n = m.rows();
    if (tau == 1.0) return m;
    return m + (1.0 - tau) / (n - 2.0) * m.trace() * Mat::Identity(n, n);
}

namespace detail {

inline Mat schouten_pullback_w(const GridFunction& w, const MetricChart& chart, std::size_t node,
                               const Christoffel& c, const Mat& a)
{
    const int n = chart.dim();
    const Vec p = w.gradient(node);
    Mat hess = w.hessian(node);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) hess(i, j) -= gam(c, n, k, i, j) * p(k);
    const Mat& g = chart.g[node];
    const double p2 = p.dot(chart.ginv[node] * p);
    const Mat s = -hess + p * p.transpose() - 0.5 * p2 * g;
    const Mat& wm = chart.w[node];
    Mat out = std::exp(-2.0 * w[node]) * wm * (s + a) * wm;
    return 0.5 * (out + out.transpose());
}

} // namespace detail

/// e^{-2w} W (S(w,g) + A_g) W, whose spectra are those of g_w^{-1} A_{g_w};
/// evaluated at interior nodes.
[[nodiscard]] inline AugmentedField conformal_schouten(const GridFunction& w, const MetricChart& chart)
{
    if (chart.dim() < 3) throw domain_error("conformal_schouten: n >= 3 required");
    if (!(w.grid == chart.grid)) throw domain_error("conformal_schouten: grid mismatch");
    const std::vector<Mat> a = schouten(chart);
    const std::size_t N = chart.grid.size();
    AugmentedField out;
    out.matrices.assign(N, Mat());
    out.valid.assign(N, 0);
    for (std::size_t i = 0; i < N; ++i) {
        if (!chart.interior(i)) continue;
        out.matrices[i] = detail::schouten_pullback_w(w, chart, i, chart.christoffel_at(i), a[i]);
        out.valid[i] = 1;
    }
    out.finalize();
    return out;
}

/// e^{-2w} W A^tau_{g_w} W with A^tau = (Ric - tau Sc/(2(n-1)) g)/(n-2).
[[nodiscard]] inline AugmentedField modified_schouten_tau(const GridFunction& w, const MetricChart& chart, double tau)
{
    if (!(tau >= 0.0 && tau <= 1.0)) throw domain_error("modified_schouten_tau: tau in [0,1] required");
    AugmentedField f = conformal_schouten(w, chart);
    for (std::size_t i = 0; i < f.matrices.size(); ++i)
        if (f.valid[i]) f.matrices[i] = tau_shift(f.matrices[i], tau);
    f.finalize();
    return f;
}

/// W(D^2 w + L(x, Dw))W at interior nodes (negative-cone orientation).
[[nodiscard]] inline AugmentedField augmented_field(const GridFunction& w, const MetricChart& chart,
                                                    const LowerOrderTerms& terms, double tau = 1.0)
{
    const std::size_t N = chart.grid.size();
    AugmentedField out;
    out.matrices.assign(N, Mat());
    out.valid.assign(N, 0);
    for (std::size_t i = 0; i < N; ++i) {
        if (!chart.interior(i)) continue;
        const Vec x = chart.grid.coord(i);
        const Vec p = w.gradient(i);
        const Mat wm = terms.W(x);
        Mat m = wm * (w.hessian(i) + terms.L(x, p)) * wm;
        out.matrices[i] = tau_shift(Mat(0.5 * (m + m.transpose())), tau);
        out.valid[i] = 1;
    }
    out.finalize();
    return out;
}

} // namespace sigk
