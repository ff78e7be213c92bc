#pragma once

#include <sigk/equation.hpp>
#include <sigk/geometry.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sigk {

struct Paraboloid {
    Vec base;
    double value = 0.0;
    Vec gradient;
    Mat hessian;

    [[nodiscard]] double operator()(const Vec& x) const
    {
        const Vec d = x - base;
        return value + gradient.dot(d) + 0.5 * d.dot(hessian * d);
    }

    [[nodiscard]] Vec grad_at(const Vec& x) const { return gradient + hessian * (x - base); }
};

struct JetReport {
    Paraboloid paraboloid;
    std::vector<std::pair<double, double>> remainders;  ///< (r, sup |w - P_r| on the ball of radius r)
    double beta = 0.0;
    bool exact = false;  ///< w is a paraboloid to round-off; beta not meaningful
};

struct SingularMask {
    std::vector<std::uint8_t> flags;
    std::vector<std::uint8_t> evaluated;  ///< node had enough interior margin
    std::vector<double> beta;
    double threshold = 1.9;
    std::vector<double> radii_used;

    [[nodiscard]] std::size_t count() const { return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1)); }
    [[nodiscard]] std::size_t evaluated_count() const
    {
        return static_cast<std::size_t>(std::count(evaluated.begin(), evaluated.end(), 1));
    }
    [[nodiscard]] double fraction() const
    {
        const std::size_t e = evaluated_count();
        return e ? static_cast<double>(count()) / static_cast<double>(e) : 0.0;
    }
};

enum class Verdict { subsolution_ok, supersolution_ok, both, neither, inconclusive };

[[nodiscard]] inline const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::subsolution_ok: return "subsolution_ok";
    case Verdict::supersolution_ok: return "supersolution_ok";
    case Verdict::both: return "both";
    case Verdict::neither: return "neither";
    case Verdict::inconclusive: return "inconclusive";
    }
    return "?";
}

struct PointVerdict {
    Verdict status = Verdict::inconclusive;
    Spectrum cone_spectrum;  ///< spectrum of the jet itself
    double residual = std::numeric_limits<double>::quiet_NaN();
    double beta = 0.0;
    bool sub_vacuous = false;
    bool super_vacuous = false;
    std::vector<Verdict> ladder;  ///< verdict per eps, largest first
};

/// Least-squares quadratic fits on balls around a node, with the design
/// pseudo-inverse shared by all nodes of a uniform grid.
class BallStencil {
public:
    BallStencil(const Grid& grid, double radius) : radius_(radius), n_(grid.n)
    {
        std::vector<int> reach(static_cast<std::size_t>(n_));
        for (int a = 0; a < n_; ++a) reach[static_cast<std::size_t>(a)] = static_cast<int>(std::floor(radius / grid.spacing(a) + 1e-9));
        reach_ = *std::max_element(reach.begin(), reach.end());
        std::vector<int> m(static_cast<std::size_t>(n_), 0);
        for (int a = 0; a < n_; ++a) m[static_cast<std::size_t>(a)] = -reach[static_cast<std::size_t>(a)];
        std::vector<Vec> pts;
        while (true) {
            Vec d(n_);
            long long off = 0;
            for (int a = 0; a < n_; ++a) {
                d(a) = m[static_cast<std::size_t>(a)] * grid.spacing(a);
                off += m[static_cast<std::size_t>(a)] * static_cast<long long>(grid.stride(a));
            }
            if (d.norm() <= radius * (1.0 + 1e-12)) {
                offsets_.push_back(off);
                steps_.push_back(m);
                pts.push_back(d);
            }
            int a = n_ - 1;
            while (a >= 0 && ++m[static_cast<std::size_t>(a)] > reach[static_cast<std::size_t>(a)]) {
                m[static_cast<std::size_t>(a)] = -reach[static_cast<std::size_t>(a)];
                --a;
            }
            if (a < 0) break;
        }
        const int q = 1 + n_ + n_ * (n_ + 1) / 2;
        if (static_cast<int>(pts.size()) < q) throw domain_error("jet fit: ball holds too few nodes for a 2-jet");
        design_ = Mat(static_cast<Eigen::Index>(pts.size()), q);
        for (std::size_t r = 0; r < pts.size(); ++r) design_.row(static_cast<Eigen::Index>(r)) = monomials(pts[r]).transpose();
        pinv_ = design_.completeOrthogonalDecomposition().pseudoInverse();
    }

    [[nodiscard]] double radius() const { return radius_; }
    [[nodiscard]] int reach() const { return reach_; }

    /// Whether the full ball around node lies on the grid.
    [[nodiscard]] bool fits(const Grid& grid, std::size_t node) const
    {
        for (int a = 0; a < n_; ++a) {
            const int p = grid.pos(node, a);
            if (p - reach_ < 0 || p + reach_ > grid.dims[static_cast<std::size_t>(a)] - 1) return false;
        }
        return true;
    }

    /// Coefficients (1, x_i, x_i x_j for i <= j) and sup residual.
    [[nodiscard]] std::pair<Vec, double> fit(const Vec& values, std::size_t node) const
    {
        Vec v(static_cast<Eigen::Index>(offsets_.size()));
        for (std::size_t i = 0; i < offsets_.size(); ++i)
            v(static_cast<Eigen::Index>(i)) = values(static_cast<Eigen::Index>(static_cast<long long>(node) + offsets_[i]));
        const Vec c = pinv_ * v;
        const double res = (design_ * c - v).cwiseAbs().maxCoeff();
        return {c, res};
    }

    [[nodiscard]] static Vec monomials(const Vec& d)
    {
        const auto n = d.size();
        Vec m(1 + n + n * (n + 1) / 2);
        m(0) = 1.0;
        m.segment(1, n) = d;
        Eigen::Index c = 1 + n;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) m(c++) = d(i) * d(j);
        return m;
    }

    [[nodiscard]] static Paraboloid paraboloid(const Vec& coeffs, const Vec& base)
    {
        const auto n = base.size();
        Paraboloid p;
        p.base = base;
        p.value = coeffs(0);
        p.gradient = coeffs.segment(1, n);
        p.hessian = Mat::Zero(n, n);
        Eigen::Index c = 1 + n;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) {
                if (i == j)
                    p.hessian(i, i) = 2.0 * coeffs(c++);
                else
                    p.hessian(i, j) = p.hessian(j, i) = coeffs(c++);
            }
        return p;
    }

private:
    double radius_;
    int n_;
    int reach_ = 0;
    std::vector<long long> offsets_;
    std::vector<std::vector<int>> steps_;
    Mat design_, pinv_;
};

namespace detail {

/// Slope of log(rem) against log(r).
inline double loglog_slope(const std::vector<std::pair<double, double>>& rr)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(rr.size());
    for (const auto& [r, e] : rr) {
        const double x = std::log(r), y = std::log(std::max(e, 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline double exact_tolerance(double scale) { return 1e-11 * std::max(1.0, scale); }

inline JetReport make_report(const std::vector<std::pair<double, double>>& rr, Paraboloid p, double scale)
{
    JetReport rep;
    rep.paraboloid = std::move(p);
    rep.remainders = rr;
    double worst = 0.0;
    for (const auto& [r, e] : rr) worst = std::max(worst, e);
    rep.exact = worst <= exact_tolerance(scale);
    rep.beta = rep.exact ? std::numeric_limits<double>::infinity() : loglog_slope(rr);
    return rep;
}

/// Offsets d = x - x0 and values of all nodes in the closed ball of radius r.
inline std::pair<std::vector<Vec>, std::vector<double>> ball_samples(const GridFunction& w, const Vec& x0, double r)
{
    const Grid& g = w.grid;
    std::vector<int> lo(static_cast<std::size_t>(g.n)), hi(static_cast<std::size_t>(g.n));
    for (int a = 0; a < g.n; ++a) {
        lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::ceil((x0(a) - r - g.origin(a)) / g.spacing(a) - 1e-9)));
        hi[static_cast<std::size_t>(a)] = std::min(g.dims[static_cast<std::size_t>(a)] - 1,
                                                   static_cast<int>(std::floor((x0(a) + r - g.origin(a)) / g.spacing(a) + 1e-9)));
    }
    std::vector<Vec> ds;
    std::vector<double> vals;
    std::vector<int> m = lo;
    while (true) {
        const std::size_t node = g.index(m);
        const Vec d = g.coord(node) - x0;
        if (d.norm() <= r * (1.0 + 1e-12)) {
            ds.push_back(d);
            vals.push_back(w[node]);
        }
        int a = g.n - 1;
        while (a >= 0 && ++m[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) {
            m[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
            --a;
        }
        if (a < 0) break;
    }
    return {ds, vals};
}

inline void check_radii(const std::vector<double>& radii)
{
    if (radii.size() < 3) throw domain_error("jet fit: at least 3 radii");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] < radii[i - 1])) throw domain_error("jet fit: radii must be strictly decreasing");
    if (!(radii.back() > 0.0)) throw domain_error("jet fit: radii must be positive");
}

} // namespace detail

/// Quadratic least-squares fits of w on the balls B_r(x0). remainder(r) is the
/// sup deviation of the best fit on B_r, and beta the log-log slope of that
/// profile: beta >= 2 for punctually second-order differentiable points, about
/// 1 at a kink. The reported paraboloid is the fit on the smallest ball.
[[nodiscard]] inline JetReport jet_fit(const GridFunction& w, const Vec& x0, const std::vector<double>& radii)
{
    detail::check_radii(radii);
    const Grid& g = w.grid;
    if (x0.size() != g.n) throw domain_error("jet fit: dimension mismatch");
    for (int a = 0; a < g.n; ++a) {
        const double lo = g.origin(a), hi = g.origin(a) + g.spacing(a) * (g.dims[static_cast<std::size_t>(a)] - 1);
        if (x0(a) - radii.front() < lo - 1e-12 || x0(a) + radii.front() > hi + 1e-12)
            throw domain_error("jet fit: insufficient interior margin");
    }
    std::vector<std::pair<double, double>> rr;
    Paraboloid last;
    double scale = 0.0;
    for (double r : radii) {
        const auto [ds, vals] = detail::ball_samples(w, x0, r);
        std::vector<Vec> rows;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            rows.push_back(BallStencil::monomials(ds[i]));
            scale = std::max(scale, std::abs(vals[i]));
        }
        const auto q = rows.front().size();
        if (static_cast<Eigen::Index>(rows.size()) < q) throw domain_error("jet fit: ball holds too few nodes for a 2-jet");
        Mat A(static_cast<Eigen::Index>(rows.size()), q);
        Vec v(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
            v(static_cast<Eigen::Index>(i)) = vals[i];
        }
        const Vec c = A.completeOrthogonalDecomposition().solve(v);
        rr.emplace_back(r, (A * c - v).cwiseAbs().maxCoeff());
        last = BallStencil::paraboloid(c, x0);
    }
    return detail::make_report(rr, last, scale);
}

/// Quadratic plus a crease kappa |nu.(x - x0)| fitted on one ball. kappa > 0
/// is a convex crease (nothing touches from above), kappa < 0 a concave one.
struct CreaseFit {
    Paraboloid smooth;  ///< the quadratic part
    Vec normal;
    double kappa = 0.0;
    double residual = 0.0;  ///< sup misfit on the ball
};

[[nodiscard]] inline CreaseFit crease_fit(const GridFunction& w, const Vec& x0, double r, const Vec& normal)
{
    const auto [ds, vals] = detail::ball_samples(w, x0, r);
    const Vec nu = normal.normalized();
    const auto q = BallStencil::monomials(x0).size();
    if (static_cast<Eigen::Index>(ds.size()) <= q) throw domain_error("crease fit: ball holds too few nodes");
    Mat A(static_cast<Eigen::Index>(ds.size()), q + 1);
    Vec v(static_cast<Eigen::Index>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        A.row(row).head(q) = BallStencil::monomials(ds[i]).transpose();
        A(row, q) = std::abs(nu.dot(ds[i]));
        v(row) = vals[i];
    }
    const Vec c = A.completeOrthogonalDecomposition().solve(v);
    CreaseFit out;
    out.smooth = BallStencil::paraboloid(c.head(q), x0);
    out.normal = nu;
    out.kappa = c(q);
    out.residual = (A * c - v).cwiseAbs().maxCoeff();
    return out;
}

/// Default ladder {4h, 3h, 2h} for the largest spacing of the grid.
[[nodiscard]] inline std::vector<double> default_radii(const Grid& g)
{
    const double h = g.spacing.maxCoeff();
    return {4.0 * h, 3.0 * h, 2.0 * h};
}

struct CheckOptions {
    std::vector<double> eps;       ///< decreasing; empty means {4h, 2h, h}
    std::vector<double> radii;     ///< empty means default_radii
    double beta_threshold = 1.9;
    double tol = -1.0;             ///< relative residual slack; negative means 20 h^2
};

namespace detail {

inline Spectrum test_spectrum(const Paraboloid& p, const Mat& shift, const Vec& x0, const LowerOrderTerms& terms,
                              double tau)
{
    const Mat wm = terms.W(x0);
    const Mat m = wm * (p.hessian + shift + terms.L(x0, p.gradient)) * wm;
    return eigenvalues(tau_shift(Mat(0.5 * (m + m.transpose())), tau));
}

} // namespace detail

/// Jet plus epsilon-ladder surrogate for the viscosity inequalities at x0.
/// Smooth points test P + eps|x-x0|^2 (sub side) and P - eps|x-x0|^2 (super
/// side); the reported status is the one at the smallest eps. Non-smooth
/// points are tested with the quadratic part of a crease fit. At a kink (beta below threshold) the side from which no C^2
/// function can touch is vacuous and reported as such, and the other side is
/// tested with the fitted jet.
[[nodiscard]] inline PointVerdict check_point(const GridFunction& w, const LowerOrderTerms& terms, const Equation& eq,
                                              const Vec& x0, CheckOptions opt = {})
{
    const double h = w.grid.spacing.maxCoeff();
    if (opt.eps.empty()) opt.eps = {4.0 * h, 2.0 * h, h};
    if (opt.radii.empty()) opt.radii = default_radii(w.grid);
    if (opt.tol < 0.0) opt.tol = 20.0 * h * h;
    for (std::size_t i = 0; i < opt.eps.size(); ++i)
        if (!(opt.eps[i] > 0.0) || (i > 0 && !(opt.eps[i] < opt.eps[i - 1])))
            throw domain_error("check_point: eps ladder must be positive and decreasing");

    PointVerdict out;
    JetReport jet;
    try {
        jet = jet_fit(w, x0, opt.radii);
    } catch (const domain_error&) {
        return out;
    }
    out.beta = jet.beta;
    Paraboloid P = jet.paraboloid;
    const int n = static_cast<int>(x0.size());
    const Mat id = Mat::Identity(n, n);
    const bool smooth = jet.exact || jet.beta >= opt.beta_threshold;
    if (!smooth) {
        // Crease across the dominant Hessian direction of the plain fit; its
        // sign tells which side has no touching test functions.
        Eigen::SelfAdjointEigenSolver<Mat> es(P.hessian);
        Eigen::Index top = 0;
        es.eigenvalues().cwiseAbs().maxCoeff(&top);
        const double r = opt.radii.front();
        const CreaseFit cf = crease_fit(w, x0, r, es.eigenvectors().col(top));
        if (!(std::abs(cf.kappa) * r > 4.0 * cf.residual)) return out;
        if (cf.kappa > 0.0)
            out.sub_vacuous = true;
        else
            out.super_vacuous = true;
        P = cf.smooth;
    }
    out.cone_spectrum = detail::test_spectrum(P, Mat::Zero(n, n), x0, terms, eq.tau);
    const double z = P.value;
    const double slack = opt.tol * std::max(1.0, std::abs(eq.rhs(x0)) * std::exp(2.0 * z));
    if (eq.admissible(out.cone_spectrum)) out.residual = eq.residual(out.cone_spectrum, z, x0);

    auto sub_holds = [&](const Spectrum& l) { return eq.admissible(l) && eq.residual(l, z, x0) >= -slack; };
    auto super_holds = [&](const Spectrum& l) { return !eq.admissible(l) || eq.residual(l, z, x0) <= slack; };

    auto combine = [&](bool sub, bool super) {
        if (out.sub_vacuous) return super ? Verdict::supersolution_ok : Verdict::neither;
        if (out.super_vacuous) return sub ? Verdict::subsolution_ok : Verdict::neither;
        if (sub && super) return Verdict::both;
        if (sub) return Verdict::subsolution_ok;
        if (super) return Verdict::supersolution_ok;
        return Verdict::neither;
    };
    for (double e : opt.eps) {
        const bool sub = out.sub_vacuous || sub_holds(detail::test_spectrum(P, 2.0 * e * id, x0, terms, eq.tau));
        const bool super = out.super_vacuous || super_holds(detail::test_spectrum(P, -2.0 * e * id, x0, terms, eq.tau));
        out.ladder.push_back(combine(sub, super));
    }
    out.status = out.ladder.back();
    return out;
}

/// Smallest sampled C (times 1.05) with L(x, p) <= 2C over chart nodes and
/// gradients |p| <= lip_bound. A nonempty `only` restricts the nodes.
[[nodiscard]] inline double kconvex_shift_constant(const LowerOrderTerms& terms, double lip_bound, const MetricChart& chart,
                                                   int sphere_points = 256, const std::vector<std::uint8_t>& only = {})
{
    if (!(lip_bound >= 0.0)) throw domain_error("kconvex_shift_constant: lip_bound must be >= 0");
    const int n = chart.dim();
    const std::vector<Vec> dirs = sphere_mesh(n, sphere_points);
    double top = 0.0;
    for (std::size_t node = 0; node < chart.grid.size(); ++node) {
        if (!chart.inside[node] || (!only.empty() && !only[node])) continue;
        const Vec x = chart.grid.coord(node);
        top = std::max(top, eigenvalues(terms.L(x, Vec::Zero(n))).maxCoeff());
        if (lip_bound == 0.0) continue;
        for (double s : {0.25, 0.5, 0.75, 1.0})
            for (const Vec& d : dirs) top = std::max(top, eigenvalues(terms.L(x, Vec(s * lip_bound * d))).maxCoeff());
    }
    return 1.05 * std::max(0.0, top / 2.0);
}

/// Flags evaluated nodes whose jet exponent is below the threshold or whose
/// remainder/r^2 does not decrease from the largest to the smallest radius.
[[nodiscard]] inline SingularMask detect_singular_set(const GridFunction& w, const MetricChart& chart,
                                                      std::vector<double> radii = {}, double beta_threshold = 1.9)
{
    if (radii.empty()) radii = default_radii(w.grid);
    detail::check_radii(radii);
    if (!(w.grid == chart.grid)) throw domain_error("detect_singular_set: grid mismatch");
    std::vector<BallStencil> balls;
    for (double r : radii) balls.emplace_back(w.grid, r);
    const std::size_t N = w.grid.size();
    SingularMask mask;
    mask.flags.assign(N, 0);
    mask.evaluated.assign(N, 0);
    mask.beta.assign(N, std::numeric_limits<double>::quiet_NaN());
    mask.threshold = beta_threshold;
    mask.radii_used = radii;
    const double scale = w.values.cwiseAbs().maxCoeff();
    for (std::size_t node = 0; node < N; ++node) {
        if (!chart.interior(node) || !balls.front().fits(w.grid, node)) continue;
        if (chart.kind == DomainKind::annulus) {
            const double r = w.grid.coord(node).norm();
            if (r - radii.front() < chart.inner || r + radii.front() > chart.outer) continue;
        }
        std::vector<std::pair<double, double>> rr;
        for (const BallStencil& b : balls) rr.emplace_back(b.radius(), b.fit(w.values, node).second);
        const JetReport rep = detail::make_report(rr, Paraboloid{}, scale);
        mask.evaluated[node] = 1;
        mask.beta[node] = rep.beta;
        if (rep.exact) continue;
        const double big = rr.front().second / (rr.front().first * rr.front().first);
        const double small = rr.back().second / (rr.back().first * rr.back().first);
        if (rep.beta < beta_threshold || small >= big) mask.flags[node] = 1;
    }
    return mask;
}

/// Distance of every region node to the region boundary (nodes of the region
/// with a grid neighbor outside it, or on the grid edge).
[[nodiscard]] inline std::vector<double> distance_to_boundary(const Grid& g, const std::vector<std::uint8_t>& region)
{
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> sq(g.size(), inf);
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!region[i]) continue;
        bool edge = g.on_edge(i);
        for (int a = 0; a < g.n && !edge; ++a)
            for (int s : {-1, 1}) {
                const auto j = static_cast<std::size_t>(static_cast<long long>(i) + s * static_cast<long long>(g.stride(a)));
                if (!region[j]) edge = true;
            }
        if (edge) {
            sq[i] = 0.0;
            any = true;
        }
    }
    std::vector<double> d(g.size(), 0.0);
    if (!any) return d;
    // Separable squared Euclidean distance transform (lower envelope of
    // parabolas along each axis in turn).
    for (int a = 0; a < g.n; ++a) {
        const int len = g.dims[static_cast<std::size_t>(a)];
        const double h = g.spacing(a);
        const std::size_t st = g.stride(a);
        std::vector<double> f(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len)), z(static_cast<std::size_t>(len) + 1);
        std::vector<int> v(static_cast<std::size_t>(len));
        for (std::size_t start = 0; start < g.size(); ++start) {
            if (g.pos(start, a) != 0) continue;
            for (int q = 0; q < len; ++q) f[static_cast<std::size_t>(q)] = sq[start + static_cast<std::size_t>(q) * st];
            int k = -1;
            for (int q = 0; q < len; ++q) {
                const double fq = f[static_cast<std::size_t>(q)];
                if (fq == inf) continue;
                const double pq = q * h;
                double x = -inf;
                while (k >= 0) {
                    const int p = v[static_cast<std::size_t>(k)];
                    const double pp = p * h;
                    x = ((fq + pq * pq) - (f[static_cast<std::size_t>(p)] + pp * pp)) / (2.0 * (pq - pp));
                    if (x > z[static_cast<std::size_t>(k)]) break;
                    --k;
                }
                ++k;
                v[static_cast<std::size_t>(k)] = q;
                z[static_cast<std::size_t>(k)] = k == 0 ? -inf : x;
                z[static_cast<std::size_t>(k) + 1] = inf;
            }
            if (k < 0) continue;
            int j = 0;
            for (int q = 0; q < len; ++q) {
                const double xq = q * h;
                while (z[static_cast<std::size_t>(j) + 1] < xq) ++j;
                const double dx = xq - v[static_cast<std::size_t>(j)] * h;
                out[static_cast<std::size_t>(q)] = dx * dx + f[static_cast<std::size_t>(v[static_cast<std::size_t>(j)])];
            }
            for (int q = 0; q < len; ++q) sq[start + static_cast<std::size_t>(q) * st] = out[static_cast<std::size_t>(q)];
        }
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        if (region[i]) d[i] = std::sqrt(sq[i]);
    return d;
}

struct HolderNorms {
    double seminorm = 0.0;  ///< [u]^{(sigma)}_{0,alpha}
    double sup_norm = 0.0;  ///< |u|^{(sigma)}_0
    bool sampled = false;
};

/// Weighted interior Hoelder seminorm and sup norm over a node region.
/// Exact over all pairs up to 1e4 region nodes; above that both ends of a
/// pair run over a deterministic strided sample of about 6000 nodes.
[[nodiscard]] inline HolderNorms weighted_holder(const GridFunction& w, const std::vector<std::uint8_t>& region,
                                                 double alpha, int sigma)
{
    if (!(alpha > 0.0 && alpha <= 1.0)) throw domain_error("weighted_holder: 0 < alpha <= 1");
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (region[i]) nodes.push_back(i);
    if (nodes.empty()) throw domain_error("weighted_holder: empty region");
    const std::vector<double> d = distance_to_boundary(w.grid, region);
    HolderNorms out;
    std::vector<Vec> xs;
    xs.reserve(nodes.size());
    for (std::size_t i : nodes) {
        xs.push_back(w.grid.coord(i));
        out.sup_norm = std::max(out.sup_norm, std::pow(d[i], sigma) * std::abs(w[i]));
    }
    const std::size_t m = nodes.size();
    const std::size_t stride = m <= 10000 ? 1 : (m / 6000 + 1);
    out.sampled = stride > 1;
    for (std::size_t a = 0; a < m; a += stride)
        for (std::size_t b = a + stride; b < m; b += stride) {
            const double dxy = std::min(d[nodes[a]], d[nodes[b]]);
            if (dxy == 0.0) continue;
            const double dist = (xs[a] - xs[b]).norm();
            const double v = std::pow(dxy, sigma + alpha) * std::abs(w[nodes[a]] - w[nodes[b]]) / std::pow(dist, alpha);
            out.seminorm = std::max(out.seminorm, v);
        }
    return out;
}

/// Smallest C with |u|^{(n)}_0 <= eps^alpha [u]^{(n)}_{0,alpha} + C eps^{-n} int |u|
/// over the given eps values; a reported diagnostic.
[[nodiscard]] inline double interpolation_constant(const GridFunction& w, const std::vector<std::uint8_t>& region,
                                                   double alpha, const std::vector<double>& eps)
{
    const int n = w.grid.n;
    const HolderNorms hn = weighted_holder(w, region, alpha, n);
    double cell = 1.0;
    for (int a = 0; a < n; ++a) cell *= w.grid.spacing(a);
    double integral = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (region[i]) integral += std::abs(w[i]) * cell;
    if (integral == 0.0) return 0.0;
    double c = 0.0;
    for (double e : eps) c = std::max(c, (hn.sup_norm - std::pow(e, alpha) * hn.seminorm) * std::pow(e, n) / integral);
    return c;
}

struct ComparisonResult {
    bool holds = true;             ///< boundary ordering propagates to the interior
    bool boundary_ordered = true;
    bool super_smooth = true;      ///< sampled jets of v have beta >= 1.9
    std::optional<std::size_t> violating_node;
};

/// Discrete comparison: w <= v on the boundary nodes should give w <= v
/// everywhere (slack 1e-10).
[[nodiscard]] inline ComparisonResult comparison_check(const GridFunction& w_sub, const GridFunction& v_super,
                                                       const MetricChart& chart, const ConeSpec& cone,
                                                       std::size_t smooth_samples = 50)
{
    cone.validate();
    if (!(w_sub.grid == chart.grid) || !(v_super.grid == chart.grid)) throw domain_error("comparison_check: grid mismatch");
    ComparisonResult out;
    const std::size_t N = chart.grid.size();
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < N; ++i) {
        if (!chart.inside[i]) continue;
        if (chart.interior(i)) {
            interior.push_back(i);
            continue;
        }
        if (w_sub[i] > v_super[i] + 1e-10) out.boundary_ordered = false;
    }
    const std::vector<double> radii = default_radii(chart.grid);
    BallStencil probe(chart.grid, radii.front());
    const std::size_t step = std::max<std::size_t>(1, interior.size() / std::max<std::size_t>(1, smooth_samples));
    for (std::size_t s = 0; s < interior.size(); s += step) {
        const std::size_t node = interior[s];
        if (!probe.fits(chart.grid, node)) continue;
        const JetReport j = jet_fit(v_super, chart.grid.coord(node), radii);
        if (!j.exact && j.beta < 1.9) out.super_smooth = false;
    }
    if (!out.boundary_ordered) return out;
    double worst = 1e-10;
    for (std::size_t i : interior) {
        const double d = w_sub[i] - v_super[i];
        if (d > worst) {
            worst = d;
            out.violating_node = i;
            out.holds = false;
        }
    }
    return out;
}

inline void write_mask_csv(std::ostream& os, const SingularMask& m, const Grid& g)
{
    os << "node";
    for (int a = 0; a < g.n; ++a) os << ",x" << a;
    os << ",flag,beta\n";
    char buf[40];
    for (std::size_t i = 0; i < m.flags.size(); ++i) {
        if (!m.evaluated[i]) continue;
        os << i;
        const Vec x = g.coord(i);
        for (int a = 0; a < g.n; ++a) {
            std::snprintf(buf, sizeof buf, "%.17g", x(a));
            os << ',' << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g", m.beta[i]);
        os << ',' << int(m.flags[i]) << ',' << buf << '\n';
    }
}

} // namespace sigk
