#pragma once

#include <sigk/equation.hpp>
#include <sigk/localsolver.hpp>
#include <sigk/oracle.hpp>
#include <sigk/viscosity.hpp>

#include <Eigen/SparseLU>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sigk {

enum class OperatorKind { sigma_k, krylov };

/// Radial Dirichlet problem on the flat annulus {a < |x| < b} with w = M_bc on
/// both spheres, discretized on a uniform mesh in t = ln r.
struct RadialProblem {
    int n = 3, k = 3;
    double a = 1.0, b = 4.0, R = 1.0;
    double boundary_value = 8.0;
    int intervals = 800;
    OperatorKind op = OperatorKind::sigma_k;
    KrylovData krylov;  ///< used when op == krylov; krylov.k must equal k

    void validate() const
    {
        if (n < 3 || k < 1 || k > n) throw domain_error("RadialProblem: need n >= 3, 1 <= k <= n");
        if (!(0.0 < a && a < b)) throw domain_error("RadialProblem: need 0 < a < b");
        if (!std::isfinite(boundary_value)) throw domain_error("RadialProblem: boundary value must be finite");
        if (intervals < 8) throw domain_error("RadialProblem: need at least 8 intervals");
        if (op == OperatorKind::sigma_k && !(R > 0.0)) throw domain_error("RadialProblem: R must be positive");
        if (op == OperatorKind::krylov) {
            if (k < 2) throw domain_error("RadialProblem: Krylov operator needs k >= 2");
            if (krylov.k != k) throw domain_error("RadialProblem: KrylovData.k differs from k");
            krylov.validate(Vec::Unit(n, 0));
        }
    }

    /// k > n/2 for sigma_k and k - 1 > n/2 for the Krylov operator.
    [[nodiscard]] bool singular_regime() const { return op == OperatorKind::sigma_k ? 2 * k > n : 2 * (k - 1) > n; }

    [[nodiscard]] Grid mesh() const
    {
        const double ta = std::log(a), tb = std::log(b);
        return Grid({intervals + 1}, Vec::Constant(1, (tb - ta) / intervals), Vec::Constant(1, ta));
    }

    [[nodiscard]] Equation equation(double tau) const
    {
        return op == OperatorKind::sigma_k ? sigma_equation(n, k, R, tau) : krylov_equation(n, krylov, tau);
    }
};

/// The equation restricted to radial w, in v = e^{-(w + t)}. The eigenvalues of
/// -g_w^{-1}A_{g_w} are lambda_r = -v v'' + v'^2/2 + v^2/2 (once) and
/// lambda_t = (v'^2 - v^2)/2 (n-1 times). The residual is
/// e^{-2w} (F(e^{2w} lambda^tau, w, x) - rhs e^{2w}), which for sigma_k is
/// f(lambda^tau) - R.
class RadialOperator {
public:
    RadialOperator(RadialProblem p, double tau) : p_(std::move(p)), tau_(tau)
    {
        p_.validate();
        if (!(tau >= 0.0 && tau <= 1.0)) throw domain_error("radial_reduce: need 0 <= tau <= 1");
        eq_ = p_.equation(tau);
        mesh_ = p_.mesh();
        h_ = mesh_.spacing(0);
        shift_ = (1.0 - tau) / (p_.n - 2.0);
    }

    [[nodiscard]] const RadialProblem& problem() const { return p_; }
    [[nodiscard]] const Equation& equation() const { return eq_; }
    [[nodiscard]] const Grid& mesh() const { return mesh_; }
    [[nodiscard]] double tau() const { return tau_; }
    [[nodiscard]] std::size_t size() const { return mesh_.size(); }
    [[nodiscard]] double t(std::size_t i) const { return mesh_.origin(0) + h_ * static_cast<double>(i); }

    [[nodiscard]] double boundary_v(std::size_t i) const { return std::exp(-p_.boundary_value - t(i)); }

    [[nodiscard]] Vec to_w(const Vec& v) const
    {
        Vec w(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) w(i) = -std::log(v(i)) - t(static_cast<std::size_t>(i));
        return w;
    }

    [[nodiscard]] Vec to_v(const Vec& w) const
    {
        Vec v(w.size());
        for (Eigen::Index i = 0; i < w.size(); ++i) v(i) = std::exp(-w(i) - t(static_cast<std::size_t>(i)));
        return v;
    }

    /// Unshifted (lambda_r, lambda_t) at an interior node.
    [[nodiscard]] std::pair<double, double> eigen_pair(const Vec& v, std::size_t i) const
    {
        const double vi = v(idx(i)), vp = (v(idx(i + 1)) - v(idx(i - 1))) / (2.0 * h_);
        const double vpp = (v(idx(i + 1)) - 2.0 * vi + v(idx(i - 1))) / (h_ * h_);
        return {-vi * vpp + 0.5 * vp * vp + 0.5 * vi * vi, 0.5 * (vp * vp - vi * vi)};
    }

    /// tau-shifted spectrum (lambda_r, lambda_t, ..., lambda_t).
    [[nodiscard]] Spectrum spectrum(const Vec& v, std::size_t i) const
    {
        const auto [lr, lt] = eigen_pair(v, i);
        return shifted(lr, lt);
    }

    /// v > 0 everywhere and the shifted spectrum in the cone at interior nodes.
    [[nodiscard]] bool admissible(const Vec& v, std::size_t* bad = nullptr) const
    {
        for (std::size_t i = 0; i < size(); ++i) {
            const bool ok = v(idx(i)) > 0.0 && std::isfinite(v(idx(i))) &&
                            (i == 0 || i + 1 == size() || eq_.admissible(spectrum(v, i)));
            if (!ok) {
                if (bad) *bad = i;
                return false;
            }
        }
        return true;
    }

    /// Scaled residual at interior nodes, v - v_bc at the two end nodes.
    [[nodiscard]] Vec residual(const Vec& v) const
    {
        check_size(v);
        Vec F(v.size());
        F(0) = v(0) - boundary_v(0);
        const std::size_t m = size() - 1;
        F(idx(m)) = v(idx(m)) - boundary_v(m);
        for (std::size_t i = 1; i < m; ++i) F(idx(i)) = point(v, i).G;
        return F;
    }

    /// Scaled residual at one interior node.
    [[nodiscard]] double residual_at(const Vec& v, std::size_t i) const
    {
        if (i == 0 || i + 1 >= size()) throw domain_error("RadialOperator: residual_at needs an interior node");
        return point(v, i).G;
    }

    /// Tridiagonal Jacobian of residual(v).
    [[nodiscard]] Eigen::SparseMatrix<double> jacobian(const Vec& v) const
    {
        check_size(v);
        const std::size_t m = size() - 1;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(3 * (m + 1));
        trip.emplace_back(0, 0, 1.0);
        trip.emplace_back(idx(m), idx(m), 1.0);
        for (std::size_t i = 1; i < m; ++i) {
            const Point q = point(v, i);
            const Eigen::Index r = idx(i);
            trip.emplace_back(r, r - 1, -q.d_vp / (2.0 * h_) + q.d_vpp / (h_ * h_));
            trip.emplace_back(r, r, q.d_v - 2.0 * q.d_vpp / (h_ * h_));
            trip.emplace_back(r, r + 1, q.d_vp / (2.0 * h_) + q.d_vpp / (h_ * h_));
        }
        Eigen::SparseMatrix<double> J(idx(m + 1), idx(m + 1));
        J.setFromTriplets(trip.begin(), trip.end());
        return J;
    }

    /// Interior residual norm.
    [[nodiscard]] static double norm(const Vec& F) { return F.size() > 2 ? F.segment(1, F.size() - 2).cwiseAbs().maxCoeff() : 0.0; }

private:
    struct Point {
        double G = 0.0, d_v = 0.0, d_vp = 0.0, d_vpp = 0.0;
    };

    static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

    void check_size(const Vec& v) const
    {
        if (static_cast<std::size_t>(v.size()) != size()) throw domain_error("RadialOperator: profile size mismatch");
    }

    [[nodiscard]] Spectrum shifted(double lr, double lt) const
    {
        const double T = lr + (p_.n - 1) * lt;
        Spectrum l = Spectrum::Constant(p_.n, lt + shift_ * T);
        l(0) = lr + shift_ * T;
        return l;
    }

    [[nodiscard]] Point point(const Vec& v, std::size_t i) const
    {
        const int n = p_.n;
        const double vi = v(idx(i)), vp = (v(idx(i + 1)) - v(idx(i - 1))) / (2.0 * h_);
        const double vpp = (v(idx(i + 1)) - 2.0 * vi + v(idx(i - 1))) / (h_ * h_);
        const double lr = -vi * vpp + 0.5 * vp * vp + 0.5 * vi * vi, lt = 0.5 * (vp * vp - vi * vi);
        const Spectrum l = shifted(lr, lt);
        if (!eq_.admissible(l)) throw cone_exit_error("radial operator: spectrum left the cone", i);
        const double w = -std::log(vi) - t(i);
        const Vec x = std::exp(t(i)) * Vec::Unit(n, 0);
        const double e2 = std::exp(2.0 * w);
        const Spectrum mu = e2 * l;
        Point q;
        q.G = eq_.residual(mu, w, x) / e2;
        const Vec g = eq_.df(mu, w, x);
        const double gr = g(0), gt = g.sum() - g(0);
        const double dGdw = -2.0 * q.G + (2.0 * g.dot(mu) + eq_.residual_dz(mu, w, x)) / e2;
        const double dlr = gr + shift_ * (gr + gt), dlt = gt + shift_ * (n - 1) * (gr + gt);
        q.d_v = dlr * (v(idx(i)) - vpp) - dlt * vi - dGdw / vi;
        q.d_vp = (dlr + dlt) * vp;
        q.d_vpp = -dlr * vi;
        return q;
    }

    RadialProblem p_;
    double tau_ = 1.0;
    Equation eq_;
    Grid mesh_;
    double h_ = 0.0;
    double shift_ = 0.0;
};

[[nodiscard]] inline RadialOperator radial_reduce(const RadialProblem& p, double tau) { return RadialOperator(p, tau); }

struct PathOptions {
    int max_iter = 60;             ///< Newton steps per tau
    int stagnation_limit = 20;     ///< damped steps in a row without residual decrease
    int max_bisections = 16;       ///< tau substep halvings before giving up
    double window = 0.1;           ///< radial C^1 monitor ignores this fraction of [ln a, ln b] at each end
    double blowup_factor = 1e3;    ///< abort when a C^0 or C^1 bound exceeds this multiple of its first value
    SolveOptions linear;           ///< grid path only
};

/// Solutions along a tau ladder. Radial paths store w on the mesh in t; grid
/// paths store w on the chart.
struct TauPath {
    std::vector<double> taus;
    std::vector<GridFunction> solutions;
    std::vector<double> c0_bounds, c1_bounds;
    std::vector<double> residuals;
    std::vector<int> iterations;     ///< Newton steps per ladder tau, substeps included
    std::vector<double> inserted;    ///< substep taus added by bisection
    double newton_tol = 0.0;
    bool radial = false;
    RadialProblem problem;           ///< radial paths
    MetricChart chart;               ///< grid paths
    LowerOrderTerms terms;           ///< grid paths
    std::optional<Equation> equation;  ///< grid paths, at tau = 1

    /// ||w_{i+1} - w_i||_inf along the ladder.
    [[nodiscard]] std::vector<double> tail() const
    {
        std::vector<double> d;
        for (std::size_t i = 1; i < solutions.size(); ++i)
            d.push_back((solutions[i].values - solutions[i - 1].values).cwiseAbs().maxCoeff());
        return d;
    }

    /// Whether the last `count` entries of tail() decrease.
    [[nodiscard]] bool tail_decreasing(std::size_t count = 3) const
    {
        const std::vector<double> d = tail();
        for (std::size_t i = d.size() > count ? d.size() - count + 1 : 1; i < d.size(); ++i)
            if (!(d[i] < d[i - 1])) return false;
        return true;
    }

    /// (max - min)/max of c1_bounds over the last `count` taus.
    [[nodiscard]] double c1_variation(std::size_t count = 3) const
    {
        if (c1_bounds.empty()) return 0.0;
        const auto first = c1_bounds.end() - static_cast<std::ptrdiff_t>(std::min(count, c1_bounds.size()));
        const auto [lo, hi] = std::minmax_element(first, c1_bounds.end());
        return (*hi - *lo) / *hi;
    }
};

namespace detail {

struct NewtonResult {
    Vec v;
    bool converged = false;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    std::string failure;
};

/// Damped Newton with a cone-exit line search. Sys provides admissible(v),
/// residual(v), norm(F) and step(v, F) (the Newton correction).
template <class Sys>
NewtonResult damped_newton(const Sys& sys, Vec v, double tol, const PathOptions& opt)
{
    NewtonResult out;
    if (!sys.admissible(v)) {
        out.failure = "start is not admissible";
        out.v = std::move(v);
        return out;
    }
    Vec F = sys.residual(v);
    double nf = sys.norm(F);
    int stagnant = 0;
    for (; out.iterations < opt.max_iter; ++out.iterations) {
        if (nf <= tol) break;
        Vec dv;
        try {
            dv = sys.step(v, F);
        } catch (const std::exception& e) {
            out.failure = std::string("linear solve failed: ") + e.what();
            break;
        }
        double t = 1.0;
        bool decreased = false, any = false;
        Vec best_v, best_F;
        double best = std::numeric_limits<double>::infinity();
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            Vec trial = v + t * dv;
            if (!sys.admissible(trial)) continue;
            Vec Ft = sys.residual(trial);
            const double nt = sys.norm(Ft);
            if (!std::isfinite(nt)) continue;
            if (nt < best) {
                best = nt;
                best_v = std::move(trial);
                best_F = std::move(Ft);
                any = true;
            }
            if (nt < (1.0 - 1e-4 * t) * nf) {
                decreased = true;
                break;
            }
        }
        if (!any) {
            out.failure = "no admissible step along the Newton direction";
            break;
        }
        v = std::move(best_v);
        F = std::move(best_F);
        nf = best;
        stagnant = decreased ? 0 : stagnant + 1;
        if (stagnant >= opt.stagnation_limit) {
            out.failure = "Newton stagnation";
            break;
        }
    }
    out.residual = nf;
    out.converged = nf <= tol;
    if (!out.converged && out.failure.empty()) out.failure = "iteration limit";
    out.v = std::move(v);
    return out;
}

struct RadialSys {
    const RadialOperator& op;
    [[nodiscard]] bool admissible(const Vec& v) const { return op.admissible(v); }
    [[nodiscard]] Vec residual(const Vec& v) const { return op.residual(v); }
    [[nodiscard]] double norm(const Vec& F) const { return RadialOperator::norm(F); }
    [[nodiscard]] Vec step(const Vec& v, const Vec& F) const
    {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        const Eigen::SparseMatrix<double> J = op.jacobian(v);
        lu.compute(J);
        if (lu.info() != Eigen::Success) throw solver_error("radial Jacobian is singular");
        Vec d = lu.solve(Vec(-F));
        if (!d.allFinite()) throw solver_error("radial Newton step is not finite");
        return d;
    }
};

struct GridSys {
    const MetricChart& chart;
    const LowerOrderTerms& terms;
    Equation eq;
    const PathOptions& opt;

    [[nodiscard]] GridFunction as_function(const Vec& v) const
    {
        GridFunction u(chart.grid);
        u.values = v;
        return u;
    }

    [[nodiscard]] bool admissible(const Vec& v) const
    {
        if (!v.allFinite()) return false;
        const GridFunction u = as_function(v);
        for (std::size_t i = 0; i < chart.grid.size(); ++i) {
            if (!chart.interior(i)) continue;
            const Vec x = chart.grid.coord(i);
            if (!eq.admissible(eigenvalues(augmented_matrix(terms, eq.tau, x, jet_at(u, i))))) return false;
        }
        return true;
    }

    [[nodiscard]] Vec residual(const Vec& v) const
    {
        const GridFunction u = as_function(v);
        Vec F = Vec::Zero(v.size());
        for (std::size_t i = 0; i < chart.grid.size(); ++i) {
            if (!chart.interior(i)) continue;
            try {
                F(static_cast<Eigen::Index>(i)) = operator_value(terms, eq, chart.grid.coord(i), jet_at(u, i));
            } catch (const cone_exit_error&) {
                throw cone_exit_error("grid path: augmented spectrum left the cone", i);
            }
        }
        return F;
    }

    [[nodiscard]] double norm(const Vec& F) const { return F.cwiseAbs().maxCoeff(); }

    [[nodiscard]] Vec step(const Vec& v, const Vec& F) const
    {
        const GridFunction u = as_function(v);
        const Grid& g = chart.grid;
        LinearProblem p = LinearProblem::laplace(g);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!chart.interior(i)) continue;
            const PointCoefficients pc = linearize_at(terms, eq, g.coord(i), jet_at(u, i));
            p.a[i] = pc.a;
            p.b[i] = pc.b;
            p.c(static_cast<Eigen::Index>(i)) = pc.c;
            p.f(static_cast<Eigen::Index>(i)) = -F(static_cast<Eigen::Index>(i));
        }
        return solve_dirichlet(std::move(p), chart, opt.linear).values;
    }
};

/// Runs Newton along the ladder, bisecting tau steps on failure and
/// predicting by secant extrapolation from the last two accepted solutions.
/// make(tau) returns the system; record(tau, result) stores a ladder point.
template <class Make, class Record>
void follow_path(const Make& make, Vec seed, const std::vector<double>& taus, double tol, const PathOptions& opt,
                 TauPath& path, const Record& record)
{
    if (taus.empty()) throw domain_error("solve_tau_path: empty tau ladder");
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (!(taus[i] >= 0.0 && taus[i] < 1.0)) throw domain_error("solve_tau_path: taus must lie in [0, 1)");
        if (i > 0 && !(taus[i] > taus[i - 1])) throw domain_error("solve_tau_path: taus must increase");
    }
    const double none = std::numeric_limits<double>::quiet_NaN();
    NewtonResult first = damped_newton(make(taus.front()), std::move(seed), tol, opt);
    if (!first.converged) throw path_error("tau path: first tau failed (" + first.failure + ")", none);
    record(taus.front(), first);
    double tau_c = taus.front(), tau_p = none;
    Vec v_c = std::move(first.v), v_p;
    for (std::size_t j = 1; j < taus.size(); ++j) {
        const double target = taus[j];
        double step = target - tau_c;
        int halvings = 0, iters = 0;
        NewtonResult last;
        while (tau_c < target) {
            const double tau_n = std::min(target, tau_c + step);
            const auto sys = make(tau_n);
            Vec start = v_c;
            if (std::isfinite(tau_p)) {
                Vec pred = v_c + (tau_n - tau_c) / (tau_c - tau_p) * (v_c - v_p);
                if (sys.admissible(pred)) start = std::move(pred);
            }
            NewtonResult r = damped_newton(sys, std::move(start), tol, opt);
            iters += r.iterations;
            if (!r.converged) {
                if (++halvings > opt.max_bisections)
                    throw path_error("tau path: no convergence towards tau = " + std::to_string(tau_n) + " (" + r.failure + ")",
                                     path.taus.back());
                step *= 0.5;
                continue;
            }
            if (tau_n < target) path.inserted.push_back(tau_n);
            tau_p = tau_c;
            v_p = std::move(v_c);
            tau_c = tau_n;
            v_c = r.v;
            last = std::move(r);
            step = std::min(2.0 * step, target - tau_c);
        }
        last.iterations = iters;
        record(target, last);
    }
}

inline void check_growth(const TauPath& path, const PathOptions& opt)
{
    const std::size_t i = path.c1_bounds.size() - 1;
    if (path.c0_bounds[i] > opt.blowup_factor * std::max(path.c0_bounds[0], 1e-300) ||
        path.c1_bounds[i] > opt.blowup_factor * std::max(path.c1_bounds[0], 1e-300))
        throw path_error("tau path: C0/C1 monitor blew up at tau = " + std::to_string(path.taus[i]),
                         i > 0 ? path.taus[i - 1] : std::numeric_limits<double>::quiet_NaN());
}

/// dw/dt by central differences, one-sided second order at the ends.
inline Vec radial_dt(const Vec& w, double h)
{
    const Eigen::Index m = w.size() - 1;
    Vec d(w.size());
    for (Eigen::Index i = 1; i < m; ++i) d(i) = (w(i + 1) - w(i - 1)) / (2.0 * h);
    d(0) = (-3.0 * w(0) + 4.0 * w(1) - w(2)) / (2.0 * h);
    d(m) = (3.0 * w(m) - 4.0 * w(m - 1) + w(m - 2)) / (2.0 * h);
    return d;
}

} // namespace detail

/// Barrier seed v = A sin(pi (t - ln a)/L) + linear boundary interpolation, with
/// A balancing the equation at the midpoint. It is admissible at tau = 0 when
/// pi^2/L^2 > n - 2.
[[nodiscard]] inline Vec radial_barrier_seed(const RadialOperator& op)
{
    const std::size_t m = op.size() - 1, mid = m / 2;
    const double ta = op.t(0), L = op.t(m) - ta;
    const double va = op.boundary_v(0), vb = op.boundary_v(m);
    auto profile = [&](double A) {
        Vec v(static_cast<Eigen::Index>(m + 1));
        for (std::size_t i = 0; i <= m; ++i) {
            const double s = (op.t(i) - ta) / L;
            v(static_cast<Eigen::Index>(i)) = A * std::sin(M_PI * s) + va + (vb - va) * s;
        }
        v(static_cast<Eigen::Index>(m)) = vb;
        return v;
    };
    auto mid_residual = [&](double logA) {
        const Vec v = profile(std::exp(logA));
        if (!op.equation().admissible(op.spectrum(v, mid))) return -std::numeric_limits<double>::infinity();
        return op.residual_at(v, mid);
    };
    double lo = -12.0, hi = 12.0;
    if (!(mid_residual(lo) < 0.0 && mid_residual(hi) > 0.0))
        throw domain_error("radial_barrier_seed: no amplitude balances the equation at the midpoint");
    boost::uintmax_t iters = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(mid_residual, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    const Vec v = profile(std::exp(0.5 * (a + b)));
    std::size_t bad = 0;
    if (!op.admissible(v, &bad))
        throw domain_error("radial_barrier_seed: seed leaves the cone at node " + std::to_string(bad));
    return v;
}

/// Radial tau path; the first tau is seeded by radial_barrier_seed unless a
/// seed w (on the t mesh) is given.
[[nodiscard]] inline TauPath solve_tau_path(const RadialProblem& p, const std::vector<double>& taus, double newton_tol = 1e-10,
                                            const PathOptions& opt = {}, const Vec* seed_w = nullptr)
{
    p.validate();
    if (taus.empty()) throw domain_error("solve_tau_path: empty tau ladder");
    TauPath path;
    path.radial = true;
    path.problem = p;
    path.newton_tol = newton_tol;
    const RadialOperator first(p, taus.front());
    Vec seed = seed_w ? first.to_v(*seed_w) : radial_barrier_seed(first);
    const Grid mesh = p.mesh();
    const double h = mesh.spacing(0), ta = std::log(p.a), L = std::log(p.b) - ta;
    auto make = [&](double tau) {
        struct Owned {
            RadialOperator op;
            detail::RadialSys sys{op};
            Owned(const RadialProblem& q, double t) : op(q, t) {}
            Owned(const Owned& o) : op(o.op) {}
            [[nodiscard]] bool admissible(const Vec& v) const { return sys.admissible(v); }
            [[nodiscard]] Vec residual(const Vec& v) const { return sys.residual(v); }
            [[nodiscard]] double norm(const Vec& F) const { return sys.norm(F); }
            [[nodiscard]] Vec step(const Vec& v, const Vec& F) const { return sys.step(v, F); }
        };
        return Owned(p, tau);
    };
    auto record = [&](double tau, const detail::NewtonResult& r) {
        const RadialOperator op(p, tau);
        GridFunction w(mesh);
        w.values = op.to_w(r.v);
        const Vec dwdt = detail::radial_dt(w.values, h);
        double c1 = 0.0;
        for (std::size_t i = 0; i < mesh.size(); ++i) {
            const double s = (op.t(i) - ta) / L;
            if (s < opt.window || s > 1.0 - opt.window) continue;
            c1 = std::max(c1, std::abs(dwdt(static_cast<Eigen::Index>(i))) * std::exp(-op.t(i)));
        }
        path.taus.push_back(tau);
        path.c0_bounds.push_back(w.values.cwiseAbs().maxCoeff());
        path.c1_bounds.push_back(c1);
        path.residuals.push_back(r.residual);
        path.iterations.push_back(r.iterations);
        path.solutions.push_back(std::move(w));
        detail::check_growth(path, opt);
    };
    detail::follow_path(make, std::move(seed), taus, newton_tol, opt, path, record);
    return path;
}

/// Grid tau path on a chart: Dirichlet values and the seed both come from
/// `data` (boundary nodes keep their values, interior nodes start from it).
[[nodiscard]] inline TauPath solve_tau_path(const MetricChart& chart, const LowerOrderTerms& terms, const Equation& eq,
                                            const GridFunction& data, const std::vector<double>& taus,
                                            double newton_tol = 1e-10, const PathOptions& opt = {})
{
    if (!(data.grid == chart.grid)) throw domain_error("solve_tau_path: data grid differs from the chart");
    if (terms.n != chart.dim() || eq.cone.n != chart.dim()) throw domain_error("solve_tau_path: dimension mismatch");
    TauPath path;
    path.chart = chart;
    path.terms = terms;
    path.equation = eq;
    path.newton_tol = newton_tol;
    auto make = [&](double tau) {
        Equation e = eq;
        e.tau = tau;
        return detail::GridSys{chart, terms, std::move(e), opt};
    };
    auto record = [&](double tau, const detail::NewtonResult& r) {
        GridFunction w(chart.grid);
        w.values = r.v;
        double c1 = 0.0;
        for (std::size_t i = 0; i < chart.grid.size(); ++i)
            if (chart.interior(i)) c1 = std::max(c1, w.gradient(i).norm());
        path.taus.push_back(tau);
        path.c0_bounds.push_back(w.values.cwiseAbs().maxCoeff());
        path.c1_bounds.push_back(c1);
        path.residuals.push_back(r.residual);
        path.iterations.push_back(r.iterations);
        path.solutions.push_back(std::move(w));
        detail::check_growth(path, opt);
    };
    detail::follow_path(make, data.values, taus, newton_tol, opt, path, record);
    return path;
}

/// Limit proxy of a radial path: the last profile, its kink and a profile
/// object for interpolation off the mesh.
struct RadialLimit {
    GridFunction w;                  ///< on the t mesh
    oracle::RadialProfile profile;   ///< same data, Hermite interpolation with one-sided slopes at the kink
    std::size_t kink_index = 0;      ///< argmax of |second difference| inside the window
    double kink_t = 0.0;             ///< intersection of the one-sided tangent lines
    double dw_left = 0.0, dw_right = 0.0;  ///< one-sided dw/dt
    double jump = 0.0;               ///< |dw_right - dw_left|
    double noise_floor = 0.0;        ///< max |second difference|/h away from the kink
    bool singular_regime = false;

    [[nodiscard]] double kink_radius() const { return std::exp(kink_t); }
};

struct LimitOptions {
    double window = 0.1;   ///< fraction of [ln a, ln b] ignored at each end
    int fit_gap = 2;       ///< one-sided fits start this many nodes from the kink
    int fit_width = 6;     ///< nodes per one-sided fit
    int smooth_gap = 10;   ///< noise floor ignores nodes this close to the kink
};

[[nodiscard]] inline RadialLimit extract_limit(const TauPath& path, const LimitOptions& opt = {})
{
    if (!path.radial || path.solutions.empty()) throw domain_error("extract_limit: needs a completed radial path");
    const RadialProblem& p = path.problem;
    RadialLimit out;
    out.w = path.solutions.back();
    out.singular_regime = p.singular_regime();
    const Vec& w = out.w.values;
    const Grid& mesh = out.w.grid;
    const double h = mesh.spacing(0), ta = mesh.origin(0);
    const auto m = static_cast<std::size_t>(w.size() - 1);
    auto t = [&](std::size_t i) { return ta + h * static_cast<double>(i); };
    const auto lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opt.window * static_cast<double>(m))));
    const std::size_t hi = m - lo;
    auto d2 = [&](std::size_t i) {
        const auto e = static_cast<Eigen::Index>(i);
        return std::abs(w(e + 1) - 2.0 * w(e) + w(e - 1));
    };
    double best = -1.0;
    for (std::size_t i = lo; i <= hi; ++i)
        if (d2(i) > best) {
            best = d2(i);
            out.kink_index = i;
        }
    const std::size_t k = out.kink_index;
    const auto gap = static_cast<std::size_t>(opt.fit_gap), width = static_cast<std::size_t>(opt.fit_width);
    if (k < gap + width || k + gap + width > m) throw domain_error("extract_limit: kink too close to the mesh ends");
    // Least-squares lines through the nodes on each side.
    auto line = [&](std::size_t from, std::size_t to) {
        double st = 0, sw = 0, stt = 0, stw = 0;
        const auto cnt = static_cast<double>(to - from + 1);
        for (std::size_t i = from; i <= to; ++i) {
            st += t(i);
            sw += w(static_cast<Eigen::Index>(i));
            stt += t(i) * t(i);
            stw += t(i) * w(static_cast<Eigen::Index>(i));
        }
        const double slope = (cnt * stw - st * sw) / (cnt * stt - st * st);
        return std::pair<double, double>{slope, (sw - slope * st) / cnt};
    };
    const auto [sl, il] = line(k - gap - width + 1, k - gap);
    const auto [sr, ir] = line(k + gap, k + gap + width - 1);
    out.dw_left = sl;
    out.dw_right = sr;
    out.jump = std::abs(sr - sl);
    out.kink_t = std::abs(sr - sl) > 0.0 ? (il - ir) / (sr - sl) : t(k);
    for (std::size_t i = lo; i <= hi; ++i)
        if (i + static_cast<std::size_t>(opt.smooth_gap) < k || i > k + static_cast<std::size_t>(opt.smooth_gap))
            out.noise_floor = std::max(out.noise_floor, d2(i) / h);

    oracle::RadialProfile& pr = out.profile;
    pr.n = p.n;
    pr.k = p.k;
    pr.a = p.a;
    pr.b = p.b;
    pr.R = p.R;
    pr.boundary_value = p.boundary_value;
    const Vec dw = detail::radial_dt(w, h);
    for (std::size_t i = 0; i <= m; ++i) {
        pr.t.push_back(t(i));
        pr.w.push_back(w(static_cast<Eigen::Index>(i)));
        pr.dw.push_back(dw(static_cast<Eigen::Index>(i)));
    }
    pr.d2w.assign(m + 1, 0.0);
    for (std::size_t i = 1; i < m; ++i) pr.d2w[i] = d2(i) / (h * h);
    pr.kink_index = k;
    pr.kink_t = t(k);
    pr.dw_left = sl;
    pr.dw_right = sr;
    return out;
}

/// The limit profile sampled as w(|x|) on a flat annulus chart.
[[nodiscard]] inline GridFunction lift_radial(const RadialLimit& lim, const Grid& g)
{
    return GridFunction::from(g, [&](const Vec& x) {
        const double r = x.norm();
        return r > 0.0 ? lim.profile.value_at_radius(r) : lim.profile.w.front();
    });
}

/// Singular mask of the lifted limit on the plane through the origin, which
/// carries the same singular circle. `margin` keeps the fits away from the
/// boundary layers.
struct SliceMask {
    MetricChart chart;
    SingularMask mask;
    double kink_radius = 0.0;
    double max_offset = 0.0;  ///< max ||x| - kink radius| over flagged nodes, in cells
    double flagged_fraction = 0.0;
};

[[nodiscard]] inline SliceMask singular_slice(const RadialLimit& lim, double h, double margin = 0.0)
{
    const double a = lim.profile.a, b = lim.profile.b;
    if (!(h > 0.0) || !(margin >= 0.0) || !(a + margin < b - margin)) throw domain_error("singular_slice: bad spacing or margin");
    SliceMask out;
    const Grid g = Grid::box(Vec::Constant(2, -b), Vec::Constant(2, b), h);
    out.chart = MetricChart::flat(g, DomainKind::annulus, a + margin, b - margin);
    out.kink_radius = lim.kink_radius();
    out.mask = detect_singular_set(lift_radial(lim, g), out.chart);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (out.mask.flags[i]) out.max_offset = std::max(out.max_offset, std::abs(g.coord(i).norm() - out.kink_radius) / h);
    const std::size_t ev = out.mask.evaluated_count();
    out.flagged_fraction = ev ? static_cast<double>(out.mask.count()) / static_cast<double>(ev) : 0.0;
    return out;
}

/// Result of the discrete trace-term absorption check: with C from
/// kconvex_shift_constant and K the sampled Lipschitz bound, the tau-shifted
/// spectra of W D^2(w + C|x|^2) W lie in the cone at every node.
struct KConvexReport {
    double lip = 0.0;
    double C = 0.0;
    std::size_t nodes = 0;
    std::size_t failures = 0;
    [[nodiscard]] bool pass() const { return failures == 0; }
};

[[nodiscard]] inline KConvexReport kconvex_check(const TauPath& path, std::size_t index)
{
    if (index >= path.solutions.size()) throw domain_error("kconvex_check: no such tau");
    const double tau = path.taus[index];
    const GridFunction& w = path.solutions[index];
    KConvexReport rep;
    if (path.radial) {
        const RadialProblem& p = path.problem;
        const ConeSpec cone = p.equation(tau).cone;
        const double h = w.grid.spacing(0);
        const Vec wt = detail::radial_dt(w.values, h);
        const Eigen::Index m = w.values.size() - 1;
        for (Eigen::Index i = 0; i <= m; ++i) rep.lip = std::max(rep.lip, std::abs(wt(i)) * std::exp(-w.grid.coord(static_cast<std::size_t>(i))(0)));
        rep.C = 1.05 * rep.lip * rep.lip / 4.0;  // flat L(x, p) <= |p|^2/2
        const double shift = (1.0 - tau) / (p.n - 2.0);
        for (Eigen::Index i = 1; i < m; ++i) {
            const double r = std::exp(w.grid.coord(static_cast<std::size_t>(i))(0));
            const double wtt = (w.values(i + 1) - 2.0 * w.values(i) + w.values(i - 1)) / (h * h);
            const double drr = (wtt - wt(i)) / (r * r) + 2.0 * rep.C, dtt = wt(i) / (r * r) + 2.0 * rep.C;
            const double T = drr + (p.n - 1) * dtt;
            Spectrum l = Spectrum::Constant(p.n, dtt + shift * T);
            l(0) = drr + shift * T;
            ++rep.nodes;
            if (!in_gamma_k(l, cone)) ++rep.failures;
        }
        return rep;
    }
    const MetricChart& chart = path.chart;
    const ConeSpec cone = path.equation ? path.equation->cone : ConeSpec{chart.dim(), chart.dim(), Strictness::open};
    for (std::size_t i = 0; i < chart.grid.size(); ++i)
        if (chart.interior(i)) rep.lip = std::max(rep.lip, w.gradient(i).norm());
    rep.C = kconvex_shift_constant(path.terms, rep.lip, chart);
    const int n = chart.dim();
    for (std::size_t i = 0; i < chart.grid.size(); ++i) {
        if (!chart.interior(i)) continue;
        const Mat W = path.terms.W(chart.grid.coord(i));
        const Mat m = W * (w.hessian(i) + 2.0 * rep.C * Mat::Identity(n, n)) * W;
        ++rep.nodes;
        if (!in_gamma_k(eigenvalues(tau_shift(Mat(0.5 * (m + m.transpose())), tau)), cone)) ++rep.failures;
    }
    return rep;
}

/// Discrete T_B(phi) + C int phi with T_B(phi) = int w B:D^2 phi and
/// C = 2 c tr(B), c from kconvex_shift_constant at the sampled Lipschitz bound
/// over the support of phi.
/// `by_parts` is the same pairing with both derivatives on w.
struct DualConeFunctional {
    double value = 0.0;
    double by_parts = 0.0;
    double C = 0.0;
    double scale = 0.0;  ///< sum of the magnitudes of the terms
};

[[nodiscard]] inline DualConeFunctional dualcone_positivity_functional(const GridFunction& w, const MetricChart& chart,
                                                                       const LowerOrderTerms& terms, const Mat& B,
                                                                       const GridFunction& phi)
{
    const Grid& g = chart.grid;
    const int n = g.n;
    if (!(w.grid == g) || !(phi.grid == g)) throw domain_error("dualcone_positivity_functional: grid mismatch");
    if (B.rows() != n || B.cols() != n) throw domain_error("dualcone_positivity_functional: B has the wrong size");
    const Mat Bs = 0.5 * (B + B.transpose());
    if (!in_dual_gamma2(eigenvalues(Bs)).member) throw domain_error("dualcone_positivity_functional: B is not in the dual cone");
    if (phi.values.minCoeff() < 0.0) throw domain_error("dualcone_positivity_functional: phi must be nonnegative");
    // phi must vanish on the edge layer and the layer inside it, so that the
    // central stencils of w and phi pair exactly.
    std::vector<std::uint8_t> near_edge(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.on_edge(i)) continue;
        near_edge[i] = 1;
        for (int a = 0; a < n; ++a)
            for (int s : {-1, 1}) {
                const long long j = static_cast<long long>(i) + s * static_cast<long long>(g.stride(a));
                if (j >= 0 && j < static_cast<long long>(g.size())) near_edge[static_cast<std::size_t>(j)] = 1;
            }
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!chart.inside[i] && phi[i] != 0.0) throw domain_error("dualcone_positivity_functional: phi must vanish outside the domain");
        if (near_edge[i] && phi[i] != 0.0) throw domain_error("dualcone_positivity_functional: phi must vanish near the grid edge");
    }
    double lip = 0.0;
    std::vector<std::uint8_t> support(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (phi[i] != 0.0) {
            support[i] = 1;
            lip = std::max(lip, w.gradient(i).norm());
        }
    DualConeFunctional out;
    out.C = 2.0 * kconvex_shift_constant(terms, lip, chart, 256, support) * Bs.trace();
    const double vol = g.spacing.prod();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.on_edge(i)) continue;
        const double tb = (Bs.array() * phi.hessian(i).array()).sum();
        out.value += vol * (w[i] * tb + out.C * phi[i]);
        out.scale += vol * (std::abs(w[i] * tb) + std::abs(out.C * phi[i]));
        if (phi[i] != 0.0) out.by_parts += vol * ((Bs.array() * w.hessian(i).array()).sum() + out.C) * phi[i];
    }
    return out;
}

[[nodiscard]] inline DualConeFunctional dualcone_positivity_functional(const TauPath& path, const Mat& B, const GridFunction& phi)
{
    if (path.radial || path.solutions.empty()) throw domain_error("dualcone_positivity_functional: needs a completed grid path");
    return dualcone_positivity_functional(path.solutions.back(), path.chart, path.terms, B, phi);
}

/// Smooth bump (1 - |x - c|^2/rho^2)^3 supported in the ball of radius rho.
[[nodiscard]] inline GridFunction bump(const Grid& g, const Vec& center, double rho)
{
    return GridFunction::from(g, [&](const Vec& x) {
        const double s = 1.0 - (x - center).squaredNorm() / (rho * rho);
        return s > 0.0 ? s * s * s : 0.0;
    });
}

/// Ellipticity and concavity probes of the Krylov operator at random points of
/// Gamma_{k-1}^+: directional derivatives along random PSD directions, and
/// second differences along random symmetric directions.
struct KrylovProbe {
    std::size_t points = 0;
    double min_derivative = std::numeric_limits<double>::infinity();
    double max_second_difference = -std::numeric_limits<double>::infinity();
};

[[nodiscard]] inline KrylovProbe krylov_probe(int n, const KrylovData& data, std::size_t points, int directions = 100,
                                              std::uint64_t seed = 1)
{
    const int k = data.k;
    if (k < 2 || k > n) throw domain_error("krylov_probe: need 2 <= k <= n");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const ConeSpec cone{n, k - 1, Strictness::open};
    auto gauss_mat = [&] {
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
        return a;
    };
    KrylovProbe out;
    const Vec x = Vec::Unit(n, 0);
    while (out.points < points) {
        Spectrum l(n);
        for (int i = 0; i < n; ++i) l(i) = gauss(rng);
        l.array() += 2.0 * (unif(rng) + 1.0) / n;
        if (!in_gamma_k(l, cone) || sigma_k(l, k - 1) < 1e-3 * std::pow(l.norm(), k - 1)) continue;
        const double z = unif(rng);
        const Eigen::HouseholderQR<Mat> qr(gauss_mat());
        const Mat Q = qr.householderQ();
        const Mat M0 = Q * l.asDiagonal() * Q.transpose();
        const Mat M = 0.5 * (M0 + M0.transpose());
        const SymEigen e = jacobi_eigen(M);
        const Mat G = spectral_gradient(e, krylov_grad(e.values, z, x, data));
        auto F = [&](const Mat& A) { return krylov_f(eigenvalues(A), z, x, data); };
        const double fm = F(M);
        for (int d = 0; d < directions; ++d) {
            const Mat a = gauss_mat();
            const Mat P0 = a * a.transpose() / n;
            const Mat P = 0.5 * (P0 + P0.transpose());
            out.min_derivative = std::min(out.min_derivative, (G.array() * P.array()).sum() / P.norm());
            const Mat S0 = gauss_mat();
            const Mat S = 0.5 * (S0 + S0.transpose());
            const double eps = 1e-3 * std::max(l.cwiseAbs().minCoeff(), 1e-2) / S.norm();
            const Mat Sp = M + eps * S, Sm = M - eps * S;
            if (!in_gamma_k(eigenvalues(Sp), cone) || !in_gamma_k(eigenvalues(Sm), cone)) continue;
            out.max_second_difference = std::max(out.max_second_difference, (F(Sp) - 2.0 * fm + F(Sm)) / (eps * eps * S.squaredNorm()));
        }
        ++out.points;
    }
    return out;
}

} // namespace sigk
