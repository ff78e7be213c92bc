#pragma once

#include <sigk/equation.hpp>
#include <sigk/geometry.hpp>
#include <sigk/linsolve.hpp>
#include <sigk/viscosity.hpp>

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace sigk {

/// Value, gradient and Hessian of a function at one point.
struct Jet {
    double value = 0.0;
    Vec grad;
    Mat hess;
};

[[nodiscard]] inline Jet jet_of(const Paraboloid& P, const Vec& x) { return {P(x), P.grad_at(x), P.hessian}; }

[[nodiscard]] inline Jet jet_at(const GridFunction& u, std::size_t node) { return {u[node], u.gradient(node), u.hessian(node)}; }

/// W(x)(D^2 u + L(x, Du))W(x), tau-shifted.
[[nodiscard]] inline Mat augmented_matrix(const LowerOrderTerms& terms, double tau, const Vec& x, const Jet& j)
{
    const Mat w = terms.W(x);
    const Mat m = w * (j.hess + terms.L(x, j.grad)) * w;
    return tau_shift(Mat(0.5 * (m + m.transpose())), tau);
}

/// f(lambda) - R e^{2u} at x; throws cone_exit_error (node = npos) outside the cone.
[[nodiscard]] inline double operator_value(const LowerOrderTerms& terms, const Equation& eq, const Vec& x, const Jet& j)
{
    const Spectrum l = eigenvalues(augmented_matrix(terms, eq.tau, x, j));
    if (!eq.admissible(l)) throw cone_exit_error("operator: augmented spectrum left the cone", std::numeric_limits<std::size_t>::max());
    return eq.residual(l, j.value, x);
}

/// Coefficients (a, b, c) of the linearization of u -> f(lambda) - R e^{2u} at a jet.
struct PointCoefficients {
    Mat a;
    Vec b;
    double c = 0.0;
};

[[nodiscard]] inline PointCoefficients linearize_at(const LowerOrderTerms& terms, const Equation& eq, const Vec& x, const Jet& j)
{
    const int n = terms.n;
    const SymEigen e = jacobi_eigen(augmented_matrix(terms, eq.tau, x, j));
    if (!eq.admissible(e.values)) throw cone_exit_error("linearize: augmented spectrum left the cone", std::numeric_limits<std::size_t>::max());
    Mat G = spectral_gradient(e, eq.df(e.values, j.value, x));
    if (eq.tau != 1.0) G += (1.0 - eq.tau) / (n - 2.0) * G.trace() * Mat::Identity(n, n);
    const Mat w = terms.W(x);
    PointCoefficients out;
    out.a = w * G * w;
    out.a = 0.5 * (out.a + out.a.transpose());
    const std::vector<Mat> dl = terms.dL_dp(x, j.grad);
    out.b = Vec(n);
    for (int s = 0; s < n; ++s) out.b(s) = (out.a.array() * dl[static_cast<std::size_t>(s)].array()).sum();
    out.c = eq.residual_dz(e.values, j.value, x);
    return out;
}

/// The rescaled local problem around a basepoint x0, in coordinates y = (x - x0)/r:
/// L^r = r^2 L0 + r L1 + L2, P_r(y) = P(x0 + r y) + ln r, R_r(y) = R(x0 + r y), W_r(y) = W(x0 + r y).
struct BlowupProblem {
    double r = 1.0;
    Vec x0;
    Paraboloid P;
    LowerOrderTerms terms;    ///< original, x coordinates
    LowerOrderTerms terms_r;  ///< rescaled, y coordinates
    Equation eq;              ///< original
    Equation eq_r;            ///< right-hand side R_r
    MetricChart chart;        ///< flat chart on [-1,1]^n carrying the grid
    std::vector<std::uint8_t> mask;  ///< nodes of the open domain
    GridFunction P_r;
    Vec R_r;
    std::vector<Mat> W_r;

    [[nodiscard]] Vec to_x(const Vec& y) const { return x0 + r * y; }
    [[nodiscard]] const Grid& grid() const { return chart.grid; }
};

[[nodiscard]] inline LowerOrderTerms rescale_terms(const LowerOrderTerms& t, const Vec& x0, double r)
{
    if (t.flat) return LowerOrderTerms::flat_space(t.n);
    LowerOrderTerms s;
    s.n = t.n;
    auto base = std::make_shared<LowerOrderTerms>(t);
    auto at = [x0, r](const Vec& y) { return Vec(x0 + r * y); };
    s.schouten = [base, at, r](const Vec& y) { return Mat(r * r * base->schouten(at(y))); };
    s.gamma = [base, at, r](const Vec& y) {
        Christoffel c = base->gamma(at(y));
        for (double& v : c) v *= r;
        return c;
    };
    s.metric = [base, at](const Vec& y) { return base->metric(at(y)); };
    s.metric_inv = [base, at](const Vec& y) { return base->metric_inv(at(y)); };
    s.w = [base, at](const Vec& y) { return base->w(at(y)); };
    return s;
}

/// The same equation with every position argument read as y, x = x0 + r y.
[[nodiscard]] inline Equation rescale_equation(const Equation& eq, const Vec& x0, double r)
{
    Equation e = eq;
    auto base = std::make_shared<Equation>(eq);
    auto at = [x0, r](const Vec& y) { return Vec(x0 + r * y); };
    e.f = [base, at](const Spectrum& l, double z, const Vec& y) { return base->f(l, z, at(y)); };
    e.df = [base, at](const Spectrum& l, double z, const Vec& y) { return base->df(l, z, at(y)); };
    if (eq.dz) e.dz = [base, at](const Spectrum& l, double z, const Vec& y) { return base->dz(l, z, at(y)); };
    e.rhs = [base, at](const Vec& y) { return base->rhs(at(y)); };
    return e;
}

/// Domain of the rescaled problem in y. The ball's staircase boundary puts
/// O(|Dv|/h) noise into difference Hessians next to it, which swamps the O(r^2)
/// curvature of P_r on fine grids; the cube has grid-aligned Dirichlet nodes.
enum class LocalDomain { cube, ball };

/// cells: grid cells per unit length in y, so h_y = 1/cells and h_x = r/cells.
[[nodiscard]] inline BlowupProblem blowup(const Paraboloid& P, const LowerOrderTerms& terms, const Equation& eq, double r,
                                          int cells = 32, LocalDomain shape = LocalDomain::cube,
                                          const MetricChart* domain = nullptr)
{
    if (!(r > 0.0 && r <= 1.0)) throw domain_error("blowup: need 0 < r <= 1");
    if (cells < 4) throw domain_error("blowup: need at least 4 cells per unit length");
    const int n = terms.n;
    if (P.base.size() != n) throw domain_error("blowup: paraboloid dimension mismatch");
    if (domain) {
        const Grid& g = domain->grid;
        for (int a = 0; a < n; ++a) {
            const double lo = g.origin(a), hi = lo + g.spacing(a) * (g.dims[static_cast<std::size_t>(a)] - 1);
            if (P.base(a) - r < lo || P.base(a) + r > hi) throw domain_error("blowup: rescaled ball leaves the chart");
        }
    }
    BlowupProblem bp;
    bp.r = r;
    bp.x0 = P.base;
    bp.P = P;
    bp.terms = terms;
    bp.terms_r = rescale_terms(terms, P.base, r);
    bp.eq = eq;
    bp.eq_r = rescale_equation(eq, P.base, r);
    bp.chart = MetricChart::flat(Grid::box(Vec::Constant(n, -1.0), Vec::Constant(n, 1.0), 1.0 / cells));
    const Grid& g = bp.chart.grid;
    bp.mask.assign(g.size(), 0);
    bp.P_r = GridFunction(g);
    bp.R_r = Vec(static_cast<Eigen::Index>(g.size()));
    bp.W_r.resize(g.size());
    const double lr = std::log(r);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec y = g.coord(i);
        bp.mask[i] = shape == LocalDomain::cube || y.norm() < 1.0 - 1e-12 ? 1 : 0;
        bp.P_r[i] = P(bp.to_x(y)) + lr;
        bp.R_r(static_cast<Eigen::Index>(i)) = bp.eq_r.rhs(y);
        bp.W_r[i] = bp.terms_r.W(y);
    }
    return bp;
}

/// Jet of v + P_r at a node: differences of v plus the exact jet of the
/// quadratic P_r, which keeps the ln r offset out of the difference quotients.
[[nodiscard]] inline Jet local_jet(const BlowupProblem& bp, const GridFunction& v, std::size_t node)
{
    const Vec x = bp.to_x(bp.grid().coord(node));
    return {bp.P_r[node] + v[node], Vec(bp.r * bp.P.grad_at(x) + v.gradient(node)), Mat(bp.r * bp.r * bp.P.hessian + v.hessian(node))};
}

/// F^r[v] at the unknown nodes (zero elsewhere).
[[nodiscard]] inline Vec local_residual(const BlowupProblem& bp, const GridFunction& v)
{
    const Grid& g = bp.grid();
    Vec out = Vec::Zero(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!bp.mask[i] || g.on_edge(i)) continue;
        try {
            out(static_cast<Eigen::Index>(i)) = operator_value(bp.terms_r, bp.eq_r, g.coord(i), local_jet(bp, v, i));
        } catch (const cone_exit_error&) {
            throw cone_exit_error("local solver: augmented spectrum left the cone", i);
        }
    }
    return out;
}

/// Linearization of F^r at v: a = W_r (df/dM) W_r, b^s = a^{ij} dL^r_ij/dp_s, c = dF/dz.
[[nodiscard]] inline LinearProblem linearize(const BlowupProblem& bp, const GridFunction& v)
{
    const Grid& g = bp.grid();
    LinearProblem p = LinearProblem::laplace(g);
    p.mask = bp.mask;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!bp.mask[i] || g.on_edge(i)) continue;
        PointCoefficients pc;
        try {
            pc = linearize_at(bp.terms_r, bp.eq_r, g.coord(i), local_jet(bp, v, i));
        } catch (const cone_exit_error&) {
            throw cone_exit_error("linearize: augmented spectrum left the cone", i);
        }
        p.a[i] = pc.a;
        p.b[i] = pc.b;
        p.c(static_cast<Eigen::Index>(i)) = pc.c;
    }
    return p;
}

/// Adjusts the value of P so that the equation holds at its basepoint
/// (monotone root-find in the value); P is returned unchanged if the residual
/// is already within tol.
[[nodiscard]] inline Paraboloid project_seed(Paraboloid P, const LowerOrderTerms& terms, const Equation& eq, double tol = 1e-8)
{
    const Vec& x0 = P.base;
    const Spectrum l = eigenvalues(augmented_matrix(terms, eq.tau, x0, jet_of(P, x0)));
    if (!eq.admissible(l)) throw domain_error("project_seed: seed spectrum is not in the cone");
    auto res = [&](double z) { return eq.residual(l, z, x0); };
    if (std::abs(res(P.value)) <= tol) return P;
    double lo = P.value - 1.0, hi = P.value + 1.0;
    for (int i = 0; i < 60 && res(lo) * res(hi) > 0.0; ++i) {
        lo -= std::ldexp(1.0, i);
        hi += std::ldexp(1.0, i);
    }
    if (res(lo) * res(hi) > 0.0) throw domain_error("project_seed: no value solves the equation at the basepoint");
    boost::uintmax_t iters = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(res, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    P.value = 0.5 * (a + b);
    return P;
}

struct ContractionTrace {
    std::vector<std::pair<double, double>> iterates;  ///< (||v||_inf, ||F^r[v]||_inf)
    std::vector<double> steps;                        ///< ||v_{k+1} - v_k||_inf
    bool converged = false;
    double rate = 0.0;  ///< largest ratio of consecutive steps above round-off
};

struct LocalSolution {
    BlowupProblem problem;
    GridFunction v;  ///< w^(r) - P_r
    GridFunction w;  ///< w^(r)
    ContractionTrace trace;
    double r = 0.0;
    bool newton = false;             ///< produced by the Newton fallback, not the contraction map
    std::vector<double> rejected_r;  ///< scales that failed before r was accepted
};

struct ContractOptions {
    /// Stop when ||F^r[v]||_inf <= tol * max |R_r e^{2 P_r}|; the scale makes
    /// the tolerance independent of r, since both sides of the equation are O(r^2).
    double tol = 1e-10;
    int max_iter = 40;
    SolveOptions linear;
};

namespace detail {

inline double residual_scale(const BlowupProblem& bp)
{
    double s = 0.0;
    for (std::size_t i = 0; i < bp.mask.size(); ++i)
        if (bp.mask[i]) s = std::max(s, std::abs(bp.R_r(static_cast<Eigen::Index>(i))) * std::exp(2.0 * bp.P_r[i]));
    return s > 0.0 ? s : 1.0;
}

inline LocalSolution finish(const BlowupProblem& bp, const GridFunction& v, ContractionTrace tr)
{
    LocalSolution out;
    out.problem = bp;
    out.r = bp.r;
    out.v = v;
    out.w = bp.P_r;
    out.w.values += v.values;
    out.trace = std::move(tr);
    return out;
}

} // namespace detail

/// Chord iteration T(v) = DF^r[0]^{-1}(-F^r[v] + DF^r[0] v) from v = 0, with
/// v = 0 on the boundary.
[[nodiscard]] inline LocalSolution contract_solve(const BlowupProblem& bp, const ContractOptions& opt = {})
{
    const Grid& g = bp.grid();
    const auto N = static_cast<Eigen::Index>(g.size());
    const double tol = opt.tol * detail::residual_scale(bp);
    GridFunction v(g);
    const DirichletSolver lin(linearize(bp, v), bp.chart, opt.linear);
    ContractionTrace tr;
    Vec F = local_residual(bp, v);
    tr.iterates.emplace_back(0.0, F.cwiseAbs().maxCoeff());
    const double floor = 1e-13 * std::max(1.0, bp.P_r.values.cwiseAbs().maxCoeff());
    int bad = 0;
    for (int it = 0; it < opt.max_iter && !(tr.iterates.back().second <= tol); ++it) {
        const GridFunction next = lin.solve(Vec(lin.apply(v) - F), Vec::Zero(N), &v);
        const double step = (next.values - v.values).cwiseAbs().maxCoeff();
        if (!tr.steps.empty() && tr.steps.back() > floor && step > floor) {
            const double q = step / tr.steps.back();
            tr.rate = std::max(tr.rate, q);
            bad = q >= 1.0 ? bad + 1 : 0;
            if (bad >= 5) throw non_contraction_error("contract_solve: no contraction over 5 iterates at r = " + std::to_string(bp.r));
        }
        tr.steps.push_back(step);
        v = next;
        F = local_residual(bp, v);
        tr.iterates.emplace_back(v.values.cwiseAbs().maxCoeff(), F.cwiseAbs().maxCoeff());
    }
    tr.converged = tr.iterates.back().second <= tol;
    if (!tr.converged) throw non_contraction_error("contract_solve: residual above tolerance after max_iter at r = " + std::to_string(bp.r));
    return detail::finish(bp, v, std::move(tr));
}

/// Damped Newton iteration for the same discrete problem; the step is halved
/// while an iterate leaves the cone. Used where the contraction map is too
/// slow to be accepted but the local solution is still wanted.
[[nodiscard]] inline LocalSolution newton_solve(const BlowupProblem& bp, const ContractOptions& opt = {})
{
    const Grid& g = bp.grid();
    const auto N = static_cast<Eigen::Index>(g.size());
    const double tol = opt.tol * detail::residual_scale(bp);
    GridFunction v(g);
    ContractionTrace tr;
    Vec F = local_residual(bp, v);
    tr.iterates.emplace_back(0.0, F.cwiseAbs().maxCoeff());
    for (int it = 0; it < opt.max_iter && !(tr.iterates.back().second <= tol); ++it) {
        const DirichletSolver lin(linearize(bp, v), bp.chart, opt.linear);
        const GridFunction d = lin.solve(Vec(-F), Vec::Zero(N));
        double t = 1.0;
        for (;; t *= 0.5) {
            if (t < 1e-4) throw non_contraction_error("newton_solve: step collapsed at r = " + std::to_string(bp.r));
            GridFunction trial = v;
            trial.values += t * d.values;
            try {
                const Vec Ft = local_residual(bp, trial);
                if (t < 1.0 && !(Ft.cwiseAbs().maxCoeff() < tr.iterates.back().second)) continue;
                v = trial;
                F = Ft;
                break;
            } catch (const cone_exit_error&) {
            }
        }
        tr.steps.push_back(t * d.values.cwiseAbs().maxCoeff());
        tr.iterates.emplace_back(v.values.cwiseAbs().maxCoeff(), F.cwiseAbs().maxCoeff());
    }
    tr.converged = tr.iterates.back().second <= tol;
    if (!tr.converged) throw non_contraction_error("newton_solve: residual above tolerance after max_iter at r = " + std::to_string(bp.r));
    for (std::size_t q = 1; q < tr.steps.size(); ++q)
        if (tr.steps[q - 1] > 0.0) tr.rate = std::max(tr.rate, tr.steps[q] / tr.steps[q - 1]);
    LocalSolution out = detail::finish(bp, v, std::move(tr));
    out.newton = true;
    return out;
}

struct LocalOptions {
    double r_start = 0.4;
    double r_min = 1e-3;
    double accept_rate = 0.6;  ///< contraction factor above which r is halved
    int cells = 32;
    LocalDomain shape = LocalDomain::cube;
    ContractOptions contract;
};

/// Projects the seed, then halves r from r_start until the contraction map
/// converges with measured rate at most accept_rate.
[[nodiscard]] inline LocalSolution solve_local(const Paraboloid& seed, const LowerOrderTerms& terms, const Equation& eq,
                                               const LocalOptions& opt = {})
{
    const Paraboloid P = project_seed(seed, terms, eq);
    std::vector<double> rejected;
    for (double r = opt.r_start; r >= opt.r_min; r *= 0.5) {
        try {
            LocalSolution s = contract_solve(blowup(P, terms, eq, r, opt.cells, opt.shape), opt.contract);
            if (s.trace.rate <= opt.accept_rate) {
                s.rejected_r = rejected;
                return s;
            }
        } catch (const non_contraction_error&) {
        } catch (const cone_exit_error&) {
        }
        rejected.push_back(r);
    }
    throw non_contraction_error("solve_local: no scale above r_min contracts");
}

/// F^r_u(M, p, z, y) = e^{-2u} f(lambda(W_r(r^2 M + D^2u + L^r(y, r^2 p + Du))W_r)) - R_r(y) e^{2 r^2 z}.
[[nodiscard]] inline double savin_F(const LowerOrderTerms& terms_r, const Equation& eq_r, double r, const Jet& u, const Mat& M,
                                    const Vec& p, double z, const Vec& y)
{
    const Jet shifted{u.value, Vec(r * r * p + u.grad), Mat(r * r * M + u.hess)};
    const Spectrum l = eigenvalues(augmented_matrix(terms_r, eq_r.tau, y, shifted));
    if (!eq_r.admissible(l)) throw cone_exit_error("savin_F: spectrum left the cone", std::numeric_limits<std::size_t>::max());
    return std::exp(-2.0 * u.value) * eq_r.f(l, u.value, y) - eq_r.rhs(y) * std::exp(2.0 * r * r * z);
}

struct SavinReport {
    double lambda_min = std::numeric_limits<double>::infinity();
    double Lambda_max = 0.0;
    double K = 0.0;
    double zero_check = 0.0;
    double monotonicity_defect = 0.0;  ///< max of F(M) - F(M + N) over PSD N, clipped at 0
    std::size_t probes = 0;
    bool cone_safe = true;
    bool pass = false;
};

struct SavinOptions {
    double delta = 0.05;
    int nodes = 64;            ///< probe nodes, spread over the unknowns
    int tuples_per_node = 4;
    std::uint64_t seed = 1;
};

/// Probes H1-H4 for F^r_{w^(r)} on a deterministic sample of (M, p, z, y)
/// with |M|, |p|, |z| <= delta.
[[nodiscard]] inline SavinReport savin_check(const LocalSolution& sol, const SavinOptions& opt = {})
{
    const BlowupProblem& bp = sol.problem;
    const Grid& g = bp.grid();
    const int n = g.n;
    const double r = bp.r;
    SavinReport rep;
    std::vector<std::size_t> unknowns;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (bp.mask[i] && !g.on_edge(i)) unknowns.push_back(i);
    for (std::size_t i : unknowns) {
        const Jet u = local_jet(bp, sol.v, i);
        const double f0 = savin_F(bp.terms_r, bp.eq_r, r, u, Mat::Zero(n, n), Vec::Zero(n), 0.0, g.coord(i));
        rep.zero_check = std::max(rep.zero_check, std::abs(f0));
    }
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_sym = [&](double scale) {
        Mat m(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) m(a, b) = m(b, a) = gauss(rng);
        return Mat(scale * m / std::max(m.norm(), 1e-300));
    };
    auto random_vec = [&](double scale) {
        Vec v(n);
        for (int a = 0; a < n; ++a) v(a) = gauss(rng);
        return Vec(scale * v / std::max(v.norm(), 1e-300));
    };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t stride = std::max<std::size_t>(1, unknowns.size() / static_cast<std::size_t>(opt.nodes));
    const double d = opt.delta;
    for (std::size_t s = 0; s < unknowns.size(); s += stride) {
        const std::size_t i = unknowns[s];
        const Vec y = g.coord(i);
        const Jet u = local_jet(bp, sol.v, i);
        for (int t = 0; t < opt.tuples_per_node; ++t) {
            const Mat M = random_sym(0.5 * d * unit(rng));
            const Vec p = random_vec(d * unit(rng));
            const double z = d * (2.0 * unit(rng) - 1.0);
            auto F = [&](const Mat& m, const Vec& q, double zz) { return savin_F(bp.terms_r, bp.eq_r, r, u, m, q, zz, y); };
            try {
                const double f = F(M, p, z);
                // H1: PSD increment within the box.
                Mat N = random_sym(1.0);
                N = N * N.transpose();
                N *= 0.5 * d / std::max(N.norm(), 1e-300);
                rep.monotonicity_defect = std::max(rep.monotonicity_defect, f - F(M + N, p, z));
                // H2: dF/dM = e^{-2u} r^2 W G W at the shifted matrix.
                const Jet shifted{u.value, Vec(r * r * p + u.grad), Mat(r * r * M + u.hess)};
                const PointCoefficients pc = linearize_at(bp.terms_r, bp.eq_r, y, shifted);
                const Spectrum ell = eigenvalues(Mat(std::exp(-2.0 * u.value) * r * r * pc.a));
                rep.lambda_min = std::min(rep.lambda_min, ell(0));
                rep.Lambda_max = std::max(rep.Lambda_max, ell(n - 1));
                // H4: first and second differences in a random direction of (M, p, z).
                const Mat dM = random_sym(1.0);
                const Vec dp = random_vec(1.0);
                const double dz = 2.0 * unit(rng) - 1.0;
                const double e = 0.25 * d;
                const double fp = F(M + e * dM, p + e * dp, z + e * dz), fm = F(M - e * dM, p - e * dp, z - e * dz);
                const double first = std::abs(fp - fm) / (2.0 * e);
                const double second = std::abs(fp - 2.0 * f + fm) / (e * e);
                rep.K = std::max({rep.K, first, second});
                ++rep.probes;
            } catch (const cone_exit_error&) {
                rep.cone_safe = false;
            }
        }
    }
    rep.pass = rep.cone_safe && rep.lambda_min > 0.0 && rep.zero_check <= 1e-8 && rep.monotonicity_defect <= 1e-10;
    return rep;
}

/// max |F^r_{u_r}(M, p, z, y) - F_u(M, r p, r^2 z, x)| / max(1, |F_u|) over
/// random tuples, for u given by its jets in x coordinates and
/// u_r(y) = u(x0 + r y) + ln r.
[[nodiscard]] inline double savin_scaling_defect(const BlowupProblem& bp, const std::function<Jet(const Vec&)>& u, int count,
                                                 double delta = 0.05, std::uint64_t seed = 7)
{
    const int n = bp.terms.n;
    const double r = bp.r;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < count; ++t) {
        Vec y(n);
        do {
            for (int a = 0; a < n; ++a) y(a) = unit(rng);
        } while (y.norm() >= 1.0);
        Mat M(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) M(a, b) = M(b, a) = 0.5 * delta * unit(rng);
        Vec p(n);
        for (int a = 0; a < n; ++a) p(a) = delta * unit(rng);
        const double z = delta * unit(rng);
        const Vec x = bp.to_x(y);
        const Jet ux = u(x);
        const Jet ur{ux.value + std::log(r), Vec(r * ux.grad), Mat(r * r * ux.hess)};
        const double lhs = savin_F(bp.terms_r, bp.eq_r, r, ur, M, p, z, y);
        const double rhs = savin_F(bp.terms, bp.eq, 1.0, ux, M, Vec(r * p), r * r * z, x);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    return worst;
}

/// Seed residual and distance-to-seed measurements over a ladder of scales.
/// Scales where the contraction map fails are solved by newton_solve and
/// marked as not accepted.
struct ScalingStudy {
    std::vector<double> r;
    std::vector<double> seed_residual;  ///< |F^r[0]|_{0,alpha;B_1}
    std::vector<double> distance;       ///< ||w^(r) - P_r||_inf
    std::vector<double> rate;        ///< contraction factor; Newton step ratio where the map failed
    std::vector<int> iterations;
    std::vector<bool> accepted;      ///< contraction map converged with rate <= accept_rate
    double residual_slope = 0.0;
    double distance_slope = 0.0;
    double alpha = 0.5;
};

[[nodiscard]] inline double holder_norm(const GridFunction& f, const std::vector<std::uint8_t>& region, double alpha)
{
    const HolderNorms h = weighted_holder(f, region, alpha, 0);
    return h.sup_norm + h.seminorm;
}

[[nodiscard]] inline ScalingStudy scaling_study(const Paraboloid& seed, const LowerOrderTerms& terms, const Equation& eq,
                                                const std::vector<double>& ladder, const LocalOptions& opt = {}, double alpha = 0.5)
{
    if (ladder.size() < 2) throw domain_error("scaling_study: need at least two scales");
    const Paraboloid P = project_seed(seed, terms, eq);
    ScalingStudy out;
    out.alpha = alpha;
    std::vector<std::pair<double, double>> res, dist;
    for (double r : ladder) {
        const BlowupProblem bp = blowup(P, terms, eq, r, opt.cells, opt.shape);
        const Grid& g = bp.grid();
        std::vector<std::uint8_t> region(g.size(), 0);
        for (std::size_t i = 0; i < g.size(); ++i) region[i] = bp.mask[i] && !g.on_edge(i);
        GridFunction f0(g);
        f0.values = local_residual(bp, GridFunction(g));
        LocalSolution s;
        bool accepted = false;
        try {
            s = contract_solve(bp, opt.contract);
            accepted = s.trace.rate <= opt.accept_rate;
        } catch (const non_contraction_error&) {
            s = newton_solve(bp, opt.contract);
        } catch (const cone_exit_error&) {
            s = newton_solve(bp, opt.contract);
        }
        out.accepted.push_back(accepted);
        out.r.push_back(r);
        out.seed_residual.push_back(holder_norm(f0, region, alpha));
        out.distance.push_back(s.v.values.cwiseAbs().maxCoeff());
        out.rate.push_back(s.trace.rate);
        out.iterations.push_back(static_cast<int>(s.trace.steps.size()));
        res.emplace_back(r, out.seed_residual.back());
        dist.emplace_back(r, out.distance.back());
    }
    out.residual_slope = detail::loglog_slope(res);
    out.distance_slope = detail::loglog_slope(dist);
    return out;
}

} // namespace sigk
