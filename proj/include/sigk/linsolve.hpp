#pragma once

#include <sigk/geometry.hpp>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/SparseExtra>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace sigk {

/// a^{ij} h_ij + b^i h_i + c h = f with Dirichlet data, all fields nodal.
struct LinearProblem {
    std::vector<Mat> a;
    std::vector<Vec> b;
    Vec c;
    Vec f;
    Vec boundary_values;             ///< used on every node that is not an unknown
    std::vector<std::uint8_t> mask;  ///< optional: nodes to solve for; empty means chart interior
    double ellipticity = 0.0;        ///< min eigenvalue of a over the unknowns, set by validate

    /// Zero-initialized problem with a = I on every node of the grid.
    static LinearProblem laplace(const Grid& g)
    {
        LinearProblem p;
        const auto m = g.size();
        p.a.assign(m, Mat::Identity(g.n, g.n));
        p.b.assign(m, Vec::Zero(g.n));
        p.c = Vec::Zero(static_cast<Eigen::Index>(m));
        p.f = Vec::Zero(static_cast<Eigen::Index>(m));
        p.boundary_values = Vec::Zero(static_cast<Eigen::Index>(m));
        return p;
    }
};

struct SolveOptions {
    std::size_t direct_budget = 5000;  ///< max unknowns for the sparse LU
    double max_condition = 1e14;
    double positive_c_tol = 1e-10;
    std::string dump_path;  ///< matrix-market dump of the assembled system when non-empty
};

struct SolveStats {
    std::size_t unknowns = 0;
    double residual = 0.0;  ///< ||A h - rhs||_inf / ||rhs||_inf
    double condition_estimate = 0.0;
    bool iterative = false;
};

namespace detail {

inline std::vector<std::uint8_t> unknown_nodes(const LinearProblem& p, const MetricChart& chart)
{
    const Grid& g = chart.grid;
    std::vector<std::uint8_t> u(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i)
        u[i] = p.mask.empty() ? (chart.interior(i) ? 1 : 0) : ((p.mask[i] && !g.on_edge(i)) ? 1 : 0);
    return u;
}

inline void validate(LinearProblem& p, const MetricChart& chart, const std::vector<std::uint8_t>& unknown)
{
    const auto m = chart.grid.size();
    const auto sm = static_cast<Eigen::Index>(m);
    if (p.a.size() != m || p.b.size() != m || p.c.size() != sm || p.f.size() != sm || p.boundary_values.size() != sm ||
        (!p.mask.empty() && p.mask.size() != m))
        throw domain_error("LinearProblem: field sizes do not match the grid");
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        if (!unknown[i]) continue;
        const Mat& a = p.a[i];
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
            throw domain_error("LinearProblem: a is not symmetric at node " + std::to_string(i));
        lo = std::min(lo, jacobi_eigen(a).values(0));
    }
    if (!(lo > 0.0)) throw domain_error("LinearProblem: a is not elliptic");
    p.ellipticity = lo;
}

/// Hager's estimate of ||A^{-1}||_1 from solves with A and A^T.
template <class Solver>
double inverse_norm1(Solver& lu, Eigen::Index m)
{
    Vec x = Vec::Constant(m, 1.0 / static_cast<double>(m));
    double est = 0.0;
    for (int it = 0; it < 5; ++it) {
        const Vec y = lu.solve(x);
        est = y.lpNorm<1>();
        const Vec s = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
        const Vec z = lu.transpose().solve(s);
        Eigen::Index j = 0;
        if (z.cwiseAbs().maxCoeff(&j) <= z.dot(x)) break;
        x.setZero();
        x(j) = 1.0;
    }
    return est;
}

} // namespace detail

/// Second-order stencil system: centered first and pure second differences,
/// the symmetric 4-point stencil for mixed derivatives. A couples unknowns,
/// B couples unknowns to the Dirichlet nodes (columns indexed by node).
struct AssembledSystem {
    Eigen::SparseMatrix<double> A;
    Eigen::SparseMatrix<double> B;
    std::vector<long long> column;  ///< node -> unknown index, -1 for Dirichlet nodes
    std::vector<std::size_t> node;  ///< unknown index -> node

    /// f at the unknowns minus the Dirichlet contributions.
    [[nodiscard]] Vec rhs(const Vec& f, const Vec& boundary_values) const
    {
        Vec r(static_cast<Eigen::Index>(node.size()));
        for (std::size_t i = 0; i < node.size(); ++i) r(static_cast<Eigen::Index>(i)) = f(static_cast<Eigen::Index>(node[i]));
        return r - B * boundary_values;
    }

    [[nodiscard]] Vec restrict(const Vec& nodal) const
    {
        Vec r(static_cast<Eigen::Index>(node.size()));
        for (std::size_t i = 0; i < node.size(); ++i) r(static_cast<Eigen::Index>(i)) = nodal(static_cast<Eigen::Index>(node[i]));
        return r;
    }
};

[[nodiscard]] inline AssembledSystem assemble(const LinearProblem& p, const MetricChart& chart,
                                              const std::vector<std::uint8_t>& unknown)
{
    const Grid& g = chart.grid;
    const int n = g.n;
    AssembledSystem s;
    s.column.assign(g.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (unknown[i]) {
            s.column[i] = static_cast<long long>(s.node.size());
            s.node.push_back(i);
        }
    const auto m = static_cast<Eigen::Index>(s.node.size());
    std::vector<Eigen::Triplet<double>> inner, outer;
    inner.reserve(s.node.size() * static_cast<std::size_t>(1 + 2 * n + 2 * n * (n - 1)));
    for (Eigen::Index row = 0; row < m; ++row) {
        const std::size_t i = s.node[static_cast<std::size_t>(row)];
        auto add = [&](long long j, double coef) {
            const auto jj = static_cast<std::size_t>(j);
            if (s.column[jj] >= 0)
                inner.emplace_back(row, s.column[jj], coef);
            else
                outer.emplace_back(row, static_cast<Eigen::Index>(jj), coef);
        };
        const Mat& a = p.a[i];
        const Vec& b = p.b[i];
        const auto base = static_cast<long long>(i);
        double diag = p.c(static_cast<Eigen::Index>(i));
        for (int k = 0; k < n; ++k) {
            const auto sk = static_cast<long long>(g.stride(k));
            const double h = g.spacing(k);
            const double second = a(k, k) / (h * h), first = b(k) / (2.0 * h);
            add(base + sk, second + first);
            add(base - sk, second - first);
            diag -= 2.0 * second;
            for (int l = k + 1; l < n; ++l) {
                const auto sl = static_cast<long long>(g.stride(l));
                const double q = 2.0 * a(k, l) / (4.0 * h * g.spacing(l));
                add(base + sk + sl, q);
                add(base - sk - sl, q);
                add(base + sk - sl, -q);
                add(base - sk + sl, -q);
            }
        }
        inner.emplace_back(row, row, diag);
    }
    s.A.resize(m, m);
    s.A.setFromTriplets(inner.begin(), inner.end());
    s.A.makeCompressed();
    s.B.resize(m, static_cast<Eigen::Index>(g.size()));
    s.B.setFromTriplets(outer.begin(), outer.end());
    s.B.makeCompressed();
    return s;
}

/// Factored Dirichlet operator, reusable for many right-hand sides. Small
/// systems use a sparse LU; larger ones BiCGSTAB with an incomplete LU.
class DirichletSolver {
public:
    DirichletSolver(LinearProblem p, const MetricChart& chart, SolveOptions opt = {})
        : p_(std::move(p)), grid_(chart.grid), opt_(std::move(opt))
    {
        unknown_ = detail::unknown_nodes(p_, chart);
        detail::validate(p_, chart, unknown_);
        sys_ = assemble(p_, chart, unknown_);
        const auto m = static_cast<Eigen::Index>(sys_.node.size());
        if (m == 0) throw domain_error("solve_dirichlet: no interior unknowns");
        if (!opt_.dump_path.empty()) Eigen::saveMarket(sys_.A, opt_.dump_path);
        stats_.unknowns = sys_.node.size();
        if (sys_.node.size() <= opt_.direct_budget) {
            lu_ = std::make_shared<LU>();
            lu_->analyzePattern(sys_.A);
            lu_->factorize(sys_.A);
            if (lu_->info() != Eigen::Success)
                throw solver_error("solve_dirichlet: singular system (" + lu_->lastErrorMessage() + ")");
            double anorm = 0.0;
            for (Eigen::Index j = 0; j < sys_.A.outerSize(); ++j) {
                double col = 0.0;
                for (Eigen::SparseMatrix<double>::InnerIterator it(sys_.A, j); it; ++it) col += std::abs(it.value());
                anorm = std::max(anorm, col);
            }
            stats_.condition_estimate = anorm * detail::inverse_norm1(*lu_, m);
            if (!(stats_.condition_estimate <= opt_.max_condition))
                throw solver_error("solve_dirichlet: ill-conditioned system, condition estimate " +
                                   std::to_string(stats_.condition_estimate));
        } else {
            it_ = std::make_shared<Iterative>();
            it_->preconditioner().setFillfactor(2);
            it_->preconditioner().setDroptol(1e-4);
            it_->setMaxIterations(100000);
            it_->setTolerance(1e-12);
            it_->compute(sys_.A);
            if (it_->info() != Eigen::Success) throw solver_error("solve_dirichlet: preconditioner failed");
            stats_.iterative = true;
        }
        if (p_.c.maxCoeff() > opt_.positive_c_tol) {
            // Small positive c is accepted only if the maximum principle survives.
            const Vec y = solve_unknowns(Vec::Constant(m, -1.0));
            if (y.minCoeff() < -1e-10) throw solver_error("solve_dirichlet: positive c breaks the maximum principle");
        }
    }

    [[nodiscard]] const LinearProblem& problem() const { return p_; }
    [[nodiscard]] const AssembledSystem& system() const { return sys_; }
    [[nodiscard]] const std::vector<std::uint8_t>& unknowns() const { return unknown_; }
    [[nodiscard]] const SolveStats& stats() const { return stats_; }

    /// Solution for nodal f and Dirichlet data. The optional guess seeds the
    /// iterative path and is ignored by the direct one.
    [[nodiscard]] GridFunction solve(const Vec& f, const Vec& boundary_values, const GridFunction* guess = nullptr) const
    {
        const Vec x = solve_unknowns(sys_.rhs(f, boundary_values), guess ? sys_.restrict(guess->values) : Vec());
        GridFunction h(grid_);
        h.values = boundary_values;
        for (std::size_t r = 0; r < sys_.node.size(); ++r) h[sys_.node[r]] = x(static_cast<Eigen::Index>(r));
        for (std::size_t i = 0; i < grid_.size(); ++i) h.boundary[i] = unknown_[i] ? 0 : 1;
        return h;
    }

    [[nodiscard]] GridFunction solve() const { return solve(p_.f, p_.boundary_values); }

    /// Discrete a^{ij}h_ij + b^i h_i + c h at the unknowns; zero elsewhere.
    [[nodiscard]] Vec apply(const GridFunction& h) const { return apply_system(sys_, h); }

    static Vec apply_system(const AssembledSystem& s, const GridFunction& h)
    {
        const Vec ax = s.A * s.restrict(h.values) + s.B * h.values;
        Vec out = Vec::Zero(h.values.size());
        for (std::size_t r = 0; r < s.node.size(); ++r) out(static_cast<Eigen::Index>(s.node[r])) = ax(static_cast<Eigen::Index>(r));
        return out;
    }

private:
    using LU = Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>;
    using Iterative = Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>>;

    Vec solve_unknowns(const Vec& rhs, const Vec& guess = Vec()) const
    {
        Vec x;
        if (lu_) {
            x = lu_->solve(rhs);
        } else {
            x = guess.size() == rhs.size() ? Vec(it_->solveWithGuess(rhs, guess)) : Vec(it_->solve(rhs));
            if (it_->info() != Eigen::Success) throw solver_error("solve_dirichlet: iterative solve did not converge");
        }
        const double rn = std::max(rhs.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
        const double res = (sys_.A * x - rhs).cwiseAbs().maxCoeff() / rn;
        stats_.residual = res;
        if (!(res <= 1e-10)) throw solver_error("solve_dirichlet: residual " + std::to_string(res) + " above tolerance");
        return x;
    }

    LinearProblem p_;
    Grid grid_;
    SolveOptions opt_;
    std::vector<std::uint8_t> unknown_;
    AssembledSystem sys_;
    std::shared_ptr<LU> lu_;
    std::shared_ptr<Iterative> it_;
    mutable SolveStats stats_;
};

/// Discrete a^{ij}h_ij + b^i h_i + c h at the unknowns; zero elsewhere.
[[nodiscard]] inline Vec apply_operator(const LinearProblem& p, const MetricChart& chart, const GridFunction& h)
{
    return DirichletSolver::apply_system(assemble(p, chart, detail::unknown_nodes(p, chart)), h);
}

[[nodiscard]] inline GridFunction solve_dirichlet(LinearProblem p, const MetricChart& chart, const SolveOptions& opt = {},
                                                  SolveStats* stats = nullptr)
{
    const DirichletSolver s(std::move(p), chart, opt);
    GridFunction h = s.solve();
    if (stats) *stats = s.stats();
    return h;
}

} // namespace sigk
