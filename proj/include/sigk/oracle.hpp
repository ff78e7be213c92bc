#pragma once

#include <sigk/errors.hpp>
#include <sigk/grid.hpp>
#include <sigk/symfun.hpp>

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sigk::oracle {

enum class Kind { hyperbolic_halfspace, hyperbolic_ball, sphere_factor };

/// Closed-form conformal factor on flat R^n. For the hyperbolic kinds
/// sigma_k^{1/k}(lambda(-g_w^{-1} A_{g_w})) = R; the sphere factor solves the
/// positive-cone problem sigma_k^{1/k}(lambda(g_w^{-1} A_{g_w})) = R.
struct ExactSolution {
    Kind kind = Kind::hyperbolic_halfspace;
    int n = 3;
    int k = 3;
    double R = 1.0;
    double shift = 0.0;  ///< c_k

    [[nodiscard]] double base(const Vec& x) const
    {
        switch (kind) {
        case Kind::hyperbolic_halfspace: return -std::log(x(n - 1));
        case Kind::hyperbolic_ball: return std::log(2.0 / (1.0 - x.squaredNorm()));
        case Kind::sphere_factor: return std::log(2.0 / (1.0 + x.squaredNorm()));
        }
        return 0.0;
    }

    [[nodiscard]] bool in_domain(const Vec& x) const
    {
        switch (kind) {
        case Kind::hyperbolic_halfspace: return x(n - 1) > 0.0;
        case Kind::hyperbolic_ball: return x.squaredNorm() < 1.0;
        case Kind::sphere_factor: return true;
        }
        return false;
    }

    [[nodiscard]] double operator()(const Vec& x) const { return base(x) + shift; }

    [[nodiscard]] Vec gradient(const Vec& x) const
    {
        Vec g = Vec::Zero(n);
        switch (kind) {
        case Kind::hyperbolic_halfspace: g(n - 1) = -1.0 / x(n - 1); break;
        case Kind::hyperbolic_ball: g = 2.0 * x / (1.0 - x.squaredNorm()); break;
        case Kind::sphere_factor: g = -2.0 * x / (1.0 + x.squaredNorm()); break;
        }
        return g;
    }

    [[nodiscard]] Mat hessian(const Vec& x) const
    {
        Mat h = Mat::Zero(n, n);
        const Mat id = Mat::Identity(n, n);
        switch (kind) {
        case Kind::hyperbolic_halfspace: h(n - 1, n - 1) = 1.0 / (x(n - 1) * x(n - 1)); break;
        case Kind::hyperbolic_ball: {
            const double q = 1.0 - x.squaredNorm();
            h = 2.0 * id / q + 4.0 * x * x.transpose() / (q * q);
            break;
        }
        case Kind::sphere_factor: {
            const double q = 1.0 + x.squaredNorm();
            h = -2.0 * id / q + 4.0 * x * x.transpose() / (q * q);
            break;
        }
        }
        return h;
    }

    /// Common eigenvalue of -g_w^{-1} A_{g_w} (of +g_w^{-1} A_{g_w} for the sphere).
    [[nodiscard]] double eigenvalue() const { return 0.5 * std::exp(-2.0 * shift); }

    GridFunction sample(const Grid& g) const
    {
        GridFunction w(g);
        for (std::size_t i = 0; i < g.size(); ++i) w[i] = (*this)(g.coord(i));
        return w;
    }
};

/// c_k = (1/(2k)) ln(C(n,k) 2^{-k} / R^k): the shift that turns the unit
/// eigenvalue 1/2 into a solution with f-level right-hand side R.
[[nodiscard]] inline double normalization_shift(int n, int k, double R = 1.0)
{
    return std::log(binomial(n, k) * std::pow(2.0, -k) / std::pow(R, k)) / (2.0 * k);
}

[[nodiscard]] inline ExactSolution make(Kind kind, int n, int k, double R = 1.0)
{
    if (n < 3 || k < 1 || k > n) throw domain_error("oracle: need n >= 3 and 1 <= k <= n");
    if (!(R > 0.0)) throw domain_error("oracle: R must be positive");
    return ExactSolution{kind, n, k, R, normalization_shift(n, k, R)};
}

[[nodiscard]] inline ExactSolution hyperbolic_halfspace(int n, int k, double R = 1.0)
{
    return make(Kind::hyperbolic_halfspace, n, k, R);
}
[[nodiscard]] inline ExactSolution hyperbolic_ball(int n, int k, double R = 1.0) { return make(Kind::hyperbolic_ball, n, k, R); }
[[nodiscard]] inline ExactSolution sphere_factor(int n, int k, double R = 1.0) { return make(Kind::sphere_factor, n, k, R); }

/// Radial conformal factor on an annulus in t = ln r.
struct RadialProfile {
    int n = 3, k = 3;
    double a = 1.0, b = 4.0, R = 1.0, boundary_value = 8.0;
    std::vector<double> t, w, dw, d2w;
    std::size_t kink_index = 0;  ///< mesh node nearest the kink
    double kink_t = 0.0;
    double dw_left = 0.0, dw_right = 0.0;  ///< one-sided dw/dt at the kink

    [[nodiscard]] double kink_radius() const { return std::exp(kink_t); }

    /// Cubic Hermite interpolation in t with the nodal slopes of each node's own branch.
    [[nodiscard]] double value_at_t(double s) const
    {
        if (s <= t.front()) return w.front();
        if (s >= t.back()) return w.back();
        const double dt = t[1] - t[0];
        auto i = static_cast<std::size_t>(std::floor((s - t.front()) / dt));
        i = std::min(i, t.size() - 2);
        const double h = t[i + 1] - t[i], q = (s - t[i]) / h;
        const double h00 = 2 * q * q * q - 3 * q * q + 1, h10 = q * q * q - 2 * q * q + q;
        const double h01 = -2 * q * q * q + 3 * q * q, h11 = q * q * q - q * q;
        return h00 * w[i] + h10 * h * dw[i] + h01 * w[i + 1] + h11 * h * dw[i + 1];
    }

    [[nodiscard]] double value_at_radius(double r) const { return value_at_t(std::log(r)); }
};

namespace detail {

/// v = e^{-(w + t)}; lambda_r = -v v'' + v'^2/2 + v^2/2, lambda_t = (v'^2 - v^2)/2
/// (multiplicity n-1). lambda_r as fixed by sigma_k^{1/k}(lambda_r, lambda_t, ...) = R.
inline double radial_lr(double lt, int n, int k, double R)
{
    if (!(lt > 0.0)) throw oracle_error("annulus oracle: tangential eigenvalue left the cone");
    return (std::pow(R, k) - binomial(n - 1, k) * std::pow(lt, k)) / (binomial(n - 1, k - 1) * std::pow(lt, k - 1));
}

/// v'' = v + (lambda_t - lambda_r)/v.
inline double radial_v2(double v, double lt, int n, int k, double R) { return v + (lt - radial_lr(lt, n, k, R)) / v; }

/// With s = lambda_t^k the radial equation gives s' = k (v'/v)(alpha s - beta),
/// alpha = 1 + C(n-1,k)/C(n-1,k-1), beta = R^k/C(n-1,k-1), so
/// (beta - alpha s)/v^{k alpha} = D is constant along a branch. What remains is
/// v' = sqrt(v^2 + 2 lambda_t(v)) with lambda_t(v) = ((beta - D v^{k alpha})/alpha)^{1/k},
/// which reaches lambda_t = 0 at v = (beta/D)^{1/(k alpha)}. D = 0 is the
/// constant-curvature branch.
struct RadialOde {
    int n = 3, k = 3;
    double R = 1.0, alpha = 1.0, beta = 1.0;
    double log_D = -std::numeric_limits<double>::infinity();

    RadialOde(int n_, int k_, double R_) : n(n_), k(k_), R(R_)
    {
        alpha = 1.0 + binomial(n - 1, k) / binomial(n - 1, k - 1);
        beta = std::pow(R, k) / binomial(n - 1, k - 1);
    }

    [[nodiscard]] double v_hit() const { return std::exp((std::log(beta) - log_D) / (k * alpha)); }

    [[nodiscard]] double lt(double v) const
    {
        const double s = (beta - std::exp(log_D + k * alpha * std::log(v))) / alpha;
        return s > 0.0 ? std::pow(s, 1.0 / k) : 0.0;
    }

    [[nodiscard]] double dv(double v) const { return std::sqrt(v * v + 2.0 * lt(v)); }
};

struct Branch {
    std::vector<double> v, dv, lt;
    double hit = std::numeric_limits<double>::infinity();  ///< distance from the start to lambda_t = 0
    double v_hit = 0.0;
};

/// RK4 from v0 with fixed step dt. Stops inside the step where v passes v_hit
/// (located by linear interpolation) or after max_steps. Nodal states are kept
/// only when `keep`.
inline Branch integrate(const RadialOde& ode, double v0, double dt, std::size_t max_steps, bool keep)
{
    Branch b;
    b.v_hit = ode.v_hit();
    if (!(v0 < b.v_hit)) {
        b.hit = 0.0;
        return b;
    }
    double v = v0;
    auto push = [&] {
        if (!keep) return;
        b.v.push_back(v);
        b.dv.push_back(ode.dv(v));
        b.lt.push_back(ode.lt(v));
    };
    push();
    for (std::size_t i = 0; i < max_steps; ++i) {
        const double k1 = ode.dv(v), k2 = ode.dv(v + 0.5 * dt * k1), k3 = ode.dv(v + 0.5 * dt * k2), k4 = ode.dv(v + dt * k3);
        const double vn = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!std::isfinite(vn)) throw oracle_error("annulus oracle: integration diverged");
        if (vn >= b.v_hit) {
            b.hit = dt * (static_cast<double>(i) + (b.v_hit - v) / (vn - v));
            return b;
        }
        v = vn;
        push();
    }
    return b;
}

/// log D whose branch reaches lambda_t = 0 at distance L from the start.
inline double shoot(RadialOde ode, double v0, double L, double dt)
{
    const auto cap = static_cast<std::size_t>(std::ceil(L / dt)) + 4;
    auto miss = [&](double log_D) {
        ode.log_D = log_D;
        const Branch b = integrate(ode, v0, dt, cap, false);
        return (std::isfinite(b.hit) ? b.hit : dt * static_cast<double>(cap + 1)) - L;
    };
    // Above hi the branch starts on lambda_t = 0.
    const double hi = std::log(ode.beta) - ode.k * ode.alpha * std::log(v0);
    double lo = hi - 1.0;
    for (int i = 0; i < 64 && miss(lo) <= 0.0; ++i) lo -= 8.0;
    if (!(miss(lo) > 0.0)) throw oracle_error("annulus oracle: shooting bracket not found");
    boost::uintmax_t iters = 200;
    const auto [x0, x1] = boost::math::tools::toms748_solve(miss, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (x0 + x1);
}

} // namespace detail

struct AnnulusOptions {
    double boundary_value = 8.0;  ///< w = M_bc on both boundary spheres
    double step = 1e-4;           ///< nominal RK4 step in t
    bool symmetrize = false;      ///< outer boundary value mirrors the inner one, so the kink sits at ln(ab)/2
};

/// Radial viscosity solution of sigma_k^{1/k}(lambda(-g_w^{-1}A_{g_w})) = R on
/// {a < |x| < b} with large boundary values. Each branch is shot by RK4 from its
/// boundary sphere; the shooting parameter makes the tangential eigenvalue reach
/// 0 at the gluing point t*, where dw/dt jumps from -2 to 0. t* solves
/// v_inner(t*) = v_outer(t*); it is ln(ab)/2 when the data are symmetric.
[[nodiscard]] inline RadialProfile annulus_radial(int n, int k, double a, double b, double R = 1.0,
                                                  AnnulusOptions opt = {})
{
    if (n < 3 || k < 1 || k > n) throw domain_error("annulus_radial: need n >= 3, 1 <= k <= n");
    if (!(2 * k > n)) throw domain_error("annulus_radial: singular examples need k > n/2");
    if (!(0.0 < a && a < b)) throw domain_error("annulus_radial: need 0 < a < b");
    if (!(R > 0.0)) throw domain_error("annulus_radial: R must be positive");
    if (!(opt.step > 0.0)) throw domain_error("annulus_radial: step must be positive");
    const double ta = std::log(a), tb = std::log(b), t0 = 0.5 * (ta + tb), L = tb - ta;
    const auto m = static_cast<std::size_t>(std::llround(L / opt.step));
    const double dt = L / static_cast<double>(m);
    const detail::RadialOde ode(n, k, R);

    const double va = std::exp(-opt.boundary_value - ta);
    const double vb = opt.symmetrize ? va : std::exp(-opt.boundary_value - tb);
    auto branch = [&](double log_D) {
        detail::RadialOde o = ode;
        o.log_D = log_D;
        return o;
    };
    double t_star = t0;
    if (vb != va) {
        auto gap = [&](double ts) {
            return branch(detail::shoot(ode, va, ts - ta, dt)).v_hit() - branch(detail::shoot(ode, vb, tb - ts, dt)).v_hit();
        };
        boost::uintmax_t iters = 100;
        const auto [x0, x1] = boost::math::tools::toms748_solve(gap, t0 - 0.25 * L, t0 + 0.25 * L,
                                                                boost::math::tools::eps_tolerance<double>(48), iters);
        t_star = 0.5 * (x0 + x1);
    }
    const detail::RadialOde ode_in = branch(detail::shoot(ode, va, t_star - ta, dt));
    const detail::RadialOde ode_out = opt.symmetrize ? ode_in : branch(detail::shoot(ode, vb, tb - t_star, dt));
    const detail::Branch in = detail::integrate(ode_in, va, dt, m, true);
    const detail::Branch out = opt.symmetrize ? in : detail::integrate(ode_out, vb, dt, m, true);

    RadialProfile p;
    p.n = n;
    p.k = k;
    p.a = a;
    p.b = b;
    p.R = R;
    p.boundary_value = opt.boundary_value;
    p.t.resize(m + 1);
    p.w.resize(m + 1);
    p.dw.resize(m + 1);
    p.d2w.resize(m + 1);
    for (std::size_t i = 0; i <= m; ++i) {
        p.t[i] = ta + dt * static_cast<double>(i);
        const bool left = p.t[i] <= t_star;
        // out.v[j] lives at t = tb - j dt, i.e. mesh index m - j.
        const std::size_t j = left ? i : m - i;
        const detail::Branch& br = left ? in : out;
        double v = 0.0, dv = 0.0, v2 = 0.0;
        if (j < br.v.size() && br.lt[j] > 0.0) {
            v = br.v[j];
            dv = br.dv[j];
            v2 = detail::radial_v2(v, br.lt[j], n, k, R);
        } else {
            // Node within the shooting tolerance of t*: the lambda_t = 0 limit.
            v = br.v_hit;
            dv = v;
            v2 = std::numeric_limits<double>::infinity();
        }
        if (!left) dv = -dv;
        p.w[i] = -std::log(v) - p.t[i];
        p.dw[i] = -dv / v - 1.0;
        p.d2w[i] = -v2 / v + dv * dv / (v * v);
    }
    p.kink_t = t_star;
    p.kink_index = static_cast<std::size_t>(std::llround((t_star - ta) / dt));
    // lambda_t = 0 means |v'| = v on both sides.
    p.dw_left = -2.0;
    p.dw_right = 0.0;
    return p;
}

/// Bit-level asymmetry max |w(t0 + s) + (t0 + s) - w(t0 - s) - (t0 - s)|:
/// the reflection acts on u = w + t.
[[nodiscard]] inline double reflection_asymmetry(const RadialProfile& p)
{
    const std::size_t m = p.t.size() - 1;
    double worst = 0.0;
    for (std::size_t i = 0; i <= m; ++i) {
        const double u1 = p.w[i] + p.t[i], u2 = p.w[m - i] + p.t[m - i];
        worst = std::max(worst, std::abs(u1 - u2));
    }
    return worst;
}

} // namespace sigk::oracle
