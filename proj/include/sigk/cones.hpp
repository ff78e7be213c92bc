#pragma once

#include <sigk/symfun.hpp>

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

namespace sigk {

enum class Strictness { open, closed };

struct ConeSpec {
    int n = 3;
    int k = 2;
    Strictness strictness = Strictness::open;

    void validate() const
    {
        if (n < 1 || k < 1 || k > n) throw domain_error("ConeSpec: need 1 <= k <= n");
    }
};

/// Half-width of the band around a cone boundary treated as "on the boundary".
inline constexpr double boundary_band = 1e-6;

template <class Derived>
[[nodiscard]] bool in_gamma_k(const Eigen::MatrixBase<Derived>& lambda, const ConeSpec& cone)
{
    if (lambda.size() != cone.n) throw domain_error("in_gamma_k: dimension mismatch");
    const Vec e = all_sigma(lambda);
    for (int j = 1; j <= cone.k; ++j) {
        if (cone.strictness == Strictness::open ? !(e(j) > 0.0) : !(e(j) >= 0.0)) return false;
    }
    return true;
}

template <class Derived>
[[nodiscard]] bool in_gamma_k(const Eigen::MatrixBase<Derived>& lambda, int k)
{
    return in_gamma_k(lambda, ConeSpec{static_cast<int>(lambda.size()), k, Strictness::open});
}

struct DualConeCertificate {
    bool member = false;
    double margin = 0.0;
    std::optional<Spectrum> witness;
};

/// Deterministic quasi-uniform directions on S^{n-1}. For n = 3 this is the
/// Fibonacci lattice; otherwise a Kronecker sequence pushed through the
/// inverse normal CDF and normalized.
[[nodiscard]] inline std::vector<Vec> sphere_mesh(int n, int count)
{
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(count));
    if (n == 3) {
        const double golden = M_PI * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < count; ++i) {
            const double z = 1.0 - (2.0 * i + 1.0) / count;
            const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double phi = golden * i;
            pts.push_back(Vec{{rr * std::cos(phi), rr * std::sin(phi), z}});
        }
        return pts;
    }
    // Generalized golden ratio: root of x^{n+1} = x + 1.
    double phi = 2.0;
    for (int it = 0; it < 60; ++it) phi = std::pow(1.0 + phi, 1.0 / (n + 1));
    Vec alpha(n);
    for (int j = 0; j < n; ++j) alpha(j) = std::fmod(std::pow(1.0 / phi, j + 1), 1.0);
    for (int i = 0; i < count; ++i) {
        Vec g(n);
        for (int j = 0; j < n; ++j) {
            const double u = std::fmod(0.5 + (i + 1) * alpha(j), 1.0);
            g(j) = std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0);
        }
        pts.push_back(g / g.norm());
    }
    return pts;
}

namespace detail {

/// Moves a unit vector toward e along the great circle until it enters the
/// closed cone; bisection to machine precision.
inline Vec pull_into_cone(const Vec& mu, const ConeSpec& cone)
{
    const ConeSpec closed{cone.n, cone.k, Strictness::closed};
    if (in_gamma_k(mu, closed)) return mu;
    const Vec e = Vec::Ones(mu.size()) / std::sqrt(static_cast<double>(mu.size()));
    double lo = 0.0, hi = 1.0;  // fraction of the way toward e
    auto at = [&](double s) {
        Vec v = (1.0 - s) * mu + s * e;
        return Vec(v / v.norm());
    };
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (in_gamma_k(at(mid), closed))
            hi = mid;
        else
            lo = mid;
    }
    return at(hi);
}

} // namespace detail

namespace detail {

/// Mesh points inside the closed cone, built once per (n, k, count).
inline const std::vector<Vec>& cone_mesh(int n, int k, int count)
{
    static std::mutex lock;
    static std::map<std::tuple<int, int, int>, std::vector<Vec>> cache;
    const std::scoped_lock guard(lock);
    auto it = cache.find({n, k, count});
    if (it == cache.end()) {
        const ConeSpec closed{n, k, Strictness::closed};
        std::vector<Vec> pts;
        for (const Vec& p : sphere_mesh(n, count))
            if (in_gamma_k(p, closed)) pts.push_back(p);
        it = cache.emplace(std::tuple{n, k, count}, std::move(pts)).first;
    }
    return it->second;
}

} // namespace detail

/// Smallest lambda.mu over unit mu in the closed cone, found by scanning the
/// sphere mesh and refining the best mesh points by projected descent.
/// The search stops early once a value below stop_below is found.
[[nodiscard]] inline std::pair<double, Vec> min_pairing_over_cone(const Vec& lambda, const ConeSpec& cone,
                                                                  int mesh,
                                                                  double stop_below = -std::numeric_limits<double>::infinity())
{
    const int n = static_cast<int>(lambda.size());
    std::vector<std::pair<double, const Vec*>> scan;
    for (const Vec& p : detail::cone_mesh(n, cone.k, mesh)) scan.emplace_back(lambda.dot(p), &p);
    const std::size_t keep_scan = std::min<std::size_t>(8, scan.size());
    std::partial_sort(scan.begin(), scan.begin() + static_cast<std::ptrdiff_t>(keep_scan), scan.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    if (!scan.empty() && scan.front().first < stop_below) return {scan.front().first, *scan.front().second};
    std::vector<std::pair<double, Vec>> cand;
    for (std::size_t c = 0; c < keep_scan; ++c) cand.emplace_back(scan[c].first, *scan[c].second);
    const Vec e = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
    cand.emplace_back(lambda.dot(e), e);
    const std::size_t keep = std::min<std::size_t>(8, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    double best = cand.front().first;
    Vec arg = cand.front().second;
    const double ln = std::max(lambda.norm(), 1e-300);
    for (std::size_t c = 0; c < keep; ++c) {
        Vec mu = cand[c].second;
        double val = lambda.dot(mu);
        double step = 0.25;
        for (int it = 0; it < 400 && step > 1e-13; ++it) {
            Vec g = lambda - lambda.dot(mu) * mu;  // tangential gradient
            if (g.norm() < 1e-15 * ln) break;
            Vec trial = mu - step * g / g.norm();
            trial = detail::pull_into_cone(Vec(trial / trial.norm()), cone);
            const double tv = lambda.dot(trial);
            if (tv < val - 1e-16 * ln) {
                mu = trial;
                val = tv;
                step *= 1.5;
                if (val < stop_below) return {val, mu};
            } else {
                step *= 0.5;
            }
        }
        if (val < best) {
            best = val;
            arg = mu;
        }
    }
    return {best, arg};
}

/// Closed-form membership in the dual of Gamma_2^+:
/// lambda in the closed positive orthant with |lambda|^2 <= sigma_1^2/(n-1).
[[nodiscard]] inline DualConeCertificate in_dual_gamma2(const Spectrum& lambda)
{
    const int n = static_cast<int>(lambda.size());
    if (n < 2) throw domain_error("in_dual_gamma2: n >= 2 required");
    const double s1 = lambda.sum();
    const double margin = std::min(lambda.minCoeff(), s1 * s1 / (n - 1) - lambda.squaredNorm());
    DualConeCertificate c;
    c.member = margin >= 0.0;
    c.margin = margin;
    if (!c.member) {
        // Violating direction: minimize over the boundary circle of the unit
        // cross-section, which is the round cone |mu|^2 = sigma_1(mu)^2.
        const Vec e = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
        Vec perp = lambda - lambda.dot(e) * e;
        Vec mu;
        if (perp.norm() < 1e-300) {
            mu = e;
        } else {
            const double cos_a = 1.0 / std::sqrt(static_cast<double>(n));
            mu = cos_a * e - std::sqrt(1.0 - cos_a * cos_a) * perp / perp.norm();
        }
        c.witness = mu;
    }
    return c;
}

/// Pairing oracle for the dual cone of Gamma_k^+: true iff lambda.mu >= -1e-10
/// for every mu found in the (refined) mesh of unit Gamma_k^+ directions.
[[nodiscard]] inline bool in_dual_bruteforce(const Spectrum& lambda, int k, int mesh = 4096)
{
    if (mesh < 16) throw domain_error("in_dual_bruteforce: mesh >= 16 required");
    const ConeSpec cone{static_cast<int>(lambda.size()), k, Strictness::open};
    return min_pairing_over_cone(lambda, cone, mesh, -1e-10).first >= -1e-10;
}

[[nodiscard]] inline bool in_dual_gamma2_bruteforce(const Spectrum& lambda, int mesh = 4096)
{
    return in_dual_bruteforce(lambda, 2, mesh);
}

/// Membership in the dual of Gamma_k^+: closed form for k = 2, and for k > 2
/// the containment (Gamma_2^+)^* in (Gamma_k^+)^* first, then the pairing oracle.
[[nodiscard]] inline bool in_dual_gamma_k(const Spectrum& lambda, int k, int mesh = 4096)
{
    if (k == 2) return in_dual_gamma2(lambda).member;
    if (k > 2 && in_dual_gamma2(lambda).member) return true;
    return in_dual_bruteforce(lambda, k, mesh);
}

struct RhoStarOptions {
    int restarts = 50;
    std::uint64_t seed = 20240917;
    int max_iter = 3000;
};

/// inf of lambda.mu / n over mu in Gamma_k^+ with rho_k(mu) = 1, computed as
/// the minimum over directions of lambda.mu / (n rho_k(mu)) by gradient descent
/// from (1,...,1) plus seeded restarts. Approximate from above.
[[nodiscard]] inline double rho_k_star_unchecked(const Spectrum& lambda, const ConeSpec& cone,
                                                 const RhoStarOptions& opt = {})
{
    const int n = static_cast<int>(lambda.size());
    const int k = cone.k;
    const ConeSpec open{n, k, Strictness::open};
    auto phi = [&](const Vec& mu) { return lambda.dot(mu) / (n * rho_k(mu, k)); };
    auto descend = [&](Vec mu) {
        mu /= mu.norm();
        double val = phi(mu);
        double step = 0.1;
        for (int it = 0; it < opt.max_iter && step > 1e-16; ++it) {
            const double rho = rho_k(mu, k);
            const double s = sigma_k(mu, k);
            const Vec grho = grad_sigma_k(mu, k) * (rho / (k * s));
            Vec g = (lambda * rho - lambda.dot(mu) * grho) / (n * rho * rho);
            g -= g.dot(mu) * mu;
            const double gn = g.norm();
            if (gn < 1e-14) break;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls) {
                Vec trial = mu - step * g / gn;
                trial /= trial.norm();
                if (in_gamma_k(trial, open)) {
                    const double tv = phi(trial);
                    if (tv < val) {
                        const double gain = val - tv;
                        mu = trial;
                        val = tv;
                        step *= 2.0;
                        moved = true;
                        if (gain <= 1e-15 * std::max(1.0, std::abs(val))) step = 0.0;
                        break;
                    }
                }
                step *= 0.5;
                if (step < 1e-16) break;
            }
            if (!moved) break;
        }
        return val;
    };
    double best = descend(Vec::Ones(n));
    std::mt19937_64 gen(opt.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int r = 0; r < opt.restarts; ++r) {
        Vec mu(n);
        do {
            for (int i = 0; i < n; ++i) mu(i) = 1.0 + 0.8 * nd(gen);
        } while (!in_gamma_k(mu, open));
        best = std::min(best, descend(mu));
    }
    return best;
}

[[nodiscard]] inline double rho_k_star(const Spectrum& lambda, const ConeSpec& cone,
                                       const RhoStarOptions& opt = {})
{
    cone.validate();
    if (!in_dual_gamma_k(lambda, cone.k)) throw domain_error("rho_k_star: lambda not in the dual cone");
    return rho_k_star_unchecked(lambda, cone, opt);
}

struct PairingResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/// rho_k(A) rho_k^*(B) <= tr(AB)/n.
[[nodiscard]] inline PairingResult garding_pairing_check(const Mat& a, const Mat& b, int k,
                                                         const RhoStarOptions& opt = {})
{
    const int n = static_cast<int>(a.rows());
    const Spectrum la = eigenvalues(a);
    const Spectrum lb = eigenvalues(b);
    if (!in_gamma_k(la, k)) throw domain_error("garding_pairing_check: lambda(A) not in Gamma_k^+");
    const ConeSpec cone{n, k, Strictness::open};
    PairingResult r;
    r.lhs = rho_k(la, k) * rho_k_star(lb, cone, opt);
    r.rhs = (a * b).trace() / n;
    r.holds = r.lhs <= r.rhs + 1e-8;
    return r;
}

/// Offset t along (1,...,1) carrying the unit cross-section of the boundary of
/// Gamma_1^+ onto the boundary of Gamma_2^+.
[[nodiscard]] inline double cross_section_offset(int n)
{
    if (n < 2) throw domain_error("cross_section_offset: n >= 2 required");
    return std::sqrt(1.0 / (n * (n - 1.0)));
}

/// Spectra of I, I - e_i e_i^T and I + t(e_i e_j^T + e_j e_i^T), 0 < t < sqrt(n/(2(n-1))).
[[nodiscard]] inline std::vector<Mat> dual_test_matrices(int n, double t)
{
    std::vector<Mat> out;
    out.push_back(Mat::Identity(n, n));
    for (int i = 0; i < n; ++i) {
        Mat m = Mat::Identity(n, n);
        m(i, i) = 0.0;
        out.push_back(m);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Mat m = Mat::Identity(n, n);
            m(i, j) = m(j, i) = t;
            out.push_back(m);
        }
    return out;
}

[[nodiscard]] inline double dual_test_bound(int n) { return std::sqrt(n / (2.0 * (n - 1.0))); }

} // namespace sigk
