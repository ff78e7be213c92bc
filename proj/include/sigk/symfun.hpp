#pragma once

#include <sigk/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sigk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Eigenvalue tuple, sorted ascending when produced by eigenvalues().
using Spectrum = Eigen::VectorXd;

[[nodiscard]] inline double binomial(int n, int k)
{
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return std::round(r);
}

/// e_0..e_n of lambda via the prefix-polynomial recurrence.
template <class Derived>
[[nodiscard]] Vec all_sigma(const Eigen::MatrixBase<Derived>& lambda)
{
    const Eigen::Index n = lambda.size();
    Vec e = Vec::Zero(n + 1);
    e(0) = 1.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j >= 1; --j) e(j) += lambda(i) * e(j - 1);
    return e;
}

template <class Derived>
[[nodiscard]] double sigma_k(const Eigen::MatrixBase<Derived>& lambda, int k)
{
    if (k < 0 || k > lambda.size()) throw domain_error("sigma_k: k out of range");
    if (k == 0) return 1.0;
    const Eigen::Index n = lambda.size();
    Vec e = Vec::Zero(k + 1);
    e(0) = 1.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = std::min<Eigen::Index>(i + 1, k); j >= 1; --j)
            e(j) += lambda(i) * e(j - 1);
    return e(k);
}

/// Entry i is sigma_{k-1} of lambda with entry i removed.
template <class Derived>
[[nodiscard]] Vec grad_sigma_k(const Eigen::MatrixBase<Derived>& lambda, int k)
{
    const Eigen::Index n = lambda.size();
    if (k < 1 || k > n) throw domain_error("grad_sigma_k: k out of range");
    Vec g(n);
    Vec rest(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0, m = 0; j < n; ++j)
            if (j != i) rest(m++) = lambda(j);
        g(i) = sigma_k(rest, k - 1);
    }
    return g;
}

/// (sigma_k / C(n,k))^{1/k}.
template <class Derived>
[[nodiscard]] double rho_k(const Eigen::MatrixBase<Derived>& lambda, int k)
{
    const double s = sigma_k(lambda, k);
    if (s < 0.0) throw domain_error("rho_k: sigma_k < 0");
    if (k == 0) return 1.0;
    return std::pow(s / binomial(static_cast<int>(lambda.size()), k), 1.0 / k);
}

/// f = sigma_k^{1/k}; requires sigma_k >= 0.
template <class Derived>
[[nodiscard]] double f_sigma(const Eigen::MatrixBase<Derived>& lambda, int k)
{
    const double s = sigma_k(lambda, k);
    if (s < 0.0) throw domain_error("f_sigma: sigma_k < 0");
    return std::pow(s, 1.0 / k);
}

template <class Derived>
[[nodiscard]] Vec grad_f_sigma(const Eigen::MatrixBase<Derived>& lambda, int k)
{
    const double s = sigma_k(lambda, k);
    if (s <= 0.0) throw domain_error("grad_f_sigma: sigma_k <= 0");
    return grad_sigma_k(lambda, k) * (std::pow(s, 1.0 / k - 1.0) / k);
}

[[nodiscard]] inline Mat symmetrized(const Mat& m)
{
    if (m.rows() != m.cols()) throw domain_error("matrix not square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw domain_error("matrix not symmetric");
    return 0.5 * (m + m.transpose());
}

struct SymEigen {
    Spectrum values;  ///< ascending
    Mat vectors;      ///< columns match values
};

/// Cyclic Jacobi rotations; threshold 1e-14, at most 100 sweeps.
[[nodiscard]] inline SymEigen jacobi_eigen(const Mat& m_in)
{
    Mat a = symmetrized(m_in);
    const Eigen::Index n = a.rows();
    Mat v = Mat::Identity(n, n);
    const double fro = std::max(a.norm(), 1e-300);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= 1e-14 * fro) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double arp = a(r, p), arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double apr = a(p, r), aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                a(p, q) = a(q, p) = 0.0;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double vrp = v(r, p), vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
    SymEigen out{Vec(n), Mat(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = a(order[i], order[i]);
        out.vectors.col(i) = v.col(order[i]);
    }
    return out;
}

[[nodiscard]] inline Spectrum eigenvalues(const Mat& m)
{
    return jacobi_eigen(m).values;
}

/// Principal square root of an SPD matrix.
[[nodiscard]] inline Mat sqrt_spd(const Mat& g)
{
    const SymEigen e = jacobi_eigen(g);
    const double top = e.values.cwiseAbs().maxCoeff();
    if (e.values(0) <= 1e-12 * top || top == 0.0) throw domain_error("sqrt_spd: not positive definite");
    Mat w = e.vectors * e.values.cwiseSqrt().asDiagonal() * e.vectors.transpose();
    return 0.5 * (w + w.transpose());
}

/// Gradient of M -> f(lambda(M)) for a symmetric spectral function with
/// spectral gradient df: Q diag(df) Q^T.
[[nodiscard]] inline Mat spectral_gradient(const SymEigen& e, const Vec& df)
{
    Mat d = e.vectors * df.asDiagonal() * e.vectors.transpose();
    return 0.5 * (d + d.transpose());
}

} // namespace sigk
