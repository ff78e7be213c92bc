#pragma once
// Shared helpers and brute-force references for the test binaries.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace testing_support {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Vec uniform_vec(std::mt19937_64& g, int n, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = u(g);
    return v;
}

inline Vec gaussian_vec(std::mt19937_64& g, int n)
{
    std::normal_distribution<double> d(0.0, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = d(g);
    return v;
}

inline Mat random_sym(std::mt19937_64& g, int n)
{
    std::normal_distribution<double> d(0.0, 1.0);
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = d(g);
    return 0.5 * (m + m.transpose());
}

inline Mat random_spd(std::mt19937_64& g, int n)
{
    const Mat a = random_sym(g, n);
    return a * a.transpose() + 0.1 * Mat::Identity(n, n);
}

inline Mat random_orthogonal(std::mt19937_64& g, int n)
{
    Eigen::HouseholderQR<Mat> qr(random_sym(g, n) + Mat::Identity(n, n) * 0.3);
    return qr.householderQ() * Mat::Identity(n, n);
}

/// Sum over all k-subsets of products, by bitmask enumeration.
inline double sigma_brute(const Vec& l, int k)
{
    const int n = static_cast<int>(l.size());
    double s = 0.0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) != k) continue;
        double p = 1.0;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) p *= l(i);
        s += p;
    }
    return s;
}

inline double sigma_abs_brute(const Vec& l, int k) { return sigma_brute(l.cwiseAbs(), k); }

inline double factorial(int n)
{
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

} // namespace testing_support
