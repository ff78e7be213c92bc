#include <sigk/symfun.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

using namespace sigk;

TEST(Symfun, SigmaSmallCases)
{
    EXPECT_DOUBLE_EQ(sigma_k(Vec::Ones(3), 2), 3.0);
    EXPECT_DOUBLE_EQ(sigma_k(Vec::Ones(3), 0), 1.0);
    for (int n = 2; n <= 8; ++n)
        for (int k = 0; k <= n; ++k) EXPECT_DOUBLE_EQ(sigma_k(Vec::Ones(n), k), binomial(n, k));
    EXPECT_DOUBLE_EQ(sigma_k(Vec{{1.0, 2.0, 3.0}}, 2), 11.0);
    EXPECT_THROW((void)sigma_k(Vec::Ones(3), 4), domain_error);
    EXPECT_THROW((void)sigma_k(Vec::Ones(3), -1), domain_error);
}

TEST(Symfun, SigmaMatchesSubsetEnumeration)
{
    auto rng = testing_support::rng(11);
    for (int s = 0; s < 1000; ++s) {
        const int n = 2 + s % 7;
        const Vec l = testing_support::uniform_vec(rng, n, -2.0, 2.0);
        for (int k = 0; k <= n; ++k) {
            const double brute = testing_support::sigma_brute(l, k);
            EXPECT_NEAR(sigma_k(l, k), brute, 1e-12 * std::max(1.0, testing_support::sigma_abs_brute(l, k)));
        }
    }
}

TEST(Symfun, NewtonIdentities)
{
    auto rng = testing_support::rng(12);
    for (int s = 0; s < 1000; ++s) {
        const int n = 2 + s % 7;
        const Vec l = testing_support::uniform_vec(rng, n, -1.5, 1.5);
        const Vec e = all_sigma(l);
        for (int k = 1; k <= n; ++k) {
            // k e_k = sum_{i=1..k} (-1)^{i-1} e_{k-i} p_i
            double acc = k * e(k), scale = std::abs(k * e(k));
            for (int i = 1; i <= k; ++i) {
                const double p = l.array().pow(i).sum();
                const double term = ((i % 2) ? -1.0 : 1.0) * e(k - i) * p;
                acc += term;
                scale += std::abs(term);
            }
            EXPECT_LE(std::abs(acc), 1e-10 * std::max(1.0, scale));
        }
    }
}

TEST(Symfun, GradientDeleteOne)
{
    const Vec g = grad_sigma_k(Vec{{1.0, 2.0, 3.0}}, 2);
    EXPECT_DOUBLE_EQ(g(0), 5.0);
    EXPECT_DOUBLE_EQ(g(1), 4.0);
    EXPECT_DOUBLE_EQ(g(2), 3.0);
    EXPECT_EQ(grad_sigma_k(Vec::Ones(3), 2), Vec::Constant(3, 2.0));
}

TEST(Symfun, GradientMatchesFiniteDifferences)
{
    auto rng = testing_support::rng(13);
    const double h = 1e-6;
    for (int s = 0; s < 1000; ++s) {
        const int n = 2 + s % 5;
        const int k = 1 + s % n;
        const Vec l = testing_support::uniform_vec(rng, n, 0.1, 2.0);
        const Vec g = grad_sigma_k(l, k);
        for (int i = 0; i < n; ++i) {
            Vec lp = l, lm = l;
            lp(i) += h;
            lm(i) -= h;
            const double fd = (sigma_k(lp, k) - sigma_k(lm, k)) / (2 * h);
            EXPECT_NEAR(fd, g(i), 1e-6 * std::max(1.0, std::abs(g(i))));
        }
    }
}

TEST(Symfun, RhoNormalizationAndHomogeneity)
{
    EXPECT_DOUBLE_EQ(rho_k(Vec::Ones(5), 3), 1.0);
    EXPECT_NEAR(rho_k(Vec{{1.0, 4.0}}, 2), 2.0, 1e-15);
    EXPECT_THROW((void)rho_k(Vec{{-1.0, 1.0, 1.0}}, 2), domain_error);
    auto rng = testing_support::rng(14);
    for (int s = 0; s < 200; ++s) {
        const int n = 3 + s % 4;
        const int k = 1 + s % n;
        const Vec l = testing_support::uniform_vec(rng, n, 0.05, 3.0);
        const double t = 0.1 + 5.0 * (s % 17) / 17.0;
        EXPECT_NEAR(rho_k(Vec(t * l), k), t * rho_k(l, k), 1e-12 * t * rho_k(l, k));
    }
}

TEST(Symfun, MalphaIdentity)
{
    // sigma_k(alpha-1, 1, ..., 1) = C(n-1,k-1) [n/k - 2 + alpha]. The quoted
    // prefactor (n-1)!(n-k)/((k-1)!(n-k-1)!) equals C(n-1,k-1)(n-k)^2 and so
    // agrees only when n - k = 1.
    for (int n = 3; n <= 6; ++n)
        for (int k = 2; k < n; ++k)
            for (double a : {0.01, 0.1, 0.5}) {
                Vec l = Vec::Ones(n);
                l(0) = a - 1.0;
                const double bracket = static_cast<double>(n) / k - 2.0 + a;
                const double value = sigma_k(eigenvalues(Mat(l.asDiagonal())), k);
                EXPECT_NEAR(value, binomial(n - 1, k - 1) * bracket, 1e-10);
                const double quoted = testing_support::factorial(n - 1) * (n - k) /
                                      (testing_support::factorial(k - 1) * testing_support::factorial(n - k - 1)) *
                                      bracket;
                if (n - k == 1)
                    EXPECT_NEAR(value, quoted, 1e-10);
                else if (std::abs(bracket) > 1e-12)
                    EXPECT_NEAR(quoted / value, (n - k) * (n - k), 1e-9);
            }
}

TEST(Symfun, EigenvaluesBasic)
{
    const Vec d = eigenvalues(Mat(Vec{{3.0, 1.0, 2.0}}.asDiagonal()));
    EXPECT_EQ(d, (Vec{{1.0, 2.0, 3.0}}));
    Mat r(2, 2);
    r << 0, 1, 1, 0;
    const Vec e = eigenvalues(r);
    EXPECT_NEAR(e(0), -1.0, 1e-15);
    EXPECT_NEAR(e(1), 1.0, 1e-15);
    Mat bad(2, 2);
    bad << 0, 1, 0.5, 0;
    EXPECT_THROW((void)eigenvalues(bad), domain_error);
}

TEST(Symfun, EigenReconstructionRandom)
{
    auto rng = testing_support::rng(15);
    for (int s = 0; s < 300; ++s) {
        const int n = 2 + s % 7;
        const Mat m = testing_support::random_sym(rng, n);
        const SymEigen e = jacobi_eigen(m);
        const Mat q = e.vectors;
        EXPECT_LE((q.transpose() * q - Mat::Identity(n, n)).norm(), 1e-10);
        EXPECT_LE((q * e.values.asDiagonal() * q.transpose() - m).norm(), 1e-10 * m.norm());
        for (int i = 1; i < n; ++i) EXPECT_LE(e.values(i - 1), e.values(i));
    }
}

TEST(Symfun, SqrtSpd)
{
    EXPECT_LE((sqrt_spd(Mat::Identity(3, 3)) - Mat::Identity(3, 3)).norm(), 1e-15);
    const Mat w = sqrt_spd(Mat(Vec{{4.0, 9.0}}.asDiagonal()));
    EXPECT_NEAR(w(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(w(1, 1), 3.0, 1e-15);
    auto rng = testing_support::rng(16);
    for (int s = 0; s < 300; ++s) {
        const int n = 2 + s % 5;
        const Mat g = testing_support::random_spd(rng, n);
        const Mat r = sqrt_spd(g);
        EXPECT_LE((r * r - g).norm() / g.norm(), 1e-10);
        EXPECT_GT(eigenvalues(r)(0), 0.0);
    }
    EXPECT_THROW((void)sqrt_spd(Mat(Vec{{1.0, -1.0}}.asDiagonal())), domain_error);
}

TEST(Symfun, SpectralGradientMatchesFiniteDifferences)
{
    auto rng = testing_support::rng(17);
    for (int s = 0; s < 50; ++s) {
        const int n = 3;
        const Mat m = testing_support::random_spd(rng, n) + Mat::Identity(n, n);
        const SymEigen e = jacobi_eigen(m);
        const Mat d = spectral_gradient(e, grad_f_sigma(e.values, 3));
        const Mat dir = testing_support::random_sym(rng, n);
        const double t = 1e-5;
        const double fd =
            (f_sigma(eigenvalues(Mat(m + t * dir)), 3) - f_sigma(eigenvalues(Mat(m - t * dir)), 3)) / (2 * t);
        EXPECT_NEAR(fd, (d.array() * dir.array()).sum(), 1e-7);
    }
}
