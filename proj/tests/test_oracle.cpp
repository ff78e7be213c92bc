#include <sigk/geometry.hpp>
#include <sigk/oracle.hpp>
#include <sigk/viscosity.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sigk;

namespace {

double slab_residual(double h)
{
    const oracle::ExactSolution ex = oracle::hyperbolic_halfspace(3, 3);
    const Grid g = Grid::box(Vec{{-0.2, -0.2, 1.0}}, Vec{{0.2, 0.2, 2.0}}, h);
    const MetricChart chart = MetricChart::flat(g, DomainKind::half_space_slab);
    const GridFunction w = ex.sample(g);
    const AugmentedField f = augmented_field(w, chart, LowerOrderTerms::flat_space(3));
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (f.valid[i]) worst = std::max(worst, std::abs(f_sigma(f.spectra[i], 3) - std::exp(2.0 * w[i])));
    return worst;
}

} // namespace

TEST(Oracle, HyperbolicNormalization)
{
    EXPECT_NEAR(oracle::normalization_shift(3, 3), std::log(1.0 / 8.0) / 6.0, 1e-15);
    const oracle::ExactSolution ex = oracle::hyperbolic_halfspace(3, 3);
    // Before the shift the eigenvalues are 1/2 and sigma_3 = 1/8.
    EXPECT_DOUBLE_EQ(sigma_k(Vec::Constant(3, 0.5), 3), 0.125);
    EXPECT_NEAR(sigma_k(Vec::Constant(3, ex.eigenvalue()), 3), 1.0, 1e-14);
    for (int n = 3; n <= 6; ++n)
        for (int k = 1; k <= n; ++k) {
            const oracle::ExactSolution e = oracle::hyperbolic_ball(n, k, 0.7);
            EXPECT_NEAR(f_sigma(Vec::Constant(n, e.eigenvalue()), k), 0.7, 1e-13);
        }
    EXPECT_THROW((void)oracle::hyperbolic_halfspace(2, 1), domain_error);
}

TEST(Oracle, ConstantShiftLaw)
{
    for (int k = 1; k <= 4; ++k)
        for (double c : {-0.4, 0.3, 1.1}) {
            // w + c solves the problem with sigma-level R scaled by e^{-2kc}.
            const double r_sigma = 2.0;
            const double shifted = std::pow(r_sigma * std::exp(-2.0 * k * c), 1.0 / k);
            EXPECT_NEAR(oracle::normalization_shift(4, k, shifted),
                        oracle::normalization_shift(4, k, std::pow(r_sigma, 1.0 / k)) + c, 1e-13);
        }
}

TEST(Oracle, AnalyticDerivativesMatchDifferences)
{
    const double h = 1e-5;
    for (auto kind : {oracle::Kind::hyperbolic_halfspace, oracle::Kind::hyperbolic_ball, oracle::Kind::sphere_factor}) {
        const oracle::ExactSolution e = oracle::make(kind, 3, 2);
        const Vec x{{0.2, -0.1, 0.6}};
        for (int a = 0; a < 3; ++a) {
            Vec xp = x, xm = x;
            xp(a) += h;
            xm(a) -= h;
            EXPECT_NEAR((e(xp) - e(xm)) / (2 * h), e.gradient(x)(a), 1e-8);
            EXPECT_LE(((e.gradient(xp) - e.gradient(xm)) / (2 * h) - e.hessian(x).col(a)).norm(), 1e-7);
        }
    }
}

TEST(Oracle, SlabResidualIsSecondOrder)
{
    const double h1 = 0.05, h2 = 0.025;
    const double r1 = slab_residual(h1), r2 = slab_residual(h2);
    EXPECT_LE(r1, 5 * h1 * h1);
    EXPECT_LE(r2, 5 * h2 * h2);
    EXPECT_GE(std::log2(r1 / r2), 1.8);
}

TEST(Oracle, AnnulusKinkAtGeometricMean)
{
    const oracle::RadialProfile p = oracle::annulus_radial(3, 3, 1.0, 4.0);
    EXPECT_NEAR(p.kink_radius(), 2.0, 2e-3);
    // The tangential eigenvalue vanishes on both sides, so |v'| = v there:
    // dw/dt = -2 inside and 0 outside.
    EXPECT_NEAR(p.dw_left, -2.0, 1e-12);
    EXPECT_NEAR(p.dw_right, 0.0, 1e-12);
    const double t_in = p.t[p.kink_index - 3], t_out = p.t[p.kink_index + 3];
    EXPECT_NEAR((p.value_at_t(p.kink_t) - p.value_at_t(t_in)) / (p.kink_t - t_in), -2.0, 0.2);
    EXPECT_NEAR((p.value_at_t(t_out) - p.value_at_t(p.kink_t)) / (t_out - p.kink_t), 0.0, 0.2);
    EXPECT_NEAR(p.w.front(), 8.0, 1e-12);
    EXPECT_NEAR(p.w.back(), 8.0, 1e-12);
    EXPECT_THROW((void)oracle::annulus_radial(4, 2, 1.0, 4.0), domain_error);
    EXPECT_THROW((void)oracle::annulus_radial(3, 3, 2.0, 1.0), domain_error);
}

TEST(Oracle, AnnulusReflectionSymmetry)
{
    oracle::AnnulusOptions opt;
    opt.symmetrize = true;
    const oracle::RadialProfile p = oracle::annulus_radial(3, 3, 1.0, 4.0, 1.0, opt);
    EXPECT_LE(oracle::reflection_asymmetry(p), 1e-8);
    const oracle::RadialProfile q = oracle::annulus_radial(3, 2, 0.5, 3.0, 2.0, opt);
    EXPECT_LE(oracle::reflection_asymmetry(q), 1e-8);
}

TEST(Oracle, AnnulusSmoothOffTheKink)
{
    const oracle::RadialProfile p = oracle::annulus_radial(3, 3, 1.0, 4.0);
    const std::size_t m = p.t.size();
    const Grid g({static_cast<int>(m)}, Vec::Constant(1, p.t[1] - p.t[0]), Vec::Constant(1, p.t[0]));
    GridFunction w(g);
    for (std::size_t i = 0; i < m; ++i) w[i] = p.w[i];
    const std::vector<double> radii{0.02, 0.015, 0.01};
    double worst = 1e300;
    for (std::size_t i = 0; i < m; i += 97) {
        const double t = p.t[i];
        if (std::abs(t - p.kink_t) <= 0.05 || t - p.t.front() < 0.02 || p.t.back() - t < 0.02) continue;
        const JetReport j = jet_fit(w, Vec::Constant(1, t), radii);
        worst = std::min(worst, j.exact ? 1e300 : j.beta);
    }
    EXPECT_GE(worst, 1.9);
    const JetReport kink = jet_fit(w, Vec::Constant(1, p.kink_t), radii);
    EXPECT_LT(kink.beta, 1.5);
}

TEST(Oracle, AnnulusIsDeterministic)
{
    const oracle::RadialProfile p = oracle::annulus_radial(3, 3, 1.0, 4.0);
    const oracle::RadialProfile q = oracle::annulus_radial(3, 3, 1.0, 4.0);
    EXPECT_EQ(p.w, q.w);
    EXPECT_EQ(p.kink_t, q.kink_t);
}

TEST(Oracle, AnnulusSatisfiesRadialEquation)
{
    const oracle::RadialProfile p = oracle::annulus_radial(3, 3, 1.0, 4.0);
    // Rebuild the flat augmented spectrum from w(t): radial (w'' - w' - w'^2/2)/r^2,
    // tangential (w' + w'^2/2)/r^2.
    for (std::size_t i = 5; i + 5 < p.t.size(); i += 211) {
        if (std::abs(static_cast<double>(i) - static_cast<double>(p.kink_index)) < 5) continue;
        const double r2 = std::exp(2 * p.t[i]);
        Vec l(3);
        l(0) = (p.d2w[i] - p.dw[i] - 0.5 * p.dw[i] * p.dw[i]) / r2;
        l(1) = l(2) = (p.dw[i] + 0.5 * p.dw[i] * p.dw[i]) / r2;
        ASSERT_TRUE(in_gamma_k(l, 3));
        EXPECT_NEAR(f_sigma(l, 3) / std::exp(2 * p.w[i]), 1.0, 1e-9);
    }
}
