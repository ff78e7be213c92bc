#include <sigk/geometry.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sigk;

namespace {

Mat sphere_metric(const Vec& x)
{
    const double f = 2.0 / (1.0 + x.squaredNorm());
    return f * f * Mat::Identity(x.size(), x.size());
}

Grid cube(int n, double half, double h)
{
    return Grid::box(Vec::Constant(n, -half), Vec::Constant(n, half), h);
}

double max_sphere_schouten_error(double h)
{
    const MetricChart chart = MetricChart::sample(cube(3, 0.4, h), sphere_metric);
    const std::vector<Mat> a = schouten(chart);
    double err = 0.0;
    // Nested one-sided differences lose an order in the two outer layers.
    for (std::size_t i = 0; i < a.size(); ++i)
        if (chart.grid.coord(i).cwiseAbs().maxCoeff() < 0.4 - 2.5 * h)
            err = std::max(err, (a[i] - 0.5 * chart.g[i]).cwiseAbs().maxCoeff() / chart.g[i](0, 0));
    return err;
}

double conformal_christoffel_error(double h)
{
    const MetricChart chart = MetricChart::sample(cube(3, 0.5, h), [](const Vec& x) {
        return Mat(std::exp(0.2 * std::sin(x(0))) * Mat::Identity(3, 3));
    });
    double err = 0.0;
    for (std::size_t node = 0; node < chart.grid.size(); ++node) {
        const Vec x = chart.grid.coord(node);
        Vec dphi = Vec::Zero(3);
        dphi(0) = 0.1 * std::cos(x(0));
        const Christoffel c = chart.christoffel_at(node);
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double exact = (i == k) * dphi(j) + (j == k) * dphi(i) - (i == j) * dphi(k);
                    err = std::max(err, std::abs(gam(c, 3, k, i, j) - exact));
                }
    }
    return err;
}

} // namespace

TEST(Geometry, FlatMetricHasNoCurvature)
{
    const MetricChart chart = MetricChart::flat(cube(3, 1.0, 0.25));
    for (const auto& c : christoffel(chart))
        for (double v : c) EXPECT_EQ(v, 0.0);
    for (const auto& a : schouten(chart)) EXPECT_EQ(a.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Geometry, ChartValidation)
{
    EXPECT_THROW(Grid({4, 5, 5}, Vec::Constant(3, 0.1), Vec::Zero(3)), domain_error);
    EXPECT_THROW(Grid({5, 5, 5}, Vec{{0.1, 0.0, 0.1}}, Vec::Zero(3)), domain_error);
    const Grid g = cube(3, 1.0, 0.25);
    EXPECT_THROW(MetricChart::sample(g, [](const Vec&) { return Mat(Vec{{1.0, 1.0, 1e-11}}.asDiagonal()); }),
                 domain_error);
    EXPECT_THROW((void)schouten(MetricChart::flat(Grid::box(Vec::Zero(2), Vec::Ones(2), 0.25))), domain_error);
}

TEST(Geometry, ConformalChristoffelSecondOrder)
{
    const double e1 = conformal_christoffel_error(0.1);
    const double e2 = conformal_christoffel_error(0.05);
    EXPECT_LT(e1, 1e-3);
    EXPECT_GE(e1 / e2, 3.6);
}

TEST(Geometry, StereographicSphereSchouten)
{
    const double e1 = max_sphere_schouten_error(0.08);
    const double e2 = max_sphere_schouten_error(0.04);
    EXPECT_LT(e2, 1e-2);
    EXPECT_GE(std::log2(e1 / e2), 1.8);
}

TEST(Geometry, SchoutenInvariantUnderConstantScaling)
{
    const Grid g = cube(3, 0.4, 0.1);
    const auto a1 = schouten(MetricChart::sample(g, sphere_metric));
    const auto a2 = schouten(MetricChart::sample(g, [](const Vec& x) { return Mat(9.0 * sphere_metric(x)); }));
    for (std::size_t i = 0; i < a1.size(); ++i) EXPECT_LE((a1[i] - a2[i]).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Geometry, HyperbolicAndSphereFactors)
{
    const Grid slab({9, 9, 31}, Vec{{0.1, 0.1, 0.05}}, Vec{{-0.4, -0.4, 0.5}});
    const MetricChart chart = MetricChart::flat(slab, DomainKind::half_space_slab);
    const GridFunction hyp = GridFunction::from(slab, [](const Vec& x) { return -std::log(x(2)); });
    const AugmentedField f = conformal_schouten(hyp, chart);
    double err = 0.0;
    for (std::size_t i = 0; i < f.spectra.size(); ++i)
        if (f.valid[i]) err = std::max(err, (f.spectra[i] + Vec::Constant(3, 0.5)).cwiseAbs().maxCoeff());
    EXPECT_LT(err, 5e-2);

    const Grid box = cube(3, 0.5, 0.05);
    const MetricChart flat = MetricChart::flat(box);
    const GridFunction sph =
        GridFunction::from(box, [](const Vec& x) { return std::log(2.0 / (1.0 + x.squaredNorm())); });
    const AugmentedField s = conformal_schouten(sph, flat);
    double err2 = 0.0;
    for (std::size_t i = 0; i < s.spectra.size(); ++i)
        if (s.valid[i]) err2 = std::max(err2, (s.spectra[i] - Vec::Constant(3, 0.5)).cwiseAbs().maxCoeff());
    EXPECT_LT(err2, 1e-2);
}

TEST(Geometry, ConformalScalingLaw)
{
    const Grid box = cube(3, 0.4, 0.1);
    const MetricChart chart = MetricChart::sample(box, sphere_metric);
    const GridFunction w = GridFunction::from(box, [](const Vec& x) { return 0.3 * x(0) * x(1) + 0.1 * x(2); });
    GridFunction w2 = w;
    w2.values.array() += 0.7;
    const AugmentedField a = conformal_schouten(w, chart);
    const AugmentedField b = conformal_schouten(w2, chart);
    for (std::size_t i = 0; i < a.spectra.size(); ++i)
        if (a.valid[i])
            EXPECT_LE((b.spectra[i] - std::exp(-1.4) * a.spectra[i]).cwiseAbs().maxCoeff(),
                      1e-10 * std::max(1.0, a.spectra[i].cwiseAbs().maxCoeff()));
}

TEST(Geometry, LowerOrderTermsFlatAndHomogeneous)
{
    const LowerOrderTerms flat = LowerOrderTerms::flat_space(3);
    const Vec x = Vec::Zero(3);
    const Vec p{{0.3, -1.2, 0.7}};
    EXPECT_EQ(flat.L0(x), Mat::Zero(3, 3));
    EXPECT_EQ(flat.L1(x, p), Mat::Zero(3, 3));
    EXPECT_LE((flat.L2(x, p) - (-p * p.transpose() + 0.5 * p.squaredNorm() * Mat::Identity(3, 3))).norm(), 1e-15);

    const MetricChart chart = MetricChart::sample(cube(3, 0.4, 0.1), sphere_metric);
    const LowerOrderTerms t = assemble_L(chart);
    auto rng = testing_support::rng(31);
    for (int s = 0; s < 50; ++s) {
        const Vec q = testing_support::gaussian_vec(rng, 3);
        const Vec y = testing_support::uniform_vec(rng, 3, -0.3, 0.3);
        const double r = 0.1 + (s % 7);
        EXPECT_LE((t.L0(y) - t.L0(y)).norm(), 0.0);
        EXPECT_LE((t.L1(y, Vec(r * q)) - r * t.L1(y, q)).norm(), 1e-12 * r * std::max(1.0, t.L1(y, q).norm()));
        EXPECT_LE((t.L2(y, Vec(r * q)) - r * r * t.L2(y, q)).norm(), 1e-12 * r * r * std::max(1.0, t.L2(y, q).norm()));
        EXPECT_LE((t.L2(y, Vec(2 * q)) - 4 * t.L2(y, q)).norm(), 1e-12 * std::max(1.0, t.L2(y, q).norm()));
    }
}

TEST(Geometry, AugmentedMatchesConformalSchouten)
{
    const Grid box = cube(3, 0.4, 0.05);
    const MetricChart chart = MetricChart::sample(box, sphere_metric);
    const LowerOrderTerms t = assemble_L(chart);
    const GridFunction w = GridFunction::from(box, [](const Vec& x) { return 0.2 * std::sin(x(0) + 2 * x(1)) + x(2) * x(2); });
    const AugmentedField neg = augmented_field(w, chart, t);
    const AugmentedField pos = conformal_schouten(w, chart);
    for (std::size_t i = 0; i < neg.matrices.size(); ++i)
        if (neg.valid[i])
            EXPECT_LE((std::exp(2 * w[i]) * pos.matrices[i] + neg.matrices[i]).norm(), 1e-12 * neg.matrices[i].norm() + 1e-12);
}

TEST(Geometry, ModifiedSchoutenTau)
{
    const Grid slab({9, 9, 31}, Vec{{0.1, 0.1, 0.05}}, Vec{{-0.4, -0.4, 0.5}});
    const MetricChart chart = MetricChart::flat(slab, DomainKind::half_space_slab);
    const GridFunction hyp = GridFunction::from(slab, [](const Vec& x) { return -std::log(x(2)); });
    const AugmentedField one = conformal_schouten(hyp, chart);
    const AugmentedField same = modified_schouten_tau(hyp, chart, 1.0);
    for (std::size_t i = 0; i < one.matrices.size(); ++i)
        if (one.valid[i]) EXPECT_LE((one.matrices[i] - same.matrices[i]).norm(), 1e-12);
    for (double tau : {0.0, 0.5, 0.9}) {
        const AugmentedField m = modified_schouten_tau(hyp, chart, tau);
        const double shift = -(1.0 - tau) * 3.0 / (2.0 * (3.0 - 2.0));
        for (std::size_t i = 0; i < m.matrices.size(); ++i)
            if (m.valid[i]) {
                const double exact = (1.0 - tau) / (3.0 - 2.0) * one.spectra[i].sum();
                EXPECT_LE((m.spectra[i] - one.spectra[i] - Vec::Constant(3, exact)).cwiseAbs().maxCoeff(), 1e-10);
                EXPECT_LE((m.spectra[i] - one.spectra[i] - Vec::Constant(3, shift)).cwiseAbs().maxCoeff(), 5e-2);
            }
    }
    // Quadratic w = c|x|^2/2 on a flat chart, at the origin: -c(1 + (1 - tau) n/(n - 2)).
    const Grid box = cube(3, 0.4, 0.1);
    const double c = 0.8;
    const GridFunction q = GridFunction::from(box, [c](const Vec& x) { return 0.5 * c * x.squaredNorm(); });
    const std::size_t origin = box.nearest(Vec::Zero(3));
    for (double tau : {0.0, 0.3, 1.0}) {
        const AugmentedField m = modified_schouten_tau(q, MetricChart::flat(box), tau);
        EXPECT_LE((m.spectra[origin] - Vec::Constant(3, -c * (1.0 + (1.0 - tau) * 3.0))).cwiseAbs().maxCoeff(), 1e-12);
    }
}
