#include <sigk/io.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace sigk;

TEST(GridIo, ScalarRoundTripIsBitExact)
{
    const Grid g = Grid::box(Vec{{-0.3, 0.1, 0.5}}, Vec{{0.3, 0.7, 1.1}}, 0.1);
    const GridFunction w = GridFunction::from(g, [](const Vec& x) { return std::sin(x(0)) / 3.0 + std::exp(x(2)); });
    std::stringstream ss;
    io::write_scalar(ss, w);
    const GridFunction r = io::read_scalar(ss);
    EXPECT_TRUE(r.grid == g);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(r[i], w[i]);
}

TEST(GridIo, MetricRoundTripUsesUpperTriangle)
{
    const Grid g = Grid::box(Vec::Constant(3, -0.2), Vec::Constant(3, 0.2), 0.1);
    const MetricChart c = MetricChart::sample(g, [](const Vec& x) {
        Mat m = Mat::Identity(3, 3) * (1.0 + x.squaredNorm());
        m(0, 1) = m(1, 0) = 0.1 * x(2);
        return m;
    });
    std::stringstream ss;
    io::write_metric(ss, c);
    std::string line;
    std::stringstream copy(ss.str());
    for (int i = 0; i < 5; ++i) std::getline(copy, line);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    const MetricChart r = io::read_metric(ss);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(r.g[i], c.g[i]);
}

TEST(GridIo, RejectsMalformedFiles)
{
    std::stringstream missing("n=2\ndims=5,5\norigin=0,0\n");
    EXPECT_THROW((void)io::read(missing), domain_error);
    std::stringstream short_rows("n=1\ndims=5\nspacing=0.5\norigin=0\n1\n2\n");
    EXPECT_THROW((void)io::read(short_rows), domain_error);
    std::stringstream bad("n=1\ndims=5\nspacing=0.5\norigin=0\n1\n2\nx\n4\n5\n");
    EXPECT_THROW((void)io::read(bad), domain_error);
}

TEST(GridIo, SeventeenDigits)
{
    EXPECT_EQ(io::fmt(0.1), "0.10000000000000001");
    EXPECT_EQ(std::stod(io::fmt(1.0 / 3.0)), 1.0 / 3.0);
}
