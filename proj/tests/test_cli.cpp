#include <sigk/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sigk;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "sigk_cli");
    std::vector<const char*> argv;
    for (const std::string& s : args) argv.push_back(s.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("sigk_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(Config, SectionsCommentsAndErrors)
{
    std::istringstream is("seed = 4\n# comment\n[path]\n a = 2 # trailing\nb=5\n\n[oracle]\nkind = annulus\n");
    const cli::Config c = cli::Config::parse(is);
    EXPECT_EQ(c.raw("global", "seed").value(), "4");
    EXPECT_EQ(c.raw("path", "a").value(), "2");
    EXPECT_EQ(c.raw("path", "b").value(), "5");
    EXPECT_EQ(c.raw("oracle", "kind").value(), "annulus");
    EXPECT_FALSE(c.raw("path", "kind").has_value());
    EXPECT_EQ(c.text(), is.str());
    std::istringstream bad("[path\n");
    EXPECT_THROW((void)cli::Config::parse(bad), cli::config_error);
    std::istringstream nokey("[path]\njust text\n");
    EXPECT_THROW((void)cli::Config::parse(nokey), cli::config_error);
}

TEST(Config, SettingsTypesAndUnknownKeys)
{
    cli::Config c;
    c.set("path", "taus", "0, 0.5,0.9");
    c.set("path", "n", "4");
    const cli::Settings s("path", cli::path_keys(), c);
    EXPECT_EQ(s.list("taus"), (std::vector<double>{0.0, 0.5, 0.9}));
    EXPECT_EQ(s.integer("n"), 4);
    EXPECT_EQ(s.num("b"), 4.0);
    EXPECT_TRUE(s.flag("doubling"));
    EXPECT_TRUE(s.list("alphas").empty());

    cli::Config r;
    r.set("cone", "n", "3..5");
    EXPECT_EQ(cli::Settings("cone", cli::cone_keys(), r).range("n"), (std::vector<int>{3, 4, 5}));
    r.set("cone", "n", "3,6");
    EXPECT_EQ(cli::Settings("cone", cli::cone_keys(), r).range("n"), (std::vector<int>{3, 6}));
    r.set("cone", "n", "5..3");
    EXPECT_THROW((void)cli::Settings("cone", cli::cone_keys(), r), cli::config_error);

    cli::Config u;
    u.set("path", "colour", "red");
    EXPECT_THROW((void)cli::Settings("path", cli::path_keys(), u), cli::config_error);
    cli::Config t;
    t.set("path", "a", "one");
    EXPECT_THROW((void)cli::Settings("path", cli::path_keys(), t), cli::config_error);
    t.set("path", "a", "1x");
    EXPECT_THROW((void)cli::Settings("path", cli::path_keys(), t), cli::config_error);
}

TEST(Cli, ParallelMapKeepsOrderAndRethrows)
{
    const auto v = cli::detail::parallel_map(50, 4, [](std::size_t i) { return static_cast<int>(i * i); });
    ASSERT_EQ(v.size(), 50u);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
    EXPECT_THROW((void)cli::detail::parallel_map(10, 3,
                                                 [](std::size_t i) {
                                                     if (i == 7) throw std::runtime_error("seven");
                                                     return 0;
                                                 }),
                 std::runtime_error);
}

TEST(Cli, ExitCodes)
{
    const fs::path out = scratch("codes");
    EXPECT_EQ(invoke({"--out", out.string(), "path", "--a", "-1"}).code, cli::bad_config);
    EXPECT_EQ(invoke({"--out", out.string(), "path", "--domain", "torus"}).code, cli::bad_config);
    EXPECT_EQ(invoke({"--out", out.string(), "path", "--no-such-flag"}).code, cli::bad_config);
    EXPECT_EQ(invoke({"--out", out.string()}).code, cli::bad_config);
    EXPECT_EQ(invoke({"--out", out.string(), "--set", "path.nope=1", "path"}).code, cli::bad_config);
    EXPECT_EQ(invoke({"--out", out.string(), "--config", (out / "missing.cfg").string(), "path"}).code, cli::bad_config);

    // A ladder the discrete problem cannot follow: numerical failure with a diagnostic.
    const CliRun r = invoke({"--out", out.string(), "path", "--intervals", "100", "--taus", "0,0.99999", "--set", "path.doubling=false"});
    EXPECT_EQ(r.code, cli::numeric_failure);
    const auto diag = nlohmann::json::parse(slurp(out / "error.json"));
    EXPECT_EQ(diag["kind"], "path_error");
    EXPECT_EQ(diag["last_good_tau"].get<double>(), 0.0);
    EXPECT_EQ(diag["command"], "path");
}

TEST(Cli, OutputsEmbedMetadataAndAreDeterministic)
{
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    fs::create_directories(a);
    {
        std::ofstream cfg(a / "run.cfg");
        cfg << "seed = 9\n[path]\nintervals = 200\ntaus = 0,0.5,0.9\ndoubling = false\nmask_h = 0.1,0.05\n";
    }
    const CliRun r1 = invoke({"--out", (a / "o").string(), "--config", (a / "run.cfg").string(), "path"});
    const CliRun r2 = invoke({"--out", (b / "o").string(), "--config", (a / "run.cfg").string(), "path", "--jobs", "3"});
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r2.code, 0) << r2.err;
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a / "o")) {
        if (!e.is_regular_file()) continue;
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / "o" / fs::relative(e.path(), a / "o"))) << e.path();
    }
    EXPECT_GE(files, 5u);
    const auto j = nlohmann::json::parse(slurp(a / "o" / "path.json"));
    EXPECT_EQ(j["version"], cli::version);
    EXPECT_EQ(j["seed"], 9);
    EXPECT_EQ(j["config"]["resolved"]["intervals"], "200");
    EXPECT_EQ(j["config"]["file_text"].get<std::string>(), slurp(a / "run.cfg"));
    EXPECT_EQ(j["grid"]["intervals"], 200);
    EXPECT_EQ(j["tolerances"]["newton"], 1e-10);
    const auto m = nlohmann::json::parse(slurp(a / "o" / "manifest.json"));
    for (const auto& f : m["files"]) {
        EXPECT_TRUE(fs::exists(a / "o" / f["file"].get<std::string>())) << f["file"];
        if (f["kind"] == "plot") {
            EXPECT_EQ(f["columns"].size(), 2u);
            std::istringstream body(slurp(a / "o" / f["file"].get<std::string>()));
            std::string line;
            std::getline(body, line);
            EXPECT_EQ(line.rfind("# {\"version\"", 0), 0u);
        }
    }
}

TEST(Cli, FlagsOverrideConfig)
{
    const fs::path a = scratch("override");
    fs::create_directories(a);
    {
        std::ofstream cfg(a / "run.cfg");
        cfg << "[oracle]\nkind = hyperbolic_ball\nsamples = 11\n";
    }
    const CliRun r = invoke({"--out", a.string(), "--config", (a / "run.cfg").string(), "oracle", "--samples", "21"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(a / "oracle.json"));
    EXPECT_EQ(j["config"]["resolved"]["kind"], "hyperbolic_ball");
    EXPECT_EQ(j["grid"]["samples"], 21);
    EXPECT_NEAR(j["eigenvalue"].get<double>(), oracle::hyperbolic_ball(3, 3).eigenvalue(), 1e-15);
}

TEST(Cli, ConeReportsTestMatricesAsMembers)
{
    const fs::path a = scratch("cone");
    const CliRun r = invoke({"--out", a.string(), "cone", "--n", "3..6", "--samples", "40", "--garding-pairs", "12"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(a / "cone.json"));
    EXPECT_TRUE(j["test_matrices"]["all_members"].get<bool>());
    EXPECT_TRUE(j["test_matrices"]["outside_rejected"].get<bool>());
    EXPECT_EQ(j["test_matrices"]["by_n"].size(), 4u);
    for (const auto& d : j["dual_agreement"]) EXPECT_EQ(d["disagreements"], 0);
    EXPECT_TRUE(j["pass"].get<bool>());
}
