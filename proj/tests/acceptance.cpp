// Acceptance suite: one PASS/FAIL line per criterion. Criteria 2-8 are driven
// through the command line front end (in process); criterion 9 reruns every
// invocation into a second directory and compares the files byte for byte.

#include <sigk/cli.hpp>

#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace sigk;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::current_path() / "acceptance_out";

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [FAILED]");
        pass = pass && ok;
    }
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

/// Every CLI invocation, so that criterion 9 can replay it.
std::vector<std::pair<std::string, std::vector<std::string>>> g_runs;

/// Runs the front end with output under kRoot/run/name and returns the summary.
json cli(const std::string& name, std::vector<std::string> args, const std::string& run = "first")
{
    const fs::path out = kRoot / run / name;
    fs::remove_all(out);
    std::vector<std::string> full{"sigk_cli", "--out", out.string()};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const std::string& s : full) argv.push_back(s.c_str());
    std::ostringstream sink, errs;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), sink, errs);
    if (run == "first") g_runs.emplace_back(name, args);
    if (code != 0) throw std::runtime_error(name + ": exit " + std::to_string(code) + " " + errs.str() + sink.str());
    std::ifstream f(out / (args.front() + ".json"));
    return json::parse(f);
}

Outcome symmetric_functions()
{
    Outcome o;
    auto rng = testing_support::rng(1);
    double brute = 0.0, newton = 0.0, grad = 0.0;
    for (int s = 0; s < 2000; ++s) {
        const int n = 2 + s % 7;
        const Vec l = testing_support::uniform_vec(rng, n, -2.0, 2.0);
        const Vec e = all_sigma(l);
        for (int k = 0; k <= n; ++k)
            brute = std::max(brute, std::abs(sigma_k(l, k) - testing_support::sigma_brute(l, k)) /
                                        std::max(1.0, testing_support::sigma_abs_brute(l, k)));
        for (int k = 1; k <= n; ++k) {
            double acc = k * e(k), scale = std::abs(k * e(k));
            for (int i = 1; i <= k; ++i) {
                const double term = ((i % 2) ? -1.0 : 1.0) * e(k - i) * l.array().pow(i).sum();
                acc += term;
                scale += std::abs(term);
            }
            newton = std::max(newton, std::abs(acc) / std::max(1.0, scale));
        }
        const Vec lp = testing_support::uniform_vec(rng, n, 0.1, 2.0);
        const int k = 1 + s % n;
        const Vec g = grad_sigma_k(lp, k);
        for (int i = 0; i < n; ++i) {
            Vec a = lp, b = lp;
            a(i) += 1e-6;
            b(i) -= 1e-6;
            const double fd = (sigma_k(a, k) - sigma_k(b, k)) / 2e-6;
            grad = std::max(grad, std::abs(fd - g(i)) / std::max(1.0, std::abs(g(i))));
        }
    }
    o.require(brute <= 1e-12, "subset enumeration " + num(brute));
    o.require(newton <= 1e-10, "Newton identities " + num(newton));
    o.require(grad <= 1e-6, "gradient vs differences " + num(grad));
    // The identity as quoted, for 2 <= k < n <= 6.
    int wrong = 0, total = 0;
    double exact = 0.0;
    for (int n = 3; n <= 6; ++n)
        for (int k = 2; k < n; ++k)
            for (double a : {0.01, 0.1, 0.5}) {
                Vec l = Vec::Ones(n);
                l(0) = a - 1.0;
                const double value = sigma_k(eigenvalues(Mat(l.asDiagonal())), k);
                const double bracket = static_cast<double>(n) / k - 2.0 + a;
                const double quoted = testing_support::factorial(n - 1) * (n - k) /
                                      (testing_support::factorial(k - 1) * testing_support::factorial(n - k - 1)) * bracket;
                ++total;
                wrong += std::abs(value - quoted) > 1e-10;
                exact = std::max(exact, std::abs(value - binomial(n - 1, k - 1) * bracket));
            }
    o.require(exact <= 1e-10, "M_alpha with prefactor C(n-1,k-1) " + num(exact));
    o.require(wrong == 0, "M_alpha with the quoted prefactor: " + std::to_string(wrong) + "/" + std::to_string(total) +
                              " instances off (all with n-k >= 2)");
    return o;
}

Outcome dual_cone()
{
    Outcome o;
    const json j = cli("dual", {"cone", "--set", "cone.garding_pairs=0"});
    const json& pm = j["test_matrices"];
    o.require(pm["all_members"].get<bool>(), "test matrices accepted for n = 3..6");
    o.require(pm["outside_rejected"].get<bool>(), "t = 1.01 bound rejected");
    for (const json& a : j["dual_agreement"]) {
        o.require(a["samples"].get<int>() == 10000 && a["disagreements"].get<int>() == 0,
                  "n=" + std::to_string(a["n"].get<int>()) + ": " + std::to_string(a["disagreements"].get<int>()) + " disagreements in " +
                      std::to_string(a["compared"].get<int>()));
    }
    double cs = 0.0;
    for (const json& c : j["cross_section"]) cs = std::max(cs, c["max_sigma2"].get<double>());
    o.require(cs <= 1e-10, "cross-section sigma_2 " + num(cs));
    return o;
}

Outcome garding()
{
    Outcome o;
    const json j = cli("garding", {"cone", "--set", "cone.samples=0", "--set", "cone.check_test_matrices=false"});
    int pairs = 0, fails = 0;
    double eq = 0.0;
    for (const json& n : j["garding"])
        for (const json& k : n["by_k"]) {
            pairs += k["pairs"].get<int>();
            fails += k["failures"].get<int>();
            eq = std::max(eq, k["identity_defect"].get<double>());
        }
    o.require(pairs == 20000 && fails == 0, std::to_string(fails) + " failures in " + std::to_string(pairs) + " pairs");
    o.require(eq <= 1e-8, "equality at A = B = I " + num(eq));
    return o;
}

Outcome geometry()
{
    Outcome o;
    const json j = cli("schouten", {"schouten"});
    o.require(j["sphere_order"].get<double>() >= 1.8, "sphere Schouten order " + num(j["sphere_order"].get<double>()));
    o.require(j["hyperbolic_order"].get<double>() >= 1.8, "hyperbolic factor order " + num(j["hyperbolic_order"].get<double>()));
    return o;
}

Outcome local_solver()
{
    Outcome o;
    const json j = cli("local", {"local", "--n", "3", "--k", "3", "--r-ladder", "0.4,0.2,0.1,0.05", "--cells", "32"});
    o.require(j["residual_slopes"].get<double>() >= 2.7, "seed residual slope " + num(j["residual_slopes"].get<double>()));
    o.require(j["distance_slopes"].get<double>() >= 2.3, "distance slope " + num(j["distance_slopes"].get<double>()));
    double worst = 0.0;
    int accepted = 0;
    for (std::size_t i = 0; i < j["rate"].size(); ++i)
        if (j["accepted"][i].get<bool>()) {
            ++accepted;
            worst = std::max(worst, j["rate"][i].get<double>());
        }
    o.require(accepted > 0 && worst <= 0.6, "contraction rate at " + std::to_string(accepted) + " accepted r " + num(worst));
    const json& s = j["savin"];
    o.require(s["zero_check"].get<double>() <= 1e-8, "zero_check " + num(s["zero_check"].get<double>()));
    o.require(s["lambda"].get<double>() > 0.0, "lambda_min " + num(s["lambda"].get<double>()));
    o.require(j["scaling_identity_defect"].get<double>() <= 1e-10, "scaling identity " + num(j["scaling_identity_defect"].get<double>()));
    return o;
}

void path_checks(Outcome& o, const json& j)
{
    const json& p = j["path"];
    o.require(p["taus"].back().get<double>() == 0.999, "reached tau 0.999");
    double res = 0.0;
    for (const json& r : p["residuals"]) res = std::max(res, r.get<double>());
    o.require(res <= 1e-10, "Newton residual " + num(res));
    o.require(p["c1_variation"].get<double>() <= 0.1, "C1 variation " + num(p["c1_variation"].get<double>()));
    o.require(j["cone_safe"].get<bool>(), "cone-safe iterates");
}

Outcome annulus()
{
    Outcome o;
    const json j = cli("annulus", {"path", "--domain", "annulus", "--a", "1", "--b", "4", "--n", "3", "--k", "3"});
    path_checks(o, j);
    const json& l = j["limit"];
    const double kr = l["kink_radius"].get<double>();
    o.require(std::abs(kr - 2.0) <= 0.02 * 2.0, "kink radius " + num(kr));
    const json& m = l["mask"];
    o.require(m.size() == 2, "two mask spacings");
    if (m.size() == 2) {
        o.require(m[0]["max_offset_cells"].get<double>() <= 2.0 && m[1]["max_offset_cells"].get<double>() <= 2.0,
                  "mask offsets " + num(m[0]["max_offset_cells"].get<double>()) + ", " + num(m[1]["max_offset_cells"].get<double>()) +
                      " cells");
        o.require(m[1]["fraction"].get<double>() < m[0]["fraction"].get<double>(),
                  "flagged fraction " + num(m[0]["fraction"].get<double>()) + " -> " + num(m[1]["fraction"].get<double>()));
    }
    o.require(l["doubling"]["relative_move"].get<double>() < 0.005, "doubling move " + num(l["doubling"]["relative_move"].get<double>()));
    o.require(l["ode"]["sup_difference"].get<double>() <= 0.01, "ODE sup difference " + num(l["ode"]["sup_difference"].get<double>()));
    return o;
}

Outcome verification()
{
    Outcome o;
    const json j = cli("verify", {"verify"});
    for (const json& c : j["oracles"])
        o.require(c["verdicts"].value("both", 0) == 100, c["oracle"].get<std::string>() + " both at " +
                                                          std::to_string(c["verdicts"].value("both", 0)) + "/100");
    const json& cmp = j["comparison"];
    o.require(cmp["identical_pair_holds"].get<bool>() && cmp["shifted_pair_holds"].get<bool>(), "comparison on oracle pairs");
    o.require(cmp["violation_detected"].get<bool>(), "manufactured violation detected");
    for (const json& f : j["smooth_node_membership"]) {
        const int out = f["outside_cone"][0].get<int>() + f["outside_cone"][1].get<int>();
        o.require(out == 0, f["field"].get<std::string>() + ": " + std::to_string(out) + " smooth nodes outside the cone");
        const double order = f["residual_order"].get<double>();
        o.require(order >= 1.0, f["field"].get<std::string>() + " residual order " + num(order));
    }
    return o;
}

Outcome krylov()
{
    Outcome o;
    const double hand = krylov_f(Vec::Ones(3), 0.0, Vec::Zero(3), KrylovData::constant(2, 1.0, {1.0}));
    o.require(std::abs(hand - 2.0 / 3.0) <= 1e-14, "hand value " + num(hand));
    for (auto [n, k] : {std::pair{3, 3}, std::pair{4, 4}}) {
        const KrylovProbe p = krylov_probe(n, KrylovData::constant(k, 1.0, std::vector<double>(static_cast<std::size_t>(k - 1), 1.0)), 1000);
        o.require(p.points == 1000 && p.min_derivative >= -1e-10,
                  "n=" + std::to_string(n) + " k=" + std::to_string(k) + " ellipticity " + num(p.min_derivative));
        const std::string tag = "krylov_n" + std::to_string(n);
        const json j = cli(tag, {"path", "--operator", "krylov", "--n", std::to_string(n), "--k", std::to_string(k)});
        Outcome sub;
        path_checks(sub, j);
        o.require(sub.pass, tag + " path (" + sub.detail + ")");
        if (n == 4) {
            const double kr = j["limit"]["kink_radius"].get<double>();
            o.require(j["limit"]["singular_regime"].get<bool>() && std::abs(kr - 2.0) <= 0.04,
                      "n=4 singular experiment kink " + num(kr));
        }
    }
    return o;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome determinism()
{
    Outcome o;
    const auto runs = g_runs;
    for (const auto& [name, args] : runs) {
        std::vector<std::string> again = args;
        // Worker count must not change the bytes.
        again.insert(again.begin() + 1, {"--jobs", "2"});
        (void)cli(name, again, "second");
        std::size_t files = 0, differ = 0;
        for (const auto& e : fs::recursive_directory_iterator(kRoot / "first" / name)) {
            if (!e.is_regular_file()) continue;
            ++files;
            const fs::path rel = fs::relative(e.path(), kRoot / "first" / name);
            if (slurp(e.path()) != slurp(kRoot / "second" / name / rel)) ++differ;
        }
        o.require(files > 0 && differ == 0, name + ": " + std::to_string(differ) + "/" + std::to_string(files) + " files differ");
    }
    o.require(!runs.empty(), "reran " + std::to_string(runs.size()) + " invocations");
    return o;
}

} // namespace

int main()
{
    std::cout << std::unitbuf;
    struct Criterion {
        int id;
        const char* name;
        double budget;  ///< seconds
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "symmetric functions", 10, symmetric_functions},
        {2, "dual cone", 60, dual_cone},
        {3, "Garding pairing", 120, garding},
        {4, "geometry convergence", 60, geometry},
        {5, "local solver scalings", 600, local_solver},
        {6, "annulus singular limit", 900, annulus},
        {7, "viscosity verification", 300, verification},
        {8, "Krylov suite", 900, krylov},
        {9, "determinism", 3600, determinism},
    };
    fs::create_directories(kRoot);
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs <= c.budget, "runtime " + num(secs) + " s of " + num(c.budget) + " s");
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << '\n';
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria pass\n";
    return failed ? 1 : 0;
}
