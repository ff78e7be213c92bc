#pragma once

#include <sigk/continuity.hpp>
#include <sigk/io.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace sigk::cli {

inline constexpr const char* version = "0.1.0";

using json = nlohmann::ordered_json;

/// Invalid configuration or flags; exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum ExitCode { ok = 0, bad_config = 2, numeric_failure = 3 };

// ---------------------------------------------------------------- config

enum class KeyKind { number, integer, text, list, range, flag };

struct KeySpec {
    std::string name;
    KeyKind kind;
    std::string fallback;
    std::string help;
};

/// Textual key=value settings grouped in [sections]. Keys before the first
/// section header belong to "global".
class Config {
public:
    static Config parse(std::istream& is)
    {
        Config c;
        std::string line, section = "global";
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            c.text_ += line + '\n';
            const std::string s = trim(line.substr(0, line.find('#')));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw config_error("config line " + std::to_string(lineno) + ": bad section header");
                section = trim(s.substr(1, s.size() - 2));
                if (section.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty section name");
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(s.substr(0, eq));
            if (key.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty key");
            c.values_[section][key] = trim(s.substr(eq + 1));
        }
        return c;
    }

    static Config parse_file(const std::string& path)
    {
        std::ifstream f(path);
        if (!f) throw config_error("cannot read config file " + path);
        return parse(f);
    }

    void set(const std::string& section, const std::string& key, const std::string& value) { values_[section][key] = value; }

    [[nodiscard]] std::optional<std::string> raw(const std::string& section, const std::string& key) const
    {
        const auto s = values_.find(section);
        if (s == values_.end()) return std::nullopt;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second;
    }

    [[nodiscard]] const std::map<std::string, std::map<std::string, std::string>>& values() const { return values_; }
    [[nodiscard]] const std::string& text() const { return text_; }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::map<std::string, std::string>> values_;
    std::string text_;
};

/// Resolved settings of one subcommand: defaults, then the config file, then flags.
class Settings {
public:
    Settings(std::string section, const std::vector<KeySpec>& specs, const Config& cfg) : section_(std::move(section))
    {
        for (const KeySpec& k : specs) {
            kinds_[k.name] = k.kind;
            values_[k.name] = k.fallback;
        }
        if (const auto it = cfg.values().find(section_); it != cfg.values().end())
            for (const auto& [key, value] : it->second) {
                if (!kinds_.count(key)) throw config_error("unknown key '" + key + "' in [" + section_ + "]");
                values_[key] = value;
            }
        for (const auto& [key, value] : values_) check(key, value);
    }

    [[nodiscard]] double num(const std::string& key) const { return to_double(key, get(key)); }

    [[nodiscard]] int integer(const std::string& key) const
    {
        const std::string& s = get(key);
        std::size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != s.size()) throw config_error(section_ + "." + key + ": expected an integer, got '" + s + "'");
        return v;
    }

    [[nodiscard]] bool flag(const std::string& key) const
    {
        const std::string& s = get(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw config_error(section_ + "." + key + ": expected true or false, got '" + s + "'");
    }

    [[nodiscard]] const std::string& text(const std::string& key) const { return get(key); }

    /// Comma-separated numbers; empty text gives an empty list.
    [[nodiscard]] std::vector<double> list(const std::string& key) const
    {
        std::vector<double> out;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.find_first_not_of(" \t") == std::string::npos) continue;
            out.push_back(to_double(key, item));
        }
        return out;
    }

    /// "a..b" or a comma-separated list of integers.
    [[nodiscard]] std::vector<int> range(const std::string& key) const
    {
        const std::string& s = get(key);
        std::vector<int> out;
        const auto dots = s.find("..");
        auto to_int = [&](const std::string& t) {
            std::size_t pos = 0;
            int v = 0;
            try {
                v = std::stoi(t, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos == 0) throw config_error(section_ + "." + key + ": bad integer range '" + s + "'");
            return v;
        };
        if (dots != std::string::npos) {
            const int lo = to_int(s.substr(0, dots)), hi = to_int(s.substr(dots + 2));
            if (hi < lo) throw config_error(section_ + "." + key + ": empty range '" + s + "'");
            for (int v = lo; v <= hi; ++v) out.push_back(v);
            return out;
        }
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(to_int(item));
        if (out.empty()) throw config_error(section_ + "." + key + ": empty list");
        return out;
    }

    [[nodiscard]] json to_json() const
    {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    [[nodiscard]] const std::string& get(const std::string& key) const
    {
        const auto it = values_.find(key);
        if (it == values_.end()) throw config_error("internal: undeclared key " + key);
        return it->second;
    }

    [[nodiscard]] double to_double(const std::string& key, const std::string& s) const
    {
        std::size_t pos = 0;
        double v = 0.0;
        std::string t = s;
        t.erase(0, t.find_first_not_of(" \t"));
        t.erase(t.find_last_not_of(" \t") + 1);
        try {
            v = std::stod(t, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != t.size() || !std::isfinite(v))
            throw config_error(section_ + "." + key + ": expected a number, got '" + s + "'");
        return v;
    }

    void check(const std::string& key, const std::string&) const
    {
        switch (kinds_.at(key)) {
        case KeyKind::number: (void)num(key); break;
        case KeyKind::integer: (void)integer(key); break;
        case KeyKind::flag: (void)flag(key); break;
        case KeyKind::list: (void)list(key); break;
        case KeyKind::range: (void)range(key); break;
        case KeyKind::text: break;
        }
    }

    std::string section_;
    std::map<std::string, KeyKind> kinds_;
    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------- artifacts

struct Artifact {
    std::string file;
    std::string kind;  ///< json, csv or plot
    std::string description;
    std::vector<std::string> columns;
    std::string body;
};

struct Report {
    json summary;
    std::vector<Artifact> files;
    bool pass = true;  ///< all checks inside the summary passed
};

struct RunContext {
    std::uint64_t seed = 1;
    int jobs = 1;
    json meta;  ///< version, command, config, seed
};

namespace detail {

inline std::string num_text(double v) { return io::fmt(v); }

/// Comment header shared by CSV and plot files.
inline std::string meta_header(const json& meta) { return "# " + meta.dump() + "\n"; }

inline Artifact csv(const json& meta, std::string file, std::string description, std::vector<std::string> columns,
                    const std::vector<std::vector<double>>& rows)
{
    Artifact a{std::move(file), "csv", std::move(description), std::move(columns), {}};
    std::string body = meta_header(meta);
    for (std::size_t c = 0; c < a.columns.size(); ++c) body += (c ? "," : "") + a.columns[c];
    body += '\n';
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) body += (c ? "," : "") + num_text(r[c]);
        body += '\n';
    }
    a.body = std::move(body);
    return a;
}

/// Two-column x y data for external plotting.
inline Artifact plot(const json& meta, std::string file, std::string description, std::string x, std::string y,
                     const std::vector<std::pair<double, double>>& pts)
{
    Artifact a{"plot/" + std::move(file), "plot", std::move(description), {std::move(x), std::move(y)}, {}};
    std::string body = meta_header(meta) + "# " + a.columns[0] + " " + a.columns[1] + "\n";
    for (const auto& [px, py] : pts) body += num_text(px) + " " + num_text(py) + "\n";
    a.body = std::move(body);
    return a;
}

/// Runs f(0..count-1) on at most `jobs` threads; results in index order.
/// The first exception by index is rethrown.
template <class F>
auto parallel_map(std::size_t count, int jobs, F f) -> std::vector<decltype(f(std::size_t{}))>
{
    using R = decltype(f(std::size_t{}));
    std::vector<std::optional<R>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                slots[i].emplace(f(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

inline json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vec unit_gaussian(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> g;
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v / v.norm();
}

inline Mat random_rotation(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> g;
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    const Eigen::HouseholderQR<Mat> qr(a);
    return qr.householderQ() * Mat::Identity(n, n);
}

inline Vec sample_gamma_k(std::mt19937_64& rng, int n, int k)
{
    std::normal_distribution<double> g;
    for (;;) {
        Vec l(n);
        for (int i = 0; i < n; ++i) l(i) = 1.0 + 1.2 * g(rng);
        if (in_gamma_k(l, ConeSpec{n, k, Strictness::open})) return l;
    }
}

/// Spectra in the dual of Gamma_k^+: multiples of (1,...,1) for k = 1; for
/// k >= 2 alternately the positive orthant and the closed-form dual of Gamma_2^+.
inline Vec sample_dual(std::mt19937_64& rng, int n, int k, int parity)
{
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.1, 2.0);
    if (k == 1) return Vec::Constant(n, u(rng));
    for (;;) {
        Vec l(n);
        for (int i = 0; i < n; ++i) l(i) = parity % 2 ? u(rng) : 1.0 + 0.5 * g(rng);
        if (in_dual_gamma2(l).margin > 1e-9) return l;
    }
}

} // namespace detail

// ---------------------------------------------------------------- cone

inline const std::vector<KeySpec>& cone_keys()
{
    static const std::vector<KeySpec> k{
        {"n", KeyKind::range, "3..6", "dimensions for the dual-cone batches"},
        {"samples", KeyKind::integer, "10000", "unit spectra per n compared with the brute-force oracle"},
        {"agreement_n", KeyKind::range, "3..5", "dimensions for the brute-force comparison"},
        {"mesh", KeyKind::integer, "4096", "sphere mesh size of the brute-force oracle"},
        {"band", KeyKind::number, "1e-6", "closed-form margins inside this band are not compared"},
        {"check_test_matrices", KeyKind::flag, "true", "test I, I - e_i e_i and I + t(e_i e_j + e_j e_i)"},
        {"garding_n", KeyKind::range, "3,4", "dimensions for the Garding pairing batch"},
        {"garding_pairs", KeyKind::integer, "10000", "random (A, B) pairs per dimension, cycled over k"},
    };
    return k;
}

inline Report run_cone(const Settings& s, const RunContext& ctx)
{
    Report rep;
    const std::vector<int> ns = s.range("n"), agree_n = s.range("agreement_n"), gard_n = s.range("garding_n");
    const int samples = s.integer("samples"), mesh = s.integer("mesh"), pairs = s.integer("garding_pairs");
    const double band = s.num("band");
    if (samples < 0 || pairs < 0) throw config_error("cone: counts must be >= 0");
    for (int n : ns)
        if (n < 3 || n > 12) throw config_error("cone.n: need 3 <= n <= 12");
    for (int n : gard_n)
        if (n < 2 || n > 8) throw config_error("cone.garding_n: need 2 <= n <= 8");
    rep.summary["tolerances"] = {{"band", band}, {"pairing_slack", 1e-10}, {"garding_slack", 1e-8}, {"cross_section", 1e-10}};

    json matrices = json::array();
    bool all_members = true, all_rejected = true;
    if (s.flag("check_test_matrices")) {
        for (int n : ns) {
            const double bound = dual_test_bound(n);
            json entry{{"n", n}, {"bound", bound}, {"accepted", json::array()}};
            for (double f : {0.25, 0.5, 0.99}) {
                const std::vector<Mat> ms = dual_test_matrices(n, f * bound);
                for (std::size_t i = 0; i < ms.size(); ++i) {
                    const DualConeCertificate c = in_dual_gamma2(eigenvalues(ms[i]));
                    all_members = all_members && c.member;
                    entry["accepted"].push_back({{"t", f * bound}, {"index", i}, {"member", c.member}, {"margin", c.margin}});
                }
            }
            const std::vector<Mat> out = dual_test_matrices(n, 1.01 * bound);
            bool rejected = true;
            for (std::size_t i = static_cast<std::size_t>(n) + 1; i < out.size(); ++i)
                rejected = rejected && !in_dual_gamma2(eigenvalues(out[i])).member;
            entry["rejected_at_1.01_bound"] = rejected;
            all_rejected = all_rejected && rejected;
            matrices.push_back(entry);
        }
        rep.summary["test_matrices"] = {{"all_members", all_members}, {"outside_rejected", all_rejected}, {"by_n", matrices}};
        rep.pass = rep.pass && all_members && all_rejected;
    }

    json cross = json::array();
    {
        std::mt19937_64 rng(ctx.seed);
        for (int n : ns) {
            double worst = 0.0;
            for (int i = 0; i < 200; ++i) {
                Vec v = detail::unit_gaussian(rng, n);
                v -= Vec::Constant(n, v.mean());
                v /= v.norm();
                worst = std::max(worst, std::abs(sigma_k(Vec(v + Vec::Constant(n, cross_section_offset(n))), 2)));
            }
            cross.push_back({{"n", n}, {"offset", cross_section_offset(n)}, {"max_sigma2", worst}});
            rep.pass = rep.pass && worst <= 1e-10;
        }
        rep.summary["cross_section"] = cross;
    }

    struct Agreement {
        json j;
        std::vector<std::pair<double, double>> pts;
        bool ok;
    };
    const auto agreements = detail::parallel_map(agree_n.size(), ctx.jobs, [&](std::size_t idx) {
        const int n = agree_n[idx];
        std::mt19937_64 rng(ctx.seed * 1000003ULL + static_cast<std::uint64_t>(n));
        int compared = 0, in_band = 0, disagree = 0, members = 0;
        Agreement a;
        for (int i = 0; i < samples; ++i) {
            Vec l = detail::unit_gaussian(rng, n);
            // Every other sample is pushed toward the diagonal so both verdicts occur.
            if (i % 2 == 1) {
                l += Vec::Constant(n, 0.6 * std::abs(l.sum()) + 0.3);
                l /= l.norm();
            }
            const DualConeCertificate c = in_dual_gamma2(l);
            if (std::abs(c.margin) < band) {
                ++in_band;
                continue;
            }
            ++compared;
            members += c.member;
            const auto [minp, arg] = min_pairing_over_cone(l, ConeSpec{n, 2, Strictness::open}, mesh, -1e-10);
            const bool brute = minp >= -1e-10;
            if (brute != c.member) ++disagree;
            if (a.pts.size() < 2000) a.pts.emplace_back(c.margin, minp);
        }
        a.j = {{"n", n}, {"samples", samples}, {"compared", compared}, {"in_band", in_band}, {"members", members},
               {"disagreements", disagree}};
        a.ok = disagree == 0;
        return a;
    });
    json agree = json::array();
    for (std::size_t i = 0; i < agreements.size(); ++i) {
        agree.push_back(agreements[i].j);
        rep.pass = rep.pass && agreements[i].ok;
        rep.files.push_back(detail::plot(ctx.meta, "dual_margin_n" + std::to_string(agree_n[i]) + ".dat",
                                         "closed-form margin against the smallest pairing found by the brute-force oracle "
                                         "(first 2000 compared samples)",
                                         "margin", "min_pairing", agreements[i].pts));
    }
    rep.summary["dual_agreement"] = agree;

    const auto gardings = detail::parallel_map(gard_n.size(), ctx.jobs, [&](std::size_t idx) {
        const int n = gard_n[idx];
        std::mt19937_64 rng(ctx.seed * 7919ULL + static_cast<std::uint64_t>(n));
        json by_k = json::array();
        bool ok = true;
        for (int k = 1; k <= n; ++k) {
            const PairingResult eq = garding_pairing_check(Mat::Identity(n, n), Mat::Identity(n, n), k);
            int count = 0, fail = 0;
            double min_slack = std::numeric_limits<double>::infinity();
            for (int p = k - 1; p < pairs; p += n) {
                const Mat qa = detail::random_rotation(rng, n), qb = detail::random_rotation(rng, n);
                const Mat A = qa * detail::sample_gamma_k(rng, n, k).asDiagonal() * qa.transpose();
                const Mat B = qb * detail::sample_dual(rng, n, k, p).asDiagonal() * qb.transpose();
                const PairingResult r = garding_pairing_check(symmetrized(A), symmetrized(B), k);
                ++count;
                fail += !r.holds;
                min_slack = std::min(min_slack, r.rhs - r.lhs);
            }
            const double eq_defect = std::abs(eq.lhs - eq.rhs);
            ok = ok && fail == 0 && eq_defect <= 1e-8;
            by_k.push_back({{"k", k}, {"pairs", count}, {"failures", fail}, {"min_slack", min_slack},
                            {"identity_defect", eq_defect}});
        }
        return std::pair<json, bool>{json{{"n", n}, {"by_k", by_k}}, ok};
    });
    json gard = json::array();
    for (const auto& [j, ok] : gardings) {
        gard.push_back(j);
        rep.pass = rep.pass && ok;
    }
    rep.summary["garding"] = gard;
    rep.summary["grid"] = {{"sphere_mesh", mesh}};
    return rep;
}

// ---------------------------------------------------------------- schouten

inline const std::vector<KeySpec>& schouten_keys()
{
    static const std::vector<KeySpec> k{
        {"h", KeyKind::list, "0.04,0.02,0.01", "grid spacings of the convergence study"},
        {"half_width", KeyKind::number, "0.2", "the sphere chart is [-w, w]^3"},
        {"slab", KeyKind::list, "0.2,1,1.5", "hyperbolic slab: half width, lower and upper x3"},
    };
    return k;
}

inline Report run_schouten(const Settings& s, const RunContext& ctx)
{
    const std::vector<double> hs = s.list("h"), slab = s.list("slab");
    const double half = s.num("half_width");
    if (hs.size() < 2) throw config_error("schouten.h: need at least two spacings");
    for (std::size_t i = 0; i < hs.size(); ++i)
        if (!(hs[i] > 0.0) || (i && !(hs[i] < hs[i - 1]))) throw config_error("schouten.h: spacings must be positive and decreasing");
    if (slab.size() != 3 || !(slab[0] > 0.0) || !(0.0 < slab[1] && slab[1] < slab[2])) throw config_error("schouten.slab: need w > 0 and 0 < lo < hi");
    if (!(half > 0.0)) throw config_error("schouten.half_width must be positive");
    const int n = 3;
    const auto sphere = [](const Vec& x) {
        const double f = 2.0 / (1.0 + x.squaredNorm());
        return Mat(f * f * Mat::Identity(x.size(), x.size()));
    };
    struct Row {
        double sphere_err, hyp_err;
        std::size_t nodes;
    };
    const auto rows = detail::parallel_map(hs.size(), ctx.jobs, [&](std::size_t i) {
        const double h = hs[i];
        const MetricChart chart =
            MetricChart::sample(Grid::box(Vec::Constant(n, -half), Vec::Constant(n, half), h), sphere);
        const std::vector<Mat> a = schouten(chart);
        double se = 0.0;
        // Nested one-sided differences lose an order in the two outer layers.
        for (std::size_t q = 0; q < a.size(); ++q)
            if (chart.grid.coord(q).cwiseAbs().maxCoeff() < half - 2.5 * h)
                se = std::max(se, (a[q] - 0.5 * chart.g[q]).cwiseAbs().maxCoeff() / chart.g[q](0, 0));
        const Grid g = Grid::box(Vec{{-slab[0], -slab[0], slab[1]}}, Vec{{slab[0], slab[0], slab[2]}}, h);
        const MetricChart flat = MetricChart::flat(g, DomainKind::half_space_slab);
        const AugmentedField f = conformal_schouten(GridFunction::from(g, [](const Vec& x) { return -std::log(x(2)); }), flat);
        double he = 0.0;
        for (std::size_t q = 0; q < f.spectra.size(); ++q)
            if (f.valid[q]) he = std::max(he, (f.spectra[q] + Vec::Constant(n, 0.5)).cwiseAbs().maxCoeff());
        return Row{se, he, chart.grid.size() + g.size()};
    });
    Report rep;
    json study = json::array();
    std::vector<std::pair<double, double>> ps, ph;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        study.push_back({{"h", hs[i]}, {"sphere_error", rows[i].sphere_err}, {"hyperbolic_error", rows[i].hyp_err}, {"nodes", rows[i].nodes}});
        ps.emplace_back(std::log(hs[i]), std::log(rows[i].sphere_err));
        ph.emplace_back(std::log(hs[i]), std::log(rows[i].hyp_err));
    }
    double so = std::numeric_limits<double>::infinity(), ho = so;
    for (std::size_t i = 1; i < hs.size(); ++i) {
        const double lr = std::log(hs[i - 1] / hs[i]);
        so = std::min(so, std::log(rows[i - 1].sphere_err / rows[i].sphere_err) / lr);
        ho = std::min(ho, std::log(rows[i - 1].hyp_err / rows[i].hyp_err) / lr);
    }
    rep.summary["grid"] = {{"h", hs}, {"sphere_box", {-half, half}}, {"slab", slab}};
    rep.summary["tolerances"] = {{"min_order", 1.8}, {"edge_margin_cells", 2.5}};
    rep.summary["study"] = study;
    rep.summary["sphere_order"] = so;
    rep.summary["hyperbolic_order"] = ho;
    rep.pass = so >= 1.8 && ho >= 1.8;
    rep.files.push_back(detail::plot(ctx.meta, "schouten_sphere.dat", "log h against log max |A - g/2| / g_11 on the stereographic sphere",
                                     "log_h", "log_error", ps));
    rep.files.push_back(detail::plot(ctx.meta, "schouten_hyperbolic.dat",
                                     "log h against log max |lambda + 1/2| for w = -ln x3 on a flat slab", "log_h", "log_error", ph));
    return rep;
}

// ---------------------------------------------------------------- verify

inline const std::vector<KeySpec>& verify_keys()
{
    static const std::vector<KeySpec> k{
        {"n", KeyKind::integer, "3", "dimension"},
        {"k", KeyKind::integer, "3", "cone index"},
        {"h", KeyKind::number, "0.025", "grid spacing for the verdicts"},
        {"points", KeyKind::integer, "100", "random points per exact oracle"},
        {"regularity_h", KeyKind::list, "0.05,0.025", "spacings for the cone-membership restatement"},
        {"regularity_points", KeyKind::integer, "60", "sampled nodes per spacing"},
    };
    return k;
}

inline Report run_verify(const Settings& s, const RunContext& ctx)
{
    const int n = s.integer("n"), k = s.integer("k"), points = s.integer("points"), rpoints = s.integer("regularity_points");
    const double h = s.num("h");
    const std::vector<double> rh = s.list("regularity_h");
    if (n != 3) throw config_error("verify.n: the sampled boxes are three-dimensional");
    if (k < 1 || k > n) throw config_error("verify.k: need 1 <= k <= n");
    if (!(h > 0.0 && h <= 0.1)) throw config_error("verify.h: need 0 < h <= 0.1");
    if (rh.size() != 2 || !(rh[1] < rh[0])) throw config_error("verify.regularity_h: need two decreasing spacings");
    if (points < 1 || rpoints < 1) throw config_error("verify: point counts must be positive");
    Report rep;
    const Equation eq = sigma_equation(n, k, 1.0);
    const LowerOrderTerms flat = LowerOrderTerms::flat_space(n);
    const CheckOptions copt{};
    rep.summary["grid"] = {{"h", h}, {"regularity_h", rh}};
    rep.summary["tolerances"] = {{"residual_slack", "20 h^2 max(1, R e^{2w})"}, {"beta_threshold", 1.9}, {"smooth_beta", 2.0},
                                 {"comparison_slack", 1e-10}};

    // Exact oracles at random points.
    struct Case {
        const char* name;
        oracle::ExactSolution ex;
        Grid grid;
        Vec center;
        double spread;
    };
    const std::vector<Case> cases{
        {"hyperbolic_halfspace", oracle::hyperbolic_halfspace(n, k), Grid::box(Vec{{-0.4, -0.4, 1.0}}, Vec{{0.4, 0.4, 2.0}}, h),
         Vec{{0.0, 0.0, 1.5}}, 0.25},
        {"hyperbolic_ball", oracle::hyperbolic_ball(n, k), Grid::box(Vec::Constant(n, -0.45), Vec::Constant(n, 0.45), h),
         Vec::Zero(n), 0.2},
    };
    json oracles = json::array();
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const Case& cs = cases[c];
        const GridFunction w = cs.ex.sample(cs.grid);
        std::mt19937_64 rng(ctx.seed + 17 * c);
        std::uniform_real_distribution<double> u(-cs.spread, cs.spread);
        std::map<std::string, int> tally;
        double worst = 0.0;
        std::vector<std::pair<double, double>> res;
        for (int p = 0; p < points; ++p) {
            Vec x = cs.center;
            for (int a = 0; a < n; ++a) x(a) += u(rng);
            const PointVerdict v = check_point(w, flat, eq, x, copt);
            ++tally[to_string(v.status)];
            worst = std::max(worst, std::abs(v.residual) / std::max(1.0, std::exp(2.0 * cs.ex(x))));
            res.emplace_back(static_cast<double>(p), v.residual);
        }
        rep.pass = rep.pass && tally["both"] == points;
        json t = json::object();
        for (const auto& [name, count] : tally) t[name] = count;
        oracles.push_back({{"oracle", cs.name}, {"points", points}, {"verdicts", t}, {"max_scaled_residual", worst}});
        rep.files.push_back(detail::plot(ctx.meta, std::string("verdict_residual_") + cs.name + ".dat",
                                         "residual of the fitted jet at each random point", "point", "residual", res));
    }
    rep.summary["oracles"] = oracles;

    // Comparison on oracle pairs and a manufactured violation.
    {
        const Grid g = Grid::box(Vec{{-0.4, -0.4, 1.0}}, Vec{{0.4, 0.4, 2.0}}, 0.1);
        const MetricChart chart = MetricChart::flat(g, DomainKind::half_space_slab);
        const GridFunction w = oracle::hyperbolic_halfspace(n, k).sample(g);
        const ConeSpec cone{n, k, Strictness::open};
        GridFunction up = w;
        up.values.array() += 0.1;
        GridFunction dent = w;
        const Vec c{{0.0, 0.0, 1.5}};
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!g.on_edge(i)) dent[i] -= 0.2 * std::exp(-(g.coord(i) - c).squaredNorm() / 0.02);
        const ComparisonResult same = comparison_check(w, w, chart, cone), shifted = comparison_check(w, up, chart, cone),
                               bad = comparison_check(w, dent, chart, cone);
        const bool detected = !bad.holds && bad.violating_node.has_value() && *bad.violating_node == g.nearest(c);
        rep.pass = rep.pass && same.holds && shifted.holds && detected;
        rep.summary["comparison"] = {{"identical_pair_holds", same.holds},
                                     {"shifted_pair_holds", shifted.holds},
                                     {"violation_detected", detected},
                                     {"violating_node", bad.violating_node ? json(*bad.violating_node) : json(nullptr)}};
    }

    // Cone membership and residual decay at smooth nodes, on the annulus
    // oracle near its kink sphere and on the half-space oracle.
    {
        const oracle::RadialProfile prof = oracle::annulus_radial(n, n, 1.0, 4.0);
        struct Field {
            const char* name;
            std::function<double(const Vec&)> w;
            Vec lo, hi;
            int k;
        };
        const oracle::ExactSolution hs = oracle::hyperbolic_halfspace(n, k);
        const std::vector<Field> fields{
            {"annulus_kink_box", [&](const Vec& x) { return prof.value_at_radius(x.norm()); }, Vec{{1.6, -0.4, -0.4}},
             Vec{{2.4, 0.4, 0.4}}, n},
            {"hyperbolic_halfspace", [&](const Vec& x) { return hs(x); }, Vec{{-0.4, -0.4, 1.0}}, Vec{{0.4, 0.4, 2.0}}, k},
        };
        json out = json::array();
        for (const Field& f : fields) {
            const Equation e = sigma_equation(n, f.k, 1.0);
            // Nodes of the coarse grid, which are also nodes of the fine one.
            const Grid coarse = Grid::box(f.lo, f.hi, rh[0]);
            std::mt19937_64 rng(ctx.seed + 101);
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < coarse.size(); ++i) {
                const Vec x = coarse.coord(i);
                bool central = true;
                for (int a = 0; a < n; ++a) central = central && std::abs(x(a) - 0.5 * (f.lo(a) + f.hi(a))) <= 0.25 * (f.hi(a) - f.lo(a)) + 1e-12;
                if (central) pool.push_back(i);
            }
            std::shuffle(pool.begin(), pool.end(), rng);
            std::vector<Vec> xs;
            for (std::size_t p = 0; p < pool.size() && static_cast<int>(p) < rpoints; ++p) xs.push_back(coarse.coord(pool[p]));
            std::vector<double> worst(2, 0.0);
            std::vector<int> smooth(2, 0);
            std::vector<int> outside(2, 0);
            double min_margin = std::numeric_limits<double>::infinity();
            std::vector<std::uint8_t> both_smooth(xs.size(), 1);
            std::vector<std::vector<double>> resid(2, std::vector<double>(xs.size(), 0.0));
            for (std::size_t level = 0; level < 2; ++level) {
                const Grid g = Grid::box(f.lo, f.hi, rh[level]);
                const GridFunction w = GridFunction::from(g, f.w);
                for (std::size_t p = 0; p < xs.size(); ++p) {
                    const PointVerdict v = check_point(w, flat, e, xs[p], copt);
                    if (!(v.beta >= 2.0)) {
                        both_smooth[p] = 0;
                        continue;
                    }
                    ++smooth[level];
                    if (!e.admissible(v.cone_spectrum)) ++outside[level];
                    min_margin = std::min(min_margin, v.cone_spectrum.minCoeff());
                    resid[level][p] = std::abs(v.residual);
                }
            }
            for (std::size_t p = 0; p < xs.size(); ++p)
                if (both_smooth[p])
                    for (std::size_t level = 0; level < 2; ++level) worst[level] = std::max(worst[level], resid[level][p]);
            const double order = std::log(worst[0] / worst[1]) / std::log(rh[0] / rh[1]);
            const bool ok = outside[0] == 0 && outside[1] == 0 && smooth[1] > 0 && (worst[1] <= 1e-12 || order >= 1.0);
            rep.pass = rep.pass && ok;
            out.push_back({{"field", f.name}, {"k", f.k}, {"smooth_nodes", smooth}, {"outside_cone", outside},
                           {"min_spectrum_entry", min_margin}, {"max_residual", worst}, {"residual_order", order}, {"pass", ok}});
        }
        rep.summary["smooth_node_membership"] = out;
    }

    // Singular mask of the annulus oracle on a slice, and the jet exponent
    // along a ray through the kink.
    {
        const oracle::RadialProfile prof = oracle::annulus_radial(n, n, 1.0, 4.0);
        const Grid g = Grid::box(Vec{{1.5, -0.3, -0.3}}, Vec{{2.5, 0.3, 0.3}}, 0.05);
        const GridFunction w = GridFunction::from(g, [&](const Vec& x) { return prof.value_at_radius(x.norm()); });
        const MetricChart chart = MetricChart::flat(g);
        const SingularMask mask = detect_singular_set(w, chart);
        double max_dist = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (mask.flags[i]) max_dist = std::max(max_dist, std::abs(g.coord(i).norm() - prof.kink_radius()));
        rep.summary["annulus_mask"] = {{"h", 0.05}, {"flagged", mask.count()}, {"evaluated", mask.evaluated_count()},
                                       {"max_distance_to_kink", max_dist}, {"kink_radius", prof.kink_radius()}};
        std::ostringstream os;
        write_mask_csv(os, mask, g);
        rep.files.push_back(Artifact{"annulus_mask.csv", "csv", "singular-mask flags and jet exponents near the annulus kink sphere",
                                     {"node", "x0", "x1", "x2", "flag", "beta"}, detail::meta_header(ctx.meta) + os.str()});
        std::vector<std::pair<double, double>> ray;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Vec x = g.coord(i);
            if (x(1) == 0.0 && x(2) == 0.0 && mask.evaluated[i]) ray.emplace_back(x(0), mask.beta[i]);
        }
        rep.files.push_back(detail::plot(ctx.meta, "annulus_beta_ray.dat", "jet exponent along the x0 axis through the kink",
                                         "r", "beta", ray));
    }
    return rep;
}

// ---------------------------------------------------------------- local

inline const std::vector<KeySpec>& local_keys()
{
    static const std::vector<KeySpec> k{
        {"n", KeyKind::integer, "3", "dimension"},
        {"k", KeyKind::integer, "3", "cone index"},
        {"r_ladder", KeyKind::list, "0.4,0.2,0.1,0.05", "blow-up scales"},
        {"cells", KeyKind::integer, "32", "grid cells per unit length in y"},
        {"alpha", KeyKind::number, "0.5", "Hoelder exponent"},
        {"tol", KeyKind::number, "1e-10", "relative contraction tolerance"},
        {"savin", KeyKind::flag, "true", "probe the Savin hypotheses at the smallest scale"},
        {"identity_tuples", KeyKind::integer, "200", "random tuples for the scaling identity"},
        {"base", KeyKind::list, "0,0,1", "base point of the hyperbolic two-jet seed"},
    };
    return k;
}

inline Report run_local(const Settings& s, const RunContext& ctx)
{
    const int n = s.integer("n"), k = s.integer("k"), cells = s.integer("cells"), tuples = s.integer("identity_tuples");
    const std::vector<double> ladder = s.list("r_ladder"), base = s.list("base");
    if (k < 1 || k > n || n < 3) throw config_error("local: need 3 <= n and 1 <= k <= n");
    if (static_cast<int>(base.size()) != n) throw config_error("local.base: need n coordinates");
    if (ladder.size() < 2) throw config_error("local.r_ladder: need two scales");
    for (double r : ladder)
        if (!(r > 0.0 && r <= 1.0)) throw config_error("local.r_ladder: scales must lie in (0, 1]");
    if (cells < 4) throw config_error("local.cells: need at least 4");
    const Vec x0 = Eigen::Map<const Vec>(base.data(), n);
    const oracle::ExactSolution ex = oracle::hyperbolic_halfspace(n, k);
    if (!ex.in_domain(x0)) throw config_error("local.base: must have positive last coordinate");
    const LowerOrderTerms flat = LowerOrderTerms::flat_space(n);
    const Equation eq = sigma_equation(n, k, 1.0);
    const Paraboloid seed{x0, ex(x0), ex.gradient(x0), ex.hessian(x0)};
    LocalOptions opt;
    opt.cells = cells;
    opt.contract.tol = s.num("tol");
    const ScalingStudy st = scaling_study(seed, flat, eq, ladder, opt, s.num("alpha"));

    Report rep;
    rep.summary["grid"] = {{"domain", "[-1,1]^n"}, {"cells", cells}, {"h_y", 1.0 / cells}};
    rep.summary["tolerances"] = {{"contraction_tol", opt.contract.tol}, {"accept_rate", opt.accept_rate},
                                 {"zero_check", 1e-8}, {"scaling_identity", 1e-10}};
    rep.summary["r_ladder"] = st.r;
    rep.summary["residual_slopes"] = st.residual_slope;
    rep.summary["distance_slopes"] = st.distance_slope;
    rep.summary["seed_residual"] = st.seed_residual;
    rep.summary["distance"] = st.distance;
    rep.summary["accepted"] = st.accepted;
    rep.summary["rate"] = st.rate;
    rep.summary["iterations"] = st.iterations;
    bool rates_ok = true;
    for (std::size_t i = 0; i < st.r.size(); ++i)
        if (st.accepted[i]) rates_ok = rates_ok && st.rate[i] <= opt.accept_rate;
    rep.pass = st.residual_slope >= 2.7 && st.distance_slope >= 2.3 && rates_ok;

    std::vector<std::pair<double, double>> pr, pd;
    for (std::size_t i = 0; i < st.r.size(); ++i) {
        pr.emplace_back(std::log(st.r[i]), std::log(st.seed_residual[i]));
        pd.emplace_back(std::log(st.r[i]), std::log(st.distance[i]));
    }
    rep.files.push_back(detail::plot(ctx.meta, "local_seed_residual.dat", "log r against log of the seed residual Hoelder norm",
                                     "log_r", "log_residual", pr));
    rep.files.push_back(detail::plot(ctx.meta, "local_distance.dat", "log r against log ||w^(r) - P_r||_inf", "log_r",
                                     "log_distance", pd));

    const auto exact_jet = [&](const Vec& x) { return Jet{ex(x), ex.gradient(x), ex.hessian(x)}; };
    const Paraboloid P = project_seed(seed, flat, eq);
    double defect = 0.0;
    for (double r : ladder) defect = std::max(defect, savin_scaling_defect(blowup(P, flat, eq, r, std::min(cells, 8)), exact_jet, tuples));
    rep.summary["scaling_identity_defect"] = defect;
    rep.pass = rep.pass && defect <= 1e-10;

    if (s.flag("savin")) {
        const double r = ladder.back();
        const LocalSolution sol = contract_solve(blowup(P, flat, eq, r, cells, opt.shape), opt.contract);
        const SavinReport sv = savin_check(sol);
        rep.summary["savin"] = {{"r", r}, {"lambda", sv.lambda_min}, {"Lambda", sv.Lambda_max}, {"K", sv.K},
                                {"zero_check", sv.zero_check}, {"monotonicity_defect", sv.monotonicity_defect},
                                {"probes", sv.probes}, {"cone_safe", sv.cone_safe}, {"pass", sv.pass}};
        json trace = json::array();
        std::vector<std::pair<double, double>> tr;
        for (std::size_t i = 0; i < sol.trace.iterates.size(); ++i) {
            trace.push_back({{"iterate", i}, {"v_norm", sol.trace.iterates[i].first}, {"residual", sol.trace.iterates[i].second}});
            tr.emplace_back(static_cast<double>(i), sol.trace.iterates[i].second);
        }
        rep.summary["trace"] = {{"r", r}, {"converged", sol.trace.converged}, {"rate", sol.trace.rate}, {"iterates", trace}};
        rep.files.push_back(detail::plot(ctx.meta, "local_trace.dat", "contraction iterate against ||F^r[v]||_inf at the smallest scale",
                                         "iterate", "residual", tr));
        rep.pass = rep.pass && sv.pass && sv.zero_check <= 1e-8 && sv.lambda_min > 0.0;
    }
    return rep;
}

// ---------------------------------------------------------------- path

inline const std::vector<KeySpec>& path_keys()
{
    static const std::vector<KeySpec> k{
        {"domain", KeyKind::text, "annulus", "annulus or slab"},
        {"operator", KeyKind::text, "sigma", "sigma or krylov"},
        {"n", KeyKind::integer, "3", "dimension"},
        {"k", KeyKind::integer, "3", "cone index"},
        {"a", KeyKind::number, "1", "inner radius"},
        {"b", KeyKind::number, "4", "outer radius"},
        {"R", KeyKind::number, "1", "right-hand side level"},
        {"boundary_value", KeyKind::number, "8", "Dirichlet value standing in for +infinity"},
        {"intervals", KeyKind::integer, "800", "radial mesh intervals in t = ln r"},
        {"taus", KeyKind::list, "0,0.5,0.9,0.99,0.999", "continuation ladder"},
        {"tol", KeyKind::number, "1e-10", "Newton tolerance on the scaled residual"},
        {"alpha", KeyKind::number, "1", "Krylov alpha"},
        {"alphas", KeyKind::list, "", "Krylov alpha_0 .. alpha_{k-2}; empty means all 1"},
        {"mask_h", KeyKind::list, "0.05,0.025", "slice spacings for the singular mask"},
        {"doubling", KeyKind::flag, "true", "rerun with twice the boundary value"},
        {"ode", KeyKind::flag, "true", "compare with the shooting oracle"},
        {"slab_h", KeyKind::number, "0.05", "grid spacing for the slab domain"},
    };
    return k;
}

namespace detail {

inline json path_json(const TauPath& p)
{
    return {{"taus", p.taus}, {"residuals", p.residuals}, {"c0", p.c0_bounds}, {"c1", p.c1_bounds}, {"iterations", p.iterations},
            {"inserted", p.inserted}, {"tail", p.tail()}, {"tail_decreasing", p.tail_decreasing(3)},
            {"c1_variation", p.c1_variation(3)}};
}

inline Artifact path_table(const json& meta, const TauPath& p, const std::string& file)
{
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < p.taus.size(); ++i)
        rows.push_back({p.taus[i], p.residuals[i], p.c0_bounds[i], p.c1_bounds[i], static_cast<double>(p.iterations[i])});
    return csv(meta, file, "per-tau residual, C0 and C1 monitors and Newton iterations",
               {"tau", "residual", "c0", "c1", "iterations"}, rows);
}

} // namespace detail

inline Report run_path(const Settings& s, const RunContext& ctx)
{
    const std::string domain = s.text("domain"), op = s.text("operator");
    if (domain != "annulus" && domain != "slab") throw config_error("path.domain: annulus or slab");
    if (op != "sigma" && op != "krylov") throw config_error("path.operator: sigma or krylov");
    const std::vector<double> taus = s.list("taus");
    const double tol = s.num("tol");
    Report rep;
    rep.summary["tolerances"] = {{"newton", tol}, {"c1_variation", 0.1}, {"kink_relative", 0.02}, {"mask_cells", 2.0},
                                 {"doubling_relative", 0.005}, {"ode_sup", 0.01}, {"ode_exclusion", 0.05}, {"jump_over_noise", 10.0}};

    if (domain == "slab") {
        if (op != "sigma") throw config_error("path: the slab domain uses the sigma operator");
        const int n = s.integer("n"), k = s.integer("k");
        const double h = s.num("slab_h");
        if (n != 3 || k < 1 || k > 3) throw config_error("path: the slab runs with n = 3 and 1 <= k <= 3");
        const Grid g = Grid::box(Vec{{-0.2, -0.2, 1.0}}, Vec{{0.2, 0.2, 2.0}}, h);
        const MetricChart chart = MetricChart::flat(g);
        const oracle::ExactSolution ex = oracle::hyperbolic_halfspace(n, k, s.num("R"));
        const GridFunction exact = ex.sample(g);
        const TauPath p = solve_tau_path(chart, LowerOrderTerms::flat_space(n), sigma_equation(n, k, s.num("R")), exact, taus, tol);
        const double err = (p.solutions.back().values - exact.values).cwiseAbs().maxCoeff();
        std::size_t kfail = 0;
        for (std::size_t i = 0; i < p.taus.size(); ++i) kfail += kconvex_check(p, i).failures;
        rep.summary["grid"] = {{"box", {{-0.2, -0.2, 1.0}, {0.2, 0.2, 2.0}}}, {"h", h}, {"nodes", g.size()}};
        rep.summary["path"] = detail::path_json(p);
        rep.summary["limit_error"] = err;
        rep.summary["kconvex_failures"] = kfail;
        rep.pass = err <= 5.0 * h * h && kfail == 0 && p.c1_variation(3) <= 0.1;
        rep.files.push_back(detail::path_table(ctx.meta, p, "path_tau.csv"));
        return rep;
    }

    RadialProblem prob;
    prob.n = s.integer("n");
    prob.k = s.integer("k");
    prob.a = s.num("a");
    prob.b = s.num("b");
    prob.R = s.num("R");
    prob.boundary_value = s.num("boundary_value");
    prob.intervals = s.integer("intervals");
    if (op == "krylov") {
        prob.op = OperatorKind::krylov;
        std::vector<double> al = s.list("alphas");
        if (al.empty()) al.assign(static_cast<std::size_t>(std::max(0, prob.k - 1)), 1.0);
        prob.krylov = KrylovData::constant(prob.k, s.num("alpha"), al);
    }
    prob.validate();
    const TauPath p = solve_tau_path(prob, taus, tol);
    const RadialOperator last(prob, p.taus.back());
    bool cone_safe = true;
    for (std::size_t i = 0; i < p.taus.size(); ++i) {
        const RadialOperator o(prob, p.taus[i]);
        cone_safe = cone_safe && o.admissible(o.to_v(p.solutions[i].values));
    }
    std::size_t kfail = 0;
    for (std::size_t i = 0; i < p.taus.size(); ++i) kfail += kconvex_check(p, i).failures;
    rep.summary["grid"] = {{"kind", "radial"}, {"t", {std::log(prob.a), std::log(prob.b)}}, {"intervals", prob.intervals},
                           {"dt", last.mesh().spacing(0)}};
    rep.summary["operator"] = op;
    rep.summary["path"] = detail::path_json(p);
    rep.summary["cone_safe"] = cone_safe;
    rep.summary["kconvex_failures"] = kfail;
    bool ok = cone_safe && kfail == 0 && p.c1_variation(3) <= 0.1 && p.tail_decreasing(3);
    for (double r : p.residuals) ok = ok && r <= tol;
    rep.files.push_back(detail::path_table(ctx.meta, p, "path_tau.csv"));
    std::vector<std::pair<double, double>> c1;
    for (std::size_t i = 0; i < p.taus.size(); ++i) c1.emplace_back(p.taus[i], p.c1_bounds[i]);
    rep.files.push_back(detail::plot(ctx.meta, "path_c1.dat", "tau against the interior C1 monitor", "tau", "c1", c1));

    const RadialLimit lim = extract_limit(p);
    json limit{{"singular_regime", lim.singular_regime}, {"kink_radius", lim.kink_radius()}, {"kink_t", lim.kink_t},
               {"dw_left", lim.dw_left}, {"dw_right", lim.dw_right}, {"jump", lim.jump}, {"noise_floor", lim.noise_floor}};
    const double target = std::sqrt(prob.a * prob.b);
    if (lim.singular_regime) {
        const double rel = std::abs(lim.kink_radius() - target) / target;
        limit["kink_relative_error"] = rel;
        ok = ok && rel <= 0.02 && lim.jump >= 10.0 * lim.noise_floor;
    }
    std::vector<std::pair<double, double>> prof;
    for (std::size_t i = 0; i < lim.profile.t.size(); ++i) prof.emplace_back(lim.profile.t[i], lim.profile.w[i]);
    rep.files.push_back(detail::plot(ctx.meta, "path_limit_profile.dat", "t = ln r against w at the last tau", "t", "w", prof));

    if (lim.singular_regime && op == "sigma" && s.flag("ode")) {
        const oracle::RadialProfile ode = oracle::annulus_radial(prob.n, prob.k, prob.a, prob.b, prob.R,
                                                                 oracle::AnnulusOptions{.boundary_value = prob.boundary_value});
        double worst = 0.0;
        std::vector<std::pair<double, double>> op_pts;
        for (std::size_t i = 0; i < lim.profile.t.size(); ++i) {
            const double t = lim.profile.t[i];
            op_pts.emplace_back(t, ode.value_at_t(t));
            if (std::abs(t - ode.kink_t) <= 0.05) continue;
            worst = std::max(worst, std::abs(lim.profile.w[i] - ode.value_at_t(t)));
        }
        limit["ode"] = {{"kink_radius", ode.kink_radius()}, {"sup_difference", worst}, {"dw_left", ode.dw_left}, {"dw_right", ode.dw_right}};
        ok = ok && worst <= 0.01;
        rep.files.push_back(detail::plot(ctx.meta, "path_ode_profile.dat", "t = ln r against w from the shooting oracle", "t", "w", op_pts));
    }
    if (lim.singular_regime && s.flag("doubling")) {
        RadialProblem twice = prob;
        twice.boundary_value = 2.0 * prob.boundary_value;
        const RadialLimit l2 = extract_limit(solve_tau_path(twice, taus, tol));
        const double move = std::abs(l2.kink_radius() - lim.kink_radius()) / lim.kink_radius();
        limit["doubling"] = {{"boundary_value", twice.boundary_value}, {"kink_radius", l2.kink_radius()}, {"relative_move", move}};
        ok = ok && move < 0.005;
    }
    const std::vector<double> mh = s.list("mask_h");
    if (lim.singular_regime && !mh.empty()) {
        json masks = json::array();
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < mh.size(); ++i) {
            if (!(mh[i] > 0.0)) throw config_error("path.mask_h: spacings must be positive");
            const SliceMask m = singular_slice(lim, mh[i]);
            masks.push_back({{"h", mh[i]}, {"flagged", m.mask.count()}, {"evaluated", m.mask.evaluated_count()},
                             {"fraction", m.flagged_fraction}, {"max_offset_cells", m.max_offset}});
            ok = ok && m.mask.count() > 0 && m.max_offset <= 2.0 && m.flagged_fraction < prev;
            prev = m.flagged_fraction;
            if (i + 1 == mh.size()) {
                std::ostringstream os;
                write_mask_csv(os, m.mask, m.chart.grid);
                rep.files.push_back(Artifact{"path_mask.csv", "csv", "singular mask on the x2 = 0 slice at the finest spacing",
                                             {"node", "x0", "x1", "flag", "beta"}, detail::meta_header(ctx.meta) + os.str()});
            }
        }
        limit["mask"] = masks;
    }
    rep.summary["limit"] = limit;
    rep.pass = ok;
    return rep;
}

// ---------------------------------------------------------------- oracle

inline const std::vector<KeySpec>& oracle_keys()
{
    static const std::vector<KeySpec> k{
        {"kind", KeyKind::text, "annulus", "annulus, hyperbolic_halfspace, hyperbolic_ball or sphere_factor"},
        {"n", KeyKind::integer, "3", "dimension"},
        {"k", KeyKind::integer, "3", "cone index"},
        {"a", KeyKind::number, "1", "inner radius"},
        {"b", KeyKind::number, "4", "outer radius"},
        {"R", KeyKind::number, "1", "right-hand side level"},
        {"boundary_value", KeyKind::number, "8", "annulus Dirichlet value"},
        {"step", KeyKind::number, "1e-4", "RK4 step in t"},
        {"symmetrize", KeyKind::flag, "false", "glue at ln sqrt(ab) exactly"},
        {"samples", KeyKind::integer, "101", "points along the sampling segment of exact solutions"},
    };
    return k;
}

inline Report run_oracle(const Settings& s, const RunContext& ctx)
{
    const std::string kind = s.text("kind");
    const int n = s.integer("n"), k = s.integer("k"), samples = s.integer("samples");
    const double R = s.num("R");
    Report rep;
    if (kind == "annulus") {
        oracle::AnnulusOptions opt;
        opt.boundary_value = s.num("boundary_value");
        opt.step = s.num("step");
        opt.symmetrize = s.flag("symmetrize");
        const oracle::RadialProfile p = oracle::annulus_radial(n, k, s.num("a"), s.num("b"), R, opt);
        rep.summary["grid"] = {{"kind", "radial"}, {"t", {p.t.front(), p.t.back()}}, {"nodes", p.t.size()}, {"step", opt.step}};
        rep.summary["tolerances"] = {{"shooting", "toms748, 60 bits"}};
        rep.summary["kink_radius"] = p.kink_radius();
        rep.summary["kink_t"] = p.kink_t;
        rep.summary["dw_left"] = p.dw_left;
        rep.summary["dw_right"] = p.dw_right;
        if (opt.symmetrize) rep.summary["reflection_asymmetry"] = oracle::reflection_asymmetry(p);
        std::vector<std::vector<double>> rows;
        std::vector<std::pair<double, double>> pts;
        const std::size_t stride = std::max<std::size_t>(1, p.t.size() / 2000);
        for (std::size_t i = 0; i < p.t.size(); i += stride) {
            rows.push_back({p.t[i], std::exp(p.t[i]), p.w[i], p.dw[i], p.d2w[i]});
            pts.emplace_back(std::exp(p.t[i]), p.w[i]);
        }
        rep.files.push_back(detail::csv(ctx.meta, "oracle_annulus.csv", "annulus profile, every stride-th RK4 node",
                                        {"t", "r", "w", "dw_dt", "d2w_dt2"}, rows));
        rep.files.push_back(detail::plot(ctx.meta, "oracle_annulus.dat", "r against w of the annulus profile", "r", "w", pts));
        return rep;
    }
    oracle::Kind kd;
    if (kind == "hyperbolic_halfspace")
        kd = oracle::Kind::hyperbolic_halfspace;
    else if (kind == "hyperbolic_ball")
        kd = oracle::Kind::hyperbolic_ball;
    else if (kind == "sphere_factor")
        kd = oracle::Kind::sphere_factor;
    else
        throw config_error("oracle.kind: unknown kind '" + kind + "'");
    if (samples < 2) throw config_error("oracle.samples: need at least 2");
    const oracle::ExactSolution ex = oracle::make(kd, n, k, R);
    // Segment along the last axis inside the domain.
    const double lo = kd == oracle::Kind::hyperbolic_halfspace ? 0.5 : -0.5;
    const double hi = kd == oracle::Kind::hyperbolic_halfspace ? 2.0 : 0.5;
    std::vector<std::vector<double>> rows;
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < samples; ++i) {
        Vec x = Vec::Zero(n);
        x(n - 1) = lo + (hi - lo) * i / (samples - 1);
        const Vec g = ex.gradient(x);
        rows.push_back({x(n - 1), ex(x), g(n - 1), ex.hessian(x)(n - 1, n - 1)});
        pts.emplace_back(x(n - 1), ex(x));
    }
    rep.summary["grid"] = {{"segment_axis", n - 1}, {"range", {lo, hi}}, {"samples", samples}};
    rep.summary["tolerances"] = json::object();
    rep.summary["shift"] = ex.shift;
    rep.summary["eigenvalue"] = ex.eigenvalue();
    rep.files.push_back(detail::csv(ctx.meta, "oracle_" + kind + ".csv", "exact solution along the last axis",
                                    {"x_last", "w", "dw_last", "d2w_last"}, rows));
    rep.files.push_back(detail::plot(ctx.meta, "oracle_" + kind + ".dat", "last coordinate against w", "x_last", "w", pts));
    return rep;
}

// ---------------------------------------------------------------- driver

struct Command {
    std::string name;
    std::string help;
    const std::vector<KeySpec>& (*keys)();
    Report (*run)(const Settings&, const RunContext&);
};

inline const std::vector<Command>& commands()
{
    static const std::vector<Command> c{
        {"cone", "cone membership, dual-cone and Garding batches", cone_keys, run_cone},
        {"schouten", "Schouten fields and their convergence study", schouten_keys, run_schouten},
        {"verify", "viscosity verdicts, comparison and singular masks", verify_keys, run_verify},
        {"local", "contraction solver, scaling slopes and Savin report", local_keys, run_local},
        {"path", "tau-continuity experiments", path_keys, run_path},
        {"oracle", "exact solutions and annulus profiles", oracle_keys, run_oracle},
    };
    return c;
}

inline std::string flag_name(const std::string& key)
{
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

/// Writes all artifacts and the manifest under `out`.
inline void write_outputs(const std::filesystem::path& out, const std::string& name, const Report& rep, const json& meta)
{
    std::filesystem::create_directories(out / "plot");
    json summary = meta;
    for (const auto& [k, v] : rep.summary.items()) summary[k] = v;
    summary["pass"] = rep.pass;
    std::vector<Artifact> files = rep.files;
    files.insert(files.begin(), Artifact{name + ".json", "json", "summary", {}, summary.dump(2) + "\n"});
    json manifest = meta;
    manifest["files"] = json::array();
    for (const Artifact& a : files) {
        std::ofstream f(out / a.file, std::ios::binary);
        if (!f) throw config_error("cannot write " + (out / a.file).string());
        f << a.body;
        json e{{"file", a.file}, {"kind", a.kind}, {"description", a.description}};
        if (!a.columns.empty()) e["columns"] = a.columns;
        manifest["files"].push_back(e);
    }
    std::ofstream m(out / "manifest.json", std::ios::binary);
    m << manifest.dump(2) << "\n";
}

/// Full command line entry point. Returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Negative-cone sigma_k equations: cone algebra, curvature, verification and continuation experiments"};
    app.set_version_flag("--version", version);
    std::string config_path, out_dir = "sigk_out";
    std::uint64_t seed = 1;
    int jobs = 1;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "config file with [section] key = value lines");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "seed for stochastic sampling");
    app.add_option("--jobs", jobs, "worker threads for independent jobs")->check(CLI::PositiveNumber);
    app.add_option("--set", sets, "override section.key=value (repeatable)");
    app.require_subcommand(1);
    app.fallthrough();
    std::map<std::string, std::map<std::string, std::string>> overrides;
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    // Flag values are stored here; CLI11 writes into the strings.
    std::map<std::string, std::map<std::string, std::string>> flag_values;
    std::map<std::string, std::map<std::string, bool>> flag_bools;
    for (const Command& c : commands()) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->set_help_flag("--help", "print this help message and exit");  // frees -h for the spacing keys
        for (const KeySpec& k : c.keys()) {
            if (k.kind == KeyKind::flag) {
                flag_bools[c.name][k.name] = false;
                sub->add_flag(flag_name(k.name), flag_bools[c.name][k.name], k.help + " (default " + k.fallback + ")");
            } else {
                flag_values[c.name][k.name];
                sub->add_option(flag_name(k.name), flag_values[c.name][k.name], k.help + " (default " + k.fallback + ")");
            }
        }
        subs.emplace_back(sub, &c);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : bad_config;
    }
    const Command* cmd = nullptr;
    CLI::App* chosen = nullptr;
    for (auto& [sub, c] : subs)
        if (sub->parsed()) {
            cmd = c;
            chosen = sub;
        }
    json meta;
    try {
        Config cfg = config_path.empty() ? Config{} : Config::parse_file(config_path);
        if (const auto g = cfg.raw("global", "seed"); g && app.count("--seed") == 0) seed = std::stoull(*g);
        if (const auto g = cfg.raw("global", "jobs"); g && app.count("--jobs") == 0) jobs = std::stoi(*g);
        for (const auto& [section, keys] : cfg.values()) {
            if (section == "global") {
                for (const auto& [key, v] : keys)
                    if (key != "seed" && key != "jobs") throw config_error("unknown key '" + key + "' in [global]");
                continue;
            }
            const bool known = std::any_of(commands().begin(), commands().end(), [&](const Command& c) { return c.name == section; });
            if (!known) throw config_error("unknown section [" + section + "]");
        }
        for (const std::string& s : sets) {
            const auto dot = s.find('.'), eq = s.find('=');
            if (dot == std::string::npos || eq == std::string::npos || eq < dot)
                throw config_error("--set expects section.key=value, got '" + s + "'");
            cfg.set(s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
        }
        for (const KeySpec& k : cmd->keys()) {
            const std::string f = flag_name(k.name);
            if (chosen->count(f) == 0) continue;
            cfg.set(cmd->name, k.name, k.kind == KeyKind::flag ? "true" : flag_values[cmd->name][k.name]);
        }
        const Settings settings(cmd->name, cmd->keys(), cfg);
        if (jobs < 1) throw config_error("jobs must be >= 1");
        meta = {{"version", version},
                {"command", cmd->name},
                {"seed", seed},
                {"config", {{"file_text", cfg.text()}, {"resolved", settings.to_json()}}}};
        RunContext ctx{seed, jobs, meta};
        const Report rep = cmd->run(settings, ctx);
        write_outputs(out_dir, cmd->name, rep, meta);
        out << (rep.pass ? "pass" : "fail") << ' ' << cmd->name << ' ' << (std::filesystem::path(out_dir) / (cmd->name + ".json")).string()
            << '\n';
        return ok;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << '\n';
        return bad_config;
    } catch (const domain_error& e) {
        err << "invalid input: " << e.what() << '\n';
        return bad_config;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return bad_config;
    } catch (const std::out_of_range& e) {
        err << "config error: " << e.what() << '\n';
        return bad_config;
    } catch (const std::exception& e) {
        json diag = meta;
        diag["error"] = e.what();
        if (const auto* p = dynamic_cast<const path_error*>(&e)) diag["last_good_tau"] = p->last_good;
        if (const auto* c = dynamic_cast<const cone_exit_error*>(&e)) diag["node"] = c->node;
        if (dynamic_cast<const path_error*>(&e)) diag["kind"] = "path_error";
        else if (dynamic_cast<const cone_exit_error*>(&e)) diag["kind"] = "cone_exit_error";
        else if (dynamic_cast<const non_contraction_error*>(&e)) diag["kind"] = "non_contraction_error";
        else if (dynamic_cast<const solver_error*>(&e)) diag["kind"] = "solver_error";
        else if (dynamic_cast<const oracle_error*>(&e)) diag["kind"] = "oracle_error";
        else diag["kind"] = "runtime_error";
        try {
            std::filesystem::create_directories(out_dir);
            std::ofstream f(std::filesystem::path(out_dir) / "error.json", std::ios::binary);
            f << diag.dump(2) << '\n';
        } catch (const std::exception&) {
        }
        out << diag.dump() << '\n';
        err << "numerical failure: " << e.what() << '\n';
        return numeric_failure;
    }
}

} // namespace sigk::cli
