#pragma once

// Parameter sweeps, analytic/Monte-Carlo cross-checks and their CSV / JSON
// serialization.  Everything here is deterministic given the RunSpec, so
// re-running a command reproduces its output byte for byte.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "qfb/bayes.hpp"
#include "qfb/bloch.hpp"
#include "qfb/markov.hpp"
#include "qfb/trajectory.hpp"

namespace qfb::sweep {

/// A computed quantity violated a property the command asserts.
struct numerical_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Format { csv, json };

inline Format parse_format(const std::string& s) {
    if (s == "csv")
        return Format::csv;
    if (s == "json")
        return Format::json;
    throw std::invalid_argument("unknown format '" + s + "' (expected csv or json)");
}

// ---------------------------------------------------------------- tables

using Cell = std::variant<std::monostate, std::string, double, std::int64_t, bool>;

inline Cell cell(std::optional<double> v) {
    return v ? Cell{*v} : Cell{};
}

struct Table {
    std::vector<std::pair<std::string, Cell>> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_row(std::vector<Cell> row) {
        if (row.size() != columns.size())
            throw std::logic_error("Table: row width does not match columns");
        rows.push_back(std::move(row));
    }
};

inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (v == 0.0)
        return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "";
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(v);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(v);
            } else if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else {
                if (v.find_first_of(",\"\r\n") == std::string::npos)
                    return v;
                std::string q = "\"";
                for (char ch : v) {
                    if (ch == '"')
                        q += '"';
                    q += ch;
                }
                return q + "\"";
            }
        },
        c);
}

inline void write_csv(std::ostream& os, const Table& t) {
    os << '#';
    for (const auto& [k, v] : t.meta) {
        std::string s = csv_field(v);
        for (char& ch : s)
            if (ch == '\n' || ch == '\r')
                ch = ' ';
        os << ' ' << k << '=' << s;
    }
    os << '\n';
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        os << (i ? "," : "") << t.columns[i];
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            os << (i ? "," : "") << csv_field(row[i]);
        os << '\n';
    }
}

inline nlohmann::ordered_json to_json(const Cell& c) {
    return std::visit(
        [](const auto& v) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>)
                return nullptr;
            else if constexpr (std::is_same_v<T, double>)
                return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
            else
                return v;
        },
        c);
}

inline nlohmann::ordered_json to_json(const Table& t) {
    nlohmann::ordered_json j;
    j["meta"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : t.meta)
        j["meta"][k] = to_json(v);
    j["points"] = nlohmann::ordered_json::array();
    for (const auto& row : t.rows) {
        nlohmann::ordered_json p = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i)
            p[t.columns[i]] = to_json(row[i]);
        j["points"].push_back(std::move(p));
    }
    return j;
}

inline void write_table(std::ostream& os, const Table& t, Format f) {
    if (f == Format::csv)
        write_csv(os, t);
    else
        os << to_json(t).dump(2) << '\n';
}

inline std::string render(const Table& t, Format f) {
    std::ostringstream os;
    write_table(os, t, f);
    return os.str();
}

/// Write to path, or to `fallback` when path is empty.
inline void emit(const Table& t, Format f, const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
        write_table(fallback, t, f);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    write_table(out, t, f);
    out.flush();
    if (!out)
        throw std::runtime_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- run spec

struct RunSpec {
    std::string subcommand;
    std::vector<double> theta0{0.0};
    std::vector<double> eta{1.0};
    std::vector<double> gamma{0.0};
    std::optional<double> lambda_override;
    std::optional<double> alpha_override;
    std::vector<double> tau;
    std::size_t n_points = 64;
    SimConfig sim;
    Format format = Format::csv;
    std::string out;

    void validate() const {
        if (theta0.empty() || eta.empty() || gamma.empty())
            throw std::invalid_argument("parameter grids must be non-empty");
        for (double e : eta)
            if (!(e >= 0.0 && e <= 1.0))
                throw std::invalid_argument("eta must lie in [0, 1]");
        for (double g : gamma)
            if (!(g >= 0.0))
                throw std::invalid_argument("gamma must be >= 0");
    }
};

inline void put_sim_meta(Table& t, const SimConfig& c) {
    t.meta.emplace_back("dt", c.dt);
    t.meta.emplace_back("t_final", c.t_final);
    t.meta.emplace_back("n_traj", static_cast<std::int64_t>(c.n_traj));
    t.meta.emplace_back("window_start", c.window_begin());
    t.meta.emplace_back("r_floor", c.r_floor);
    t.meta.emplace_back("master_seed", std::to_string(c.master_seed));
}

/// n uniformly spaced angles on [-pi, pi).
inline std::vector<double> theta_grid(std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k)
        g[k] = -pi + 2.0 * pi * static_cast<double>(k) / static_cast<double>(n);
    return g;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    if (n == 1)
        return {a};
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    v.back() = b;
    return v;
}

// ---------------------------------------------------------------- locus

/// Stationary radii of the three strategies aimed at one angle.
struct CurvePoint {
    double theta0 = 0.0;
    std::optional<double> r_markov;
    std::optional<double> r_bayes;
    std::optional<double> r_nofeedback;  ///< only where the undriven locus reaches theta0
    std::optional<double> alpha_nofeedback;

    static std::optional<BlochVector> on_ray(std::optional<double> r, double theta) {
        if (!r)
            return std::nullopt;
        return BlochVector{*r * std::sin(theta), 0.0, *r * std::cos(theta)};
    }
};

inline CurvePoint curve_point(double theta0, double eta, double gamma, const QuadratureSpec& q = {}) {
    CurvePoint p;
    p.theta0 = theta0;
    if (eta > 0.0) {
        const auto g = optimal_gain(theta0, eta, gamma);
        if (!g.equatorial_unstabilizable)
            p.r_markov = g.r0;
    }
    p.r_bayes = stationary_mean_rss(theta0, eta, gamma, q).r_ss;
    // Undriven states all lie in the lower hemisphere, with tan(theta) = 4 alpha / (1 + 2 Gamma).
    const double cs = std::cos(theta0);
    if (cs < -equator_tolerance) {
        const double alpha = 0.25 * (1.0 + 2.0 * gamma) * std::tan(theta0);
        const BlochVector b = stationary_no_feedback(alpha, gamma);
        p.r_nofeedback = std::hypot(b.x, b.z);
        p.alpha_nofeedback = alpha;
    }
    return p;
}

inline Table cmd_locus(double eta, double gamma, std::size_t n_points) {
    if (n_points < 8)
        throw std::invalid_argument("locus: need at least 8 points");
    if (!(eta >= 0.0 && eta <= 1.0) || !(gamma >= 0.0))
        throw std::invalid_argument("locus: eta must lie in [0, 1] and gamma >= 0");
    Table t;
    t.meta = {{"command", std::string("locus")}, {"eta", eta}, {"gamma", gamma},
              {"points", static_cast<std::int64_t>(n_points)}};
    t.columns = {"strategy", "theta", "r", "x", "z"};

    const auto grid = theta_grid(n_points);
    std::vector<CurvePoint> pts;
    pts.reserve(grid.size());
    for (double th : grid)
        pts.push_back(curve_point(th, eta, gamma));

    auto add = [&](const char* name, double th, std::optional<double> r) {
        if (!r)
            return;
        const auto b = *CurvePoint::on_ray(r, th);
        t.add_row({std::string(name), th, *r, b.x, b.z});
    };
    for (const auto& p : pts)
        add("none", p.theta0, p.r_nofeedback);
    for (const auto& p : pts)
        add("markov", p.theta0, p.r_markov);
    for (const auto& p : pts)
        add("bayes", p.theta0, p.r_bayes);
    for (double th : grid)
        add("reference", th, 1.0);
    return t;
}

// ---------------------------------------------------------------- eta sweep

inline Table cmd_eta_sweep(double theta0, double gamma, const std::vector<double>& eta_grid) {
    if (eta_grid.empty())
        throw std::invalid_argument("eta-sweep: empty eta grid");
    for (double e : eta_grid)
        if (!(e > 0.0 && e <= 1.0))
            throw std::invalid_argument("eta-sweep: eta values must lie in (0, 1]");
    if (!(gamma >= 0.0))
        throw std::invalid_argument("eta-sweep: gamma must be >= 0");

    Table t;
    t.meta = {{"command", std::string("eta-sweep")}, {"theta0", theta0}, {"gamma", gamma},
              {"eta_min", eta_grid.front()}, {"eta_max", eta_grid.back()},
              {"steps", static_cast<std::int64_t>(eta_grid.size())}};
    t.columns = {"eta", "r_markov", "r_bayes"};

    constexpr double mono_tol = 1e-9;
    constexpr double dominance_tol = 1e-6;
    double prev_eta = -1.0, prev_m = -1.0, prev_b = -1.0;
    for (double eta : eta_grid) {
        const double rm = optimal_gain(theta0, eta, gamma).r0;
        const double rb = stationary_mean_rss(theta0, eta, gamma).r_ss;
        if (rb < rm - dominance_tol)
            throw numerical_failure("eta-sweep: Bayesian radius below Markovian at eta=" +
                                    format_double(eta));
        if (eta >= prev_eta && (rm < prev_m - mono_tol || rb < prev_b - mono_tol))
            throw numerical_failure("eta-sweep: radius decreases with eta at eta=" +
                                    format_double(eta));
        prev_eta = eta;
        prev_m = rm;
        prev_b = rb;
        t.add_row({eta, rm, rb});
    }
    return t;
}

// ---------------------------------------------------------------- single points

inline Table cmd_bayes_rss(double theta0, double eta, double gamma) {
    const auto r = stationary_mean_rss(theta0, eta, gamma);
    Table t;
    t.meta = {{"command", std::string("bayes-rss")}};
    t.columns = {"theta0", "eta", "gamma", "r_ss", "err_estimate", "case"};
    t.add_row({theta0, eta, gamma, r.r_ss, r.err_estimate, std::string(to_string(r.special_case))});
    return t;
}

inline Table cmd_markov_optimal(double theta0, double eta, double gamma) {
    const auto g = optimal_gain(theta0, eta, gamma);
    Table t;
    t.meta = {{"command", std::string("markov-optimal")}};
    t.columns = {"theta0", "eta", "gamma", "lambda", "alpha", "r0", "equatorial_unstabilizable"};
    t.add_row({theta0, eta, gamma, g.lambda, cell(g.alpha), g.r0, g.equatorial_unstabilizable});
    return t;
}

// ---------------------------------------------------------------- delay

struct DelayCurve {
    Table table;
    double slope = 0.0;  ///< least-squares slope of p against tau
};

inline DelayCurve cmd_delay(const std::vector<double>& taus, const SimConfig& cfg) {
    if (taus.empty())
        throw std::invalid_argument("delay: empty tau grid");
    DelayCurve out;
    Table& t = out.table;
    t.meta = {{"command", std::string("delay")}, {"eta", 1.0}, {"gamma", 0.0}};
    put_sim_meta(t, cfg);
    t.columns = {"tau", "p_simulated", "p_linear", "abs_error", "p_se"};

    double st = 0, sp = 0, stt = 0, stp = 0;
    for (double tau : taus) {
        const auto d = delayed_feedback_purity(tau, cfg);
        t.add_row({tau, d.p, d.p_linear, std::abs(d.p - d.p_linear), d.p_se});
        st += tau;
        sp += d.p;
        stt += tau * tau;
        stp += tau * d.p;
    }
    const double n = static_cast<double>(taus.size());
    const double den = n * stt - st * st;
    out.slope = den > 0 ? (n * stp - st * sp) / den : 0.0;
    return out;
}

// ---------------------------------------------------------------- crosscheck

struct CheckPoint {
    std::string kind;  ///< none | markov | bayes | gain | delay | equatorial
    double theta0 = 0.0;
    double eta = 1.0;
    double gamma = 0.0;
    double param = 0.0;  ///< alpha (none), beta (gain), tau (delay); unused otherwise
};

inline constexpr std::size_t max_crosscheck_points = 12;

inline std::vector<CheckPoint> default_crosscheck_grid() {
    return {
        {"none", 0.0, 1.0, 0.0, 0.5},
        {"none", 0.0, 1.0, 0.0, 0.0},
        {"markov", pi / 4, 0.8, 0.0, 0.0},
        {"bayes", pi / 4, 0.8, 0.0, 0.0},
        {"bayes", pi / 2, 1.0, 1.0, 0.0},
        {"bayes", 3 * pi / 4, 1.0, 0.05, 0.0},
        {"delay", 0.0, 1.0, 0.0, 0.05},
        {"equatorial", pi / 2, 1.0, 5.0, 0.0},
    };
}

/// Grid file: one `kind,theta0,eta,gamma,param` line per point; '#' starts a comment.
inline std::vector<CheckPoint> parse_crosscheck_grid(std::istream& in, const std::string& where) {
    std::vector<CheckPoint> pts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos)
            line.erase(h);
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        std::vector<std::string> f;
        for (std::string tok; std::getline(ls, tok, ',');) {
            const auto b = tok.find_first_not_of(" \t\r");
            const auto e = tok.find_last_not_of(" \t\r");
            f.push_back(b == std::string::npos ? "" : tok.substr(b, e - b + 1));
        }
        const std::string ctx = where + ":" + std::to_string(lineno);
        if (f.size() != 5)
            throw std::invalid_argument(ctx + ": expected kind,theta0,eta,gamma,param");
        CheckPoint p;
        p.kind = f[0];
        if (p.kind != "none" && p.kind != "markov" && p.kind != "bayes" && p.kind != "gain" &&
            p.kind != "delay" && p.kind != "equatorial")
            throw std::invalid_argument(ctx + ": unknown kind '" + p.kind + "'");
        try {
            p.theta0 = std::stod(f[1]);
            p.eta = std::stod(f[2]);
            p.gamma = std::stod(f[3]);
            p.param = std::stod(f[4]);
        } catch (const std::exception&) {
            throw std::invalid_argument(ctx + ": malformed number");
        }
        pts.push_back(p);
    }
    if (pts.empty())
        throw std::invalid_argument(where + ": no grid points");
    if (pts.size() > max_crosscheck_points)
        throw std::invalid_argument(where + ": at most " + std::to_string(max_crosscheck_points) +
                                    " grid points");
    return pts;
}

struct CheckEntry {
    std::size_t index = 0;
    CheckPoint point;
    std::string observable;
    std::optional<double> analytic;
    std::optional<double> mc;
    std::optional<double> se;
    std::optional<double> quadrature;
    std::optional<double> tolerance;
    bool pass = false;
    std::string error;
};

namespace detail {

inline CheckEntry entry(std::size_t i, const CheckPoint& p, std::string obs) {
    CheckEntry e;
    e.index = i;
    e.point = p;
    e.observable = std::move(obs);
    return e;
}

inline CheckEntry se_entry(std::size_t i, const CheckPoint& p, std::string obs, double analytic,
                           double mc, double se) {
    CheckEntry e = entry(i, p, std::move(obs));
    e.analytic = analytic;
    e.mc = mc;
    e.se = se;
    // Deterministic observables (se = 0) must still agree to round-off.
    e.tolerance = std::max(3.0 * se, 1e-6);
    e.pass = std::abs(mc - analytic) <= *e.tolerance;
    return e;
}

inline std::vector<CheckEntry> evaluate(std::size_t i, const CheckPoint& p, const SimConfig& base) {
    SimConfig cfg = base;
    if (p.kind == "none") {
        const auto st = simulate_ensemble(cfg, {p.param, p.gamma, p.eta}, Controller::none());
        const auto b = stationary_no_feedback(p.param, p.gamma);
        return {se_entry(i, p, "x", b.x, st.x_mean, st.x_se),
                se_entry(i, p, "z", b.z, st.z_mean, st.z_se)};
    }
    if (p.kind == "markov") {
        const auto g = optimal_gain(p.theta0, p.eta, p.gamma);
        if (!g.alpha)
            throw std::domain_error("Markovian feedback cannot target the equator");
        const auto an = stationary_with_feedback(*g.alpha, g.lambda, p.eta, p.gamma);
        const auto st = simulate_ensemble(cfg, {*g.alpha, p.gamma, p.eta},
                                          Controller::markovian(g.lambda));
        return {se_entry(i, p, "x", an.bloch.x, st.x_mean, st.x_se),
                se_entry(i, p, "z", an.bloch.z, st.z_mean, st.z_se)};
    }
    if (p.kind == "bayes" || p.kind == "gain") {
        const double an = stationary_mean_rss(p.theta0, p.eta, p.gamma).r_ss;
        const Controller c = p.kind == "bayes" ? Controller::projection(p.theta0)
                                               : Controller::gain(p.param, p.theta0);
        const auto st = simulate_ensemble(cfg, {0.0, p.gamma, p.eta}, c);
        return {se_entry(i, p, "r", an, st.r_mean, st.r_se)};
    }
    if (p.kind == "delay") {
        const auto d = delayed_feedback_purity(p.param, cfg, p.eta, p.gamma);
        CheckEntry e = entry(i, p, "p");
        e.analytic = d.p_linear;
        e.mc = d.p;
        e.se = d.p_se;
        e.tolerance = 0.05;
        e.pass = std::abs(d.p - d.p_linear) <= *e.tolerance;
        return {e};
    }
    if (p.kind == "equatorial") {
        const auto approx = equatorial_approx_rss(p.eta, p.gamma);
        const double quad = stationary_mean_rss(pi / 2, p.eta, p.gamma).r_ss;
        CheckEntry e = entry(i, p, "r");
        e.analytic = approx.r;
        e.quadrature = quad;
        e.tolerance = 0.1 * quad;
        e.pass = std::abs(approx.r - quad) <= *e.tolerance;
        return {e};
    }
    throw std::invalid_argument("unknown crosscheck kind '" + p.kind + "'");
}

} // namespace detail

struct CrosscheckReport {
    Table table;
    std::vector<CheckEntry> entries;
    std::size_t failures = 0;
};

/// Each point is compared at 3 SE (delay: the +-0.05 band of the linear law;
/// equatorial: closed form within 10% of quadrature).  A point that throws
/// is recorded as a failure and the run continues.
inline CrosscheckReport cmd_crosscheck(const std::vector<CheckPoint>& grid, const SimConfig& cfg) {
    if (grid.empty() || grid.size() > max_crosscheck_points)
        throw std::invalid_argument("crosscheck: grid must have 1 to 12 points");
    cfg.validate();
    CrosscheckReport rep;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        try {
            for (auto& e : detail::evaluate(i, grid[i], cfg))
                rep.entries.push_back(std::move(e));
        } catch (const std::exception& ex) {
            CheckEntry e = detail::entry(i, grid[i], "");
            e.error = ex.what();
            rep.entries.push_back(std::move(e));
        }
    }

    Table& t = rep.table;
    t.meta = {{"command", std::string("crosscheck")},
              {"grid_points", static_cast<std::int64_t>(grid.size())}};
    put_sim_meta(t, cfg);
    t.columns = {"index", "kind", "theta0", "eta", "gamma", "param", "observable", "analytic",
                 "mc", "se", "quadrature", "tolerance", "pass", "error"};
    for (const auto& e : rep.entries) {
        if (!e.pass)
            ++rep.failures;
        t.add_row({static_cast<std::int64_t>(e.index), e.point.kind, e.point.theta0, e.point.eta,
                   e.point.gamma, e.point.param, e.observable, cell(e.analytic), cell(e.mc),
                   cell(e.se), cell(e.quadrature), cell(e.tolerance), e.pass,
                   e.error.empty() ? Cell{} : Cell{e.error}});
    }
    t.meta.emplace_back("failures", static_cast<std::int64_t>(rep.failures));
    return rep;
}

} // namespace qfb::sweep
