// qfb: sweeps, cross-checks and trajectory dumps for feedback-stabilized
// two-level atoms under homodyne detection.
//
// Exit status: 0 ok, 1 usage error, 2 numerical failure, 3 crosscheck failure.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qfb/sweep.hpp"

namespace {

using namespace qfb;
using namespace qfb::sweep;

enum Exit { ok = 0, usage = 1, numerical = 2, crosscheck_failed = 3 };

// Angles may be written as numbers or as multiples of pi: "pi/4", "-3pi/4", "0.5pi".
double parse_angle(std::string s) {
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); }),
            s.end());
    const auto p = s.find("pi");
    if (p == std::string::npos) {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size())
            throw std::invalid_argument("bad angle '" + s + "'");
        return v;
    }
    std::string coef = s.substr(0, p);
    std::string rest = s.substr(p + 2);
    if (!coef.empty() && coef.back() == '*')
        coef.pop_back();
    double k = 1.0;
    if (coef == "-")
        k = -1.0;
    else if (!coef.empty() && coef != "+")
        k = std::stod(coef);
    double den = 1.0;
    if (!rest.empty()) {
        if (rest[0] != '/')
            throw std::invalid_argument("bad angle '" + s + "'");
        den = std::stod(rest.substr(1));
    }
    return k * qfb::pi / den;
}

void add_angle(CLI::App* app, const std::string& name, double& target, const std::string& help) {
    app->add_option_function<std::string>(
           name, [&target](const std::string& v) { target = parse_angle(v); }, help)
        ->check([](const std::string& v) {
            try {
                parse_angle(v);
                return std::string();
            } catch (const std::exception&) {
                return "not an angle: " + v;
            }
        });
}

void add_output(CLI::App* app, RunSpec& spec, std::map<const CLI::App*, std::string>& formats,
                const std::string& def) {
    std::string& format = formats[app];
    format = def;
    app->add_option("--out,-o", spec.out, "output file (default: stdout)");
    app->add_option("--format,-f", format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
}

void add_sim(CLI::App* app, SimConfig& c) {
    app->add_option("--dt", c.dt, "time step")->capture_default_str();
    app->add_option("--tfinal", c.t_final, "simulated time per trajectory")->capture_default_str();
    app->add_option("--ntraj", c.n_traj, "trajectories per ensemble")->capture_default_str();
    app->add_option("--seed", c.master_seed, "master seed")->capture_default_str();
    app->add_option("--threads", c.threads, "worker threads (0: all cores); never changes output")
        ->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markovian and Bayesian feedback for a homodyne-monitored two-level atom"};
    app.require_subcommand(1);

    RunSpec spec;
    std::map<const CLI::App*, std::string> formats;
    double theta0 = pi / 4;
    double eta = 1.0;
    double gamma = 0.0;
    double locus_eta = 0.8;

    // locus
    auto* locus = app.add_subcommand("locus", "stationary loci of all strategies over theta0");
    locus->add_option("--eta", locus_eta, "detection efficiency")->capture_default_str();
    locus->add_option("--gamma", gamma, "dephasing rate")->capture_default_str();
    locus->add_option("--points", spec.n_points, "angles on the theta0 grid (>= 8)")
        ->capture_default_str();
    add_output(locus, spec, formats, "csv");

    // eta-sweep
    auto* sweep_cmd = app.add_subcommand("eta-sweep", "purity against detection efficiency");
    double eta_min = 0.1, eta_max = 1.0;
    std::size_t steps = 10;
    add_angle(sweep_cmd, "--theta0", theta0, "target angle (default pi/4)");
    sweep_cmd->add_option("--gamma", gamma, "dephasing rate")->capture_default_str();
    sweep_cmd->add_option("--eta-min", eta_min)->capture_default_str();
    sweep_cmd->add_option("--eta-max", eta_max)->capture_default_str();
    sweep_cmd->add_option("--steps", steps)->check(CLI::PositiveNumber)->capture_default_str();
    add_output(sweep_cmd, spec, formats, "csv");

    // crosscheck
    auto* cross = app.add_subcommand("crosscheck", "Monte-Carlo ensembles against analytic values");
    std::string grid = "default";
    cross->add_option("--grid", grid, "'default' or a file of kind,theta0,eta,gamma,param lines")
        ->capture_default_str();
    spec.sim.n_traj = 2000;
    spec.sim.master_seed = 1;
    add_sim(cross, spec.sim);
    add_output(cross, spec, formats, "json");

    // delay
    auto* delay = app.add_subcommand("delay", "ensemble purity against feedback delay");
    spec.tau = linspace(0.01, 0.15, 15);
    delay->add_option("--tau", spec.tau, "delays")->capture_default_str();
    add_sim(delay, spec.sim);
    add_output(delay, spec, formats, "csv");

    // bayes-rss
    auto* bayes = app.add_subcommand("bayes-rss", "stationary Bayesian purity by quadrature");
    add_angle(bayes, "--theta0", theta0, "target angle");
    bayes->add_option("--eta", eta, "detection efficiency")->capture_default_str();
    bayes->add_option("--gamma", gamma, "dephasing rate")->capture_default_str();
    add_output(bayes, spec, formats, "csv");

    // markov-optimal
    auto* markov = app.add_subcommand("markov-optimal", "optimal Markovian gain and purity");
    add_angle(markov, "--theta0", theta0, "target angle");
    markov->add_option("--eta", eta, "detection efficiency")->capture_default_str();
    markov->add_option("--gamma", gamma, "dephasing rate")->capture_default_str();
    add_output(markov, spec, formats, "csv");

    // trajectory
    auto* traj = app.add_subcommand("trajectory", "dump one conditioned trajectory");
    std::string controller = "none";
    double beta = 1e3, tau = 0.0;
    std::uint64_t index = 0;
    std::size_t stride = 10;
    traj->add_option("--controller", controller)
        ->check(CLI::IsMember({"none", "markov", "projection", "gain", "delayed"}))
        ->capture_default_str();
    add_angle(traj, "--theta0", theta0, "target angle (projection, gain)");
    traj->add_option("--eta", eta)->capture_default_str();
    traj->add_option("--gamma", gamma)->capture_default_str();
    traj->add_option("--alpha", spec.alpha_override, "driving (default: optimal for markov)");
    traj->add_option("--lambda", spec.lambda_override, "gain (default: optimal for markov)");
    traj->add_option("--beta", beta)->capture_default_str();
    traj->add_option("--tau", tau)->capture_default_str();
    traj->add_option("--index", index, "trajectory index within the seed")->capture_default_str();
    traj->add_option("--stride", stride, "record every n-th step")->capture_default_str();
    add_sim(traj, spec.sim);
    add_output(traj, spec, formats, "csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? Exit::ok : Exit::usage;
    }

    try {
        spec.format = parse_format(formats.at(app.get_subcommands().front()));
        Table table;
        int status = Exit::ok;

        if (*locus) {
            spec.subcommand = "locus";
            table = cmd_locus(locus_eta, gamma, spec.n_points);
        } else if (*sweep_cmd) {
            spec.subcommand = "eta-sweep";
            if (!(eta_min <= eta_max))
                throw std::invalid_argument("--eta-min must not exceed --eta-max");
            table = cmd_eta_sweep(theta0, gamma, linspace(eta_min, eta_max, steps));
        } else if (*cross) {
            spec.subcommand = "crosscheck";
            std::vector<CheckPoint> points;
            if (grid == "default") {
                points = default_crosscheck_grid();
            } else {
                std::ifstream in(grid);
                if (!in)
                    throw std::invalid_argument("cannot read grid file '" + grid + "'");
                points = parse_crosscheck_grid(in, grid);
            }
            auto rep = cmd_crosscheck(points, spec.sim);
            table = std::move(rep.table);
            table.meta.emplace(table.meta.begin() + 1, "grid", grid);
            if (rep.failures > 0) {
                std::cerr << "crosscheck: " << rep.failures << " of " << rep.entries.size()
                          << " comparisons failed\n";
                status = Exit::crosscheck_failed;
            }
        } else if (*delay) {
            spec.subcommand = "delay";
            auto curve = cmd_delay(spec.tau, spec.sim);
            table = std::move(curve.table);
            std::cerr << "delay: least-squares slope " << format_double(curve.slope) << '\n';
        } else if (*bayes) {
            spec.subcommand = "bayes-rss";
            table = cmd_bayes_rss(theta0, eta, gamma);
        } else if (*markov) {
            spec.subcommand = "markov-optimal";
            table = cmd_markov_optimal(theta0, eta, gamma);
        } else if (*traj) {
            spec.subcommand = "trajectory";
            Controller c = Controller::none();
            double a = spec.alpha_override.value_or(0.0);
            if (controller == "markov") {
                const auto g = optimal_gain(theta0, eta, gamma);
                const double l = spec.lambda_override.value_or(g.lambda);
                a = spec.alpha_override.value_or(g.alpha.value_or(0.0));
                c = Controller::markovian(l);
            } else if (controller == "projection") {
                c = Controller::projection(theta0);
            } else if (controller == "gain") {
                c = Controller::gain(beta, theta0);
            } else if (controller == "delayed") {
                c = Controller::delayed(spec.lambda_override.value_or(-1.0), tau);
            }
            const AtomParams p{a, gamma, eta};
            const auto rec = simulate_trajectory(spec.sim, p, c, index, stride);
            table.meta = {{"command", std::string("trajectory")}, {"controller", controller},
                          {"theta0", theta0}, {"eta", eta}, {"gamma", gamma}, {"alpha", a},
                          {"index", static_cast<std::int64_t>(index)}};
            put_sim_meta(table, spec.sim);
            table.columns = {"t", "r", "theta", "x", "z", "idt", "rotation"};
            for (std::size_t i = 0; i < rec.times.size(); ++i) {
                const auto& s = rec.states[i];
                table.add_row({rec.times[i], s.r, s.theta, s.r * std::sin(s.theta),
                               s.r * std::cos(s.theta), rec.current_integrals[i], rec.actions[i]});
            }
        }

        emit(table, spec.format, spec.out, std::cout);
        return status;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::usage;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::usage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return Exit::numerical;
    }
}
