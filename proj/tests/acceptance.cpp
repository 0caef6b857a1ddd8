// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance [--known-failure N]...
//
// A criterion listed as a known failure still prints FAIL but does not set the
// exit status. Every other failure does.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "qfb/bayes.hpp"
#include "qfb/markov.hpp"
#include "qfb/sweep.hpp"
#include "qfb/trajectory.hpp"

using namespace qfb;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty())
                detail += "; ";
            detail += "violated: " + what;
        }
    }
    void note(const std::string& s) {
        if (!detail.empty())
            detail += "; ";
        detail += s;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string fmt_se(double mc, double se, double ref) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.5f+-%.5f vs %.5f (%.2f SE)", mc, se, ref,
                  se > 0 ? std::abs(mc - ref) / se : 0.0);
    return buf;
}

bool within_se(double mc, double se, double ref) {
    return std::abs(mc - ref) <= 3.0 * se;
}

const std::vector<double> kEta{0.2, 0.5, 0.8, 0.95, 1.0};
const std::vector<double> kGamma{0.0, 0.05, 0.5};

std::vector<double> sixteen_angles() {
    std::vector<double> g;
    for (int k = -7; k <= 8; ++k)
        g.push_back(k * pi / 8);
    return g;
}

std::vector<double> eleven_angles() {
    std::vector<double> g;
    for (int k = 0; k <= 10; ++k)
        g.push_back(k * pi / 10);
    return g;
}

SimConfig sim(std::size_t n, std::uint64_t seed, double t_final = 20.0) {
    SimConfig c;
    c.n_traj = n;
    c.t_final = t_final;
    c.master_seed = seed;
    return c;
}

Outcome excited_state_coincidence() {
    Outcome o;
    double worst = 0.0;
    for (double eta : {0.5, 0.8, 1.0}) {
        const auto m = sweep::cmd_markov_optimal(0.0, eta, 0.0);
        const auto b = sweep::cmd_bayes_rss(0.0, eta, 0.0);
        const double target = eta / (2.0 - eta);
        const double rm = std::get<double>(m.rows[0][5]);
        const double rb = std::get<double>(b.rows[0][3]);
        worst = std::max({worst, std::abs(rm - target), std::abs(rb - target)});
    }
    o.require(worst < 1e-8, "deviation < 1e-8");
    o.note("max deviation " + fmt("%.2e", worst));
    return o;
}

Outcome quadratic_and_argmax() {
    Outcome o;
    double worst_res = 0.0, worst_arg = 0.0;
    constexpr int n = 200000;
    for (double g : kGamma)
        for (double eta : kEta)
            for (double th : eleven_angles()) {
                const auto og = optimal_gain(th, eta, g);
                worst_res = std::max(worst_res, std::abs(markov_quadratic(th, eta, g)(og.r0)));
                double best = -INFINITY;
                for (int i = 0; i <= n; ++i) {
                    const double l = -3.0 + 4.0 * i / n;
                    try {
                        best = std::max(best, rss_of_lambda(l, th, eta, g));
                    } catch (const std::domain_error&) {
                    }
                }
                worst_arg = std::max(worst_arg, std::abs(best - og.r0));
            }
    o.require(worst_res < 1e-12, "residual < 1e-12");
    o.require(worst_arg < 1e-6, "argmax agreement < 1e-6");
    o.note("165 points, max residual " + fmt("%.2e", worst_res) + ", max argmax gap " +
           fmt("%.2e", worst_arg));
    return o;
}

Outcome perfect_conditions_check() {
    Outcome o;
    auto angles = sixteen_angles();
    angles.push_back(-pi / 2);
    double worst_b = 0.0, worst_m = 0.0;
    for (double th : angles) {
        worst_b = std::max(worst_b, std::abs(stationary_mean_rss(th, 1.0, 0.0).r_ss - 1.0));
        const auto og = optimal_gain(th, 1.0, 0.0);
        if (is_equatorial(th)) {
            o.require(og.r0 == 0.0 && og.equatorial_unstabilizable, "Markovian r0 = 0 at +-pi/2");
        } else {
            worst_m = std::max(worst_m, std::abs(og.r0 - 1.0));
        }
    }
    o.require(worst_b < 1e-12, "Bayesian r = 1");
    o.require(worst_m < 1e-12, "Markovian r = 1 off the equator");
    // the approach to zero is continuous once efficiency is imperfect
    const double near = optimal_gain(pi / 2 - 1e-6, 0.999, 0.0).r0;
    o.require(near < 1e-3, "r0 -> 0 approaching the equator at eta = 0.999");
    o.note("Bayes max |r-1| " + fmt("%.1e", worst_b) + ", Markov max |r0-1| " + fmt("%.1e", worst_m) +
           ", r0 = 0 at +-pi/2");
    return o;
}

Outcome dominance() {
    Outcome o;
    auto angles = sixteen_angles();
    for (double th : eleven_angles())
        angles.push_back(th);
    double worst = INFINITY;
    std::size_t count = 0;
    for (double th : angles)
        for (double eta : kEta)
            for (double g : kGamma) {
                const double gap = stationary_mean_rss(th, eta, g).r_ss - optimal_gain(th, eta, g).r0;
                worst = std::min(worst, gap);
                ++count;
            }
    o.require(worst >= -1e-6, "r_bayes >= r_markov - 1e-6");
    const double eq = stationary_mean_rss(pi / 2, 0.8, 0.0).r_ss - optimal_gain(pi / 2, 0.8, 0.0).r0;
    o.require(eq > 1e-3, "strict gain at the equator");
    o.note(std::to_string(count) + " points, min gap " + fmt("%.2e", worst) + ", equatorial gain " +
           fmt("%.5f", eq));
    return o;
}

Outcome near_perfect() {
    Outcome o;
    const double gap = std::abs(stationary_mean_rss(pi / 4, 0.999, 0.0).r_ss - optimal_gain(pi / 4, 0.999, 0.0).r0);
    o.require(gap < 1e-3, "gap < 1e-3");
    o.note("gap " + fmt("%.3e", gap));
    return o;
}

Outcome sde_fpe() {
    Outcome o;
    struct Pt {
        double th, eta, g;
    };
    for (const Pt& p : {Pt{pi / 4, 0.8, 0.0}, Pt{pi / 2, 1.0, 1.0}}) {
        const auto st = simulate_ensemble(sim(10000, 601), {0.0, p.g, p.eta}, Controller::projection(p.th));
        const double an = stationary_mean_rss(p.th, p.eta, p.g).r_ss;
        o.require(within_se(st.r_mean, st.r_se, an), "3 SE at theta0=" + fmt("%.4f", p.th));
        o.note(fmt_se(st.r_mean, st.r_se, an));
    }
    return o;
}

Outcome markov_ensemble() {
    Outcome o;
    const auto g = optimal_gain(pi / 4, 0.8, 0.0);
    const auto an = stationary_with_feedback(*g.alpha, g.lambda, 0.8, 0.0);
    const auto st = simulate_ensemble(sim(5000, 701), {*g.alpha, 0.0, 0.8}, Controller::markovian(g.lambda));
    o.require(within_se(st.x_mean, st.x_se, an.bloch.x), "x within 3 SE");
    o.require(within_se(st.z_mean, st.z_se, an.bloch.z), "z within 3 SE");
    o.note("x " + fmt_se(st.x_mean, st.x_se, an.bloch.x) + ", z " + fmt_se(st.z_mean, st.z_se, an.bloch.z));
    return o;
}

Outcome unconditioned() {
    Outcome o;
    const auto st = simulate_ensemble(sim(10000, 801), {0.5, 0.0, 1.0}, Controller::none());
    o.require(within_se(st.x_mean, st.x_se, -2.0 / 3.0), "x within 3 SE");
    o.require(within_se(st.z_mean, st.z_se, -1.0 / 3.0), "z within 3 SE");
    o.note("x " + fmt_se(st.x_mean, st.x_se, -2.0 / 3.0) + ", z " + fmt_se(st.z_mean, st.z_se, -1.0 / 3.0));

    SimConfig fine = sim(1, 802, 10.0);
    fine.dt = 1e-4;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 16; ++i) {
        const auto rec = simulate_trajectory(fine, {0.5, 0.0, 1.0}, Controller::none(), i);
        for (const auto& s : rec.states)
            worst = std::max(worst, std::abs(s.r - 1.0));
    }
    o.require(worst < 5e-3, "|r-1| < 5e-3 at dt = 1e-4");
    o.note("16 pure trajectories, max |r-1| " + fmt("%.2e", worst));
    return o;
}

Outcome delay_law() {
    Outcome o;
    const auto taus = sweep::linspace(0.01, 0.15, 15);
    const auto curve = sweep::cmd_delay(taus, sim(1000, 901));
    const double p05 = std::get<double>(curve.table.rows[4][1]);
    o.require(std::abs(curve.slope + 4.0) <= 0.5, "slope -4 +- 0.5");
    o.require(std::abs(p05 - 0.80) <= 0.05, "p(0.05) = 0.80 +- 0.05");
    o.note("slope " + fmt("%.4f", curve.slope) + ", p(0.05) " + fmt("%.4f", p05));
    return o;
}

Outcome equatorial_approximation() {
    Outcome o;
    const double approx = equatorial_approx_rss(1.0, 5.0).r;
    const double quad = stationary_mean_rss(pi / 2, 1.0, 5.0).r_ss;
    const double rel = std::abs(approx - quad) / quad;
    o.require(std::abs(approx - std::sqrt(1.0 / (5.0 * pi))) < 1e-15, "closed form");
    o.require(rel < 0.1, "within 10%");
    o.note("closed form " + fmt("%.6f", approx) + ", quadrature " + fmt("%.6f", quad) + ", rel " +
           fmt("%.4f", rel));
    return o;
}

Outcome mirror_symmetry() {
    Outcome o;
    double worst = 0.0;
    for (int k = 0; k <= 64; ++k) {
        const double th = k * pi / 64;
        if (is_equatorial(th))
            continue;
        worst = std::max(worst, std::abs(optimal_gain(th, 1.0, 0.05).r0 - optimal_gain(pi - th, 1.0, 0.05).r0));
    }
    o.require(worst < 1e-10, "Markovian symmetry < 1e-10");
    o.note("Markov max asymmetry " + fmt("%.1e", worst));

    const AtomParams p{0.0, 0.05, 1.0};
    const auto a = simulate_ensemble(sim(5000, 1101), p, Controller::projection(pi / 4));
    const auto b = simulate_ensemble(sim(5000, 1102), p, Controller::projection(3 * pi / 4));
    const double se = std::hypot(a.r_se, b.r_se);
    o.require(std::abs(a.r_mean - b.r_mean) <= 3.0 * se, "Bayesian MC symmetry within 3 SE");
    o.note("Bayes MC r(pi/4) " + fmt("%.5f", a.r_mean) + " vs r(3pi/4) " + fmt("%.5f", b.r_mean) +
           " (" + fmt("%.2f", std::abs(a.r_mean - b.r_mean) / se) + " SE)");
    return o;
}

Outcome reproducibility() {
    Outcome o;
    SimConfig c = sim(500, 1201);
    c.threads = 1;
    const auto first = sweep::render(sweep::cmd_crosscheck(sweep::default_crosscheck_grid(), c).table,
                                     sweep::Format::json);
    c.threads = 4;
    const auto second = sweep::render(sweep::cmd_crosscheck(sweep::default_crosscheck_grid(), c).table,
                                      sweep::Format::json);
    o.require(first == second, "byte-identical reports");
    o.note(std::to_string(first.size()) + " bytes, 1 vs 4 threads");
    return o;
}

} // namespace

int main(int argc, char** argv) {
    std::set<std::size_t> known;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--known-failure" && i + 1 < argc) {
            known.insert(std::strtoul(argv[++i], nullptr, 10));
        } else {
            std::fprintf(stderr, "usage: acceptance [--known-failure N]...\n");
            return 2;
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"excited-state coincidence", excited_state_coincidence},
        {"quadratic residual and argmax", quadratic_and_argmax},
        {"perfect conditions", perfect_conditions_check},
        {"Bayesian dominance", dominance},
        {"near-perfect convergence", near_perfect},
        {"projected SDE vs Fokker-Planck", sde_fpe},
        {"Markovian ensemble vs analytic", markov_ensemble},
        {"unconditioned consistency", unconditioned},
        {"delay law", delay_law},
        {"equatorial approximation", equatorial_approximation},
        {"mirror symmetry", mirror_symmetry},
        {"crosscheck reproducibility", reproducibility},
    };
    int failed = 0, blocking = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.note(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %2zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) {
            ++failed;
            if (known.count(i + 1))
                std::printf("     %2zu is a known failure\n", i + 1);
            else
                ++blocking;
        }
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return blocking == 0 ? 0 : 1;
}
