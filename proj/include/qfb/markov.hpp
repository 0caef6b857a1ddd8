#pragma once

// Closed-form analytics for Markovian feedback, where the homodyne current is
// fed back immediately as a modulation of the driving:
//     H_fb = I(t) * lambda * sigma_y / sqrt(eta).

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "qfb/bloch.hpp"

namespace qfb {

/// |cos(theta0)| below this is treated as an equatorial target.
inline constexpr double equator_tolerance = 1e-12;

inline bool is_equatorial(double theta0) {
    return std::abs(std::cos(theta0)) < equator_tolerance;
}

struct MarkovDesign {
    double lambda = 0.0;
    double alpha = 0.0;
    double theta0 = 0.0;
};

struct MarkovStationary {
    BlochVector bloch;
    double r_ss = 0.0;
    double denominator_D = 0.0;
};

namespace detail {
inline void require_efficiency(double eta, const char* who) {
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::domain_error(std::string(who) + ": eta must lie in (0, 1]");
}
} // namespace detail

/// Stationary Bloch vector of the feedback master equation.
inline MarkovStationary stationary_with_feedback(double alpha, double lambda, double eta,
                                                 double gamma_deph) {
    detail::require_efficiency(eta, "stationary_with_feedback");
    const double l2 = lambda * lambda / eta;
    const double transverse = 1.0 + 4.0 * lambda + 2.0 * gamma_deph + 4.0 * l2;
    const double longitudinal = 1.0 + 2.0 * lambda + 2.0 * l2;
    const double D = 8.0 * alpha * alpha + transverse * longitudinal;
    if (!(D > 0.0))
        throw std::domain_error("stationary_with_feedback: D <= 0, the linear Bloch system is unstable");
    MarkovStationary s;
    s.denominator_D = D;
    s.bloch = {-4.0 * alpha * (1.0 + 2.0 * lambda) / D, 0.0,
               -(1.0 + 2.0 * lambda) * transverse / D};
    s.r_ss = std::hypot(s.bloch.x, s.bloch.z);
    return s;
}

/// Driving that places the stationary state on the ray theta = theta0.
inline double driving_for_target(double lambda, double theta0, double eta, double gamma_deph) {
    detail::require_efficiency(eta, "driving_for_target");
    if (is_equatorial(theta0))
        throw std::domain_error("driving_for_target: equatorial target, alpha undefined");
    return (0.25 + lambda + 0.5 * gamma_deph + lambda * lambda / eta) * std::tan(theta0);
}

/// Signed stationary radius along the ray theta0 when alpha =
/// driving_for_target(...).  Negative values mean the state sits on the
/// opposite ray, which a magnitude-only scan would wrongly count as success.
inline double rss_of_lambda(double lambda, double theta0, double eta, double gamma_deph) {
    detail::require_efficiency(eta, "rss_of_lambda");
    const double s = std::sin(theta0);
    const double denom =
        1.0 + 2.0 * lambda + 2.0 * lambda * lambda / eta + (gamma_deph - 0.5) * s * s;
    if (!(denom > 0.0))
        throw std::domain_error("rss_of_lambda: nonpositive denominator");
    return -(1.0 + 2.0 * lambda) * std::cos(theta0) / denom;
}

/// Coefficients of a*r^2 + b*r + c = 0 whose nonnegative root is the best
/// Markovian radius.  The same quadratic gives the Bayesian drift through
/// r * A(r) = -(a*r^2 + b*r + c).
struct PurityQuadratic {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    double operator()(double r) const { return (a * r + b) * r + c; }
};

inline PurityQuadratic markov_quadratic(double theta0, double eta, double gamma_deph) {
    const double cs = std::cos(theta0);
    const double sn = std::sin(theta0);
    return {0.5 * (1.0 - eta + cs * cs) + gamma_deph * sn * sn, (1.0 - eta) * cs,
            -0.5 * eta * cs * cs};
}

/// Nonnegative root of q; nullopt when q vanishes identically.
inline std::optional<double> nonnegative_root(const PurityQuadratic& q) {
    if (q.a == 0.0) {
        if (q.b == 0.0)
            return std::nullopt;
        return -q.c / q.b;
    }
    const double disc = std::max(0.0, q.b * q.b - 4.0 * q.a * q.c);
    const double sq = std::sqrt(disc);
    if (q.b >= 0.0) {
        const double den = q.b + sq;
        return den > 0.0 ? -2.0 * q.c / den : 0.0;
    }
    return (-q.b + sq) / (2.0 * q.a);
}

struct OptimalGain {
    double lambda = 0.0;
    double r0 = 0.0;
    std::optional<double> alpha;  ///< driving_for_target at lambda; empty on the equator
    bool equatorial_unstabilizable = false;
};

/// Gain maximizing the stationary radius along theta0, and that radius.
inline OptimalGain optimal_gain(double theta0, double eta, double gamma_deph) {
    detail::require_efficiency(eta, "optimal_gain");
    OptimalGain g;
    if (is_equatorial(theta0)) {
        // z_ss = 0 forces x_ss = 0: no gain stabilizes anything but the origin.
        g.r0 = 0.0;
        g.lambda = -0.5 * eta;
        g.equatorial_unstabilizable = true;
        return g;
    }
    const auto root = nonnegative_root(markov_quadratic(theta0, eta, gamma_deph));
    g.r0 = root.value_or(0.0);
    const double cs = std::cos(theta0);
    g.lambda = -0.5 * eta * (1.0 + cs / g.r0);
    g.alpha = driving_for_target(g.lambda, theta0, eta, gamma_deph);
    return g;
}

struct MarkovControl {
    double alpha = 0.0;
    double lambda = 0.0;
};

/// Optimal driving and gain for eta = 1, Gamma = 0.  The two equatorial
/// targets share the same parameters, which is why neither is stabilized.
inline MarkovControl perfect_conditions(double theta0) {
    const double cs = is_equatorial(theta0) ? 0.0 : std::cos(theta0);
    return {0.25 * cs * std::sin(theta0), -0.5 * (1.0 + cs)};
}

/// Stationary purity when stabilizing the excited state (alpha = 0, lambda = -1).
inline double excited_state_purity(double eta) {
    detail::require_efficiency(eta, "excited_state_purity");
    return eta / (2.0 - eta);
}

} // namespace qfb
