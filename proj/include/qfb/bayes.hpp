#pragma once

// Bayesian (state-estimate) feedback.  With the estimated angle pinned to
// theta0 the conditioned radius obeys the one-dimensional Ito equation
//     dr = A(r) dt + sqrt(B(r)) dW,
// whose stationary Fokker-Planck density P(r) ~ C(r) exp(2 int A C), C = 1/B,
// gives the achievable mean purity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "qfb/markov.hpp"
#include "qfb/quadrature.hpp"

namespace qfb {

struct DriftDiffusion {
    double A = 0.0;
    double B = 0.0;
    double C = std::numeric_limits<double>::infinity();  ///< 1/B, infinite where B = 0
};

inline double drift_A(double r, double theta0, double eta, double gamma_deph) {
    const double cs = std::cos(theta0);
    const double sn = std::sin(theta0);
    if (!(r >= 0.0 && r <= 1.0 + 1e-12))
        throw std::domain_error("drift_A: r must lie in [0, 1]");
    if (r == 0.0) {
        if (std::abs(cs) >= equator_tolerance)
            throw std::domain_error("drift_A: 1/r singularity at r = 0");
        return 0.0;
    }
    return -0.5 * r * (1.0 + cs * cs) - gamma_deph * r * sn * sn - cs +
           0.5 * eta * (cs * cs / r + 2.0 * cs + r);
}

inline double diffusion_B(double r, double theta0, double eta) {
    const double sn = std::sin(theta0);
    const double w = 1.0 - r * r;
    return eta * sn * sn * w * w;
}

inline DriftDiffusion drift_diffusion(double r, double theta0, double eta, double gamma_deph) {
    DriftDiffusion d;
    d.A = drift_A(r, theta0, eta, gamma_deph);
    d.B = diffusion_B(r, theta0, eta);
    if (d.B > 0.0)
        d.C = 1.0 / d.B;
    return d;
}

struct QuadratureSpec {
    double rel_tol = 1e-10;
    double endpoint_margin = 1e-12;  ///< integrate over [0, 1 - margin]
    std::size_t max_subdivisions = 4000;

    void validate() const {
        if (!(rel_tol > 0.0))
            throw std::domain_error("QuadratureSpec: rel_tol must be positive");
        if (!(endpoint_margin > 0.0 && endpoint_margin < 1e-6))
            throw std::domain_error("QuadratureSpec: endpoint_margin must lie in (0, 1e-6)");
        if (max_subdivisions < 1)
            throw std::domain_error("QuadratureSpec: max_subdivisions must be >= 1");
    }
};

enum class FpeCase { Generic, DeterministicAxis, PerfectConditions, EquatorialReflected };

inline const char* to_string(FpeCase c) {
    switch (c) {
    case FpeCase::Generic: return "generic";
    case FpeCase::DeterministicAxis: return "deterministic_axis";
    case FpeCase::PerfectConditions: return "perfect_conditions";
    case FpeCase::EquatorialReflected: return "equatorial_reflected";
    }
    return "unknown";
}

struct FpeResult {
    double r_ss = 0.0;
    /// Integral of the density rescaled so its peak is 1; log_peak restores it.
    double normalization = 1.0;
    double log_peak = 0.0;
    double err_estimate = 0.0;
    std::size_t intervals = 0;
    FpeCase special_case = FpeCase::Generic;
};

class quadrature_error : public std::runtime_error {
public:
    quadrature_error(const std::string& what, FpeResult partial)
        : std::runtime_error(what), partial_(partial) {}
    const FpeResult& partial() const noexcept { return partial_; }

private:
    FpeResult partial_;
};

/// Stationary density for drift A(r) = -q(r)/r and diffusion
/// B(r) = scale * (1 - r^2)^2, in log space.
///
/// A*C is rational in r, so the exponent has the closed form
///     2 int A C = -(2/scale) [P ln r - Q ln(1-r) + R/(1-r) + S ln(1+r) - T/(1+r)]
/// from the partial fractions of q(r) / (r (1-r)^2 (1+r)^2).
class StationaryDensity {
public:
    StationaryDensity(const PurityQuadratic& q, double scale) : q_(q), scale_(scale) {
        if (!(scale > 0.0))
            throw std::domain_error("StationaryDensity: diffusion scale must be positive");
        P_ = q.c;
        Q_ = 0.25 * (q.b + 2.0 * q.c);
        R_ = 0.25 * (q.a + q.b + q.c);
        S_ = 0.25 * (q.b - 2.0 * q.c);
        T_ = -0.25 * (q.a - q.b + q.c);
    }

    /// 2 * integral of A(r) C(r), up to an additive constant.
    double potential(double r) const {
        double f = -Q_ * std::log1p(-r) + R_ / (1.0 - r) + S_ * std::log1p(r) - T_ / (1.0 + r);
        if (P_ != 0.0)
            f += P_ * std::log(r);
        return -2.0 * f / scale_;
    }

    double log_density(double r) const {
        if (r <= 0.0 && P_ != 0.0)
            return -std::numeric_limits<double>::infinity();
        if (r >= 1.0)
            return -std::numeric_limits<double>::infinity();
        return -std::log(scale_) - 2.0 * (std::log1p(-r) + std::log1p(r)) + potential(r);
    }

    /// A(r) * C(r), the integrand of the potential.
    double drift_over_diffusion(double r) const {
        const double w = 1.0 - r * r;
        return -q_(r) / (r * scale_ * w * w);
    }

    /// Coefficient of 1/(1-r)^2 in the expansion; zero means no confinement
    /// away from the pure-state boundary.
    double boundary_strength() const { return R_; }

private:
    PurityQuadratic q_;
    double scale_;
    double P_, Q_, R_, S_, T_;
};

namespace detail {

struct Peak {
    double r = 0.0;
    double log_value = 0.0;
};

inline Peak find_peak(const StationaryDensity& dens, double upper) {
    std::vector<double> grid;
    constexpr int n_uniform = 400;
    for (int i = 1; i <= n_uniform; ++i)
        grid.push_back(upper * i / n_uniform);
    for (double k = 1.0; ; k += 0.25) {
        const double r = 1.0 - std::pow(10.0, -k);
        if (r >= upper)
            break;
        grid.push_back(r);
    }
    grid.push_back(1e-6);
    std::sort(grid.begin(), grid.end());

    std::size_t best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = dens.log_density(grid[i]);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    const double lo = best == 0 ? 0.0 : grid[best - 1];
    const double hi = best + 1 < grid.size() ? grid[best + 1] : upper;
    auto neg = [&](double r) { return -dens.log_density(r); };
    const auto [r_min, f_min] = boost::math::tools::brent_find_minima(neg, lo, hi, 50);
    if (-f_min > best_val)
        return {r_min, -f_min};
    return {grid[best], best_val};
}

/// Point between `inside` and `outside` where log density crosses target.
inline double crossing(const StationaryDensity& dens, double inside, double outside, double target) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (inside + outside);
        if (mid == inside || mid == outside)
            break;
        if (dens.log_density(mid) >= target)
            inside = mid;
        else
            outside = mid;
    }
    return 0.5 * (inside + outside);
}

struct MeanIntegrals {
    double mean = 0.0;
    double normalization = 0.0;
    double rel_err = 0.0;
    std::size_t intervals = 0;
    bool converged = false;
};

inline MeanIntegrals integrate_mean(const StationaryDensity& dens, const Peak& peak, double upper,
                                    const QuadratureSpec& spec) {
    std::vector<double> bp{0.0, 0.25 * upper, 0.5 * upper, 0.75 * upper, upper, peak.r};
    const double drops[] = {0.5, 2.0, 8.0, 32.0, 128.0, 700.0};
    for (double d : drops) {
        const double target = peak.log_value - d;
        if (dens.log_density(0.0) < target && peak.r > 0.0)
            bp.push_back(crossing(dens, peak.r, 0.0, target));
        if (dens.log_density(upper) < target && peak.r < upper)
            bp.push_back(crossing(dens, peak.r, upper, target));
    }
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

    auto integrand = [&](double r) {
        const double w = std::exp(dens.log_density(r) - peak.log_value);
        return quad::Values<2>{w, r * w};
    };
    const auto res = quad::integrate<2>(integrand, bp, 0.25 * spec.rel_tol,
                                        std::numeric_limits<double>::min(), spec.max_subdivisions);
    MeanIntegrals out;
    out.normalization = res.value[0];
    out.mean = res.value[0] > 0.0 ? res.value[1] / res.value[0] : 0.0;
    out.rel_err = (res.value[0] > 0.0 ? res.error[0] / res.value[0] : 1.0) +
                  (res.value[1] > 0.0 ? res.error[1] / res.value[1] : 0.0);
    out.intervals = res.intervals;
    out.converged = res.converged;
    return out;
}

} // namespace detail

/// Mean of the stationary density of dr = -q(r)/r dt + sqrt(scale) (1-r^2) dW
/// on [0, 1), with a reflecting boundary at r = 0.
inline FpeResult stationary_mean_of(const PurityQuadratic& q, double scale,
                                    const QuadratureSpec& spec = {}) {
    spec.validate();
    const StationaryDensity dens(q, scale);
    const double upper = 1.0 - spec.endpoint_margin;
    const auto peak = detail::find_peak(dens, upper);
    const auto main = detail::integrate_mean(dens, peak, upper, spec);
    const auto half = detail::integrate_mean(dens, peak, 1.0 - 0.5 * spec.endpoint_margin, spec);

    FpeResult res;
    res.r_ss = std::clamp(main.mean, 0.0, 1.0);
    res.normalization = main.normalization;
    res.log_peak = peak.log_value;
    res.intervals = main.intervals;
    res.err_estimate = main.rel_err * main.mean + std::abs(half.mean - main.mean);
    if (!main.converged || !half.converged || !(main.normalization > 0.0) ||
        !std::isfinite(main.normalization))
        throw quadrature_error("stationary density quadrature did not converge", res);
    return res;
}

/// Stationary mean purity under ideal Bayesian feedback toward theta0.
inline FpeResult stationary_mean_rss(double theta0, double eta, double gamma_deph,
                                     const QuadratureSpec& spec = {}) {
    detail::require_efficiency(eta, "stationary_mean_rss");
    if (!(gamma_deph >= 0.0))
        throw std::domain_error("stationary_mean_rss: dephasing rate must be >= 0");
    spec.validate();
    const double cs = std::cos(theta0);
    const double sn = std::sin(theta0);

    FpeResult res;
    if (std::abs(sn) < 1e-12) {
        // No diffusion on the z axis: r relaxes to the stable zero of A.
        res.special_case = FpeCase::DeterministicAxis;
        res.r_ss = cs > 0.0 ? eta / (2.0 - eta) : 1.0;
        return res;
    }
    if (eta > 1.0 - 1e-12 && gamma_deph < 1e-12) {
        res.special_case = FpeCase::PerfectConditions;
        res.r_ss = 1.0;
        return res;
    }
    if (std::abs(cs) < equator_tolerance) {
        // A(r) = -k r is odd in r, so restricting to r >= 0 is the reflected process.
        const PurityQuadratic q{0.5 * (1.0 - eta) + gamma_deph, 0.0, 0.0};
        res = stationary_mean_of(q, eta, spec);
        res.special_case = FpeCase::EquatorialReflected;
        return res;
    }
    res = stationary_mean_of(markov_quadratic(theta0, eta, gamma_deph), eta * sn * sn, spec);
    res.special_case = FpeCase::Generic;
    return res;
}

struct EquatorialApprox {
    double r = 0.0;
    bool within_validity = true;  ///< false when the small-r assumption is doubtful (r > 0.5)
};

/// Small-r closed form for an equatorial target, replacing the noise
/// coefficient sqrt(eta)(1 - r^2) by sqrt(eta).
inline EquatorialApprox equatorial_approx_rss(double eta, double gamma_deph) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::domain_error("equatorial_approx_rss: eta must lie in [0, 1]");
    if (eta == 0.0)
        return {0.0, true};
    const double k = gamma_deph + 0.5 * (1.0 - eta);
    if (!(k > 0.0))
        return {std::numeric_limits<double>::infinity(), false};
    const double r = std::sqrt(eta / (k * pi));
    return {r, r <= 0.5};
}

struct LinearizedDrift {
    double slope = 0.0;      ///< A(r) ~ slope * (r - r0)
    double r0_approx = 0.0;  ///< first-order expansion in (1 - eta) and Gamma
    double r0_exact = 0.0;   ///< root of the Markovian purity quadratic
};

inline LinearizedDrift linearized_drift(double theta0, double eta, double gamma_deph) {
    if (is_equatorial(theta0))
        throw std::domain_error("linearized_drift: undefined for an equatorial target");
    const double cs = std::cos(theta0);
    const double t = std::tan(theta0);
    const double eps = 1.0 - eta;
    LinearizedDrift d;
    d.slope = -cs * cs;
    // one Newton step from r = 1: q(1) / q'(1) to first order
    d.r0_approx = 1.0 - eps * (1.0 + cs) * (1.0 + cs) / (2.0 * cs * cs) - gamma_deph * t * t;
    d.r0_exact = optimal_gain(theta0, eta, gamma_deph).r0;
    return d;
}

/// Stationary mean of the radius under the linearized drift
/// A(r) ~ slope * (r - r0).  For affine drift dE[r]/dt = A(E[r]) whatever
/// B(r) is, so the mean settles on r0: the same purity Markovian feedback
/// reaches.
inline double linearized_stationary_mean(double theta0, double eta, double gamma_deph) {
    const LinearizedDrift lin = linearized_drift(theta0, eta, gamma_deph);
    // Fixed point of dm/dt = slope * (m - r0); slope = -cos^2(theta0) < 0 off the equator.
    return lin.r0_exact;
}

/// Fokker-Planck stationary mean with the affine drift and the exact B(r),
/// reflecting at r = 0.  Differs from r0 only by the boundary flux
/// B(0) P(0) / (2 |slope|), which vanishes as r0 -> 1.
inline FpeResult affine_drift_stationary_mean(double theta0, double eta, double gamma_deph,
                                              const QuadratureSpec& spec = {}) {
    const LinearizedDrift lin = linearized_drift(theta0, eta, gamma_deph);
    const double sn = std::sin(theta0);
    FpeResult res;
    if (std::abs(sn) < 1e-12 || lin.r0_exact >= 1.0 - 1e-12) {
        res.special_case = std::abs(sn) < 1e-12 ? FpeCase::DeterministicAxis
                                                : FpeCase::PerfectConditions;
        res.r_ss = lin.r0_exact;
        return res;
    }
    // r * slope * (r - r0) = -q(r)
    const PurityQuadratic q{-lin.slope, lin.slope * lin.r0_exact, 0.0};
    return stationary_mean_of(q, eta * sn * sn, spec);
}

} // namespace qfb
