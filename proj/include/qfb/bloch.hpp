#pragma once

// Bloch-sphere representation of a driven, damped, dephased two-level atom.
//
// Time is measured in units of the radiative decay rate (gamma = 1).  The
// atom is confined to the y = 0 plane, where a state is conveniently written
// in polar form x = r sin(theta), z = r cos(theta): theta = 0 is the excited
// state, theta = +-pi the ground state.

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace qfb {

inline constexpr double pi = std::numbers::pi;

struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend constexpr bool operator==(const BlochVector&, const BlochVector&) = default;
};

struct PolarState {
    double r = 0.0;      ///< purity radius, sqrt(x^2 + z^2)
    double theta = 0.0;  ///< atan2(x, z), wrapped into [-pi, pi)
};

/// Physical configuration of the atom.  The decay rate is fixed to 1.
struct AtomParams {
    double alpha = 0.0;       ///< driving amplitude (half the Rabi frequency)
    double gamma_deph = 0.0;  ///< dephasing rate of the dipole
    double eta = 1.0;         ///< homodyne detection efficiency

    void validate() const {
        if (!std::isfinite(alpha))
            throw std::domain_error("AtomParams: alpha must be finite");
        if (!(gamma_deph >= 0.0) || !std::isfinite(gamma_deph))
            throw std::domain_error("AtomParams: dephasing rate must be >= 0");
        if (!(eta >= 0.0 && eta <= 1.0))
            throw std::domain_error("AtomParams: eta must lie in [0, 1]");
    }
};

/// Wrap an angle into [-pi, pi).
inline double wrap_angle(double theta) {
    if (theta >= -pi && theta < pi)
        return theta;
    double w = std::fmod(theta + pi, 2.0 * pi);
    if (w < 0.0)
        w += 2.0 * pi;
    w -= pi;
    // fmod can land exactly on +pi after the shift
    return w >= pi ? w - 2.0 * pi : w;
}

/// p = 2 Tr[rho^2] - 1.
inline double purity(const BlochVector& b) {
    return b.x * b.x + b.y * b.y + b.z * b.z;
}

inline constexpr double in_plane_tolerance = 1e-9;
inline constexpr double zero_radius = 1e-15;

/// Polar form of an in-plane Bloch vector.  Throws std::domain_error if
/// |y| >= in_plane_tolerance.  theta is 0 by convention when r is zero.
inline PolarState to_polar(const BlochVector& b) {
    if (!(std::abs(b.y) < in_plane_tolerance))
        throw std::domain_error("to_polar: Bloch vector leaves the y = 0 plane");
    const double r = std::hypot(b.x, b.z);
    if (r < zero_radius)
        return {r, 0.0};
    return {r, wrap_angle(std::atan2(b.x, b.z))};
}

inline BlochVector from_polar(const PolarState& s) {
    return {s.r * std::sin(s.theta), 0.0, s.r * std::cos(s.theta)};
}

/// Right-hand side of the master equation without feedback, in Bloch form.
/// Transverse components decay at 1/2 + Gamma.
inline BlochVector drift_no_feedback(const BlochVector& b, const AtomParams& p) {
    const double transverse = 0.5 + p.gamma_deph;
    return {
        -transverse * b.x + 2.0 * p.alpha * b.z,
        -transverse * b.y,
        -(1.0 + b.z) - 2.0 * p.alpha * b.x,
    };
}

inline BlochVector stationary_no_feedback(double alpha, double gamma_deph) {
    const double g = 1.0 + 2.0 * gamma_deph;
    const double denom = g + 8.0 * alpha * alpha;
    return {-4.0 * alpha / denom, 0.0, -g / denom};
}

/// Stationary states reachable by driving alone, one per alpha.
inline std::vector<PolarState> locus_no_feedback(double gamma_deph,
                                                 std::span<const double> alpha_grid) {
    std::vector<PolarState> out;
    out.reserve(alpha_grid.size());
    for (double a : alpha_grid) {
        if (!std::isfinite(a))
            throw std::domain_error("locus_no_feedback: non-finite alpha");
        out.push_back(to_polar(stationary_no_feedback(a, gamma_deph)));
    }
    return out;
}

} // namespace qfb
