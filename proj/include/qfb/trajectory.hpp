#pragma once

// Quantum trajectories of the homodyne-monitored atom with feedback.
//
// Each step of length dt:
//   1. draw dW and form the current increment I dt from the true state,
//   2. update the conditioned state (and, for a dual filter, the experimenter's
//      estimate) with the Euler-Maruyama form of the polar Ito equations,
//   3. let the controller rotate the Bloch vector about y.  Rotations change
//      theta only, never r.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "qfb/bloch.hpp"
#include "qfb/rng.hpp"

namespace qfb {

struct Controller;

struct NoFeedback {};
struct Markovian {
    double lambda = 0.0;
};
struct BayesianProjection {
    double theta0 = 0.0;
};
struct BayesianGain {
    double beta = 0.0;
    double theta0 = 0.0;
};
struct Delayed {
    double lambda = 0.0;
    double tau = 0.0;
};
/// Feedback computed from a second filter that runs with estimator
/// parameters on the same current record.
struct DualFilter {
    AtomParams estimator;
    std::shared_ptr<const Controller> inner;
    std::optional<PolarState> estimator_initial;  ///< defaults to the true initial state
};

struct Controller {
    std::variant<NoFeedback, Markovian, BayesianProjection, BayesianGain, Delayed, DualFilter> law;

    static Controller none() { return {NoFeedback{}}; }
    static Controller markovian(double lambda) { return {Markovian{lambda}}; }
    static Controller projection(double theta0) { return {BayesianProjection{theta0}}; }
    static Controller gain(double beta, double theta0) { return {BayesianGain{beta, theta0}}; }
    static Controller delayed(double lambda, double tau) { return {Delayed{lambda, tau}}; }
    static Controller dual(const AtomParams& estimator, Controller inner,
                           std::optional<PolarState> estimator_initial = std::nullopt) {
        return {DualFilter{estimator, std::make_shared<const Controller>(std::move(inner)),
                           estimator_initial}};
    }

    const DualFilter* dual_filter() const { return std::get_if<DualFilter>(&law); }

    /// The law that actually computes the feedback angle.
    const Controller& acting() const {
        if (const auto* d = dual_filter())
            return *d->inner;
        return *this;
    }

    void validate() const {
        std::visit(
            [](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, Markovian> || std::is_same_v<T, Delayed>) {
                    if (!std::isfinite(c.lambda))
                        throw std::domain_error("Controller: lambda must be finite");
                }
                if constexpr (std::is_same_v<T, Delayed>) {
                    if (!(c.tau >= 0.0))
                        throw std::domain_error("Controller: tau must be >= 0");
                }
                if constexpr (std::is_same_v<T, BayesianGain>) {
                    if (!(c.beta >= 0.0))
                        throw std::domain_error("Controller: beta must be >= 0");
                }
                if constexpr (std::is_same_v<T, DualFilter>) {
                    c.estimator.validate();
                    if (!c.inner)
                        throw std::domain_error("Controller: dual filter needs an inner law");
                    if (c.inner->dual_filter())
                        throw std::domain_error("Controller: dual filters do not nest");
                    c.inner->validate();
                }
            },
            law);
    }
};

struct SimConfig {
    double dt = 1e-3;
    double t_final = 20.0;
    std::size_t n_traj = 1000;
    std::uint64_t master_seed = 0;
    PolarState initial{1.0, -pi};  ///< ground state
    /// Start of the averaging window; defaults to t_final / 2.
    std::optional<double> window_start;
    /// Mean Bloch trajectory is sampled every this many steps (0: about 200 samples).
    std::size_t sample_stride = 0;
    double r_floor = 1e-6;
    unsigned threads = 0;  ///< 0: hardware concurrency

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_final / dt)); }

    double window_begin() const { return window_start.value_or(0.5 * t_final); }

    std::size_t window_first_step() const {
        return static_cast<std::size_t>(std::ceil(window_begin() / dt - 1e-9));
    }

    std::size_t stride() const {
        return sample_stride > 0 ? sample_stride : std::max<std::size_t>(1, steps() / 200);
    }

    void validate() const {
        if (!(dt > 0.0))
            throw std::domain_error("SimConfig: dt must be positive");
        if (!(t_final >= dt))
            throw std::domain_error("SimConfig: t_final must be >= dt");
        if (n_traj < 1)
            throw std::domain_error("SimConfig: n_traj must be >= 1");
        if (!(initial.r >= 0.0 && initial.r <= 1.0))
            throw std::domain_error("SimConfig: initial radius must lie in [0, 1]");
        const double w = window_begin();
        if (!(w >= 0.5 * t_final - 1e-12 && w < t_final))
            throw std::domain_error("SimConfig: window start must lie in [t_final/2, t_final)");
        if (!(r_floor > 0.0 && r_floor < 1e-2))
            throw std::domain_error("SimConfig: r_floor must lie in (0, 1e-2)");
    }
};

/// I dt = sqrt(eta) <sigma_x> dt + dW.
inline double homodyne_increment(const PolarState& s, double eta, double dW, double dt) {
    return std::sqrt(eta) * s.r * std::sin(s.theta) * dt + dW;
}

/// One Euler-Maruyama step of the conditioned polar equations.  dW is the
/// innovation I dt - sqrt(eta) r sin(theta) dt.  1/r terms use max(r, r_floor);
/// a negative radius is reflected through the origin and r is clamped to 1.
inline PolarState step_conditioned(const PolarState& s, const AtomParams& p, double dW, double dt,
                                   double r_floor = 1e-6) {
    const double r = s.r;
    const double sn = std::sin(s.theta);
    const double cs = std::cos(s.theta);
    const double re = std::max(r, r_floor);
    const double inv_r = 1.0 / re;
    const double sqrt_eta = std::sqrt(p.eta);
    const double G = p.gamma_deph;

    const double dr_drift = -0.5 * r * (1.0 + cs * cs) - G * r * sn * sn - cs +
                            0.5 * p.eta * (cs * cs * inv_r + 2.0 * cs + r);
    const double dr_noise = sqrt_eta * sn * (1.0 - r * r);
    const double dth_drift = (0.5 - G) * sn * cs + 2.0 * p.alpha + sn * inv_r +
                             p.eta * sn * (r + cs) * (1.0 - inv_r * inv_r);
    const double dth_noise = sqrt_eta * (1.0 + cs * inv_r);

    double r_new = r + dr_drift * dt + dr_noise * dW;
    double th_new = s.theta + dth_drift * dt + dth_noise * dW;
    if (r_new < 0.0) {
        r_new = -r_new;
        th_new += pi;
    }
    return {std::min(r_new, 1.0), wrap_angle(th_new)};
}

/// Rotation about y by angle.  The radius is carried over untouched.
inline PolarState rotate(const PolarState& s, double angle) {
    return {s.r, wrap_angle(s.theta + angle)};
}

/// Per-trajectory controller memory (the delay line of a Delayed law).
class ControllerState {
public:
    ControllerState() = default;
    ControllerState(const Controller& c, double dt) {
        if (const auto* d = std::get_if<Delayed>(&c.acting().law)) {
            delay_steps_ = static_cast<std::size_t>(std::llround(d->tau / dt));
            line_.assign(delay_steps_, 0.0);
        }
    }

    /// Push the newest current increment and return the one from delay_steps
    /// ago, or nullopt while the line is still filling.
    std::optional<double> push(double idt) {
        if (delay_steps_ == 0)
            return idt;
        const double oldest = line_[head_];
        line_[head_] = idt;
        head_ = (head_ + 1) % delay_steps_;
        if (filled_ < delay_steps_) {
            ++filled_;
            return std::nullopt;
        }
        return oldest;
    }

    std::size_t delay_steps() const { return delay_steps_; }

private:
    std::vector<double> line_;
    std::size_t delay_steps_ = 0;
    std::size_t head_ = 0;
    std::size_t filled_ = 0;
};

struct FeedbackOutcome {
    PolarState state;
    PolarState estimate;
    double rotation = 0.0;  ///< angle applied about y
};

/// Apply the feedback that follows a measurement update.  `estimate` is the
/// experimenter's state (identical to `state` unless the law is a dual
/// filter); `design_eta` is the efficiency the feedback gain is normalized by.
inline FeedbackOutcome apply_controller(const PolarState& state, const PolarState& estimate,
                                        const Controller& controller, double idt, double dt,
                                        double design_eta, ControllerState& memory) {
    const Controller& law = controller.acting();
    FeedbackOutcome out{state, estimate, 0.0};

    // New estimate angle, when the law targets an angle rather than a rotation.
    std::optional<double> target;
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Markovian>) {
                out.rotation = 2.0 * c.lambda / std::sqrt(design_eta) * idt;
            } else if constexpr (std::is_same_v<T, Delayed>) {
                if (const auto past = memory.push(idt))
                    out.rotation = 2.0 * c.lambda / std::sqrt(design_eta) * *past;
            } else if constexpr (std::is_same_v<T, BayesianProjection>) {
                target = wrap_angle(c.theta0);
            } else if constexpr (std::is_same_v<T, BayesianGain>) {
                // exact relaxation of d(theta) = -2 beta (theta - theta0) dt over one step
                const double dev = wrap_angle(estimate.theta - c.theta0);
                target = wrap_angle(c.theta0 + dev * std::exp(-2.0 * c.beta * dt));
            }
        },
        law.law);

    if (target) {
        out.rotation = wrap_angle(*target - estimate.theta);
        out.estimate.theta = *target;
        out.state = (state.theta == estimate.theta) ? PolarState{state.r, *target}
                                                    : rotate(state, out.rotation);
        return out;
    }
    if (out.rotation != 0.0) {
        out.estimate = rotate(estimate, out.rotation);
        out.state = rotate(state, out.rotation);
    }
    return out;
}

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<PolarState> states;
    std::vector<PolarState> estimates;
    std::vector<double> current_integrals;  ///< I dt of the step ending at times[i]
    std::vector<double> actions;            ///< feedback rotation of that step
};

struct EnsembleStats {
    std::size_t n_traj = 0;
    std::vector<double> times;
    std::vector<BlochVector> mean_bloch;
    std::vector<BlochVector> se_bloch;
    double window_start = 0.0;
    double window_end = 0.0;
    // Window averages: each trajectory is time-averaged over the window and
    // standard errors are taken across trajectories.
    double x_mean = 0.0, x_se = 0.0;
    double z_mean = 0.0, z_se = 0.0;
    double r_mean = 0.0, r_se = 0.0;
    /// Purity of the ensemble-average state and its delta-method error.
    double p_ensemble = 0.0, p_se = 0.0;
    /// Window mean of (theta - theta_est)^2 + (r - r_est)^2.
    double divergence_mean = 0.0, divergence_se = 0.0;
};

namespace detail {

struct WindowSummary {
    double x = 0.0, z = 0.0, r = 0.0, divergence = 0.0;
};

struct SampleSums {
    std::vector<double> x, z, xx, zz;
    explicit SampleSums(std::size_t n) : x(n, 0.0), z(n, 0.0), xx(n, 0.0), zz(n, 0.0) {}
};

/// Run one trajectory; on_step(k, state, estimate, idt, rotation) sees the
/// state at time k*dt for k = 1..steps.
template <class OnStep>
WindowSummary run_trajectory(const SimConfig& cfg, const AtomParams& truth,
                             const Controller& controller, std::uint64_t index, OnStep&& on_step) {
    const DualFilter* dual = controller.dual_filter();
    const AtomParams& est_params = dual ? dual->estimator : truth;
    const double design_eta = est_params.eta;
    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);
    const double sqrt_eta = std::sqrt(truth.eta);
    const double sqrt_eta_est = std::sqrt(est_params.eta);

    PolarState state{cfg.initial.r, wrap_angle(cfg.initial.theta)};
    PolarState est = state;
    if (dual && dual->estimator_initial)
        est = {dual->estimator_initial->r, wrap_angle(dual->estimator_initial->theta)};

    ControllerState memory(controller, dt);
    NormalStream noise(cfg.master_seed, index);

    const std::size_t n = cfg.steps();
    const std::size_t w0 = std::max<std::size_t>(1, cfg.window_first_step());
    WindowSummary sum;
    std::size_t in_window = 0;

    for (std::size_t k = 1; k <= n; ++k) {
        const double dW = sqrt_dt * noise();
        const double idt = homodyne_increment(state, truth.eta, dW, dt);
        state = step_conditioned(state, truth,
                                 idt - sqrt_eta * state.r * std::sin(state.theta) * dt, dt,
                                 cfg.r_floor);
        if (dual) {
            est = step_conditioned(est, est_params,
                                   idt - sqrt_eta_est * est.r * std::sin(est.theta) * dt, dt,
                                   cfg.r_floor);
        } else {
            est = state;
        }
        const FeedbackOutcome fb =
            apply_controller(state, est, controller, idt, dt, design_eta, memory);
        state = fb.state;
        est = fb.estimate;

        if (k >= w0) {
            sum.x += state.r * std::sin(state.theta);
            sum.z += state.r * std::cos(state.theta);
            sum.r += state.r;
            if (dual) {
                const double dth = wrap_angle(state.theta - est.theta);
                const double drr = state.r - est.r;
                sum.divergence += dth * dth + drr * drr;
            }
            ++in_window;
        }
        on_step(k, state, est, idt, fb.rotation);
    }
    if (in_window > 0) {
        const double inv = 1.0 / static_cast<double>(in_window);
        sum.x *= inv;
        sum.z *= inv;
        sum.r *= inv;
        sum.divergence *= inv;
    }
    return sum;
}

inline void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += x;
    mean = s / n;
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

} // namespace detail

/// Full record of one trajectory, stored every `stride` steps.
inline TrajectoryRecord simulate_trajectory(const SimConfig& cfg, const AtomParams& truth,
                                            const Controller& controller, std::uint64_t index,
                                            std::size_t stride = 1) {
    cfg.validate();
    truth.validate();
    controller.validate();
    stride = std::max<std::size_t>(1, stride);
    TrajectoryRecord rec;
    detail::run_trajectory(cfg, truth, controller, index,
                           [&](std::size_t k, const PolarState& s, const PolarState& e, double idt,
                               double rot) {
                               if (k % stride != 0)
                                   return;
                               rec.times.push_back(static_cast<double>(k) * cfg.dt);
                               rec.states.push_back(s);
                               rec.estimates.push_back(e);
                               rec.current_integrals.push_back(idt);
                               rec.actions.push_back(rot);
                           });
    return rec;
}

/// Independent trajectories with counter-based noise streams keyed by
/// (master_seed, trajectory index).  Work is split into fixed-size chunks and
/// reduced in index order, so the result does not depend on the thread count.
inline EnsembleStats simulate_ensemble(const SimConfig& cfg, const AtomParams& truth,
                                       const Controller& controller) {
    cfg.validate();
    truth.validate();
    controller.validate();
    const auto needs_eta = [](const Controller& c) {
        return std::holds_alternative<Markovian>(c.acting().law) ||
               std::holds_alternative<Delayed>(c.acting().law);
    };
    const AtomParams& design = controller.dual_filter() ? controller.dual_filter()->estimator : truth;
    if (needs_eta(controller) && !(design.eta > 0.0))
        throw std::domain_error("simulate_ensemble: current feedback requires eta > 0");

    const std::size_t stride = cfg.stride();
    const std::size_t n_steps = cfg.steps();
    const std::size_t n_samples = n_steps / stride + 1;
    constexpr std::size_t chunk = 16;
    const std::size_t n_chunks = (cfg.n_traj + chunk - 1) / chunk;

    std::vector<detail::SampleSums> chunk_sums(n_chunks, detail::SampleSums(n_samples));
    std::vector<detail::WindowSummary> summaries(cfg.n_traj);
    const BlochVector b0 = from_polar({cfg.initial.r, cfg.initial.theta});

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks)
                return;
            auto& sums = chunk_sums[c];
            const std::size_t end = std::min(cfg.n_traj, (c + 1) * chunk);
            for (std::size_t t = c * chunk; t < end; ++t) {
                sums.x[0] += b0.x;
                sums.z[0] += b0.z;
                sums.xx[0] += b0.x * b0.x;
                sums.zz[0] += b0.z * b0.z;
                summaries[t] = detail::run_trajectory(
                    cfg, truth, controller, t,
                    [&](std::size_t k, const PolarState& s, const PolarState&, double, double) {
                        if (k % stride != 0)
                            return;
                        const std::size_t i = k / stride;
                        const double x = s.r * std::sin(s.theta);
                        const double z = s.r * std::cos(s.theta);
                        sums.x[i] += x;
                        sums.z[i] += z;
                        sums.xx[i] += x * x;
                        sums.zz[i] += z * z;
                    });
            }
        }
    };

    unsigned n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, n_chunks));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < n_threads; ++i)
            pool.emplace_back(worker);
    }

    EnsembleStats st;
    st.n_traj = cfg.n_traj;
    const double n = static_cast<double>(cfg.n_traj);
    st.times.resize(n_samples);
    st.mean_bloch.resize(n_samples);
    st.se_bloch.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        double sx = 0.0, sz = 0.0, sxx = 0.0, szz = 0.0;
        for (const auto& cs : chunk_sums) {
            sx += cs.x[i];
            sz += cs.z[i];
            sxx += cs.xx[i];
            szz += cs.zz[i];
        }
        const double mx = sx / n;
        const double mz = sz / n;
        const double vx = n > 1 ? std::max(0.0, (sxx - n * mx * mx) / (n - 1.0)) : 0.0;
        const double vz = n > 1 ? std::max(0.0, (szz - n * mz * mz) / (n - 1.0)) : 0.0;
        st.times[i] = static_cast<double>(i * stride) * cfg.dt;
        st.mean_bloch[i] = {mx, 0.0, mz};
        st.se_bloch[i] = {std::sqrt(vx / n), 0.0, std::sqrt(vz / n)};
    }

    std::vector<double> xs(cfg.n_traj), zs(cfg.n_traj), rs(cfg.n_traj), ds(cfg.n_traj);
    for (std::size_t t = 0; t < cfg.n_traj; ++t) {
        xs[t] = summaries[t].x;
        zs[t] = summaries[t].z;
        rs[t] = summaries[t].r;
        ds[t] = summaries[t].divergence;
    }
    detail::mean_and_se(xs, st.x_mean, st.x_se);
    detail::mean_and_se(zs, st.z_mean, st.z_se);
    detail::mean_and_se(rs, st.r_mean, st.r_se);
    detail::mean_and_se(ds, st.divergence_mean, st.divergence_se);

    // p = x^2 + z^2 of the mean state; covariance-aware delta method.
    double cxz = 0.0;
    for (std::size_t t = 0; t < cfg.n_traj; ++t)
        cxz += (xs[t] - st.x_mean) * (zs[t] - st.z_mean);
    cxz = cfg.n_traj > 1 ? cxz / (n - 1.0) / n : 0.0;
    st.p_ensemble = st.x_mean * st.x_mean + st.z_mean * st.z_mean;
    const double var_p = 4.0 * (st.x_mean * st.x_mean * st.x_se * st.x_se +
                                st.z_mean * st.z_mean * st.z_se * st.z_se +
                                2.0 * st.x_mean * st.z_mean * cxz);
    st.p_se = std::sqrt(std::max(0.0, var_p));
    st.window_start = static_cast<double>(std::max<std::size_t>(1, cfg.window_first_step())) * cfg.dt;
    st.window_end = static_cast<double>(n_steps) * cfg.dt;
    return st;
}

struct DelayPurity {
    double tau = 0.0;
    double p = 0.0;
    double p_se = 0.0;
    double p_linear = 0.0;  ///< 1 - 4 tau
};

/// Ensemble purity when excited-state feedback (alpha = 0, lambda = -1)
/// acts on the current from tau earlier.
inline DelayPurity delayed_feedback_purity(double tau, SimConfig cfg, double eta = 1.0,
                                           double gamma_deph = 0.0) {
    if (!(tau >= 0.0))
        throw std::domain_error("delayed_feedback_purity: tau must be >= 0");
    if (tau > 0.0 && tau < 5.0 * cfg.dt)
        throw std::domain_error("delayed_feedback_purity: tau < 5 dt cannot be resolved");
    cfg.initial = {1.0, 0.0};
    const AtomParams p{0.0, gamma_deph, eta};
    const auto st = simulate_ensemble(cfg, p, Controller::delayed(-1.0, tau));
    return {tau, st.p_ensemble, st.p_se, 1.0 - 4.0 * tau};
}

struct DualFilterResult {
    EnsembleStats stats;  ///< of the true state
    double divergence = 0.0;
    double divergence_se = 0.0;
};

/// True state evolves with true_params, feedback is computed from an
/// estimate running with estimator_params on the same current.
inline DualFilterResult dual_filter_run(const SimConfig& cfg, const AtomParams& true_params,
                                        const AtomParams& estimator_params,
                                        const Controller& inner) {
    const auto st = simulate_ensemble(cfg, true_params, Controller::dual(estimator_params, inner));
    return {st, st.divergence_mean, st.divergence_se};
}

} // namespace qfb
