#pragma once

// Globally adaptive Gauss-Kronrod (G10/K21) integration of vector-valued
// integrands.  All components share the same nodes; bisection targets the
// interval whose scaled error is largest, QUADPACK QAG style.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace qfb::quad {

template <std::size_t N>
using Values = std::array<double, N>;

template <std::size_t N>
struct Result {
    Values<N> value{};
    Values<N> error{};
    std::size_t intervals = 0;
    bool converged = false;
};

namespace detail {

template <std::size_t N>
struct Segment {
    double a = 0.0;
    double b = 0.0;
    Values<N> value{};
    Values<N> error{};
    double priority = 0.0;

    bool operator<(const Segment& o) const { return priority < o.priority; }
};

template <std::size_t N, class F>
Segment<N> gauss_kronrod_21(F& f, double a, double b) {
    using kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
    using gauss = boost::math::quadrature::gauss<double, 10>;
    const auto& x = kronrod::abscissa();
    const auto& wk = kronrod::weights();
    const auto& wg = gauss::weights();

    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);

    Values<N> k{};
    Values<N> g{};
    const Values<N> f0 = f(mid);
    for (std::size_t c = 0; c < N; ++c)
        k[c] = wk[0] * f0[c];
    // Odd abscissa indices are shared with the 10-point Gauss rule.
    for (std::size_t i = 1; i < x.size(); ++i) {
        const Values<N> fp = f(mid + half * x[i]);
        const Values<N> fm = f(mid - half * x[i]);
        for (std::size_t c = 0; c < N; ++c) {
            const double s = fp[c] + fm[c];
            k[c] += wk[i] * s;
            if (i % 2 == 1)
                g[c] += wg[i / 2] * s;
        }
    }

    Segment<N> seg{a, b, {}, {}, 0.0};
    for (std::size_t c = 0; c < N; ++c) {
        seg.value[c] = half * k[c];
        seg.error[c] = std::max(std::abs(half * (k[c] - g[c])),
                                50.0 * std::numeric_limits<double>::epsilon() * std::abs(seg.value[c]));
    }
    return seg;
}

} // namespace detail

/// Integrate f over [breakpoints.front(), breakpoints.back()], starting from
/// the supplied partition.  Stops when every component satisfies
/// error <= max(abs_tol, rel_tol * |value|) or when max_intervals is reached
/// (converged = false, partial result returned).
template <std::size_t N, class F>
Result<N> integrate(F&& f, std::span<const double> breakpoints, double rel_tol,
                    double abs_tol, std::size_t max_intervals) {
    if (breakpoints.size() < 2)
        throw std::invalid_argument("quad::integrate: need at least two breakpoints");
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end()))
        throw std::invalid_argument("quad::integrate: breakpoints must be sorted");

    std::vector<detail::Segment<N>> initial;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        if (breakpoints[i + 1] > breakpoints[i])
            initial.push_back(detail::gauss_kronrod_21<N>(f, breakpoints[i], breakpoints[i + 1]));
    }

    Result<N> res;
    if (initial.empty())
        return res;

    auto totals = [&](const auto& segs, Values<N>& v, Values<N>& e) {
        v.fill(0.0);
        e.fill(0.0);
        for (const auto& s : segs)
            for (std::size_t c = 0; c < N; ++c) {
                v[c] += s.value[c];
                e[c] += s.error[c];
            }
    };

    Values<N> scale{};
    {
        Values<N> v, e;
        totals(initial, v, e);
        for (std::size_t c = 0; c < N; ++c)
            scale[c] = std::max({std::abs(v[c]), abs_tol, std::numeric_limits<double>::min()});
    }
    auto prioritize = [&](detail::Segment<N>& s) {
        s.priority = 0.0;
        for (std::size_t c = 0; c < N; ++c)
            s.priority += s.error[c] / scale[c];
    };

    std::priority_queue<detail::Segment<N>> heap;
    for (auto& s : initial) {
        prioritize(s);
        heap.push(s);
    }
    res.value.fill(0.0);
    res.error.fill(0.0);
    for (const auto& s : initial)
        for (std::size_t c = 0; c < N; ++c) {
            res.value[c] += s.value[c];
            res.error[c] += s.error[c];
        }

    auto done = [&] {
        for (std::size_t c = 0; c < N; ++c)
            if (res.error[c] > std::max(abs_tol, rel_tol * std::abs(res.value[c])))
                return false;
        return true;
    };

    while (!done()) {
        if (heap.size() >= max_intervals) {
            res.intervals = heap.size();
            res.converged = false;
            return res;
        }
        detail::Segment<N> worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            // interval can no longer be split in double precision
            res.intervals = heap.size() + 1;
            res.converged = false;
            return res;
        }
        auto left = detail::gauss_kronrod_21<N>(f, worst.a, mid);
        auto right = detail::gauss_kronrod_21<N>(f, mid, worst.b);
        prioritize(left);
        prioritize(right);
        for (std::size_t c = 0; c < N; ++c) {
            res.value[c] += left.value[c] + right.value[c] - worst.value[c];
            res.error[c] += left.error[c] + right.error[c] - worst.error[c];
        }
        heap.push(left);
        heap.push(right);
    }

    // Re-sum from scratch to shed accumulated update round-off.
    std::vector<detail::Segment<N>> segs;
    segs.reserve(heap.size());
    while (!heap.empty()) {
        segs.push_back(heap.top());
        heap.pop();
    }
    std::sort(segs.begin(), segs.end(), [](const auto& l, const auto& r) { return l.a < r.a; });
    totals(segs, res.value, res.error);
    res.intervals = segs.size();
    res.converged = true;
    return res;
}

/// Scalar convenience wrapper.
template <class F>
Result<1> integrate_scalar(F&& f, double a, double b, double rel_tol, double abs_tol,
                           std::size_t max_intervals = 2000) {
    const std::array<double, 2> bp{a, b};
    auto g = [&](double x) { return Values<1>{f(x)}; };
    return integrate<1>(g, bp, rel_tol, abs_tol, max_intervals);
}

} // namespace qfb::quad
