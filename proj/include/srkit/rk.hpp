#pragma once

// Runge-Kutta drivers used everywhere in the library.
//
// Two schemes only:
//   * classical RK4 with a fixed step count  -> bit-for-bit reproducible runs,
//   * embedded Dormand-Prince 5(4) with step clamping to the requested output
//     times, so observed nodes are genuine solution states (no interpolant).
//
// Both drivers take an optional admissibility predicate; when a step lands
// outside the admissible set the boundary crossing is located by bisecting the
// step and the driver stops there (used for domain-box exits).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "srkit/types.hpp"

namespace srkit {

struct AdaptiveOpts {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double h_init = 0.0;       ///< 0 = automatic
    double h_min_rel = 1e-14;  ///< minimum step relative to the span
    std::int64_t max_steps = 2000000;
};

struct IntegrationStatus {
    bool completed = true;          ///< reached the end of the span
    bool step_failure = false;      ///< step underflow / budget exhausted
    double t_end = 0.0;             ///< where integration actually stopped
    Vec y_end;
    std::optional<double> t_event;  ///< admissibility boundary, if hit
    Vec y_event;
    std::int64_t n_accepted = 0, n_rejected = 0;
};

namespace detail {

template <class F>
inline Vec rk4_step(F&& f, double t, const Vec& y, double h) {
    Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size());
    f(t, y, k1);
    f(t + 0.5 * h, Vec(y + 0.5 * h * k1), k2);
    f(t + 0.5 * h, Vec(y + 0.5 * h * k2), k3);
    f(t + h, Vec(y + h * k3), k4);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Bisect an inadmissible step starting at (t, y): finds the largest step
/// length dt in [0, h] (h may be signed) whose endpoint is still admissible.
/// `step` maps (t, y, h) to the state after one step of length h.
template <class Step, class Adm>
inline std::pair<double, Vec> locate_boundary(Step&& step, Adm&& admissible, double t,
                                              const Vec& y, double h) {
    double lo = 0.0, hi = h;  // endpoint at lo admissible, at hi not
    Vec y_lo = y;
    for (int it = 0; it < 80 && std::abs(hi - lo) > 1e-14 * std::max(1.0, std::abs(h)); ++it) {
        double mid = 0.5 * (lo + hi);
        Vec y_mid = step(t, y, mid);
        if (admissible(y_mid)) {
            lo = mid;
            y_lo = std::move(y_mid);
        } else {
            hi = mid;
        }
    }
    return {lo, y_lo};
}

}  // namespace detail

/// Fixed-step classical RK4 over [t0, t1] (t1 < t0 allowed) with `nsteps` steps.
/// obs(i, t, y) is called at node i = 0..nsteps (or up to the event node).
template <class F, class Obs>
IntegrationStatus integrate_rk4(F&& f, double t0, const Vec& y0, double t1, int nsteps, Obs&& obs,
                                const std::function<bool(const Vec&)>* admissible = nullptr) {
    IntegrationStatus st;
    double h = (t1 - t0) / nsteps;
    Vec y = y0;
    obs(0, t0, y);
    for (int i = 0; i < nsteps; ++i) {
        double t = t0 + i * h;
        Vec y1 = detail::rk4_step(f, t, y, h);
        ++st.n_accepted;
        if (admissible && !(*admissible)(y1)) {
            auto [dt, yb] = detail::locate_boundary(
                [&](double tt, const Vec& yy, double hh) { return detail::rk4_step(f, tt, yy, hh); },
                *admissible, t, y, h);
            st.completed = false;
            st.t_event = t + dt;
            st.y_event = yb;
            st.t_end = t + dt;
            st.y_end = std::move(yb);
            return st;
        }
        y = std::move(y1);
        obs(i + 1, (i + 1 == nsteps) ? t1 : t0 + (i + 1) * h, y);
    }
    st.t_end = t1;
    st.y_end = std::move(y);
    return st;
}

/// Adaptive Dormand-Prince 5(4).  `out_times` must be sorted along the
/// direction of integration and lie within [t0, t1]; obs(k, t, y) is called
/// for each output node actually reached.
template <class F, class Obs>
IntegrationStatus integrate_dp54(F&& f, double t0, const Vec& y0, double t1,
                                 const std::vector<double>& out_times, const AdaptiveOpts& opts,
                                 Obs&& obs,
                                 const std::function<bool(const Vec&)>* admissible = nullptr) {
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    IntegrationStatus st;
    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const auto n = y0.size();
    Vec y = y0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y5(n), yerr(n);

    auto step5 = [&](double t, const Vec& yy, double h) {  // single 5th-order step
        Vec s1(n), s2(n), s3(n), s4(n), s5(n), s6(n);
        f(t, yy, s1);
        f(t + c2 * h, Vec(yy + h * (a21 * s1)), s2);
        f(t + c3 * h, Vec(yy + h * (a31 * s1 + a32 * s2)), s3);
        f(t + c4 * h, Vec(yy + h * (a41 * s1 + a42 * s2 + a43 * s3)), s4);
        f(t + c5 * h, Vec(yy + h * (a51 * s1 + a52 * s2 + a53 * s3 + a54 * s4)), s5);
        f(t + h, Vec(yy + h * (a61 * s1 + a62 * s2 + a63 * s3 + a64 * s4 + a65 * s5)), s6);
        return Vec(yy + h * (b1 * s1 + b3 * s3 + b4 * s4 + b5 * s5 + b6 * s6));
    };

    size_t next_out = 0;
    if (next_out < out_times.size() && out_times[next_out] == t0) obs(next_out++, t0, y);
    if (span == 0.0) {
        st.t_end = t1;
        st.y_end = y;
        return st;
    }

    double t = t0;
    f(t, y, k1);
    double h;  // controller step size (unsigned, unclamped)
    if (opts.h_init > 0.0) {
        h = opts.h_init;
    } else {
        double d1 = k1.norm();
        h = (d1 > 1e-12) ? 0.01 * std::max(y.norm(), 1.0) / d1 : span / 100.0;
        h = std::min(h, span / 10.0);
    }
    const double h_min = opts.h_min_rel * span;

    for (std::int64_t iter = 0;; ++iter) {
        if (iter >= opts.max_steps) {
            st.completed = false;
            st.step_failure = true;
            st.t_end = t;
            st.y_end = y;
            return st;
        }
        // clamp the attempted step to the next output time / end of span
        double h_use = h;
        double target = t1;
        if (next_out < out_times.size() && dir * (out_times[next_out] - t1) < 0.0)
            target = out_times[next_out];
        bool hit_target = false;
        if (h_use >= std::abs(target - t)) {
            h_use = std::abs(target - t);
            hit_target = true;
        }
        const double hs = dir * h_use;

        f(t + c2 * hs, Vec(y + hs * (a21 * k1)), k2);
        f(t + c3 * hs, Vec(y + hs * (a31 * k1 + a32 * k2)), k3);
        f(t + c4 * hs, Vec(y + hs * (a41 * k1 + a42 * k2 + a43 * k3)), k4);
        f(t + c5 * hs, Vec(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)), k5);
        f(t + hs, Vec(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)), k6);
        y5 = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        f(t + hs, y5, k7);  // FSAL
        yerr = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double err = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
            double e = yerr[i] / sc;
            err += e * e;
        }
        err = std::sqrt(err / static_cast<double>(n));

        if (err <= 1.0) {  // ---- accept
            ++st.n_accepted;
            if (admissible && !(*admissible)(y5)) {
                auto [dt, yb] = detail::locate_boundary(step5, *admissible, t, y, hs);
                st.completed = false;
                st.t_event = t + dt;
                st.y_event = yb;
                st.t_end = t + dt;
                st.y_end = std::move(yb);
                return st;
            }
            t = hit_target ? target : t + hs;
            y.swap(y5);
            k1.swap(k7);  // FSAL
            while (next_out < out_times.size() && dir * (out_times[next_out] - t) <= 0.0)
                obs(next_out++, t, y);
            if (t == t1) {
                st.t_end = t1;
                st.y_end = y;
                return st;
            }
            double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
            h = std::max(h_use * std::min(5.0, std::max(0.2, fac)), 10.0 * h_min);
        } else {  // ---- reject (k1 still holds f(t, y))
            ++st.n_rejected;
            double fac = 0.9 * std::pow(err, -0.2);
            h = h_use * std::min(1.0, std::max(0.1, fac));
            if (h < h_min) {
                st.completed = false;
                st.step_failure = true;
                st.t_end = t;
                st.y_end = y;
                return st;
            }
        }
    }
}

/// Uniform grid helper: `intervals`+1 points from a to b inclusive.
inline std::vector<double> uniform_grid(double a, double b, int intervals) {
    std::vector<double> g(static_cast<size_t>(intervals) + 1);
    for (int i = 0; i <= intervals; ++i)
        g[static_cast<size_t>(i)] = a + (b - a) * static_cast<double>(i) / intervals;
    g.back() = b;
    return g;
}

}  // namespace srkit
