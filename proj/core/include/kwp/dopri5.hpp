// Dormand-Prince 5(4) embedded pair with PI step control and the standard
// fourth-order continuous extension. Works on fixed-size arrays so the same
// driver integrates single states, finite-difference bundles and variational
// systems.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

#include "kwp/errors.hpp"

namespace kwp {

struct StepControl {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_init = 1e-3;
    double h_max = 0.1;
    double h_min = 1e-12;
    std::size_t max_steps = 20'000'000;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

enum class IntegrationStatus { Completed, Singular, StepUnderflow, MaxSteps };

const char* status_name(IntegrationStatus s);

namespace detail {

namespace dp {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

/// Continuous extension over one accepted step [t0, t0 + h].
template <std::size_t N>
struct DenseSegment {
    using Vec = std::array<double, N>;
    double t0 = 0.0;
    double h = 0.0;
    std::array<Vec, 5> r{};

    [[nodiscard]] Vec eval(double t) const {
        const double s = (t - t0) / h;
        const double s1 = 1.0 - s;
        Vec y;
        for (std::size_t i = 0; i < N; ++i)
            y[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        return y;
    }
};

template <std::size_t N>
struct StepResult {
    using Vec = std::array<double, N>;
    Vec y1{};
    Vec err{};
    std::array<Vec, 7> k{};
};

/// One Dormand-Prince step of signed size h from (t, y) with k[0] = f(t, y)
/// already filled in.
template <std::size_t N, class Rhs>
void dopri_step(Rhs& f, double t, const std::array<double, N>& y, double h, StepResult<N>& out) {
    using namespace dp;
    using Vec = std::array<double, N>;
    auto& k = out.k;
    Vec tmp;
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * k[0][i];
    f(t + c2 * h, tmp, k[1]);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * k[0][i] + a32 * k[1][i]);
    f(t + c3 * h, tmp, k[2]);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a41 * k[0][i] + a42 * k[1][i] + a43 * k[2][i]);
    f(t + c4 * h, tmp, k[3]);
    for (std::size_t i = 0; i < N; ++i)
        tmp[i] = y[i] + h * (a51 * k[0][i] + a52 * k[1][i] + a53 * k[2][i] + a54 * k[3][i]);
    f(t + c5 * h, tmp, k[4]);
    for (std::size_t i = 0; i < N; ++i)
        tmp[i] = y[i] + h * (a61 * k[0][i] + a62 * k[1][i] + a63 * k[2][i] + a64 * k[3][i] + a65 * k[4][i]);
    f(t + h, tmp, k[5]);
    for (std::size_t i = 0; i < N; ++i)
        out.y1[i] = y[i] + h * (a71 * k[0][i] + a73 * k[2][i] + a74 * k[3][i] + a75 * k[4][i] + a76 * k[5][i]);
    f(t + h, out.y1, k[6]);
    for (std::size_t i = 0; i < N; ++i)
        out.err[i] =
            h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
}

template <std::size_t N>
DenseSegment<N> make_dense(double t, const std::array<double, N>& y0, double h, const StepResult<N>& s) {
    using namespace dp;
    DenseSegment<N> seg;
    seg.t0 = t;
    seg.h = h;
    const auto& k = s.k;
    for (std::size_t i = 0; i < N; ++i) {
        const double ydiff = s.y1[i] - y0[i];
        const double bspl = h * k[0][i] - ydiff;
        seg.r[0][i] = y0[i];
        seg.r[1][i] = ydiff;
        seg.r[2][i] = bspl;
        seg.r[3][i] = ydiff - h * k[6][i] - bspl;
        seg.r[4][i] = h * (d1 * k[0][i] + d3 * k[2][i] + d4 * k[3][i] + d5 * k[4][i] + d6 * k[5][i] + d7 * k[6][i]);
    }
    return seg;
}

template <std::size_t N>
struct DriveOutcome {
    IntegrationStatus status = IntegrationStatus::Completed;
    double t = 0.0;  ///< last successfully reached time
    std::array<double, N> y{};
    double bracket_hi = 0.0;  ///< for Singular: the crossing lies in [t, bracket_hi]
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

/// Width below which a chart-guard failure is reported as Singular.
inline constexpr double kSingularBracket = 1e-9;

/// Adaptive integration from t0 to t1 (either direction). `rhs(t, y, dy)` may
/// throw ChartSingularity; `valid(y, y_new)` rejects steps violating the guard.
/// `on_step(segment, y_new)` is called after every accepted step.
template <std::size_t N, class Rhs, class Valid, class OnStep>
DriveOutcome<N> drive(Rhs&& rhs, double t0, const std::array<double, N>& y0, double t1, const StepControl& ctl,
                      double h_cap, Valid&& valid, OnStep&& on_step) {
    using Vec = std::array<double, N>;
    DriveOutcome<N> out;
    out.t = t0;
    out.y = y0;
    if (t1 == t0) return out;

    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double cap = std::min(ctl.h_max, h_cap);
    double h = std::min(ctl.h_init, cap);
    double t = t0;
    Vec y = y0;
    StepResult<N> st;
    try {
        rhs(t, y, st.k[0]);
    } catch (const ChartSingularity&) {
        out.status = IntegrationStatus::Singular;
        out.bracket_hi = t0;
        return out;
    }

    constexpr double kSafety = 0.9;
    constexpr double kBeta = 0.04;
    constexpr double kAlpha = 0.2 - 0.75 * kBeta;
    double errold = 1e-4;
    bool last_rejected = false;
    bool guard_trouble = false;
    std::size_t attempts = 0;

    while (true) {
        const double remaining = dir * (t1 - t);
        if (remaining <= 0.0) break;
        if (attempts++ >= ctl.max_steps) {
            out.status = IntegrationStatus::MaxSteps;
            break;
        }
        bool last = false;
        double hs = h;
        if (hs >= remaining * (1.0 - 1e-13)) {
            hs = remaining;
            last = true;
        }

        bool failed = false;
        try {
            dopri_step<N>(rhs, t, y, dir * hs, st);
            failed = !valid(y, st.y1);
        } catch (const ChartSingularity&) {
            failed = true;
        }
        if (failed) {
            guard_trouble = true;
            ++out.rejected;
            if (hs < kSingularBracket) {
                out.status = IntegrationStatus::Singular;
                out.bracket_hi = t + dir * hs;
                break;
            }
            h = 0.5 * hs;
            last_rejected = true;
            continue;
        }

        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = ctl.atol + ctl.rtol * std::max(std::abs(y[i]), std::abs(st.y1[i]));
            const double r = st.err[i] / sc;
            sum += r * r;
        }
        const double err = std::sqrt(sum / static_cast<double>(N));

        if (err <= 1.0 && std::isfinite(err)) {
            const double t_new = last ? t1 : t + dir * hs;
            const auto seg = make_dense<N>(t, y, dir * hs, st);
            t = t_new;
            y = st.y1;
            st.k[0] = st.k[6];
            ++out.accepted;
            on_step(seg, y);

            double fac = std::pow(err, kAlpha) * std::pow(errold, -kBeta) / kSafety;
            fac = std::clamp(fac, 0.1, 5.0);  // growth in [0.2, 10]
            double h_new = hs / fac;
            if (last_rejected || guard_trouble) h_new = std::min(h_new, hs);
            if (last) h_new = std::max(h_new, h);
            h = std::min(h_new, cap);
            errold = std::max(err, 1e-4);
            last_rejected = false;
            guard_trouble = false;
            if (last) break;
        } else {
            ++out.rejected;
            const double shrink = std::isfinite(err) ? std::max(0.2, kSafety * std::pow(err, -0.2)) : 0.2;
            h = hs * shrink;
            last_rejected = true;
            if (h < ctl.h_min) {
                out.status = IntegrationStatus::StepUnderflow;
                break;
            }
        }
    }
    out.t = t;
    out.y = y;
    return out;
}

/// Fixed-step integration with the fifth-order solution, n_steps equal steps.
template <std::size_t N, class Rhs>
std::array<double, N> fixed_steps(Rhs&& rhs, double t0, const std::array<double, N>& y0, double t1,
                                  int n_steps) {
    StepResult<N> st;
    std::array<double, N> y = y0;
    const double h = (t1 - t0) / n_steps;
    for (int i = 0; i < n_steps; ++i) {
        const double t = t0 + h * i;
        rhs(t, y, st.k[0]);
        dopri_step<N>(rhs, t, y, h, st);
        y = st.y1;
    }
    return y;
}

}  // namespace detail
}  // namespace kwp
