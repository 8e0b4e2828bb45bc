// Adaptive integration of the three systems with sampled output, endpoint
// flow maps, shared-step bundles and variational flows.
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kwp/dopri5.hpp"
#include "kwp/dynamics.hpp"
#include "kwp/types.hpp"

namespace kwp {

struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    SystemKind kind;
    Params params;
    IntegrationStatus status = IntegrationStatus::Completed;
    /// Completed: t1. Otherwise the last time successfully reached.
    double status_time = 0.0;
    /// Singular only: the guard crossing lies between status_time and this.
    double singular_bracket_hi = 0.0;
    std::size_t steps_accepted = 0;
    std::size_t steps_rejected = 0;

    [[nodiscard]] bool completed() const { return status == IntegrationStatus::Completed; }
};

class IntegrationError : public Error {
public:
    IntegrationError(IntegrationStatus status, double t)
        : Error(std::string("integration failed: ") + status_name(status) + " at t=" + std::to_string(t)),
          status_(status), time_(t) {}
    [[nodiscard]] IntegrationStatus status() const { return status_; }
    [[nodiscard]] double time() const { return time_; }

private:
    IntegrationStatus status_;
    double time_;
};

/// Largest step allowed for this kind: fast systems are capped at eps*T/20 so
/// the pivot oscillation is resolved.
double step_cap(const SystemKind& kind, const Params& p, const StepControl& control);

/// Integrate from t0 to t1 > t0. With sample_dt, records t0, t0 + j*sample_dt
/// and t1 via dense interpolation; without it, records every accepted step.
Trajectory integrate(const SystemKind& kind, double t0, const State& x0, double t1, const Params& params,
                     const StepControl& control, std::optional<double> sample_dt);

/// Endpoint of the flow over dt (dt may be negative or zero). Throws
/// IntegrationError when the integration does not complete.
State flow(const SystemKind& kind, double t0, const State& x0, double dt, const Params& params,
           const StepControl& control);

/// Flow of several initial states advanced with one shared step sequence, so
/// differences between members are differences of one smooth discrete map.
template <std::size_t M>
std::array<State, M> flow_bundle(const SystemKind& kind, double t0, const std::array<State, M>& x0, double dt,
                                 const Params& params, const StepControl& control);

/// Flow together with its state-transition matrix (variational equations
/// Y' = J(t, x) Y, Y(t0) = I, J by forward-mode differentiation).
struct VariationalResult {
    State x;
    Eigen::Matrix4d phi;
};
VariationalResult flow_variational(const SystemKind& kind, double t0, const State& x0, double dt,
                                   const Params& params, const StepControl& control);

/// n_steps fixed Dormand-Prince steps (fifth-order solution).
State integrate_fixed(const SystemKind& kind, double t0, const State& x0, double t1, const Params& params,
                      int n_steps);

struct OrderTestCase {
    SystemKind kind;
    Params params;
    State x0;
    double t0 = 0.0;
    double t1 = 1.0;
    std::vector<int> step_counts;
};

struct OrderResult {
    std::vector<double> step_sizes;
    std::vector<double> errors;
    double slope = 0.0;
};

/// Least-squares slope of log(error) against log(h) over fixed-step runs,
/// errors measured against a tight-tolerance adaptive reference.
OrderResult convergence_order(const OrderTestCase& test);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------

namespace detail {

inline bool chart_ok(double theta) { return std::abs(std::cos(theta)) >= kChartGuard; }

/// A step must end inside the chart and may not jump across cos(theta) = 0.
inline bool chart_step_ok(double from, double to) {
    return chart_ok(to) && std::signbit(std::cos(from)) == std::signbit(std::cos(to));
}

template <std::size_t M>
std::array<State, M> flow_bundle_impl(const SystemKind& kind, double t0, const std::array<State, M>& x0,
                                      double dt, const Params& params, const StepControl& control) {
    constexpr std::size_t N = 4 * M;
    std::array<double, N> y0{};
    for (std::size_t m = 0; m < M; ++m) {
        const auto v = x0[m].to_array();
        for (std::size_t i = 0; i < 4; ++i) y0[4 * m + i] = v[i];
    }
    auto f = [&](double t, const std::array<double, N>& y, std::array<double, N>& dy) {
        for (std::size_t m = 0; m < M; ++m) {
            const Vec4<double> xm{y[4 * m], y[4 * m + 1], y[4 * m + 2], y[4 * m + 3]};
            const auto d = dispatch<double>(kind, t, xm, params);
            for (std::size_t i = 0; i < 4; ++i) dy[4 * m + i] = d[i];
        }
    };
    auto valid = [](const std::array<double, N>& from, const std::array<double, N>& to) {
        for (std::size_t m = 0; m < M; ++m)
            if (!chart_step_ok(from[4 * m], to[4 * m])) return false;
        return true;
    };
    const auto out = drive<N>(f, t0, y0, t0 + dt, control, step_cap(kind, params, control), valid,
                              [](const DenseSegment<N>&, const std::array<double, N>&) {});
    if (out.status != IntegrationStatus::Completed) throw IntegrationError(out.status, out.t);
    std::array<State, M> res;
    for (std::size_t m = 0; m < M; ++m)
        res[m] = State{out.y[4 * m], out.y[4 * m + 1], out.y[4 * m + 2], out.y[4 * m + 3]};
    return res;
}

}  // namespace detail

template <std::size_t M>
std::array<State, M> flow_bundle(const SystemKind& kind, double t0, const std::array<State, M>& x0, double dt,
                                 const Params& params, const StepControl& control) {
    if (dt == 0.0) return x0;
    return detail::flow_bundle_impl<M>(kind, t0, x0, dt, params, control);
}

}  // namespace kwp
