#include "kwp/integrate.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kwp {

void StepControl::validate() const {
    if (!(rtol > 0.0)) throw std::invalid_argument("integrator.rtol must be positive");
    if (!(atol > 0.0)) throw std::invalid_argument("integrator.atol must be positive");
    if (!(h_min > 0.0)) throw std::invalid_argument("integrator.h_min must be positive");
    if (!(h_min <= h_init)) throw std::invalid_argument("integrator.h_init must be >= h_min");
    if (!(h_init <= h_max)) throw std::invalid_argument("integrator.h_max must be >= h_init");
    if (max_steps == 0) throw std::invalid_argument("integrator.max_steps must be positive");
}

const char* status_name(IntegrationStatus s) {
    switch (s) {
        case IntegrationStatus::Completed: return "completed";
        case IntegrationStatus::Singular: return "singular";
        case IntegrationStatus::StepUnderflow: return "step_underflow";
        case IntegrationStatus::MaxSteps: return "max_steps";
    }
    return "unknown";
}

double step_cap(const SystemKind& kind, const Params& p, const StepControl& control) {
    if (is_fast(kind)) return std::min(control.h_max, p.epsilon * p.T / 20.0);
    return control.h_max;
}

namespace {

using Vec = std::array<double, 4>;

auto make_rhs(const SystemKind& kind, const Params& params) {
    return [&kind, &params](double t, const Vec& y, Vec& dy) { dy = detail::dispatch<double>(kind, t, y, params); };
}

bool valid4(const Vec& from, const Vec& to) { return detail::chart_step_ok(from[0], to[0]); }

}  // namespace

Trajectory integrate(const SystemKind& kind, double t0, const State& x0, double t1, const Params& params,
                     const StepControl& control, std::optional<double> sample_dt) {
    params.validate();
    control.validate();
    if (!(t1 > t0)) throw std::invalid_argument("integrate: t1 must exceed t0");
    if (sample_dt && !(*sample_dt > 0.0)) throw std::invalid_argument("integrate: sample_dt must be positive");
    if (!detail::chart_ok(x0.theta)) throw ChartSingularity(x0.theta);

    Trajectory traj;
    traj.kind = kind;
    traj.params = params;
    traj.times.push_back(t0);
    traj.states.push_back(x0);

    const double tiny = 1e-12 * std::max(1.0, std::abs(t1));
    std::size_t next_index = 1;
    auto next_sample = [&] { return t0 + static_cast<double>(next_index) * *sample_dt; };

    auto on_step = [&](const detail::DenseSegment<4>& seg, const Vec& y_new) {
        const double t_new = seg.t0 + seg.h;
        if (!sample_dt) {
            traj.times.push_back(t_new);
            traj.states.push_back(State::from_array(y_new));
            return;
        }
        while (true) {
            const double ts = next_sample();
            if (ts > t_new + tiny || ts >= t1 - tiny) break;
            traj.times.push_back(ts);
            traj.states.push_back(State::from_array(seg.eval(ts)));
            ++next_index;
        }
    };

    auto rhs_fn = make_rhs(kind, params);
    const auto out = detail::drive<4>(rhs_fn, t0, x0.to_array(), t1, control, step_cap(kind, params, control),
                                      valid4, on_step);
    traj.status = out.status;
    traj.status_time = out.t;
    traj.singular_bracket_hi = out.bracket_hi;
    traj.steps_accepted = out.accepted;
    traj.steps_rejected = out.rejected;

    // The endpoint (t1, or where the run stopped) is always recorded.
    if (sample_dt && out.t > traj.times.back()) {
        traj.times.push_back(out.t);
        traj.states.push_back(State::from_array(out.y));
    }
    return traj;
}

State flow(const SystemKind& kind, double t0, const State& x0, double dt, const Params& params,
           const StepControl& control) {
    if (dt == 0.0) return x0;
    if (!detail::chart_ok(x0.theta)) throw ChartSingularity(x0.theta);
    auto rhs_fn = make_rhs(kind, params);
    const auto out = detail::drive<4>(rhs_fn, t0, x0.to_array(), t0 + dt, control,
                                      step_cap(kind, params, control), valid4,
                                      [](const detail::DenseSegment<4>&, const Vec&) {});
    if (out.status != IntegrationStatus::Completed) throw IntegrationError(out.status, out.t);
    return State::from_array(out.y);
}

VariationalResult flow_variational(const SystemKind& kind, double t0, const State& x0, double dt,
                                   const Params& params, const StepControl& control) {
    constexpr std::size_t N = 20;
    std::array<double, N> y0{};
    const auto xv = x0.to_array();
    for (std::size_t i = 0; i < 4; ++i) {
        y0[i] = xv[i];
        y0[4 + 4 * i + i] = 1.0;  // row-major identity
    }
    if (dt == 0.0) return {x0, Eigen::Matrix4d::Identity()};

    auto f = [&](double t, const std::array<double, N>& y, std::array<double, N>& dy) {
        const State x{y[0], y[1], y[2], y[3]};
        const auto d = detail::dispatch<double>(kind, t, x.to_array(), params);
        const Eigen::Matrix4d jac = rhs_jacobian(kind, t, x, params);
        Eigen::Matrix4d phi;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) phi(r, c) = y[4 + 4 * static_cast<std::size_t>(r) + static_cast<std::size_t>(c)];
        const Eigen::Matrix4d dphi = jac * phi;
        for (std::size_t i = 0; i < 4; ++i) dy[i] = d[i];
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) dy[4 + 4 * static_cast<std::size_t>(r) + static_cast<std::size_t>(c)] = dphi(r, c);
    };
    auto valid = [](const std::array<double, N>& from, const std::array<double, N>& to) {
        return detail::chart_step_ok(from[0], to[0]);
    };
    const auto out = detail::drive<N>(f, t0, y0, t0 + dt, control, step_cap(kind, params, control), valid,
                                      [](const detail::DenseSegment<N>&, const std::array<double, N>&) {});
    if (out.status != IntegrationStatus::Completed) throw IntegrationError(out.status, out.t);
    VariationalResult res;
    res.x = State{out.y[0], out.y[1], out.y[2], out.y[3]};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) res.phi(r, c) = out.y[4 + 4 * static_cast<std::size_t>(r) + static_cast<std::size_t>(c)];
    return res;
}

State integrate_fixed(const SystemKind& kind, double t0, const State& x0, double t1, const Params& params,
                      int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("integrate_fixed: n_steps must be positive");
    auto rhs_fn = make_rhs(kind, params);
    return State::from_array(detail::fixed_steps<4>(rhs_fn, t0, x0.to_array(), t1, n_steps));
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 aligned points");
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

OrderResult convergence_order(const OrderTestCase& test) {
    StepControl tight;
    tight.rtol = 1e-14;
    tight.atol = 1e-15;
    tight.h_init = 1e-4;
    tight.h_min = 1e-14;
    const State ref = flow(test.kind, test.t0, test.x0, test.t1 - test.t0, test.params, tight);

    OrderResult res;
    for (int n : test.step_counts) {
        const State x = integrate_fixed(test.kind, test.t0, test.x0, test.t1, test.params, n);
        res.step_sizes.push_back((test.t1 - test.t0) / n);
        res.errors.push_back(max_abs_diff(x, ref));
    }
    res.slope = loglog_slope(res.step_sizes, res.errors);
    return res;
}

}  // namespace kwp
