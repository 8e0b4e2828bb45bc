#include "kwp/orbits.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace kwp {

StepControl default_orbit_control() {
    StepControl c;
    c.rtol = 1e-11;
    c.atol = 1e-12;
    c.h_init = 1e-3;
    c.h_max = 0.05;
    c.h_min = 1e-13;
    return c;
}

namespace {

void require_periodic(const SystemKind& kind, const Params& params) {
    params.validate();
    if (is_fast(kind) && !params.k())
        throw std::invalid_argument("fast systems need epsilon = 1/k for a T-periodic vector field");
}

Eigen::Vector4d vec(const State& x) { return {x.theta, x.phi, x.p_theta, x.p_phi}; }
State state(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }

// Translate guard failures into GuardHit, leave other integration failures alone.
template <class Fn>
auto guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ChartSingularity&) {
        throw GuardHit(0.0);
    } catch (const IntegrationError& e) {
        if (e.status() == IntegrationStatus::Singular) throw GuardHit(e.time());
        throw;
    }
}

}  // namespace

State strobe_map(const State& x, double t0, const SystemKind& kind, const Params& params,
                 const StepControl& control) {
    require_periodic(kind, params);
    return flow(kind, t0, x, params.T, params, control);
}

Multipliers floquet(const Eigen::Matrix4d& monodromy) {
    Eigen::EigenSolver<Eigen::Matrix4d> es(monodromy, false);
    const auto ev = es.eigenvalues();
    Multipliers m;
    for (int i = 0; i < 4; ++i) m[static_cast<std::size_t>(i)] = ev(i);
    std::sort(m.begin(), m.end(), [](const auto& a, const auto& b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (ma != mb) return ma > mb;
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return m;
}

double max_modulus(const Multipliers& m) {
    double r = 0.0;
    for (const auto& z : m) r = std::max(r, std::abs(z));
    return r;
}

Eigen::Matrix4d monodromy_fd(const PeriodicOrbit& orbit, double t_base, const StepControl& control,
                             double rel_step) {
    require_periodic(orbit.kind, orbit.params);
    const State base = t_base == 0.0 ? orbit.x0 : flow(orbit.kind, 0.0, orbit.x0, t_base, orbit.params, control);
    const double h = rel_step * (1.0 + max_abs(base));
    std::array<State, 8> pts;
    for (int j = 0; j < 4; ++j) {
        Eigen::Vector4d e = Eigen::Vector4d::Zero();
        e(j) = h;
        pts[static_cast<std::size_t>(2 * j)] = state(vec(base) + e);
        pts[static_cast<std::size_t>(2 * j + 1)] = state(vec(base) - e);
    }
    const auto img = flow_bundle<8>(orbit.kind, t_base, pts, orbit.params.T, orbit.params, control);
    Eigen::Matrix4d m;
    for (int j = 0; j < 4; ++j)
        m.col(j) = (vec(img[static_cast<std::size_t>(2 * j)]) - vec(img[static_cast<std::size_t>(2 * j + 1)])) /
                   (2.0 * h);
    return m;
}

Eigen::Matrix4d monodromy_var(const PeriodicOrbit& orbit, double t_base, const StepControl& control) {
    require_periodic(orbit.kind, orbit.params);
    const State base = t_base == 0.0 ? orbit.x0 : flow(orbit.kind, 0.0, orbit.x0, t_base, orbit.params, control);
    return flow_variational(orbit.kind, t_base, base, orbit.params.T, orbit.params, control).phi;
}

OrbitProfile orbit_profile(const PeriodicOrbit& orbit, int n_samples, const StepControl& control) {
    if (n_samples < 1000) throw std::invalid_argument("orbit_profile: n_samples must be >= 1000");
    const double T = orbit.params.T;
    const Trajectory tr = guarded([&] {
        return integrate(orbit.kind, 0.0, orbit.x0, T, orbit.params, control, T / n_samples);
    });
    if (!tr.completed()) throw IntegrationError(tr.status, tr.status_time);
    OrbitProfile p{height(tr.states[0]), height(tr.states[0]), energy(tr.states[0]), energy(tr.states[0])};
    for (const State& s : tr.states) {
        const double g = height(s), e = energy(s);
        p.min_height = std::min(p.min_height, g);
        p.max_height = std::max(p.max_height, g);
        p.min_energy = std::min(p.min_energy, e);
        p.max_energy = std::max(p.max_energy, e);
    }
    return p;
}

double non_falling_check(const PeriodicOrbit& orbit, int n_samples, const StepControl& control) {
    return orbit_profile(orbit, n_samples, control).min_height;
}

PeriodicOrbit find_orbit_newton(const SystemKind& kind, const Params& params, const State& guess,
                                const NewtonOptions& opts) {
    require_periodic(kind, params);
    if (!detail::chart_ok(guess.theta)) throw GuardHit(0.0);
    const StepControl& ctl = opts.control;
    const double T = params.T;

    auto residual_vec = [&](const State& x) -> Eigen::Vector4d {
        return guarded([&] { return Eigen::Vector4d(vec(strobe_map(x, 0.0, kind, params, ctl)) - vec(x)); });
    };

    State x = guess;
    Eigen::Vector4d F = residual_vec(x);
    double r = F.cwiseAbs().maxCoeff();
    int iter = 0;
    while (!(r < opts.tol_res)) {
        if (!std::isfinite(r)) throw NoConvergence("non-finite residual", x, r);
        if (iter >= opts.max_iter) throw NoConvergence("iteration limit reached", x, r);
        ++iter;

        const double h = opts.fd_rel_step * (1.0 + max_abs(x));
        std::array<State, 5> pts;
        pts[0] = x;
        for (int j = 0; j < 4; ++j) {
            Eigen::Vector4d e = Eigen::Vector4d::Zero();
            e(j) = h;
            pts[static_cast<std::size_t>(j + 1)] = state(vec(x) + e);
        }
        const auto img = guarded([&] { return flow_bundle<5>(kind, 0.0, pts, T, params, ctl); });
        Eigen::Matrix4d J;
        for (int j = 0; j < 4; ++j) J.col(j) = (vec(img[static_cast<std::size_t>(j + 1)]) - vec(img[0])) / h;
        J -= Eigen::Matrix4d::Identity();

        Eigen::JacobiSVD<Eigen::Matrix4d> svd(J);
        const auto sv = svd.singularValues();
        const double cond = sv(3) > 0.0 ? sv(0) / sv(3) : std::numeric_limits<double>::infinity();
        if (!(cond <= opts.max_condition)) throw SingularJacobian(cond);
        const Eigen::Vector4d dx = J.fullPivLu().solve(-F);

        double lambda = 1.0;
        bool accepted = false;
        for (int b = 0; b <= opts.max_backtracks; ++b, lambda *= 0.5) {
            const State trial = state(vec(x) + lambda * dx);
            if (!detail::chart_ok(trial.theta)) continue;
            Eigen::Vector4d Ft;
            try {
                Ft = residual_vec(trial);
            } catch (const Error&) {
                continue;
            }
            const double rt = Ft.cwiseAbs().maxCoeff();
            if (std::isfinite(rt) && rt <= (1.0 - 1e-4 * lambda) * r) {
                x = trial;
                F = Ft;
                r = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) throw NoConvergence("line search failed", x, r);
    }

    PeriodicOrbit orbit;
    orbit.kind = kind;
    orbit.params = params;
    orbit.x0 = x;
    orbit.period = T;
    orbit.residual = r;
    orbit.iterations = iter;
    orbit.multipliers = floquet(monodromy_fd(orbit));
    orbit.stable = max_modulus(orbit.multipliers) < 1.0 - opts.stability_margin;
    orbit.min_height = non_falling_check(orbit, opts.height_samples, ctl);
    if (opts.keep_trajectory) orbit.trajectory = integrate(kind, 0.0, x, T, params, ctl, T / opts.height_samples);
    return orbit;
}

State attractor_seed(const SystemKind& kind, const Params& params, double t_transient, const State& x_start,
                     const StepControl& control) {
    params.validate();
    if (!(t_transient >= 0.0)) throw std::invalid_argument("attractor_seed: t_transient must be non-negative");
    const double periods = std::ceil(t_transient / params.T - 1e-12);
    const double t_end = std::max(1.0, periods) * params.T;
    return guarded([&] { return flow(kind, 0.0, x_start, t_end, params, control); });
}

// ---------------------------------------------------------------------------

namespace {

double eps_of(const Snapshot& s) { return std::holds_alternative<AveragedSystem>(s.kind) ? 0.0 : s.params.epsilon; }

struct ForcingParts {
    int type = 0;
    double A = 0.0;
    double alpha = 0.0;
    const FourierForcing* fourier = nullptr;
};

ForcingParts parts(const ForcingSpec& f) {
    ForcingParts p;
    p.type = static_cast<int>(f.index());
    if (const auto* r = std::get_if<RotatingForcing>(&f)) p.A = r->A;
    if (const auto* o = std::get_if<OscillatingAngleForcing>(&f)) {
        p.A = o->A;
        p.alpha = o->alpha;
    }
    p.fourier = std::get_if<FourierForcing>(&f);
    return p;
}

bool same_fourier(const FourierForcing* a, const FourierForcing* b) {
    if (!a || !b) return a == b;
    return a->x_cos == b->x_cos && a->x_sin == b->x_sin && a->z_cos == b->z_cos && a->z_sin == b->z_sin;
}

}  // namespace

int differing_parameters(const Snapshot& a, const Snapshot& b) {
    const auto fa = parts(a.params.forcing), fb = parts(b.params.forcing);
    int n = 0;
    n += eps_of(a) != eps_of(b) || a.kind.index() != b.kind.index();
    n += a.params.a != b.params.a;
    n += a.params.T != b.params.T;
    n += a.params.mu != b.params.mu;
    if (fa.type != fb.type || !same_fourier(fa.fourier, fb.fourier)) {
        // A switch from zero forcing to a family counts as one change in A.
        const bool zero_to_family = (fa.type == 0 || fb.type == 0) && fa.alpha == fb.alpha;
        n += zero_to_family ? 1 : 2;
    } else {
        n += fa.A != fb.A;
        n += fa.alpha != fb.alpha;
    }
    return n;
}

std::optional<Snapshot> midpoint(const Snapshot& a, const Snapshot& b) {
    Snapshot m = a;
    const double ea = eps_of(a), eb = eps_of(b);
    if (ea != eb || a.kind.index() != b.kind.index()) {
        if (std::holds_alternative<ModifiedSystem>(a.kind) || std::holds_alternative<ModifiedSystem>(b.kind))
            return std::nullopt;
        const double em = 0.5 * (ea + eb);
        const int k = static_cast<int>(std::lround(1.0 / em));
        const double e_mid = 1.0 / k;
        if (e_mid == ea || e_mid == eb) return std::nullopt;
        m.kind = FullSystem{};
        m.params.epsilon = e_mid;
        return m;
    }
    auto lerp = [](double x, double y) { return 0.5 * (x + y); };
    if (a.params.a != b.params.a) {
        m.params.a = lerp(a.params.a, b.params.a);
        return m;
    }
    if (a.params.mu != b.params.mu) {
        m.params.mu = lerp(a.params.mu, b.params.mu);
        return m;
    }
    if (a.params.T != b.params.T) {
        m.params.T = lerp(a.params.T, b.params.T);
        return m;
    }
    const auto fa = parts(a.params.forcing), fb = parts(b.params.forcing);
    if (fa.fourier || fb.fourier) return std::nullopt;
    // Zero forcing continues into a family as amplitude 0.
    const int type = fa.type == 0 ? fb.type : fa.type;
    const double A = lerp(fa.A, fb.A);
    const double alpha = lerp(fa.type == 0 ? fb.alpha : fa.alpha, fb.type == 0 ? fa.alpha : fb.alpha);
    if (type == 1) m.params.forcing = RotatingForcing{A};
    else if (type == 2) m.params.forcing = OscillatingAngleForcing{A, alpha};
    else return std::nullopt;
    return m;
}

std::vector<PeriodicOrbit> continuation(const ContinuationPlan& plan) {
    if (plan.schedule.empty()) throw std::invalid_argument("continuation: schedule is empty");
    for (std::size_t i = 1; i < plan.schedule.size(); ++i)
        if (differing_parameters(plan.schedule[i - 1], plan.schedule[i]) > 1)
            throw std::invalid_argument("continuation: snapshots " + std::to_string(i - 1) + " and " +
                                        std::to_string(i) + " differ in more than one parameter");

    std::vector<PeriodicOrbit> reached;
    auto solve = [&](const Snapshot& s, const State& guess) {
        return find_orbit_newton(s.kind, s.params, guess, plan.newton);
    };

    try {
        reached.push_back(solve(plan.schedule[0], plan.seed));
    } catch (const Error& e) {
        throw ContinuationStuck(0, {}, e.what());
    }

    for (std::size_t i = 1; i < plan.schedule.size(); ++i) {
        const Snapshot& target = plan.schedule[i];
        Snapshot from = plan.schedule[i - 1];
        State seed = reached.back().x0;
        Snapshot to = target;
        int halvings = 0;
        while (true) {
            try {
                PeriodicOrbit o = solve(to, seed);
                seed = o.x0;
                if (differing_parameters(to, target) == 0) {
                    reached.push_back(std::move(o));
                    break;
                }
                from = to;
                to = target;
                continue;
            } catch (const Error& e) {
                if (++halvings > plan.max_bisections)
                    throw ContinuationStuck(i, reached, std::string("bisection exhausted: ") + e.what());
                const auto mid = midpoint(from, to);
                if (!mid) throw ContinuationStuck(i, reached, std::string("no midpoint: ") + e.what());
                to = *mid;
            }
        }
    }
    return reached;
}

}  // namespace kwp
