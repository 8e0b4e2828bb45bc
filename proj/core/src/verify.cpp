#include "kwp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace kwp {

using std::numbers::pi;

bool RegionSpec::contains(const State& x) const { return height(x) >= delta && energy(x) <= c * c; }

void RegionSpec::validate() const {
    if (!(c > 0.0)) throw std::invalid_argument("region.c must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("region.delta must be positive");
}

const char* component_name(BoundaryComponent c) {
    switch (c) {
        case BoundaryComponent::EnergyShell: return "energy_shell";
        case BoundaryComponent::HeightFace: return "height_face";
        case BoundaryComponent::TangencySet: return "tangency_set";
        case BoundaryComponent::HeightFaceOut: return "height_face_out";
        case BoundaryComponent::HeightFaceIn: return "height_face_in";
    }
    return "unknown";
}

const char* class_name(BoundaryClass c) {
    switch (c) {
        case BoundaryClass::Egress: return "egress";
        case BoundaryClass::Ingress: return "ingress";
        case BoundaryClass::TangentExit: return "tangent_exit";
        case BoundaryClass::InteriorBoundary: return "interior_boundary";
        case BoundaryClass::Indeterminate: return "indeterminate";
    }
    return "unknown";
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Point on the face g = delta: theta uniform over the admissible band, phi on
/// either branch of sin(phi) = delta / cos(theta).
void face_position(Rng& rng, double delta, double& theta, double& phi) {
    const double band = std::acos(delta);
    theta = uniform(rng, -band, band);
    const double s = std::min(1.0, delta / std::cos(theta));
    const double base = std::asin(s);
    phi = uniform(rng, 0.0, 1.0) < 0.5 ? base : pi - base;
}

/// Momenta in the scaled coordinates (u, v) = (p_theta, p_phi / cos(theta)),
/// where E = (u^2 + v^2) / 2.
State with_scaled_momenta(double theta, double phi, double u, double v) {
    return {theta, phi, u, v * std::cos(theta)};
}

State sample_face(Rng& rng, const RegionSpec& r) {
    double th = 0, ph = 0;
    face_position(rng, r.delta, th, ph);
    const double R = std::sqrt(2.0) * r.c;
    const double rad = R * std::sqrt(uniform(rng, 0.0, 1.0));
    const double ang = uniform(rng, 0.0, 2.0 * pi);
    return with_scaled_momenta(th, ph, rad * std::cos(ang), rad * std::sin(ang));
}

State sample_tangent(Rng& rng, const RegionSpec& r, bool zero_momentum) {
    const double R = std::sqrt(2.0) * r.c;
    while (true) {
        double th = 0, ph = 0;
        face_position(rng, r.delta, th, ph);
        if (zero_momentum) return {th, ph, 0.0, 0.0};
        // dg/dt = -u sin(theta) sin(phi) + v cos(phi) = 0
        const double a = std::sin(th) * std::sin(ph);
        const double b = std::cos(ph);
        double u = 0, v = 0;
        if (std::abs(b) >= std::abs(a)) {
            u = uniform(rng, -R, R);
            v = u * a / b;
        } else {
            v = uniform(rng, -R, R);
            u = v * b / a;
        }
        if (u * u + v * v <= R * R) return with_scaled_momenta(th, ph, u, v);
    }
}

State sample_shell(Rng& rng, const RegionSpec& r) {
    const double band = std::acos(r.delta);
    const double R = std::sqrt(2.0) * r.c;
    while (true) {
        const double th = uniform(rng, -band, band);
        const double ph = uniform(rng, 0.0, pi);
        if (std::cos(th) * std::sin(ph) < r.delta) continue;
        const double ang = uniform(rng, 0.0, 2.0 * pi);
        return with_scaled_momenta(th, ph, R * std::cos(ang), R * std::sin(ang));
    }
}

}  // namespace

std::vector<State> sample_boundary(const RegionSpec& region, BoundaryComponent component, std::size_t n,
                                   std::uint64_t seed) {
    region.validate();
    if (n < 1) throw std::invalid_argument("sample_boundary: n must be >= 1");
    if (region.delta >= 1.0) throw EmptySet("g = cos(theta) sin(phi) cannot exceed 1: region is (nearly) empty");

    Rng rng(seed);
    std::vector<State> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (component) {
            case BoundaryComponent::EnergyShell: out.push_back(sample_shell(rng, region)); break;
            case BoundaryComponent::HeightFace: out.push_back(sample_face(rng, region)); break;
            case BoundaryComponent::TangencySet: out.push_back(sample_tangent(rng, region, i == 0)); break;
            case BoundaryComponent::HeightFaceOut:
            case BoundaryComponent::HeightFaceIn: {
                const double want = component == BoundaryComponent::HeightFaceOut ? 1.0 : -1.0;
                while (true) {
                    State x = sample_face(rng, region);
                    const double rate = height_rate(x);
                    if (rate == 0.0) continue;
                    if (rate * want < 0.0) {
                        x.p_theta = -x.p_theta;
                        x.p_phi = -x.p_phi;
                    }
                    out.push_back(x);
                    break;
                }
                break;
            }
        }
    }
    return out;
}

LemmaReport check_lemma(int lemma_id, const RegionSpec& region, const Params& params, std::size_t n,
                        std::uint64_t seed, int phase_grid) {
    if (lemma_id < 1 || lemma_id > 4) throw std::invalid_argument("check_lemma: lemma_id must be 1..4");
    if (phase_grid < 1) throw std::invalid_argument("check_lemma: phase_grid must be >= 1");
    params.validate();

    const bool tangency = lemma_id == 1 || lemma_id == 3;
    const bool averaged = lemma_id >= 3;
    const Branch branch = averaged ? Branch::Averaged : Branch::Modified;
    const auto samples = sample_boundary(
        region, tangency ? BoundaryComponent::TangencySet : BoundaryComponent::EnergyShell, n, seed);

    // Phases come from a separate stream so the samples match sample_boundary.
    Rng phase_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const double T = params.T;
    const double fast = params.epsilon * T;

    LemmaReport rep;
    rep.lemma_id = lemma_id;
    rep.n_samples = n;
    rep.seed = seed;
    rep.phase_grid = phase_grid;
    rep.worst_margin = -std::numeric_limits<double>::infinity();
    for (const State& x : samples) {
        const double offset = uniform(phase_rng, 0.0, 1.0);
        for (int j = 0; j < phase_grid; ++j) {
            // Modified: random slow base plus a grid over one fast period.
            // Averaged: jittered grid over [0, T).
            const double t = averaged ? (j + offset) * T / phase_grid
                                      : offset * T + static_cast<double>(j) * fast / phase_grid;
            const double value = tangency ? height_accel(x, t, params, branch) : energy_rate(x, t, params, branch);
            ++rep.evaluations;
            if (value > rep.worst_margin) {
                rep.worst_margin = value;
                rep.worst_point = x;
                rep.worst_time = t;
            }
        }
    }
    rep.pass = rep.worst_margin < 0.0;
    return rep;
}

double energy_rate_bound(const Params& params) {
    const double w = params.omega();
    return 1.0 + 2.0 * forcing_bound(params.forcing) + params.a * params.a * w * w;
}

BoundEstimate estimate_bounds(const Params& params, std::size_t n, std::uint64_t seed) {
    params.validate();
    if (params.mu == 0.0) throw DegenerateFriction();
    BoundEstimate est;
    est.B = energy_rate_bound(params);
    est.c_min = est.B / params.mu;

    const double c = 1.2 * est.c_min;
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        if (check_lemma(3, RegionSpec{c, mid}, params, n, seed).pass) lo = mid;
        else hi = mid;
    }
    est.delta_max = lo;
    return est;
}

BoundaryClass egress_classify(const State& x, const RegionSpec& region, const Params& params, Branch branch,
                              double t0) {
    constexpr double kTol = 1e-10;
    const double g = height(x);
    const double e = energy(x);
    const double c2 = region.c * region.c;
    const double e_tol = 1e-9 * std::max(1.0, c2);

    const bool on_face = std::abs(g - region.delta) <= 1e-9 && e <= c2 + e_tol;
    const bool on_shell = std::abs(e - c2) <= e_tol && g >= region.delta - 1e-9;
    if (on_face) {
        const double rate = height_rate(x);
        if (rate < -kTol) return BoundaryClass::Egress;
        if (rate > kTol) return BoundaryClass::Ingress;
        return height_accel(x, t0, params, branch) < 0.0 ? BoundaryClass::TangentExit : BoundaryClass::Indeterminate;
    }
    if (on_shell) {
        const double rate = energy_rate(x, t0, params, branch);
        if (rate < 0.0) return BoundaryClass::InteriorBoundary;
        if (rate > 0.0) return BoundaryClass::Egress;
        return BoundaryClass::Indeterminate;
    }
    throw NotOnBoundary("point is on neither the height face nor the energy shell (g=" + std::to_string(g) +
                        ", E=" + std::to_string(e) + ")");
}

AvgCompareReport avg_compare(const Params& params, const State& x0, double horizon,
                             const std::vector<double>& eps_list) {
    params.validate();
    if (!(horizon > 0.0)) throw std::invalid_argument("avg_compare: horizon must be positive");
    if (eps_list.size() < 2) throw std::invalid_argument("avg_compare: need at least two epsilons");

    StepControl ctl;
    ctl.rtol = 1e-12;
    ctl.atol = 1e-13;
    ctl.h_min = 1e-14;
    ctl.h_init = 1e-4;
    constexpr int kSamples = 4000;

    AvgCompareReport rep;
    rep.horizon = horizon;
    const Trajectory avg = integrate(AveragedSystem{}, 0.0, x0, horizon, params, ctl, horizon / kSamples);
    if (!avg.completed()) throw IntegrationError(avg.status, avg.status_time);
    for (double eps : eps_list) {
        Params pe = params;
        pe.epsilon = eps;
        const Trajectory full = integrate(FullSystem{}, 0.0, x0, horizon, pe, ctl, horizon / kSamples);
        if (!full.completed()) throw IntegrationError(full.status, full.status_time);
        double sup = 0.0;
        const std::size_t m = std::min(full.states.size(), avg.states.size());
        for (std::size_t i = 0; i < m; ++i) sup = std::max(sup, max_abs_diff(full.states[i], avg.states[i]));
        rep.epsilons.push_back(eps);
        rep.sup_errors.push_back(sup);
    }
    const bool positive = std::all_of(rep.sup_errors.begin(), rep.sup_errors.end(), [](double e) { return e > 0.0; });
    rep.observed_order = positive ? loglog_slope(rep.epsilons, rep.sup_errors) : std::nan("");
    return rep;
}

Theorem1Certificate theorem1_certificate(const Params& params, const RegionSpec& region, double Delta,
                                         const std::vector<int>& k_schedule, const CertificateOptions& opts) {
    params.validate();
    region.validate();
    BumpConfig{region.c, region.delta, Delta}.validate();
    if (k_schedule.empty() || k_schedule.back() <= 0)
        throw std::invalid_argument("certificate: k_schedule must end with a positive k (full system)");

    ContinuationPlan plan;
    plan.newton = opts.newton;
    for (int k : k_schedule) {
        Snapshot s;
        s.params = params;
        if (k <= 0) {
            s.kind = AveragedSystem{};
        } else {
            s.kind = FullSystem{};
            s.params.epsilon = 1.0 / k;
        }
        plan.schedule.push_back(s);
    }
    const Snapshot& first = plan.schedule.front();
    plan.seed = opts.seed ? *opts.seed
                          : attractor_seed(first.kind, first.params, opts.t_transient_periods * params.T,
                                           opts.start, opts.newton.control);

    Theorem1Certificate cert;
    cert.params = plan.schedule.back().params;
    cert.region = region;
    cert.Delta = Delta;
    cert.k_schedule = k_schedule;
    cert.orbit = continuation(plan).back();
    cert.profile = orbit_profile(cert.orbit, std::max(opts.newton.height_samples, 1000), opts.newton.control);

    const double c2 = region.c * region.c;
    const double sep = std::min(cert.profile.min_height - region.delta, c2 - cert.profile.max_energy);
    cert.clauses.push_back({"residual", cert.orbit.residual < opts.newton.tol_res, cert.orbit.residual,
                            opts.newton.tol_res});
    cert.clauses.push_back(
        {"min_height", cert.profile.min_height > region.delta, cert.profile.min_height, region.delta});
    cert.clauses.push_back({"max_energy", cert.profile.max_energy < c2, cert.profile.max_energy, c2});
    cert.clauses.push_back({"separation", sep > 2.0 * Delta, sep, 2.0 * Delta});

    double worst = -std::numeric_limits<double>::infinity();
    for (int id = 1; id <= 4; ++id) {
        cert.lemmas.push_back(check_lemma(id, region, cert.params, opts.lemma_samples, opts.lemma_seed, opts.phase_grid));
        worst = std::max(worst, cert.lemmas.back().worst_margin);
    }
    const bool lemmas_ok =
        std::all_of(cert.lemmas.begin(), cert.lemmas.end(), [](const LemmaReport& r) { return r.pass; });
    cert.clauses.push_back({"lemmas", lemmas_ok, worst, 0.0});

    cert.pass = std::all_of(cert.clauses.begin(), cert.clauses.end(), [](const auto& c) { return c.pass; });
    for (const auto& c : cert.clauses)
        if (!c.pass) throw CertificateFailed(c.name, cert);
    return cert;
}

}  // namespace kwp
