// Right-hand sides of the full, modified (cutoff) and averaged equations of
// motion, the cutoff functions, and the scalar observables used by the
// boundary-sign checks.
#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>

#include "kwp/dual.hpp"
#include "kwp/errors.hpp"
#include "kwp/types.hpp"

namespace kwp {

// ---------------------------------------------------------------------------
// Pointwise right-hand sides
// ---------------------------------------------------------------------------

/// Full system. The friction and hdot-coupling terms use the velocities
/// theta', phi' from the first two lines.
StateRate rhs_full(double t, const State& x, const Params& p);

/// Modified system: chi = sigma * rho multiplies exactly the terms linear in
/// hdot; the hdot^2 terms are always present.
StateRate rhs_modified(double t, const State& x, const Params& p, const BumpConfig& bump);

/// Averaged system at slow phase s (s' = 1 is implicit): hdot := 0 and
/// hdot^2 := a^2 omega^2 / 2, forcing evaluated at s.
StateRate rhs_averaged(double s, const State& x, const Params& p);

/// Dispatch on the system kind. For the averaged kind t plays the role of s.
StateRate rhs(const SystemKind& kind, double t, const State& x, const Params& p);

/// Jacobian d(rhs)/dx, computed by forward-mode differentiation of the same
/// expressions used by rhs().
Eigen::Matrix4d rhs_jacobian(const SystemKind& kind, double t, const State& x, const Params& p);

// ---------------------------------------------------------------------------
// Cutoff functions
// ---------------------------------------------------------------------------

/// C-infinity step: 0 for u <= 0, 1 for u >= 1.
double smooth_step(double u);

/// 0 when |cos(theta)sin(phi) - delta| <= Delta, 1 when it is >= 2 Delta.
double bump_sigma(double theta, double phi, double delta, double Delta);
/// 0 when |E - c^2| <= Delta, 1 when it is >= 2 Delta.
double bump_rho(double theta, double p_theta, double p_phi, double c, double Delta);
double bump_chi(const State& x, const BumpConfig& bump);

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// Which closed form to use for the second-order observables: the modified
/// system with the cutoff switched off (instantaneous hdot^2) or the averaged
/// system (hdot^2 replaced by its mean).
enum class Branch { Modified, Averaged };

/// g = cos(theta) sin(phi): height of the bob above the pivot.
double height(const State& x);
/// dg/dt on the chi = 0 branch: -p_theta sin(theta) sin(phi) + (p_phi / cos(theta)) cos(phi).
double height_rate(const State& x);
/// d^2 g/dt^2 on the chi = 0 branch, at time t (Modified) or phase s (Averaged).
double height_accel(const State& x, double t, const Params& p, Branch branch);

/// E = (p_theta^2 + p_phi^2 / cos^2 theta) / 2.
double energy(const State& x);
/// dE/dt on the chi = 0 branch.
double energy_rate(const State& x, double t, const Params& p, Branch branch);

/// E + g: conserved when a = 0, mu = 0 and the forcing vanishes.
double conservative_energy(const State& x);

struct Cartesian {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

Cartesian state_to_cartesian(const State& x, double t, const Params& p);

// ---------------------------------------------------------------------------
// Generic kernels (scalar S is double or ad::Dual<N>)
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
using Vec4 = std::array<S, 4>;

template <class S>
void check_chart(const S& cos_theta, const S& theta) {
    if (std::abs(ad::value(cos_theta)) < kChartGuard) throw ChartSingularity(ad::value(theta));
}

template <class S>
S smooth_step(const S& u) {
    const double uv = ad::value(u);
    if (uv <= 0.0) return S(0.0);
    if (uv >= 1.0) return S(1.0);
    using std::exp;
    using ad::exp;
    const S f0 = exp(-1.0 / u);
    const S f1 = exp(-1.0 / (1.0 - u));
    return f0 / (f0 + f1);
}

template <class S>
S sigma(const S& theta, const S& phi, double delta, double Delta) {
    using std::abs, std::cos, std::sin;
    using ad::abs, ad::cos, ad::sin;
    const S defect = abs(cos(theta) * sin(phi) - delta);
    return smooth_step<S>((defect - Delta) / Delta);
}

template <class S>
S rho(const S& theta, const S& p_theta, const S& p_phi, double c, double Delta) {
    using std::abs, std::cos;
    using ad::abs, ad::cos;
    const S ct = cos(theta);
    const S e = 0.5 * (p_theta * p_theta + p_phi * p_phi / (ct * ct));
    const S defect = abs(e - c * c);
    return smooth_step<S>((defect - Delta) / Delta);
}

/// Full equations as printed: velocities first, then the momentum equations
/// in terms of those velocities.
template <class S>
Vec4<S> full(const Vec4<S>& x, double hdot, double px, double pz, double mu) {
    using std::cos, std::sin;
    using ad::cos, ad::sin;
    const S& th = x[0];
    const S& ph = x[1];
    const S st = sin(th), ct = cos(th), sp = sin(ph), cp = cos(ph);
    check_chart(ct, th);

    const S th_dot = x[2] + hdot * st * sp;
    const S ph_dot = (x[3] - hdot * ct * cp) / (ct * ct);
    const S pth_dot = -(ph_dot * ph_dot) * ct * st - hdot * th_dot * ct * sp - hdot * ph_dot * st * cp -
                      mu * th_dot + st * sp - px * st * cp + pz * ct;
    const S pph_dot = -hdot * th_dot * st * cp - hdot * ph_dot * ct * sp - ct * cp -
                      mu * ph_dot * ct * ct - px * ct * sp;
    return {th_dot, ph_dot, pth_dot, pph_dot};
}

/// Modified equations with the cutoff value chi supplied by the caller.
/// hdot_sq is passed separately so the averaged substitution is a call with
/// hdot = 0. Friction on phi is written as mu (p_phi - chi hdot cos cos),
/// which is mu phi' cos^2(theta).
template <class S>
Vec4<S> modified(const Vec4<S>& x, const S& chi, double hdot, double hdot_sq, double px, double pz,
                 double mu) {
    using std::cos, std::sin;
    using ad::cos, ad::sin;
    const S& th = x[0];
    const S& ph = x[1];
    const S& pth = x[2];
    const S& pph = x[3];
    const S st = sin(th), ct = cos(th), sp = sin(ph), cp = cos(ph);
    check_chart(ct, th);
    const S ct2 = ct * ct;
    const S lin = chi * hdot;

    const S th_dot = pth + lin * st * sp;
    const S ph_dot = (pph - lin * ct * cp) / ct2;
    const S pth_dot = -((pph * pph - 2.0 * lin * pph * cp * ct) + hdot_sq * cp * cp * ct * ct) * st / (ct2 * ct) -
                      mu * th_dot + st * sp - px * st * cp + pz * ct - hdot_sq * st * ct * sp * sp +
                      hdot_sq * st * cp * cp / ct - lin * pth * ct * sp - lin * pph * st * cp / ct2;
    const S pph_dot = -ct * cp - mu * (pph - lin * ct * cp) - px * ct * sp - hdot_sq * st * st * cp * sp +
                      hdot_sq * cp * sp - lin * pth * st * cp - lin * pph * sp / ct;
    return {th_dot, ph_dot, pth_dot, pph_dot};
}

/// Averaged equations as printed.
template <class S>
Vec4<S> averaged(const Vec4<S>& x, double mean_sq, double px, double pz, double mu) {
    using std::cos, std::sin;
    using ad::cos, ad::sin;
    const S& th = x[0];
    const S& ph = x[1];
    const S& pth = x[2];
    const S& pph = x[3];
    const S st = sin(th), ct = cos(th), sp = sin(ph), cp = cos(ph);
    check_chart(ct, th);
    const S ct2 = ct * ct;

    const S th_dot = pth;
    const S ph_dot = pph / ct2;
    const S pth_dot = -(pph * pph + mean_sq * cp * cp * ct * ct) * st / (ct2 * ct) - mu * pth + st * sp -
                      px * st * cp + pz * ct - mean_sq * st * ct * sp * sp + mean_sq * st * cp * cp / ct;
    const S pph_dot = -ct * cp - mu * pph - px * ct * sp - mean_sq * st * st * cp * sp + mean_sq * cp * sp;
    return {th_dot, ph_dot, pth_dot, pph_dot};
}

template <class S>
Vec4<S> dispatch(const SystemKind& kind, double t, const Vec4<S>& x, const Params& p) {
    const double psi = p.omega() * t;
    const HorizontalForce f = forcing_eval(psi, p.forcing);
    if (std::holds_alternative<AveragedSystem>(kind)) {
        return averaged<S>(x, p.mean_hdot_sq(), f.px, f.pz, p.mu);
    }
    const double hdot = pivot_velocity(t, p);
    if (const auto* m = std::get_if<ModifiedSystem>(&kind)) {
        const S chi = sigma<S>(x[0], x[1], m->bump.delta, m->bump.Delta) *
                      rho<S>(x[0], x[2], x[3], m->bump.c, m->bump.Delta);
        return modified<S>(x, chi, hdot, hdot * hdot, f.px, f.pz, p.mu);
    }
    return full<S>(x, hdot, f.px, f.pz, p.mu);
}

}  // namespace detail
}  // namespace kwp
