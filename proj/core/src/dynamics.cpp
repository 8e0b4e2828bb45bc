#include "kwp/dynamics.hpp"

#include <cmath>

namespace kwp {

namespace {

detail::Vec4<double> as_vec(const State& x) { return x.to_array(); }
StateRate as_state(const detail::Vec4<double>& v) { return State::from_array(v); }

double hdot_sq_for(double t, const Params& p, Branch branch) {
    if (branch == Branch::Averaged) return p.mean_hdot_sq();
    const double hd = pivot_velocity(t, p);
    return hd * hd;
}

}  // namespace

StateRate rhs_full(double t, const State& x, const Params& p) {
    const HorizontalForce f = forcing_eval(p.omega() * t, p.forcing);
    return as_state(detail::full<double>(as_vec(x), pivot_velocity(t, p), f.px, f.pz, p.mu));
}

StateRate rhs_modified(double t, const State& x, const Params& p, const BumpConfig& bump) {
    return as_state(detail::dispatch<double>(ModifiedSystem{bump}, t, as_vec(x), p));
}

StateRate rhs_averaged(double s, const State& x, const Params& p) {
    const HorizontalForce f = forcing_eval(p.omega() * s, p.forcing);
    return as_state(detail::averaged<double>(as_vec(x), p.mean_hdot_sq(), f.px, f.pz, p.mu));
}

StateRate rhs(const SystemKind& kind, double t, const State& x, const Params& p) {
    return as_state(detail::dispatch<double>(kind, t, as_vec(x), p));
}

Eigen::Matrix4d rhs_jacobian(const SystemKind& kind, double t, const State& x, const Params& p) {
    using D = ad::Dual<4>;
    const auto xv = x.to_array();
    const detail::Vec4<D> xd{D::variable(xv[0], 0), D::variable(xv[1], 1), D::variable(xv[2], 2),
                             D::variable(xv[3], 3)};
    const auto f = detail::dispatch<D>(kind, t, xd, p);
    Eigen::Matrix4d jac;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) jac(i, j) = f[static_cast<std::size_t>(i)].d[static_cast<std::size_t>(j)];
    return jac;
}

double smooth_step(double u) { return detail::smooth_step<double>(u); }

double bump_sigma(double theta, double phi, double delta, double Delta) {
    return detail::sigma<double>(theta, phi, delta, Delta);
}

double bump_rho(double theta, double p_theta, double p_phi, double c, double Delta) {
    return detail::rho<double>(theta, p_theta, p_phi, c, Delta);
}

double bump_chi(const State& x, const BumpConfig& bump) {
    return bump_sigma(x.theta, x.phi, bump.delta, bump.Delta) *
           bump_rho(x.theta, x.p_theta, x.p_phi, bump.c, bump.Delta);
}

double height(const State& x) { return std::cos(x.theta) * std::sin(x.phi); }

double height_rate(const State& x) {
    const double ct = std::cos(x.theta);
    detail::check_chart(ct, x.theta);
    return -x.p_theta * std::sin(x.theta) * std::sin(x.phi) + (x.p_phi / ct) * std::cos(x.phi);
}

// Second derivative of g along the chi = 0 flow, collected by forcing, friction,
// pivot and momentum contributions. The gravity part is -1 + g^2.
double height_accel(const State& x, double t, const Params& p, Branch branch) {
    const double st = std::sin(x.theta), ct = std::cos(x.theta);
    const double sp = std::sin(x.phi), cp = std::cos(x.phi);
    detail::check_chart(ct, x.theta);
    const double g = ct * sp;
    const HorizontalForce f = forcing_eval(p.omega() * t, p.forcing);
    const double hsq = hdot_sq_for(t, p, branch);
    const double ct3 = ct * ct * ct;
    const double pth = x.p_theta, pph = x.p_phi;

    return -1.0 + g * g                                                         //
           - f.px * ct * ct * cp * sp - f.pz * ct * st * sp                    //
           + p.mu * (pth * st * sp - pph * cp / ct)                             //
           + hsq * (cp * cp * sp / ct + st * st * ct * sp * sp * sp - st * st * cp * cp * sp / ct)  //
           + pph * pph * (st * st * sp / ct3 - sp / ct3)                        //
           - pth * pth * ct * sp;
}

double energy(const State& x) {
    const double ct = std::cos(x.theta);
    return 0.5 * (x.p_theta * x.p_theta + x.p_phi * x.p_phi / (ct * ct));
}

double energy_rate(const State& x, double t, const Params& p, Branch branch) {
    const double st = std::sin(x.theta), ct = std::cos(x.theta);
    const double sp = std::sin(x.phi), cp = std::cos(x.phi);
    detail::check_chart(ct, x.theta);
    const HorizontalForce f = forcing_eval(p.omega() * t, p.forcing);
    const double hsq = hdot_sq_for(t, p, branch);

    return -2.0 * p.mu * energy(x) + x.p_theta * (st * sp - f.px * st * cp + f.pz * ct - hsq * st * ct * sp * sp) +
           x.p_phi / ct * (-cp - f.px * sp + hsq * cp * sp * ct);
}

double conservative_energy(const State& x) { return energy(x) + height(x); }

Cartesian state_to_cartesian(const State& x, double t, const Params& p) {
    const double ct = std::cos(x.theta);
    return {ct * std::cos(x.phi), pivot_height(t, p) + ct * std::sin(x.phi), std::sin(x.theta)};
}

}  // namespace kwp
