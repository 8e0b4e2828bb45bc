#include "kwp/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kwp {

double max_abs_diff(const State& a, const State& b) {
    return std::max({std::abs(a.theta - b.theta), std::abs(a.phi - b.phi), std::abs(a.p_theta - b.p_theta),
                     std::abs(a.p_phi - b.p_phi)});
}

double max_abs(const State& a) {
    return std::max({std::abs(a.theta), std::abs(a.phi), std::abs(a.p_theta), std::abs(a.p_phi)});
}

namespace {

double fourier_sum(const std::vector<double>& cos_coeffs, const std::vector<double>& sin_coeffs, double psi) {
    double sum = 0.0;
    for (std::size_t n = 0; n < cos_coeffs.size(); ++n) sum += cos_coeffs[n] * std::cos(static_cast<double>(n) * psi);
    for (std::size_t n = 0; n < sin_coeffs.size(); ++n) sum += sin_coeffs[n] * std::sin(static_cast<double>(n) * psi);
    return sum;
}

double abs_sum(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (double v : a) s += std::abs(v);
    for (double v : b) s += std::abs(v);
    return s;
}

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

HorizontalForce forcing_eval(double psi, const ForcingSpec& spec) {
    return std::visit(
        Overloaded{
            [](const ZeroForcing&) { return HorizontalForce{}; },
            [psi](const RotatingForcing& f) { return HorizontalForce{f.A * std::cos(psi), f.A * std::sin(psi)}; },
            [psi](const OscillatingAngleForcing& f) {
                const double angle = f.alpha - f.alpha * std::cos(psi);
                return HorizontalForce{f.A * std::cos(angle), f.A * std::sin(angle)};
            },
            [psi](const FourierForcing& f) {
                return HorizontalForce{fourier_sum(f.x_cos, f.x_sin, psi), fourier_sum(f.z_cos, f.z_sin, psi)};
            },
        },
        spec);
}

double forcing_bound(const ForcingSpec& spec) {
    return std::visit(Overloaded{
                          [](const ZeroForcing&) { return 0.0; },
                          [](const RotatingForcing& f) { return std::abs(f.A); },
                          [](const OscillatingAngleForcing& f) { return std::abs(f.A); },
                          [](const FourierForcing& f) {
                              return std::max(abs_sum(f.x_cos, f.x_sin), abs_sum(f.z_cos, f.z_sin));
                          },
                      },
                      spec);
}

std::optional<int> Params::k() const {
    if (!(epsilon > 0.0)) return std::nullopt;
    const double inv = 1.0 / epsilon;
    const double r = std::round(inv);
    if (r >= 1.0 && r < 1e9 && std::abs(inv - r) <= 1e-9 * r) return static_cast<int>(r);
    return std::nullopt;
}

void Params::validate() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("params.T must be positive and finite");
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("params.a must be non-negative and finite");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("params.epsilon must be positive and finite");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("params.mu must be non-negative and finite");
}

Params Params::with_k(int k, double a, double mu, ForcingSpec forcing, double T) {
    if (k < 1) throw std::invalid_argument("params.k must be a positive integer");
    Params p;
    p.a = a;
    p.epsilon = 1.0 / static_cast<double>(k);
    p.T = T;
    p.mu = mu;
    p.forcing = std::move(forcing);
    return p;
}

double pivot_height(double t, const Params& p) { return p.a * p.epsilon * std::sin(p.omega() * t / p.epsilon); }

double pivot_velocity(double t, const Params& p) { return p.a * p.omega() * std::cos(p.omega() * t / p.epsilon); }

void BumpConfig::validate() const {
    if (!(c > 0.0)) throw std::invalid_argument("region.c must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("region.delta must lie in (0, 1)");
    if (!(Delta > 0.0)) throw std::invalid_argument("region.Delta must be positive");
    if (!(2.0 * Delta < delta && 2.0 * Delta < c))
        throw std::invalid_argument("region.Delta: 2*Delta must be smaller than both delta and c");
}

const char* kind_name(const SystemKind& kind) {
    return std::visit(Overloaded{
                          [](const FullSystem&) { return "full"; },
                          [](const ModifiedSystem&) { return "modified"; },
                          [](const AveragedSystem&) { return "averaged"; },
                      },
                      kind);
}

}  // namespace kwp
