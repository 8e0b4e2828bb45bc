// Core value types for the vibrating-pivot spherical pendulum.
//
// Units are normalized: unit mass, unit gravity, unit rod length. Gravity
// points along -y, so the upright position is y = 1 (theta = 0, phi = pi/2).
#pragma once

#include <array>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

namespace kwp {

/// Phase point in the spherical chart: x = cos(theta)cos(phi),
/// y = h(t) + cos(theta)sin(phi), z = sin(theta).
struct State {
    double theta = 0.0;
    double phi = 0.0;
    double p_theta = 0.0;
    double p_phi = 0.0;

    [[nodiscard]] std::array<double, 4> to_array() const { return {theta, phi, p_theta, p_phi}; }
    [[nodiscard]] static State from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }

    friend bool operator==(const State&, const State&) = default;
};

/// Time derivative of a State (same layout).
using StateRate = State;

/// The upright (inverted) equilibrium position with zero momenta.
inline constexpr State kUpright{0.0, std::numbers::pi / 2, 0.0, 0.0};
/// The hanging position with zero momenta.
inline constexpr State kHanging{0.0, -std::numbers::pi / 2, 0.0, 0.0};

double max_abs_diff(const State& a, const State& b);
double max_abs(const State& a);

// ---------------------------------------------------------------------------
// Horizontal forcing (P_x, P_z). Every variant is evaluated at the phase angle
// psi = 2*pi*t/T, so each is T-periodic in t.
// ---------------------------------------------------------------------------

struct ZeroForcing {};

/// (A cos psi, A sin psi): a field of magnitude A rotating in the x-z plane.
struct RotatingForcing {
    double A = 0.0;
};

/// (A cos(alpha - alpha cos psi), A sin(alpha - alpha cos psi)): magnitude A,
/// direction swinging between the angles 0 and 2*alpha.
struct OscillatingAngleForcing {
    double A = 0.0;
    double alpha = 0.0;
};

/// Truncated Fourier series, term n uses cos(n psi) / sin(n psi), n = 0, 1, ...
struct FourierForcing {
    std::vector<double> x_cos, x_sin;
    std::vector<double> z_cos, z_sin;
};

using ForcingSpec = std::variant<ZeroForcing, RotatingForcing, OscillatingAngleForcing, FourierForcing>;

struct HorizontalForce {
    double px = 0.0;
    double pz = 0.0;
};

HorizontalForce forcing_eval(double psi, const ForcingSpec& spec);

/// Upper bound on max(|P_x|, |P_z|) over a period.
double forcing_bound(const ForcingSpec& spec);

// ---------------------------------------------------------------------------

struct Params {
    double a = 0.0;        ///< pivot amplitude scale
    double epsilon = 1.0;  ///< fast-scale parameter, 1/k for T-periodic full dynamics
    double T = 2.0 * std::numbers::pi;
    double mu = 0.0;       ///< viscous friction coefficient
    ForcingSpec forcing = ZeroForcing{};

    [[nodiscard]] double omega() const { return 2.0 * std::numbers::pi / T; }
    /// The integer k with epsilon == 1/k, if epsilon has that form.
    [[nodiscard]] std::optional<int> k() const;
    /// Mean of hdot^2 over a fast period: a^2 omega^2 / 2.
    [[nodiscard]] double mean_hdot_sq() const { return 0.5 * a * a * omega() * omega(); }

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    static Params with_k(int k, double a, double mu, ForcingSpec forcing,
                         double T = 2.0 * std::numbers::pi);
};

/// h(t) = a eps sin(omega t / eps)
double pivot_height(double t, const Params& p);
/// hdot(t) = a omega cos(omega t / eps)
double pivot_velocity(double t, const Params& p);

/// Cutoff configuration for the modified system.
struct BumpConfig {
    double c = 1.0;      ///< momentum shell radius, shell is E = c^2
    double delta = 0.1;  ///< height threshold
    double Delta = 0.01; ///< transition width

    void validate() const;
};

struct FullSystem {};
struct ModifiedSystem {
    BumpConfig bump;
};
/// The averaged system carries the slow phase s with s' = 1; integrators use s = t.
struct AveragedSystem {};

using SystemKind = std::variant<FullSystem, ModifiedSystem, AveragedSystem>;

const char* kind_name(const SystemKind& kind);

/// True when the vector field contains the fast pivot oscillation.
inline bool is_fast(const SystemKind& kind) { return !std::holds_alternative<AveragedSystem>(kind); }

}  // namespace kwp
