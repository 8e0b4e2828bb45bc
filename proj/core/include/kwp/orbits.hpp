// Period-T stroboscopic map, Newton shooting for T-periodic orbits, monodromy
// and Floquet multipliers, parameter continuation, and the non-falling check.
#pragma once

#include <array>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "kwp/integrate.hpp"
#include "kwp/types.hpp"

namespace kwp {

using Multipliers = std::array<std::complex<double>, 4>;

/// Integrator settings used inside shooting: the residual tolerance must
/// dominate the integration error.
StepControl default_orbit_control();

struct NewtonOptions {
    double tol_res = 1e-10;
    int max_iter = 40;
    StepControl control = default_orbit_control();
    double fd_rel_step = 1e-7;
    int max_backtracks = 20;
    double max_condition = 1e12;
    /// An orbit is stable when every |multiplier| < 1 - stability_margin.
    double stability_margin = 1e-3;
    int height_samples = 2000;
    bool keep_trajectory = false;
};

struct PeriodicOrbit {
    SystemKind kind;
    Params params;
    State x0;  ///< orbit point at t = 0 (mod T)
    double period = 0.0;
    double residual = 0.0;  ///< ||Phi_T(x0) - x0||_inf
    Multipliers multipliers{};
    bool stable = false;
    double min_height = 0.0;
    int iterations = 0;
    std::optional<Trajectory> trajectory;
};

class NoConvergence : public Error {
public:
    NoConvergence(const std::string& why, State last, double residual)
        : Error("Newton did not converge: " + why), last_(last), residual_(residual) {}
    [[nodiscard]] const State& last_iterate() const { return last_; }
    [[nodiscard]] double residual() const { return residual_; }

private:
    State last_;
    double residual_;
};

class SingularJacobian : public Error {
public:
    explicit SingularJacobian(double condition)
        : Error("shooting Jacobian is singular (condition " + std::to_string(condition) + ")"),
          condition_(condition) {}
    [[nodiscard]] double condition() const { return condition_; }

private:
    double condition_;
};

/// The trajectory reached the chart guard (rod at the z-poles).
class GuardHit : public Error {
public:
    explicit GuardHit(double t) : Error("trajectory hit the chart guard near t=" + std::to_string(t)), time_(t) {}
    [[nodiscard]] double time() const { return time_; }

private:
    double time_;
};

/// Phi(x): flow over exactly one period starting at t0. Fast kinds require
/// epsilon = 1/k.
State strobe_map(const State& x, double t0, const SystemKind& kind, const Params& params,
                 const StepControl& control = default_orbit_control());

/// Damped Newton on F(x) = Phi(x) - x with a forward-difference Jacobian and
/// Armijo backtracking. Returns a converged, classified orbit or throws.
PeriodicOrbit find_orbit_newton(const SystemKind& kind, const Params& params, const State& guess,
                                const NewtonOptions& opts = {});

/// Centered finite differences of the strobe map at the orbit point reached at
/// t_base (default: x0 at t = 0).
Eigen::Matrix4d monodromy_fd(const PeriodicOrbit& orbit, double t_base = 0.0,
                             const StepControl& control = default_orbit_control(), double rel_step = 1e-5);

/// Monodromy from the variational equations along the orbit.
Eigen::Matrix4d monodromy_var(const PeriodicOrbit& orbit, double t_base = 0.0,
                              const StepControl& control = default_orbit_control());

/// Eigenvalues of the monodromy matrix sorted by modulus, largest first.
Multipliers floquet(const Eigen::Matrix4d& monodromy);

double max_modulus(const Multipliers& m);

/// Integrate for ceil(t_transient / T) periods from t = 0 and return the state
/// at that multiple of T.
State attractor_seed(const SystemKind& kind, const Params& params, double t_transient, const State& x_start,
                     const StepControl& control = default_orbit_control());

struct OrbitProfile {
    double min_height = 0.0;
    double max_height = 0.0;
    double min_energy = 0.0;
    double max_energy = 0.0;
};

/// Extremes of g and E over n_samples (>= 1000) dense samples of one period.
OrbitProfile orbit_profile(const PeriodicOrbit& orbit, int n_samples,
                           const StepControl& control = default_orbit_control());

/// Minimum of cos(theta) sin(phi) over one period.
double non_falling_check(const PeriodicOrbit& orbit, int n_samples,
                         const StepControl& control = default_orbit_control());

// ---------------------------------------------------------------------------
// Continuation
// ---------------------------------------------------------------------------

struct Snapshot {
    SystemKind kind;
    Params params;
};

struct ContinuationPlan {
    std::vector<Snapshot> schedule;
    State seed;
    NewtonOptions newton;
    int max_bisections = 8;
};

class ContinuationStuck : public Error {
public:
    ContinuationStuck(std::size_t failed_index, std::vector<PeriodicOrbit> partial, const std::string& why)
        : Error("continuation stuck before snapshot " + std::to_string(failed_index) + ": " + why),
          failed_index_(failed_index), partial_(std::move(partial)) {}
    [[nodiscard]] std::size_t failed_index() const { return failed_index_; }
    [[nodiscard]] const std::vector<PeriodicOrbit>& partial() const { return partial_; }

private:
    std::size_t failed_index_;
    std::vector<PeriodicOrbit> partial_;
};

/// Number of parameters that differ between two snapshots. The averaged kind
/// counts as epsilon = 0.
int differing_parameters(const Snapshot& a, const Snapshot& b);

/// Halfway snapshot between two that differ in one parameter. Epsilon is
/// bisected and rounded to the nearest 1/k; returns nullopt when no distinct
/// midpoint exists.
std::optional<Snapshot> midpoint(const Snapshot& a, const Snapshot& b);

/// Walk the schedule, seeding each Newton solve with the previous orbit and
/// bisecting a failed step up to max_bisections times. Returns one orbit per
/// schedule entry.
std::vector<PeriodicOrbit> continuation(const ContinuationPlan& plan);

}  // namespace kwp
