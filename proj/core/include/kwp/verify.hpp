// Sampling-based certification of the boundary sign conditions on the block
// M = {g >= delta, E <= c^2}, egress classification, the first-order averaging
// law, and the end-to-end non-falling orbit certificate.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kwp/dynamics.hpp"
#include "kwp/orbits.hpp"
#include "kwp/types.hpp"

namespace kwp {

/// M_{c,delta}: cos(theta) sin(phi) >= delta and E <= c^2.
struct RegionSpec {
    double c = 1.0;
    double delta = 0.1;

    [[nodiscard]] bool contains(const State& x) const;
    /// Throws std::invalid_argument unless c > 0 and delta > 0.
    void validate() const;
};

enum class BoundaryComponent { EnergyShell, HeightFace, TangencySet, HeightFaceOut, HeightFaceIn };

const char* component_name(BoundaryComponent c);

class EmptySet : public Error {
public:
    using Error::Error;
};

/// Deterministic samples (given seed) of a boundary component:
///  - EnergyShell: E = c^2, g >= delta
///  - HeightFace: g = delta, E <= c^2; Out/In additionally dg/dt > 0 / < 0
///  - TangencySet: g = delta, dg/dt = 0, E <= c^2. The first sample has zero momenta.
std::vector<State> sample_boundary(const RegionSpec& region, BoundaryComponent component, std::size_t n,
                                   std::uint64_t seed);

struct LemmaReport {
    int lemma_id = 0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    int phase_grid = 0;
    std::size_t evaluations = 0;
    double worst_margin = 0.0;  ///< max of the quantity required to be negative
    State worst_point;
    double worst_time = 0.0;  ///< time t0 (lemmas 1, 2) or phase s0 (lemmas 3, 4)
    bool pass = false;
};

/// Lemma 1: d^2g/dt^2 < 0 on the tangency set, modified system (chi = 0 branch),
///          over a grid of fast phases.
/// Lemma 2: dE/dt < 0 on the energy shell, modified system.
/// Lemmas 3, 4: the same conditions for the averaged system over s0 in [0, T).
LemmaReport check_lemma(int lemma_id, const RegionSpec& region, const Params& params, std::size_t n,
                        std::uint64_t seed, int phase_grid = 32);

class DegenerateFriction : public Error {
public:
    DegenerateFriction() : Error("mu = 0: the energy shell bound has no finite c_min") {}
};

/// B = 1 + 2 A + a^2 omega^2 bounds every non-friction term of dE/dt per unit
/// momentum, so dE/dt <= -2 mu c^2 + 2 c B on the shell.
double energy_rate_bound(const Params& params);

struct BoundEstimate {
    double B = 0.0;
    double c_min = 0.0;
    double delta_max = 0.0;
};

/// c_min = B / mu; delta_max = largest delta (to 1e-3) for which the averaged
/// tangency check passes at c = 1.2 c_min.
BoundEstimate estimate_bounds(const Params& params, std::size_t n = 10000, std::uint64_t seed = 1);

enum class BoundaryClass { Egress, Ingress, TangentExit, InteriorBoundary, Indeterminate };

const char* class_name(BoundaryClass c);

class NotOnBoundary : public Error {
public:
    using Error::Error;
};

/// Classify a point of dM by the local sign conditions. The height face takes
/// precedence at corners.
BoundaryClass egress_classify(const State& x, const RegionSpec& region, const Params& params, Branch branch,
                              double t0);

struct AvgCompareReport {
    std::vector<double> epsilons;
    std::vector<double> sup_errors;
    double observed_order = 0.0;
    double horizon = 0.0;
};

/// Sup-norm distance between full and averaged solutions from x0 over
/// [0, horizon] for each epsilon, and the fitted log-log slope.
AvgCompareReport avg_compare(const Params& params, const State& x0, double horizon,
                             const std::vector<double>& eps_list);

struct CertificateClause {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
};

struct CertificateOptions {
    std::optional<State> seed;  ///< default: attractor seed of the first snapshot
    double t_transient_periods = 100.0;
    State start = State{0.05, 1.45, 0.0, 0.0};
    NewtonOptions newton;
    std::size_t lemma_samples = 10000;
    std::uint64_t lemma_seed = 1;
    int phase_grid = 32;
};

struct Theorem1Certificate {
    Params params;
    RegionSpec region;
    double Delta = 0.0;
    std::vector<int> k_schedule;  ///< 0 denotes the averaged system
    PeriodicOrbit orbit;
    OrbitProfile profile;
    std::vector<LemmaReport> lemmas;
    std::vector<CertificateClause> clauses;
    bool pass = false;
};

class CertificateFailed : public Error {
public:
    CertificateFailed(std::string clause, Theorem1Certificate cert)
        : Error("certificate failed: " + clause), clause_(std::move(clause)), cert_(std::move(cert)) {}
    [[nodiscard]] const std::string& clause() const { return clause_; }
    [[nodiscard]] const Theorem1Certificate& certificate() const { return cert_; }

private:
    std::string clause_;
    Theorem1Certificate cert_;
};

/// Continue an orbit along k_schedule and check the terminal full-system orbit:
/// residual, min height > delta, max energy < c^2, 2*Delta separation from both
/// faces, and the lemma suite at the terminal parameters. Throws
/// CertificateFailed naming the first violated clause.
Theorem1Certificate theorem1_certificate(const Params& params, const RegionSpec& region, double Delta,
                                         const std::vector<int>& k_schedule, const CertificateOptions& opts = {});

}  // namespace kwp
