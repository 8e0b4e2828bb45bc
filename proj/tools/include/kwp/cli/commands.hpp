// Commands of the kwp tool and their output formats.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "kwp/cli/config.hpp"
#include "kwp/integrate.hpp"
#include "kwp/orbits.hpp"
#include "kwp/verify.hpp"

namespace kwp::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kConfigError = 2,
    kFall = 3,
    kIntegratorFailure = 4,
    kNoConvergence = 5,
};

/// argv without the program name, e.g. {"simulate", "--config", "run.json"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline constexpr const char* kTrajectoryHeader = "t,theta,phi,p_theta,p_phi,x,y,z,height,energy";
inline constexpr const char* kSweepHeader = "k,A,alpha,converged,stable,min_height,max_multiplier_modulus";

void write_trajectory_csv(std::ostream& os, const Trajectory& tr);

nlohmann::json params_to_json(const SystemKind& kind, const Params& p);
nlohmann::json orbit_to_json(const PeriodicOrbit& orbit);

/// Inverse of orbit_to_json; rejects unknown format versions.
PeriodicOrbit orbit_from_json(const nlohmann::json& j);

nlohmann::json lemma_to_json(const LemmaReport& r);
nlohmann::json avg_to_json(const AvgCompareReport& r);

struct SweepRow {
    SweepCell cell;
    bool converged = false;
    bool stable = false;
    double min_height = 0.0;
    double max_modulus = 0.0;
};

/// One attractor-seeded Newton solve per cell on `jobs` workers; rows in cell order.
std::vector<SweepRow> run_sweep(const RunConfig& cfg, int jobs);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace kwp::cli
