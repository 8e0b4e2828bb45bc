// JSON run configuration for the kwp command-line tool.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "kwp/dopri5.hpp"
#include "kwp/types.hpp"
#include "kwp/verify.hpp"

namespace kwp::cli {

inline constexpr int kFormatVersion = 1;

/// Invalid configuration. The message starts with the JSON path of the field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimulateBlock {
    double t0 = 0.0;
    double t1 = 0.0;
    State x0;
    std::optional<double> sample_dt;
};

enum class SeedStrategy { Explicit, Attractor, Continuation };

struct OrbitBlock {
    SeedStrategy strategy = SeedStrategy::Attractor;
    std::optional<State> x0;
    State start{0.05, 1.45, 0.0, 0.0};
    double transient_periods = 100.0;
    std::vector<int> schedule;  ///< continuation over k, 0 = averaged
    NewtonOptions newton;
};

struct LemmaBlock {
    std::vector<int> ids{1, 2, 3, 4};
    std::size_t n = 10000;
    std::uint64_t seed = 0;
    int phase_grid = 32;
};

struct AvgBlock {
    State x0;
    std::optional<double> horizon;  ///< default 2T
    std::vector<double> epsilons;
};

struct SweepCell {
    int k = 1;
    double A = 0.0;
    std::optional<double> alpha;  ///< absent: rotating forcing

    friend auto operator<=>(const SweepCell&, const SweepCell&) = default;
};

struct SweepBlock {
    std::vector<SweepCell> cells;  ///< sorted, unique
};

struct FloquetBlock {
    std::string orbit_file;
    double base_phase = 0.0;  ///< fraction of the period
};

struct RunConfig {
    SystemKind kind = FullSystem{};
    Params params;
    std::optional<RegionSpec> region;
    double Delta = 1e-3;
    StepControl control;
    bool control_given = false;

    std::optional<SimulateBlock> simulate;
    std::optional<OrbitBlock> orbit;
    std::optional<LemmaBlock> lemmas;
    std::optional<AvgBlock> avg;
    std::optional<SweepBlock> sweep;
    std::optional<FloquetBlock> floquet;
};

RunConfig parse_config(const nlohmann::json& j);

/// The "forcing" object: {"type": "zero" | "rotating" | "oscillating" | "fourier", ...}.
ForcingSpec parse_forcing(const nlohmann::json& f);
nlohmann::json forcing_to_json(const ForcingSpec& spec);

/// Reads and parses a config file; syntax errors report line and column.
RunConfig load_config(const std::string& path);

}  // namespace kwp::cli
