#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "kwp/cli/commands.hpp"
#include "kwp/cli/config.hpp"

using namespace kwp;
using namespace kwp::cli;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;
constexpr double pi = std::numbers::pi;

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("kwp_cli_" + std::to_string(std::rand()) + "_" +
                                           std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }

    std::string write(const std::string& name, const std::string& text) const {
        const auto p = dir / name;
        std::ofstream(p, std::ios::binary) << text;
        return p.string();
    }
    std::string write(const std::string& name, const json& j) const { return write(name, j.dump(2)); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

Outcome invoke(const std::string& command, const std::string& config, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{command, "--config", config};
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
}

json base(double A = 6.0) {
    return {{"format_version", 1},
            {"params", {{"a", 5}, {"k", 10}, {"mu", 1}}},
            {"forcing", {{"type", "rotating"}, {"A", A}}}};
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string f; std::getline(in, f, ',');) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

TEST_CASE("config validation") {
    Scratch s;

    SUBCASE("a well-formed config parses") {
        json j = base();
        j["region"] = {{"c", 40}, {"delta", 0.01}};
        const RunConfig cfg = parse_config(j);
        CHECK(cfg.params.epsilon == 0.1);
        CHECK(cfg.params.T == doctest::Approx(2 * pi));
        CHECK(std::holds_alternative<FullSystem>(cfg.kind));
        REQUIRE(cfg.region);
        CHECK(cfg.region->c == 40);
    }
    SUBCASE("unknown keys are rejected with their path") {
        json j = base();
        j["params"]["gravity"] = 9.81;
        CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("params.gravity"), ConfigError);
        j = base();
        j["plot"] = true;
        CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("plot"), ConfigError);
    }
    SUBCASE("negative period names the field and exits 2") {
        json j = base();
        j["params"]["T"] = -1.0;
        j["simulate"] = {{"t0", 0}, {"t1", 1}, {"x0", {0.05, 1.45, 0, 0}}};
        const auto r = invoke("simulate", s.write("c.json", j));
        CHECK(r.code == kConfigError);
        CHECK(r.err.find("params.T") != std::string::npos);
        CHECK(r.out.empty());
    }
    SUBCASE("k and epsilon are exclusive") {
        json j = base();
        j["params"]["epsilon"] = 0.1;
        CHECK_THROWS_AS(parse_config(j), ConfigError);
        j["params"].erase("k");
        CHECK_NOTHROW(parse_config(j));
        j["params"].erase("epsilon");
        CHECK_THROWS_AS(parse_config(j), ConfigError);
    }
    SUBCASE("format version is mandatory and checked") {
        json j = base();
        j.erase("format_version");
        CHECK_THROWS_AS(parse_config(j), ConfigError);
        j["format_version"] = 2;
        CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("format_version"), ConfigError);
    }
    SUBCASE("syntax errors report the line") {
        const auto path = s.write("bad.json", std::string("{\n  \"format_version\": 1,\n  \"params\": {,\n}"));
        CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("line 3"), ConfigError);
        CHECK(invoke("simulate", path).code == kConfigError);
    }
    SUBCASE("modified system needs a region") {
        json j = base();
        j["system"] = "modified";
        CHECK_THROWS_AS(parse_config(j), ConfigError);
        j["region"] = {{"c", 40}, {"delta", 0.01}, {"Delta", 1e-3}};
        CHECK(std::holds_alternative<ModifiedSystem>(parse_config(j).kind));
    }
    SUBCASE("initial states must lie in the chart") {
        json j = base();
        j["simulate"] = {{"t0", 0}, {"t1", 1}, {"x0", {pi / 2, 1.0, 0, 0}}};
        CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("simulate.x0"), ConfigError);
    }
    SUBCASE("forcing round-trips") {
        for (const json& f : {json{{"type", "zero"}}, json{{"type", "rotating"}, {"A", 6.0}},
                              json{{"type", "oscillating"}, {"A", 1.5}, {"alpha", pi}}}) {
            CHECK(forcing_to_json(parse_forcing(f)) == f);
        }
        CHECK_THROWS_AS(parse_forcing(json{{"type", "rotating"}}), ConfigError);
        CHECK_THROWS_AS(parse_forcing(json{{"type", "spiral"}, {"A", 1.0}}), ConfigError);
    }
    SUBCASE("missing command block") {
        const auto r = invoke("find-orbit", s.write("c.json", base()));
        CHECK(r.code == kConfigError);
        CHECK(r.err.find("orbit") != std::string::npos);
    }
    SUBCASE("argument errors") {
        CHECK(invoke(std::vector<std::string>{}).code == kConfigError);
        CHECK(invoke(std::vector<std::string>{"simulate"}).code == kConfigError);
        CHECK(invoke(std::vector<std::string>{"launch", "--config", "x.json"}).code == kConfigError);
        CHECK(invoke("simulate", s.path("missing.json")).code == kConfigError);
    }
}

TEST_CASE("simulate writes the trajectory CSV") {
    Scratch s;
    json j = base();
    j["simulate"] = {{"t0", 0}, {"t1", 2}, {"x0", {0.05, 1.45, 0, 0}}, {"sample_dt", 0.5}};
    const auto cfg_path = s.write("sim.json", j);
    const auto r = invoke("simulate", cfg_path, {"--quiet"});
    REQUIRE(r.code == kOk);
    CHECK(r.err.empty());
    CHECK(r.out.find('\r') == std::string::npos);

    const auto rows = lines(r.out);
    REQUIRE(rows.size() == 2 + 5);
    CHECK(rows[0] == "# format_version=1");
    CHECK(rows[1] == kTrajectoryHeader);

    // 17 significant digits reproduce the library trajectory bit for bit
    const RunConfig cfg = load_config(cfg_path);
    const Trajectory tr = integrate(cfg.kind, 0.0, State{0.05, 1.45, 0, 0}, 2.0, cfg.params, cfg.control, 0.5);
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        const auto f = fields(rows[2 + i]);
        REQUIRE(f.size() == 10);
        CHECK(std::strtod(f[0].c_str(), nullptr) == tr.times[i]);
        const auto x = tr.states[i].to_array();
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::strtod(f[1 + c].c_str(), nullptr) == x[c]);
        CHECK(std::strtod(f[8].c_str(), nullptr) == height(tr.states[i]));
        const Cartesian p = state_to_cartesian(tr.states[i], tr.times[i], cfg.params);
        CHECK(std::strtod(f[5].c_str(), nullptr) == p.x);
        CHECK(std::strtod(f[6].c_str(), nullptr) == p.y);
        CHECK(std::strtod(f[7].c_str(), nullptr) == p.z);
        // the bob sits on the unit sphere around the pivot
        const double h = cfg.params.a * cfg.params.epsilon * std::sin(2 * pi * tr.times[i] / (cfg.params.epsilon * cfg.params.T));
        CHECK(std::abs(p.x * p.x + (p.y - h) * (p.y - h) + p.z * p.z - 1.0) < 1e-12);
    }

    SUBCASE("--out writes the same bytes to a file") {
        const auto out_path = s.path("traj.csv");
        REQUIRE(invoke("simulate", cfg_path, {"--quiet", "--out", out_path}).code == kOk);
        std::ifstream in(out_path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        CHECK(buf.str() == r.out);
    }
}

TEST_CASE("simulate examples and exit codes") {
    Scratch s;

    SUBCASE("upright equilibrium of the averaged system stays put") {
        json j = base();
        j["system"] = "averaged";
        j["forcing"] = {{"type", "zero"}};
        j["simulate"] = {{"t0", 0}, {"t1", 20}, {"x0", {0, pi / 2, 0, 0}}, {"sample_dt", 1}};
        const auto r = invoke("simulate", s.write("c.json", j), {"--quiet"});
        REQUIRE(r.code == kOk);
        const auto rows = lines(r.out);
        REQUIRE(rows.size() == 2 + 21);
        // pi/2 is not exact in binary, so gravity leaves a residual torque of order 1e-16
        for (std::size_t i = 2; i < rows.size(); ++i) {
            const auto f = fields(rows[i]);
            CHECK(std::strtod(f[1].c_str(), nullptr) == 0.0);
            CHECK(std::strtod(f[2].c_str(), nullptr) == pi / 2);
            CHECK(std::abs(std::strtod(f[3].c_str(), nullptr)) < 1e-14);
            CHECK(std::abs(std::strtod(f[4].c_str(), nullptr)) < 1e-14);
        }
    }
    SUBCASE("the rotating A = 6 case stays up for 100 periods") {
        json j = base();
        j["simulate"] = {{"t0", 0}, {"t1", 200 * pi}, {"x0", {0.05, 1.45, 0, 0}}, {"sample_dt", 2 * pi}};
        const auto r = invoke("simulate", s.write("c.json", j), {"--quiet"});
        REQUIRE(r.code == kOk);
        const auto rows = lines(r.out);
        REQUIRE(rows.size() == 2 + 101);
        CHECK(std::strtod(fields(rows.back())[8].c_str(), nullptr) > 0.0);
    }
    SUBCASE("an unsupported pendulum falls through the chart pole: exit 3") {
        json j = base();
        j["params"]["a"] = 0;
        j["forcing"] = {{"type", "zero"}};
        j["simulate"] = {{"t0", 0}, {"t1", 20}, {"x0", {0.3, pi / 2, 0, 0}}};
        const auto r = invoke("simulate", s.write("c.json", j));
        CHECK(r.code == kFall);
        CHECK(r.err.find("singular") != std::string::npos);
        // rows up to the bracketed crossing are still written
        CHECK(lines(r.out).size() > 3);
    }
    SUBCASE("step budget exhaustion: exit 4") {
        json j = base();
        j["integrator"] = {{"max_steps", 10}};
        j["simulate"] = {{"t0", 0}, {"t1", 20}, {"x0", {0.05, 1.45, 0, 0}}};
        CHECK(invoke("simulate", s.write("c.json", j), {"--quiet"}).code == kIntegratorFailure);
    }
}

TEST_CASE("find-orbit and floquet") {
    Scratch s;

    SUBCASE("averaged, zero forcing: the stable upright orbit") {
        json j = base();
        j["system"] = "averaged";
        j["forcing"] = {{"type", "zero"}};
        j["orbit"] = {{"seed", "explicit"}, {"x0", {0.02, 1.5, 0.01, 0}}};
        const auto r = invoke("find-orbit", s.write("c.json", j), {"--quiet"});
        REQUIRE(r.code == kOk);
        const json o = json::parse(r.out);
        CHECK(o["format_version"] == 1);
        CHECK(std::abs(o["x0"][0].get<double>()) < 1e-8);
        CHECK(std::abs(o["x0"][1].get<double>() - pi / 2) < 1e-8);
        CHECK(o["stable"] == true);
        CHECK(o["min_height"].get<double>() > 0.999);
        CHECK(o["k"].is_null());
        CHECK(o["params"]["system"] == "averaged");
        REQUIRE(o["multipliers"].size() == 4);
        for (const auto& m : o["multipliers"]) CHECK(std::hypot(m[0].get<double>(), m[1].get<double>()) < 1.0);
    }

    SUBCASE("k = 50 oscillating cell, saved and re-verified") {
        json j = base(1.5);
        j["params"]["k"] = 50;
        j["forcing"] = {{"type", "oscillating"}, {"A", 1.5}, {"alpha", pi}};
        j["orbit"] = {{"seed", "attractor"}};
        const auto orbit_path = s.path("orbit.json");
        REQUIRE(invoke("find-orbit", s.write("c.json", j), {"--quiet", "--out", orbit_path}).code == kOk);

        std::ifstream in(orbit_path);
        const json o = json::parse(in);
        CHECK(o["k"] == 50);
        CHECK(o["stable"] == true);
        CHECK(o["min_height"].get<double>() > 0.0);
        CHECK(o["params"]["forcing"]["type"] == "oscillating");

        const PeriodicOrbit orbit = orbit_from_json(o);
        CHECK(orbit_to_json(orbit) == o);
        const State back = strobe_map(orbit.x0, 0.0, orbit.kind, orbit.params, default_orbit_control());
        const double residual = max_abs_diff(back, orbit.x0);
        CHECK(residual <= 10 * orbit.residual);
        CHECK(residual < 1e-8);

        json fl = base();
        fl["floquet"] = {{"orbit_file", orbit_path}, {"base_phase", 0.5}};
        const auto r = invoke("floquet", s.write("f.json", fl), {"--quiet"});
        REQUIRE(r.code == kOk);
        const json f = json::parse(r.out);
        CHECK(f["fd_var_relative_difference"].get<double>() < 1e-5);
        CHECK(f["stable"] == true);
        CHECK(f["max_multiplier_modulus"].get<double>() < 1.0);
        CHECK(f["residual"].get<double>() == doctest::Approx(orbit.residual));
        for (std::size_t i = 0; i < 4; ++i) {
            const std::complex<double> a{f["multipliers"][i][0].get<double>(), f["multipliers"][i][1].get<double>()};
            double best = 1e9;
            for (const auto& m : orbit.multipliers) best = std::min(best, std::abs(a - m));
            CHECK(best < 1e-4);
        }
    }

    SUBCASE("continuation seed from the averaged orbit") {
        json j = base();
        j["orbit"] = {{"seed", "continuation"}, {"schedule", {"averaged", 50, 20, 10}}};
        const auto r = invoke("find-orbit", s.write("c.json", j), {"--quiet"});
        REQUIRE(r.code == kOk);
        const json o = json::parse(r.out);
        CHECK(o["k"] == 10);
        CHECK(o["stable"] == true);
        CHECK(o["residual"].get<double>() < 1e-8);
    }

    SUBCASE("Newton failure: exit 5") {
        json j = base();
        j["orbit"] = {{"seed", "explicit"}, {"x0", {0.5, 0.6, 1.0, -1.0}}, {"max_iter", 1}};
        const auto r = invoke("find-orbit", s.write("c.json", j));
        CHECK(r.code == kNoConvergence);
        CHECK(r.out.empty());
        CHECK(r.err.find("residual") != std::string::npos);
    }

    SUBCASE("orbit files with an unknown version are rejected") {
        json o = orbit_to_json(find_orbit_newton(AveragedSystem{}, Params::with_k(10, 5, 1, ZeroForcing{}),
                                                 State{0.0, pi / 2, 0, 0}));
        CHECK_NOTHROW(orbit_from_json(o));
        o["format_version"] = 2;
        CHECK_THROWS_AS(orbit_from_json(o), ConfigError);

        json fl = base();
        fl["floquet"] = {{"orbit_file", s.write("o.json", o)}};
        CHECK(invoke("floquet", s.write("f.json", fl)).code == kConfigError);
    }

    SUBCASE("seed") {
        json j = base();
        j["orbit"] = {{"transient_periods", 20}};
        const auto r = invoke("seed", s.write("c.json", j));
        REQUIRE(r.code == kOk);
        const json o = json::parse(r.out);
        REQUIRE(o["x0"].size() == 4);
        CHECK(o["periods"] == 20.0);
        const RunConfig cfg = parse_config(j);
        const State x = attractor_seed(cfg.kind, cfg.params, 20 * cfg.params.T, State{0.05, 1.45, 0, 0},
                                       cfg.orbit->newton.control);
        CHECK(o["x0"][0].get<double>() == x.theta);
        CHECK(o["x0"][3].get<double>() == x.p_phi);
    }
}

TEST_CASE("check-lemmas") {
    Scratch s;
    json j = base();
    j["region"] = {{"c", 40}, {"delta", 0.01}};
    j["lemmas"] = {{"seed", 11}, {"n", 2000}};
    const auto path = s.write("c.json", j);

    const auto r = invoke("check-lemmas", path, {"--quiet"});
    REQUIRE(r.code == kOk);
    const json rep = json::parse(r.out);
    CHECK(rep["format_version"] == 1);
    CHECK(rep["pass"] == true);
    REQUIRE(rep["lemmas"].size() == 4);
    for (const auto& l : rep["lemmas"]) {
        for (const char* key : {"lemma_id", "pass", "worst_margin", "worst_point", "n", "seed"})
            CHECK_MESSAGE(l.contains(key), key);
        CHECK(l["pass"] == true);
        CHECK(l["n"] == 2000);
        CHECK(l["seed"] == 11);
    }
    CHECK(rep["lemmas"][1]["worst_margin"].get<double>() <= -100);
    CHECK(rep["lemmas"][3]["worst_margin"].get<double>() <= -100);

    SUBCASE("deterministic") { CHECK(invoke("check-lemmas", path, {"--quiet"}).out == r.out); }

    SUBCASE("a region too wide for the lemmas: exit 1") {
        j["region"]["delta"] = 0.9;
        j["lemmas"]["n"] = 500;
        const auto bad = invoke("check-lemmas", s.write("bad.json", j), {"--quiet"});
        CHECK(bad.code == kCheckFailed);
        CHECK(json::parse(bad.out)["pass"] == false);
    }

    SUBCASE("seed is mandatory") {
        j["lemmas"].erase("seed");
        CHECK(invoke("check-lemmas", s.write("noseed.json", j)).code == kConfigError);
    }
}

TEST_CASE("avg-compare") {
    Scratch s;
    json j = base();
    j["system"] = "averaged";
    j["orbit"] = {{"seed", "attractor"}};
    const auto orbit = invoke("find-orbit", s.write("avg.json", j), {"--quiet"});
    REQUIRE(orbit.code == kOk);

    json c = base();
    c["avg"] = {{"x0", json::parse(orbit.out)["x0"]}};
    const auto r = invoke("avg-compare", s.write("c.json", c), {"--quiet"});
    REQUIRE(r.code == kOk);
    const json rep = json::parse(r.out);
    CHECK(rep["format_version"] == 1);
    REQUIRE(rep["epsilons"].size() == 4);
    CHECK(rep["epsilons"][3].get<double>() == 1.0 / 80);
    REQUIRE(rep["sup_errors"].size() == 4);
    CHECK(rep["horizon"].get<double>() == doctest::Approx(4 * pi));
    CHECK(rep["observed_order"].get<double>() >= 0.8);
    CHECK(rep["observed_order"].get<double>() <= 1.3);

    SUBCASE("epsilons must be reciprocals of integers") {
        c["avg"]["epsilons"] = {0.3, 0.1};
        CHECK(invoke("avg-compare", s.write("bad.json", c)).code == kConfigError);
    }
}

TEST_CASE("sweep over the six reference cells") {
    Scratch s;
    json j = base();
    j["forcing"] = {{"type", "zero"}};
    j["sweep"] = {{"cells",
                   {{{"k", 50}, {"A", 1.5}, {"alpha", pi}},
                    {{"k", 10}, {"A", 6}},
                    {{"k", 10}, {"A", 1.5}, {"alpha", pi / 2}},
                    {{"k", 50}, {"A", 6}, {"alpha", nullptr}},
                    {{"k", 10}, {"A", 1.5}, {"alpha", pi}},
                    {{"k", 50}, {"A", 1.5}, {"alpha", pi / 2}}}}};
    const auto path = s.write("c.json", j);
    const auto r = invoke("sweep", path, {"--quiet", "--jobs", "3"});
    REQUIRE(r.code == kOk);
    const auto rows = lines(r.out);
    REQUIRE(rows.size() == 2 + 6);
    CHECK(rows[0] == "# format_version=1");
    CHECK(rows[1] == kSweepHeader);

    std::vector<SweepCell> seen;
    for (std::size_t i = 2; i < rows.size(); ++i) {
        const auto f = fields(rows[i]);
        REQUIRE(f.size() == 7);
        CHECK_MESSAGE(f[3] == "true", rows[i]);
        CHECK_MESSAGE(f[4] == "true", rows[i]);
        CHECK(std::strtod(f[5].c_str(), nullptr) > 0.0);
        CHECK(std::strtod(f[6].c_str(), nullptr) < 1.0);
        SweepCell c{std::stoi(f[0]), std::strtod(f[1].c_str(), nullptr), std::nullopt};
        if (!f[2].empty()) c.alpha = std::strtod(f[2].c_str(), nullptr);
        seen.push_back(c);
    }
    CHECK(std::is_sorted(seen.begin(), seen.end()));
    CHECK(seen.front().k == 10);
    CHECK(seen.back().k == 50);
    CHECK(std::count_if(seen.begin(), seen.end(), [](const SweepCell& c) { return !c.alpha; }) == 2);

    SUBCASE("row order and content do not depend on the worker count") {
        CHECK(invoke("sweep", path, {"--quiet", "--jobs", "1"}).out == r.out);
    }
}

TEST_CASE("sweep grid expansion") {
    json j = base();
    j["sweep"] = {{"k", {50, 10}}, {"A", {1.5, 6}}, {"alpha", {nullptr, pi}}};
    const RunConfig cfg = parse_config(j);
    REQUIRE(cfg.sweep);
    CHECK(cfg.sweep->cells.size() == 8);
    CHECK(std::is_sorted(cfg.sweep->cells.begin(), cfg.sweep->cells.end()));
    j["sweep"]["cells"] = json::array({{{"k", 10}, {"A", 6}}});
    CHECK_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("the installed binary reports exit codes") {
    Scratch s;
    json j = base();
    j["simulate"] = {{"t0", 0}, {"t1", 1}, {"x0", {0.05, 1.45, 0, 0}}};
    const std::string good = s.write("good.json", j);
    j["params"]["T"] = -1;
    const std::string bad = s.write("bad.json", j);
    const std::string exe = KWP_EXE;
    auto status = [&](const std::string& cfg) {
        const std::string cmd = "\"" + exe + "\" simulate --quiet --config \"" + cfg + "\" --out \"" +
                                s.path("o.csv") + "\" 2>/dev/null";
        const int raw = std::system(cmd.c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status(good) == 0);
    CHECK(status(bad) == 2);
}
