#include "kwp/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>

namespace kwp::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
    for (const auto& [key, _] : obj.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!ok) fail(join(path, key), "unknown key");
    }
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    return x;
}

double number_at(const json& obj, const std::string& path, const char* key, double fallback) {
    return obj.contains(key) ? number(obj.at(key), join(path, key)) : fallback;
}

double positive(double x, const std::string& path) {
    if (!(x > 0.0)) fail(path, "must be positive (got " + std::to_string(x) + ")");
    return x;
}

double non_negative(double x, const std::string& path) {
    if (x < 0.0) fail(path, "must be non-negative (got " + std::to_string(x) + ")");
    return x;
}

std::string text(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

long long integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<long long>();
}

const json& required(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) fail(join(path, key), "required");
    return obj.at(key);
}

State state(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 4) fail(path, "expected [theta, phi, p_theta, p_phi]");
    const State x{number(v[0], path + "[0]"), number(v[1], path + "[1]"), number(v[2], path + "[2]"),
                  number(v[3], path + "[3]")};
    if (std::abs(std::cos(x.theta)) < kChartGuard) fail(path, "theta is at the chart pole |cos(theta)| < 1e-6");
    return x;
}

std::vector<double> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

int k_value(const json& v, const std::string& path) {
    const long long k = integer(v, path);
    if (k < 1 || k > 1000000) fail(path, "must be an integer in [1, 1e6]");
    return static_cast<int>(k);
}

Params parse_params(const json& p) {
    const std::string path = "params";
    only_keys(p, path, {"a", "k", "epsilon", "T", "mu"});
    Params out;
    out.a = non_negative(number_at(p, path, "a", 0.0), "params.a");
    out.T = positive(number_at(p, path, "T", out.T), "params.T");
    out.mu = non_negative(number_at(p, path, "mu", 0.0), "params.mu");
    const bool has_k = p.contains("k"), has_eps = p.contains("epsilon");
    if (has_k == has_eps) fail("params", "give exactly one of k or epsilon");
    if (has_k) out.epsilon = 1.0 / k_value(p.at("k"), "params.k");
    if (has_eps) {
        out.epsilon = positive(number(p.at("epsilon"), "params.epsilon"), "params.epsilon");
        if (out.epsilon > 1.0) fail("params.epsilon", "must be in (0, 1]");
    }
    return out;
}

StepControl parse_control(const json& c) {
    const std::string path = "integrator";
    only_keys(c, path, {"rtol", "atol", "h_init", "h_max", "h_min", "max_steps"});
    StepControl s;
    s.rtol = positive(number_at(c, path, "rtol", s.rtol), "integrator.rtol");
    s.atol = positive(number_at(c, path, "atol", s.atol), "integrator.atol");
    s.h_init = positive(number_at(c, path, "h_init", s.h_init), "integrator.h_init");
    s.h_max = positive(number_at(c, path, "h_max", s.h_max), "integrator.h_max");
    s.h_min = positive(number_at(c, path, "h_min", s.h_min), "integrator.h_min");
    if (c.contains("max_steps")) {
        const long long m = integer(c.at("max_steps"), "integrator.max_steps");
        if (m < 1) fail("integrator.max_steps", "must be >= 1");
        s.max_steps = static_cast<std::size_t>(m);
    }
    if (!(s.h_min <= s.h_init && s.h_init <= s.h_max)) fail("integrator", "need h_min <= h_init <= h_max");
    return s;
}

std::vector<int> parse_schedule(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of k values (0 or \"averaged\")");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        if (v[i].is_string() && v[i].get<std::string>() == "averaged") out.push_back(0);
        else if (v[i].is_number_integer() && v[i].get<long long>() == 0) out.push_back(0);
        else out.push_back(k_value(v[i], p));
    }
    return out;
}

OrbitBlock parse_orbit(const json& o, const StepControl* control) {
    const std::string path = "orbit";
    only_keys(o, path, {"seed", "x0", "start", "transient_periods", "schedule", "tol_res", "max_iter", "height_samples"});
    OrbitBlock b;
    if (control) b.newton.control = *control;
    const std::string seed = o.contains("seed") ? text(o.at("seed"), "orbit.seed") : "attractor";
    if (seed == "explicit") b.strategy = SeedStrategy::Explicit;
    else if (seed == "attractor") b.strategy = SeedStrategy::Attractor;
    else if (seed == "continuation") b.strategy = SeedStrategy::Continuation;
    else fail("orbit.seed", "expected explicit, attractor or continuation");
    if (o.contains("x0")) b.x0 = state(o.at("x0"), "orbit.x0");
    if (o.contains("start")) b.start = state(o.at("start"), "orbit.start");
    b.transient_periods = positive(number_at(o, path, "transient_periods", b.transient_periods), "orbit.transient_periods");
    if (o.contains("schedule")) b.schedule = parse_schedule(o.at("schedule"), "orbit.schedule");
    b.newton.tol_res = positive(number_at(o, path, "tol_res", b.newton.tol_res), "orbit.tol_res");
    if (o.contains("max_iter")) {
        const long long m = integer(o.at("max_iter"), "orbit.max_iter");
        if (m < 1) fail("orbit.max_iter", "must be >= 1");
        b.newton.max_iter = static_cast<int>(m);
    }
    if (o.contains("height_samples")) {
        const long long m = integer(o.at("height_samples"), "orbit.height_samples");
        if (m < 1000) fail("orbit.height_samples", "must be >= 1000");
        b.newton.height_samples = static_cast<int>(m);
    }
    if (b.strategy == SeedStrategy::Explicit && !b.x0) fail("orbit.x0", "required when seed is explicit");
    if (b.strategy == SeedStrategy::Continuation && b.schedule.empty())
        fail("orbit.schedule", "required when seed is continuation");
    return b;
}

LemmaBlock parse_lemmas(const json& l) {
    const std::string path = "lemmas";
    only_keys(l, path, {"ids", "n", "seed", "phase_grid"});
    LemmaBlock b;
    if (l.contains("ids")) {
        const json& ids = l.at("ids");
        if (!ids.is_array() || ids.empty()) fail("lemmas.ids", "expected a non-empty array");
        b.ids.clear();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const long long id = integer(ids[i], "lemmas.ids[" + std::to_string(i) + "]");
            if (id < 1 || id > 4) fail("lemmas.ids[" + std::to_string(i) + "]", "must be 1, 2, 3 or 4");
            b.ids.push_back(static_cast<int>(id));
        }
    }
    if (l.contains("n")) {
        const long long n = integer(l.at("n"), "lemmas.n");
        if (n < 1) fail("lemmas.n", "must be >= 1");
        b.n = static_cast<std::size_t>(n);
    }
    const long long seed = integer(required(l, path, "seed"), "lemmas.seed");
    if (seed < 0) fail("lemmas.seed", "must be non-negative");
    b.seed = static_cast<std::uint64_t>(seed);
    if (l.contains("phase_grid")) {
        const long long g = integer(l.at("phase_grid"), "lemmas.phase_grid");
        if (g < 1) fail("lemmas.phase_grid", "must be >= 1");
        b.phase_grid = static_cast<int>(g);
    }
    return b;
}

AvgBlock parse_avg(const json& a) {
    const std::string path = "avg";
    only_keys(a, path, {"x0", "horizon", "epsilons"});
    AvgBlock b;
    b.x0 = state(required(a, path, "x0"), "avg.x0");
    if (a.contains("horizon")) b.horizon = positive(number(a.at("horizon"), "avg.horizon"), "avg.horizon");
    b.epsilons = a.contains("epsilons") ? numbers(a.at("epsilons"), "avg.epsilons")
                                        : std::vector<double>{1.0 / 10, 1.0 / 20, 1.0 / 40, 1.0 / 80};
    if (b.epsilons.size() < 2) fail("avg.epsilons", "need at least two values");
    for (std::size_t i = 0; i < b.epsilons.size(); ++i) {
        const std::string p = "avg.epsilons[" + std::to_string(i) + "]";
        const double e = positive(b.epsilons[i], p);
        const double k = std::round(1.0 / e);
        if (std::abs(1.0 / k - e) > 1e-12 * e) fail(p, "must be 1/k for an integer k");
        b.epsilons[i] = 1.0 / k;
    }
    return b;
}

SweepBlock parse_sweep(const json& s) {
    const std::string path = "sweep";
    only_keys(s, path, {"cells", "k", "A", "alpha"});
    const bool grid = s.contains("k") || s.contains("A") || s.contains("alpha");
    if (s.contains("cells") == grid) fail("sweep", "give either cells or the k/A/alpha grid");
    std::set<SweepCell> cells;
    auto alpha_of = [](const json& v, const std::string& p) -> std::optional<double> {
        if (v.is_null()) return std::nullopt;
        return number(v, p);
    };
    if (grid) {
        const json& ks = required(s, path, "k");
        const json& As = required(s, path, "A");
        if (!ks.is_array() || ks.empty()) fail("sweep.k", "expected a non-empty array");
        const auto amps = numbers(As, "sweep.A");
        if (amps.empty()) fail("sweep.A", "expected a non-empty array");
        std::vector<std::optional<double>> alphas{std::nullopt};
        if (s.contains("alpha")) {
            const json& al = s.at("alpha");
            if (!al.is_array() || al.empty()) fail("sweep.alpha", "expected a non-empty array (null = rotating)");
            alphas.clear();
            for (std::size_t i = 0; i < al.size(); ++i)
                alphas.push_back(alpha_of(al[i], "sweep.alpha[" + std::to_string(i) + "]"));
        }
        for (std::size_t i = 0; i < ks.size(); ++i) {
            const int k = k_value(ks[i], "sweep.k[" + std::to_string(i) + "]");
            for (std::size_t j = 0; j < amps.size(); ++j)
                for (const auto& al : alphas)
                    cells.insert({k, non_negative(amps[j], "sweep.A[" + std::to_string(j) + "]"), al});
        }
    } else {
        const json& list = s.at("cells");
        if (!list.is_array() || list.empty()) fail("sweep.cells", "expected a non-empty array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string p = "sweep.cells[" + std::to_string(i) + "]";
            only_keys(list[i], p, {"k", "A", "alpha"});
            SweepCell c;
            c.k = k_value(required(list[i], p, "k"), p + ".k");
            c.A = non_negative(number(required(list[i], p, "A"), p + ".A"), p + ".A");
            if (list[i].contains("alpha")) c.alpha = alpha_of(list[i].at("alpha"), p + ".alpha");
            cells.insert(c);
        }
    }
    return SweepBlock{{cells.begin(), cells.end()}};
}

FloquetBlock parse_floquet(const json& f) {
    const std::string path = "floquet";
    only_keys(f, path, {"orbit_file", "base_phase"});
    FloquetBlock b;
    b.orbit_file = text(required(f, path, "orbit_file"), "floquet.orbit_file");
    b.base_phase = number_at(f, path, "base_phase", 0.0);
    if (b.base_phase < 0.0 || b.base_phase >= 1.0) fail("floquet.base_phase", "must be in [0, 1)");
    return b;
}

}  // namespace

ForcingSpec parse_forcing(const json& f) {
    const std::string path = "forcing";
    if (!f.is_object()) fail(path, "expected an object");
    const std::string t = text(required(f, path, "type"), "forcing.type");
    if (t == "zero") {
        only_keys(f, path, {"type"});
        return ZeroForcing{};
    }
    if (t == "rotating") {
        only_keys(f, path, {"type", "A"});
        return RotatingForcing{non_negative(number(required(f, path, "A"), "forcing.A"), "forcing.A")};
    }
    if (t == "oscillating") {
        only_keys(f, path, {"type", "A", "alpha"});
        return OscillatingAngleForcing{non_negative(number(required(f, path, "A"), "forcing.A"), "forcing.A"),
                                       number(required(f, path, "alpha"), "forcing.alpha")};
    }
    if (t == "fourier") {
        only_keys(f, path, {"type", "x_cos", "x_sin", "z_cos", "z_sin"});
        FourierForcing ff;
        if (f.contains("x_cos")) ff.x_cos = numbers(f.at("x_cos"), "forcing.x_cos");
        if (f.contains("x_sin")) ff.x_sin = numbers(f.at("x_sin"), "forcing.x_sin");
        if (f.contains("z_cos")) ff.z_cos = numbers(f.at("z_cos"), "forcing.z_cos");
        if (f.contains("z_sin")) ff.z_sin = numbers(f.at("z_sin"), "forcing.z_sin");
        return ff;
    }
    fail("forcing.type", "expected one of zero, rotating, oscillating, fourier (got \"" + t + "\")");
}

RunConfig parse_config(const json& j) {
    only_keys(j, "", {"format_version", "system", "params", "forcing", "region", "integrator", "simulate", "orbit",
                      "lemmas", "avg", "sweep", "floquet"});
    const long long version = integer(required(j, "", "format_version"), "format_version");
    if (version != kFormatVersion)
        fail("format_version", "unsupported version " + std::to_string(version) + " (expected 1)");

    RunConfig cfg;
    cfg.params = parse_params(required(j, "", "params"));
    if (j.contains("forcing")) cfg.params.forcing = parse_forcing(j.at("forcing"));

    if (j.contains("region")) {
        const json& r = j.at("region");
        only_keys(r, "region", {"c", "delta", "Delta"});
        RegionSpec region;
        region.c = positive(number(required(r, "region", "c"), "region.c"), "region.c");
        region.delta = positive(number(required(r, "region", "delta"), "region.delta"), "region.delta");
        cfg.Delta = positive(number_at(r, "region", "Delta", cfg.Delta), "region.Delta");
        cfg.region = region;
    }

    const std::string system = j.contains("system") ? text(j.at("system"), "system") : "full";
    if (system == "full") {
        cfg.kind = FullSystem{};
    } else if (system == "averaged") {
        cfg.kind = AveragedSystem{};
    } else if (system == "modified") {
        if (!cfg.region) fail("region", "required for the modified system");
        const BumpConfig bump{cfg.region->c, cfg.region->delta, cfg.Delta};
        try {
            bump.validate();
        } catch (const std::invalid_argument& e) {
            fail("region.Delta", e.what());
        }
        cfg.kind = ModifiedSystem{bump};
    } else {
        fail("system", "expected full, modified or averaged (got \"" + system + "\")");
    }

    if (j.contains("integrator")) {
        cfg.control = parse_control(j.at("integrator"));
        cfg.control_given = true;
    }
    if (j.contains("simulate")) {
        const json& s = j.at("simulate");
        only_keys(s, "simulate", {"t0", "t1", "x0", "sample_dt"});
        SimulateBlock b;
        b.t0 = number_at(s, "simulate", "t0", 0.0);
        b.t1 = number(required(s, "simulate", "t1"), "simulate.t1");
        if (!(b.t1 > b.t0)) fail("simulate.t1", "must exceed t0");
        b.x0 = state(required(s, "simulate", "x0"), "simulate.x0");
        if (s.contains("sample_dt")) b.sample_dt = positive(number(s.at("sample_dt"), "simulate.sample_dt"), "simulate.sample_dt");
        cfg.simulate = b;
    }
    if (j.contains("orbit")) cfg.orbit = parse_orbit(j.at("orbit"), cfg.control_given ? &cfg.control : nullptr);
    if (j.contains("lemmas")) cfg.lemmas = parse_lemmas(j.at("lemmas"));
    if (j.contains("avg")) cfg.avg = parse_avg(j.at("avg"));
    if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));
    if (j.contains("floquet")) cfg.floquet = parse_floquet(j.at("floquet"));

    try {
        cfg.params.validate();
    } catch (const std::invalid_argument& e) {
        fail("params", e.what());
    }
    return cfg;
}

json forcing_to_json(const ForcingSpec& spec) {
    return std::visit(
        [](const auto& f) -> json {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, ZeroForcing>) return {{"type", "zero"}};
            else if constexpr (std::is_same_v<F, RotatingForcing>) return {{"type", "rotating"}, {"A", f.A}};
            else if constexpr (std::is_same_v<F, OscillatingAngleForcing>)
                return {{"type", "oscillating"}, {"A", f.A}, {"alpha", f.alpha}};
            else
                return {{"type", "fourier"}, {"x_cos", f.x_cos}, {"x_sin", f.x_sin}, {"z_cos", f.z_cos}, {"z_sin", f.z_sin}};
        },
        spec);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace kwp::cli
