#include "kwp/cli/commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>

#include "CLI11.hpp"

namespace kwp::cli {

using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json state_json(const State& x) { return json::array({x.theta, x.phi, x.p_theta, x.p_phi}); }

State state_from(const json& v) {
    if (!v.is_array() || v.size() != 4) throw ConfigError("expected a 4-vector state");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

json matrix_json(const Eigen::Matrix4d& m) {
    json rows = json::array();
    for (int i = 0; i < 4; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2), m(i, 3)});
    return rows;
}

json multipliers_json(const Multipliers& m) {
    json out = json::array();
    for (const auto& z : m) out.push_back({z.real(), z.imag()});
    return out;
}

Snapshot snapshot_for(int k, const RunConfig& cfg) {
    Snapshot s{FullSystem{}, cfg.params};
    if (k == 0) s.kind = AveragedSystem{};
    else s.params.epsilon = 1.0 / k;
    return s;
}

struct Context {
    const RunConfig& cfg;
    std::ostream& out;
    std::ostream& log;
    bool quiet;
    int jobs;

    void note(const std::string& msg) const {
        if (!quiet) log << "kwp: " << msg << '\n';
    }
};

void require_block(bool present, const char* name) {
    if (!present) throw ConfigError(std::string(name) + ": required for this command");
}

int cmd_simulate(const Context& c) {
    require_block(c.cfg.simulate.has_value(), "simulate");
    const auto& s = *c.cfg.simulate;
    const StepControl control = c.cfg.control;
    const Trajectory tr = integrate(c.cfg.kind, s.t0, s.x0, s.t1, c.cfg.params, control, s.sample_dt);
    write_trajectory_csv(c.out, tr);
    c.note(std::string("simulate: ") + status_name(tr.status) + " at t=" + num(tr.status_time) + ", " +
           std::to_string(tr.times.size()) + " rows");
    switch (tr.status) {
        case IntegrationStatus::Completed: return kOk;
        case IntegrationStatus::Singular: return kFall;
        default: return kIntegratorFailure;
    }
}

PeriodicOrbit solve_orbit(const Context& c) {
    require_block(c.cfg.orbit.has_value(), "orbit");
    const OrbitBlock& o = *c.cfg.orbit;
    switch (o.strategy) {
        case SeedStrategy::Explicit: return find_orbit_newton(c.cfg.kind, c.cfg.params, *o.x0, o.newton);
        case SeedStrategy::Attractor: {
            const State seed = attractor_seed(c.cfg.kind, c.cfg.params, o.transient_periods * c.cfg.params.T,
                                              o.start, o.newton.control);
            return find_orbit_newton(c.cfg.kind, c.cfg.params, seed, o.newton);
        }
        case SeedStrategy::Continuation: {
            ContinuationPlan plan;
            plan.newton = o.newton;
            for (int k : o.schedule) plan.schedule.push_back(snapshot_for(k, c.cfg));
            const Snapshot& first = plan.schedule.front();
            plan.seed = o.x0 ? *o.x0
                             : attractor_seed(first.kind, first.params, o.transient_periods * first.params.T,
                                              o.start, o.newton.control);
            return continuation(plan).back();
        }
    }
    throw std::logic_error("unreachable");
}

int cmd_find_orbit(const Context& c) {
    const PeriodicOrbit orbit = solve_orbit(c);
    c.out << orbit_to_json(orbit).dump(2) << '\n';
    c.note("find-orbit: converged, residual " + num(orbit.residual) + ", max |multiplier| " +
           num(max_modulus(orbit.multipliers)));
    return kOk;
}

int cmd_seed(const Context& c) {
    require_block(c.cfg.orbit.has_value(), "orbit");
    const OrbitBlock& o = *c.cfg.orbit;
    const double periods = std::ceil(o.transient_periods);
    const State x = attractor_seed(c.cfg.kind, c.cfg.params, o.transient_periods * c.cfg.params.T, o.start,
                                   o.newton.control);
    json j{{"format_version", kFormatVersion},
           {"x0", state_json(x)},
           {"t", periods * c.cfg.params.T},
           {"periods", periods},
           {"start", state_json(o.start)},
           {"params", params_to_json(c.cfg.kind, c.cfg.params)}};
    c.out << j.dump(2) << '\n';
    return kOk;
}

int cmd_floquet(const Context& c) {
    require_block(c.cfg.floquet.has_value(), "floquet");
    const FloquetBlock& f = *c.cfg.floquet;
    std::ifstream in(f.orbit_file);
    if (!in) throw ConfigError("floquet.orbit_file: cannot open " + f.orbit_file);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("floquet.orbit_file: " + std::string(e.what()));
    }
    const PeriodicOrbit orbit = orbit_from_json(j);
    const StepControl control = c.cfg.control_given ? c.cfg.control : default_orbit_control();
    const double residual = max_abs_diff(strobe_map(orbit.x0, 0.0, orbit.kind, orbit.params, control), orbit.x0);
    const double t_base = f.base_phase * orbit.period;
    const Eigen::Matrix4d var = monodromy_var(orbit, t_base, control);
    const Eigen::Matrix4d fd = monodromy_fd(orbit, t_base, control);
    const Multipliers m = floquet(var);
    const double rel = (fd - var).cwiseAbs().maxCoeff() / var.cwiseAbs().maxCoeff();
    const double margin = NewtonOptions{}.stability_margin;
    json out{{"format_version", kFormatVersion},
             {"base_phase", f.base_phase},
             {"residual", residual},
             {"multipliers", multipliers_json(m)},
             {"multipliers_fd", multipliers_json(floquet(fd))},
             {"max_multiplier_modulus", max_modulus(m)},
             {"stable", max_modulus(m) < 1.0 - margin},
             {"monodromy_var", matrix_json(var)},
             {"monodromy_fd", matrix_json(fd)},
             {"fd_var_relative_difference", rel},
             {"params", params_to_json(orbit.kind, orbit.params)}};
    c.out << out.dump(2) << '\n';
    c.note("floquet: max |multiplier| " + num(max_modulus(m)) + ", fd/var difference " + num(rel));
    return kOk;
}

int cmd_check_lemmas(const Context& c) {
    require_block(c.cfg.lemmas.has_value(), "lemmas");
    if (!c.cfg.region) throw ConfigError("region: required for check-lemmas");
    const LemmaBlock& l = *c.cfg.lemmas;
    json reports = json::array();
    bool pass = true;
    for (int id : l.ids) {
        const LemmaReport r = check_lemma(id, *c.cfg.region, c.cfg.params, l.n, l.seed, l.phase_grid);
        pass = pass && r.pass;
        reports.push_back(lemma_to_json(r));
        c.note("lemma " + std::to_string(id) + ": " + (r.pass ? "pass" : "FAIL") + ", worst margin " +
               num(r.worst_margin));
    }
    json out{{"format_version", kFormatVersion},
             {"region", {{"c", c.cfg.region->c}, {"delta", c.cfg.region->delta}}},
             {"params", params_to_json(c.cfg.kind, c.cfg.params)},
             {"lemmas", reports},
             {"pass", pass}};
    c.out << out.dump(2) << '\n';
    return pass ? kOk : kCheckFailed;
}

int cmd_avg_compare(const Context& c) {
    require_block(c.cfg.avg.has_value(), "avg");
    const AvgBlock& a = *c.cfg.avg;
    const AvgCompareReport r = avg_compare(c.cfg.params, a.x0, a.horizon.value_or(2.0 * c.cfg.params.T), a.epsilons);
    c.out << avg_to_json(r).dump(2) << '\n';
    c.note("avg-compare: observed order " + num(r.observed_order));
    return kOk;
}

int cmd_sweep(const Context& c) {
    require_block(c.cfg.sweep.has_value(), "sweep");
    const auto rows = run_sweep(c.cfg, c.jobs);
    write_sweep_csv(c.out, rows);
    std::size_t ok = 0;
    for (const auto& r : rows) ok += r.converged && r.stable;
    c.note("sweep: " + std::to_string(ok) + "/" + std::to_string(rows.size()) + " cells converged and stable");
    return kOk;
}

/// Maps library failures to exit codes.
int guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "kwp: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        err << "kwp: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const GuardHit& e) {
        err << "kwp: fall: " << e.what() << '\n';
        return kFall;
    } catch (const ChartSingularity& e) {
        err << "kwp: fall: " << e.what() << '\n';
        return kFall;
    } catch (const IntegrationError& e) {
        err << "kwp: " << e.what() << '\n';
        return e.status() == IntegrationStatus::Singular ? kFall : kIntegratorFailure;
    } catch (const NoConvergence& e) {
        err << "kwp: " << e.what() << " (residual " << num(e.residual()) << ")\n";
        return kNoConvergence;
    } catch (const SingularJacobian& e) {
        err << "kwp: " << e.what() << '\n';
        return kNoConvergence;
    } catch (const ContinuationStuck& e) {
        err << "kwp: " << e.what() << '\n';
        return kNoConvergence;
    } catch (const EmptySet& e) {
        err << "kwp: config error: " << e.what() << '\n';
        return kConfigError;
    }
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
    os << "# format_version=" << kFormatVersion << '\n' << kTrajectoryHeader << '\n';
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        const double t = tr.times[i];
        const State& x = tr.states[i];
        const Cartesian r = state_to_cartesian(x, t, tr.params);
        os << num(t) << ',' << num(x.theta) << ',' << num(x.phi) << ',' << num(x.p_theta) << ',' << num(x.p_phi)
           << ',' << num(r.x) << ',' << num(r.y) << ',' << num(r.z) << ',' << num(height(x)) << ','
           << num(energy(x)) << '\n';
    }
}

json params_to_json(const SystemKind& kind, const Params& p) {
    json j{{"system", kind_name(kind)}, {"a", p.a},   {"epsilon", p.epsilon},
           {"T", p.T},                  {"mu", p.mu}, {"forcing", forcing_to_json(p.forcing)}};
    if (const auto k = p.k()) j["k"] = *k;
    else j["k"] = nullptr;
    if (const auto* m = std::get_if<ModifiedSystem>(&kind))
        j["bump"] = {{"c", m->bump.c}, {"delta", m->bump.delta}, {"Delta", m->bump.Delta}};
    return j;
}

json orbit_to_json(const PeriodicOrbit& orbit) {
    json j{{"format_version", kFormatVersion},
           {"x0", state_json(orbit.x0)},
           {"period", orbit.period},
           {"residual", orbit.residual},
           {"multipliers", multipliers_json(orbit.multipliers)},
           {"stable", orbit.stable},
           {"min_height", orbit.min_height},
           {"iterations", orbit.iterations},
           {"params", params_to_json(orbit.kind, orbit.params)}};
    if (const auto k = orbit.params.k(); k && is_fast(orbit.kind)) j["k"] = *k;
    else j["k"] = nullptr;
    return j;
}

PeriodicOrbit orbit_from_json(const json& j) {
    if (!j.is_object() || !j.contains("format_version") || !j.at("format_version").is_number_integer())
        throw ConfigError("orbit: missing format_version");
    if (j.at("format_version").get<int>() != kFormatVersion)
        throw ConfigError("orbit.format_version: unsupported version " + j.at("format_version").dump());
    try {
        const json& pj = j.at("params");
        PeriodicOrbit o;
        o.params.a = pj.at("a").get<double>();
        o.params.epsilon = pj.at("epsilon").get<double>();
        o.params.T = pj.at("T").get<double>();
        o.params.mu = pj.at("mu").get<double>();
        o.params.forcing = parse_forcing(pj.at("forcing"));
        const std::string system = pj.at("system").get<std::string>();
        if (system == "full") o.kind = FullSystem{};
        else if (system == "averaged") o.kind = AveragedSystem{};
        else if (system == "modified") {
            const json& b = pj.at("bump");
            o.kind = ModifiedSystem{{b.at("c").get<double>(), b.at("delta").get<double>(), b.at("Delta").get<double>()}};
        } else throw ConfigError("orbit.params.system: unknown system " + system);
        o.x0 = state_from(j.at("x0"));
        o.period = j.at("period").get<double>();
        o.residual = j.at("residual").get<double>();
        const json& m = j.at("multipliers");
        for (std::size_t i = 0; i < 4; ++i) o.multipliers[i] = {m.at(i).at(0).get<double>(), m.at(i).at(1).get<double>()};
        o.stable = j.at("stable").get<bool>();
        o.min_height = j.at("min_height").get<double>();
        o.iterations = j.value("iterations", 0);
        o.params.validate();
        return o;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("orbit: malformed orbit JSON: ") + e.what());
    }
}

json lemma_to_json(const LemmaReport& r) {
    return {{"lemma_id", r.lemma_id},
            {"pass", r.pass},
            {"worst_margin", r.worst_margin},
            {"worst_point", state_json(r.worst_point)},
            {"worst_time", r.worst_time},
            {"n", r.n_samples},
            {"seed", r.seed},
            {"phase_grid", r.phase_grid},
            {"evaluations", r.evaluations}};
}

json avg_to_json(const AvgCompareReport& r) {
    json order = std::isfinite(r.observed_order) ? json(r.observed_order) : json(nullptr);
    return {{"format_version", kFormatVersion},
            {"epsilons", r.epsilons},
            {"sup_errors", r.sup_errors},
            {"observed_order", order},
            {"horizon", r.horizon}};
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, int jobs) {
    const auto& cells = cfg.sweep->cells;
    const OrbitBlock orbit = cfg.orbit.value_or(OrbitBlock{});
    std::vector<SweepRow> rows(cells.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const SweepCell& cell = cells[i];
            SweepRow& row = rows[i];
            row.cell = cell;
            ForcingSpec forcing = RotatingForcing{cell.A};
            if (cell.alpha) forcing = OscillatingAngleForcing{cell.A, *cell.alpha};
            const Params p = Params::with_k(cell.k, cfg.params.a, cfg.params.mu, forcing, cfg.params.T);
            try {
                const State seed =
                    attractor_seed(FullSystem{}, p, orbit.transient_periods * p.T, orbit.start, orbit.newton.control);
                const PeriodicOrbit o = find_orbit_newton(FullSystem{}, p, seed, orbit.newton);
                row.converged = true;
                row.stable = o.stable;
                row.min_height = o.min_height;
                row.max_modulus = max_modulus(o.multipliers);
            } catch (const Error&) {
                row.converged = false;
                row.min_height = std::nan("");
                row.max_modulus = std::nan("");
            }
        }
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    std::vector<std::jthread> pool;
    for (int w = 1; w < n; ++w) pool.emplace_back(worker);
    worker();
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "# format_version=" << kFormatVersion << '\n' << kSweepHeader << '\n';
    for (const auto& r : rows) {
        os << r.cell.k << ',' << num(r.cell.A) << ',' << (r.cell.alpha ? num(*r.cell.alpha) : std::string()) << ','
           << (r.converged ? "true" : "false") << ',' << (r.stable ? "true" : "false") << ',' << num(r.min_height)
           << ',' << num(r.max_modulus) << '\n';
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"kwp: vibrating-pivot spherical pendulum toolkit"};
    app.require_subcommand(1);
    std::string config_path, out_path;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    bool quiet = false;

    const std::vector<std::pair<const char*, const char*>> commands{
        {"simulate", "integrate a trajectory and write CSV"},
        {"find-orbit", "Newton shooting for a T-periodic orbit, JSON output"},
        {"floquet", "monodromy and multipliers of a saved orbit"},
        {"check-lemmas", "sampled boundary sign checks"},
        {"avg-compare", "full vs averaged error for a list of epsilons"},
        {"sweep", "orbit table over (k, A, alpha) cells, CSV output"},
        {"seed", "attractor seed after a transient"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_path, "output file (default stdout)");
        sub->add_option("--jobs", jobs, "worker threads for sweep")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", quiet, "suppress progress messages");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "kwp: " << e.what() << '\n';
        return kConfigError;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    return guarded(
        [&]() -> int {
            const RunConfig cfg = load_config(config_path);
            std::unique_ptr<std::ofstream> file;
            if (!out_path.empty()) {
                file = std::make_unique<std::ofstream>(out_path, std::ios::binary);
                if (!*file) throw ConfigError("--out: cannot open " + out_path);
            }
            const Context ctx{cfg, file ? *file : out, err, quiet, jobs};
            if (command == "simulate") return cmd_simulate(ctx);
            if (command == "find-orbit") return cmd_find_orbit(ctx);
            if (command == "floquet") return cmd_floquet(ctx);
            if (command == "check-lemmas") return cmd_check_lemmas(ctx);
            if (command == "avg-compare") return cmd_avg_compare(ctx);
            if (command == "sweep") return cmd_sweep(ctx);
            return cmd_seed(ctx);
        },
        err);
}

}  // namespace kwp::cli
