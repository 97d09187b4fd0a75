#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "osch/action.hpp"
#include "osch/config.hpp"
#include "osch/control.hpp"
#include "osch/experiments.hpp"
#include "osch/hawkes.hpp"
#include "osch/io.hpp"
#include "osch/limit.hpp"
#include "osch/model.hpp"
#include "osch/parallel.hpp"
#include "osch/sde.hpp"

namespace osch {

namespace cli_detail {

enum class LogLevel { silent = 0, error = 1, warn = 2, info = 3, debug = 4 };

inline LogLevel log_level() {
    const char* env = std::getenv("OSC_HAWKES_LOG");
    if (!env) return LogLevel::warn;
    const std::string v = env;
    if (v == "silent") return LogLevel::silent;
    if (v == "error") return LogLevel::error;
    if (v == "warn") return LogLevel::warn;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

inline void log(LogLevel lvl, const std::string& msg) {
    static const LogLevel active = log_level();
    if (static_cast<int>(lvl) <= static_cast<int>(active)) std::cerr << "[osch] " << msg << "\n";
}

/// One run directory: the manifest is written before any computation and
/// names every output file the run will produce. Runs whose output set is
/// only known afterwards (limit-analysis writes one CSV per orbit found)
/// extend the manifest once the extra files exist.
class RunDir {
  public:
    RunDir(const std::string& dir, nlohmann::json manifest, std::vector<std::string> outputs)
        : dir_(dir), manifest_(std::move(manifest)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw validation_error({"cannot create output directory: " + dir + " (" + ec.message() + ")"});
        set_outputs(std::move(outputs));
    }

    void set_outputs(std::vector<std::string> outputs) {
        manifest_["outputs"] = outputs;
        write("manifest.json", manifest_.dump(2) + "\n");
    }

    void write(const std::string& name, const std::string& content, bool gzip = false) const {
        write_file((std::filesystem::path(dir_) / name).string(), content, gzip);
    }

  private:
    std::string dir_;
    nlohmann::json manifest_;
};

inline State parse_state(const std::string& text, const Model& m, const Equilibrium* eq,
                         const Orbit* orbit) {
    if (text == "zero") return State::Zero(m.dim());
    if (text == "equilibrium") {
        if (!eq) throw validation_error({"equilibrium start requested but not available"});
        return eq->point;
    }
    if (text == "anchor") {
        if (!orbit) throw validation_error({"anchor start requested but no orbit found"});
        return orbit->anchor;
    }
    State x(m.dim());
    std::size_t pos = 0;
    for (int i = 0; i < m.dim(); ++i) {
        const std::size_t comma = text.find(',', pos);
        const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            x[i] = std::stod(tok);
        } catch (const std::exception&) {
            throw validation_error({"cannot parse state component '" + tok + "'"});
        }
        if (comma == std::string::npos && i + 1 < m.dim()) {
            throw validation_error({"state literal has fewer than " + std::to_string(m.dim()) + " components"});
        }
        pos = comma + 1;
    }
    return x;
}

struct Common {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int jobs = 0;
    bool refine = false;
    double dt = 0.0; // 0 = subcommand default
    bool gzip = false;

    int effective_jobs() const { return jobs > 0 ? jobs : default_jobs(); }
    double effective_dt(double fallback) const {
        double v = dt > 0.0 ? dt : fallback;
        return refine ? v / 2.0 : v;
    }
};

inline void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config_path, "model/config file (JSON or key=value)");
    if (needs_config) opt->required();
    cmd->add_option("--out", c.out_dir, "output directory")->required();
    cmd->add_option("--seed", c.seed, "top-level RNG seed");
    cmd->add_option("--jobs", c.jobs, "worker threads (default: cores)");
    cmd->add_flag("--refine", c.refine, "double every resolution knob");
    cmd->add_option("--dt", c.dt, "integration step override");
    cmd->add_flag("--gzip", c.gzip, "gzip CSV outputs");
}

inline nlohmann::json base_manifest(const std::string& subcommand, const Common& c,
                                    const nlohmann::json& resolved_config) {
    nlohmann::json man{{"subcommand", subcommand},
                       {"seed", c.seed},
                       {"jobs", c.effective_jobs()},
                       {"refine", c.refine},
                       {"config", resolved_config}};
    if (!c.config_path.empty()) {
        man["input_hash"] = git_blob_hash(read_file(c.config_path));
    }
    return man;
}

inline LimitSet analyze_limit(const Model& m, bool refine, double dt) {
    CycleOptions opts;
    opts.dt = dt;
    const Equilibrium eq = find_equilibrium(m);
    auto trials = default_trial_points(m, eq, refine ? 12 : 6);
    return find_limit_cycles(m, trials, opts);
}

inline nlohmann::json limitset_json(const LimitSet& ls) {
    nlohmann::json orbits = nlohmann::json::array();
    for (std::size_t k = 0; k < ls.orbits.size(); ++k) {
        orbits.push_back(orbit_json(ls.orbits[k], "orbit_" + std::to_string(k + 1) + ".csv"));
    }
    return nlohmann::json{{"equilibrium", equilibrium_json(ls.equilibrium)},
                          {"assumption4", ls.assumption4},
                          {"cycle_search_failed", ls.cycle_search_failed},
                          {"orbits", orbits}};
}

} // namespace cli_detail

/// Entry point behind the binary; takes argv-style arguments (without the
/// program name) and returns the process exit code: 0 success, 1 validation
/// failure, 2 numerical failure.
inline int cli_run(std::vector<std::string> args) {
    using namespace cli_detail;
    CLI::App app{"two-population oscillatory Hawkes toolkit"};
    app.require_subcommand(1);

    Common common;

    // ---- simulate-hawkes ----------------------------------------------
    long N1 = 10, N2 = 10;
    double horizon = 10.0;
    int grid = 512;
    auto* sim_hawkes = app.add_subcommand("simulate-hawkes", "exact event-level cascade simulation");
    add_common(sim_hawkes, common);
    sim_hawkes->add_option("--N1", N1, "population-1 size");
    sim_hawkes->add_option("--N2", N2, "population-2 size");
    sim_hawkes->add_option("--horizon", horizon, "simulation horizon");
    sim_hawkes->add_option("--grid", grid, "path grid samples");
    sim_hawkes->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        nlohmann::json man = base_manifest("simulate-hawkes", common, cfg);
        man["N1"] = N1;
        man["N2"] = N2;
        man["horizon"] = horizon;
        const std::string suffix = common.gzip ? ".gz" : "";
        RunDir run(common.out_dir, man, {"events.csv" + suffix, "path.csv" + suffix});
        HawkesOptions opts;
        opts.grid_samples = common.refine ? 2 * grid : grid;
        const HawkesResult res = simulate_hawkes(m, N1, N2, horizon, common.seed, opts);
        run.write("events.csv", events_csv(res.events), common.gzip);
        run.write("path.csv", path_csv(res.path), common.gzip);
    });

    // ---- simulate-sde ---------------------------------------------------
    long Nsde = 100;
    std::string x0_text = "equilibrium";
    double sde_horizon = 10.0;
    auto* sim_sde = app.add_subcommand("simulate-sde", "Euler-Maruyama diffusion approximation");
    add_common(sim_sde, common);
    sim_sde->add_option("--N", Nsde, "total population size (noise scale 1/sqrt(N))");
    sim_sde->add_option("--horizon", sde_horizon, "simulation horizon");
    sim_sde->add_option("--x0", x0_text, "start: equilibrium | zero | x1,...,xn");
    sim_sde->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        const double dt = common.effective_dt(1e-3);
        nlohmann::json man = base_manifest("simulate-sde", common, cfg);
        man["N"] = Nsde;
        man["horizon"] = sde_horizon;
        man["dt"] = dt;
        const std::string suffix = common.gzip ? ".gz" : "";
        RunDir run(common.out_dir, man, {"path.csv" + suffix});
        const Equilibrium eq = find_equilibrium(m);
        const State x0 = parse_state(x0_text, m, &eq, nullptr);
        const Path path = simulate_sde(m, static_cast<double>(Nsde), x0, sde_horizon, dt, common.seed);
        run.write("path.csv", path_csv(path), common.gzip);
    });

    // ---- limit-analysis -------------------------------------------------
    auto* limit_cmd = app.add_subcommand("limit-analysis", "equilibrium, roots, limit cycles");
    add_common(limit_cmd, common);
    limit_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        const double dt = common.effective_dt(1e-3);
        RunDir run(common.out_dir, base_manifest("limit-analysis", common, cfg), {"limitset.json"});
        const LimitSet ls = analyze_limit(m, common.refine, dt);
        std::vector<std::string> outputs{"limitset.json"};
        for (std::size_t k = 0; k < ls.orbits.size(); ++k) {
            outputs.push_back("orbit_" + std::to_string(k + 1) + ".csv");
        }
        run.set_outputs(outputs);
        run.write("limitset.json", limitset_json(ls).dump(2) + "\n");
        for (std::size_t k = 0; k < ls.orbits.size(); ++k) {
            Path samples;
            samples.dt = ls.orbits[k].period / static_cast<double>(ls.orbits[k].samples.size());
            samples.states = ls.orbits[k].samples;
            run.write("orbit_" + std::to_string(k + 1) + ".csv", path_csv(samples));
        }
        if (ls.cycle_search_failed) {
            log(LogLevel::warn, "assumption4 holds but no cycle was found from the trial battery");
        }
    });

    // ---- steer -----------------------------------------------------------
    std::string from_text = "equilibrium", to_text = "anchor";
    double steer_T = 2.0;
    auto* steer_cmd = app.add_subcommand("steer", "constructive control steering x to y");
    add_common(steer_cmd, common);
    steer_cmd->add_option("--from", from_text, "start: equilibrium | zero | anchor | x1,..,xn");
    steer_cmd->add_option("--to", to_text, "target: equilibrium | zero | anchor | x1,..,xn");
    steer_cmd->add_option("--T", steer_T, "steering horizon");
    steer_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        const double dt = common.effective_dt(1e-3);
        nlohmann::json man = base_manifest("steer", common, cfg);
        man["T"] = steer_T;
        man["dt"] = dt;
        RunDir run(common.out_dir, man, {"control.csv", "steer.json"});
        const LimitSet ls = analyze_limit(m, false, 1e-3);
        const Orbit* orb = ls.orbits.empty() ? nullptr : &ls.orbits.front();
        const State x = parse_state(from_text, m, &ls.equilibrium, orb);
        const State y = parse_state(to_text, m, &ls.equilibrium, orb);
        const SteerResult res = steer(m, x, y, steer_T, SteerOptions{dt});
        run.write("control.csv", control_csv(res.control));
        run.write("steer.json",
                  nlohmann::json{{"from", state_json(x)},
                                 {"to", state_json(y)},
                                 {"achieved", state_json(res.achieved)},
                                 {"action", res.action},
                                 {"endpoint_residual", res.endpoint_residual}}
                          .dump(2) +
                      "\n");
        if (res.endpoint_residual > 1e-3) {
            throw numerical_error("steer verification residual " + std::to_string(res.endpoint_residual) +
                                  "; decrease --dt");
        }
    });

    // ---- certify-stlc ----------------------------------------------------
    double delta = 0.1, bound = 1e3;
    int phases = 4;
    auto* stlc_cmd = app.add_subcommand("certify-stlc", "small-time controllability certificate");
    add_common(stlc_cmd, common);
    stlc_cmd->add_option("--delta", delta, "certificate horizon (0,1)");
    stlc_cmd->add_option("--bound", bound, "control sup-norm bound M");
    stlc_cmd->add_option("--phases", phases, "orbit phases to certify");
    stlc_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        nlohmann::json man = base_manifest("certify-stlc", common, cfg);
        man["delta"] = delta;
        man["bound"] = bound;
        man["phases"] = phases;
        RunDir run(common.out_dir, man, {"certificate.json"});
        const LimitSet ls = analyze_limit(m, false, 1e-3);
        const Orbit& orb = stable_orbit(ls);
        const int k_phases = common.refine ? 2 * phases : phases;
        StlcOptions sopts;
        sopts.dt = common.effective_dt(1e-4);
        nlohmann::json cert_list = nlohmann::json::array();
        bool any_exceeded = false;
        for (int k = 0; k < k_phases; ++k) {
            const State x0 = orb.samples[static_cast<std::size_t>(k) * orb.samples.size() /
                                         static_cast<std::size_t>(k_phases)];
            const StlcCertificate cert = stlc_certificate(m, x0, delta, bound, sopts);
            any_exceeded = any_exceeded || cert.bound_exceeded;
            nlohmann::json zrows = nlohmann::json::array();
            for (int i = 0; i < cert.Z.rows(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (int j = 0; j < cert.Z.cols(); ++j) row.push_back(cert.Z(i, j));
                zrows.push_back(row);
            }
            cert_list.push_back(nlohmann::json{{"phase_index", k},
                                               {"point", state_json(x0)},
                                               {"min_singular_value", cert.min_singular},
                                               {"control_sup", cert.control_sup},
                                               {"bound_exceeded", cert.bound_exceeded},
                                               {"Z", zrows}});
        }
        run.write("certificate.json",
                  nlohmann::json{{"delta", delta}, {"bound", bound}, {"certificates", cert_list}}
                          .dump(2) +
                      "\n");
        if (any_exceeded) {
            throw numerical_error("stlc controls exceed the bound M; increase --bound or --delta");
        }
    });

    // ---- quasipotential ---------------------------------------------------
    std::string qp_from = "anchor", qp_to = "equilibrium";
    double qp_T = 0.0;
    auto* qp_cmd = app.add_subcommand("quasipotential", "certified upper bound on V_T / V");
    add_common(qp_cmd, common);
    qp_cmd->add_option("--from", qp_from, "start point");
    qp_cmd->add_option("--to", qp_to, "target point");
    qp_cmd->add_option("--T", qp_T, "fixed horizon (omit to minimize over the T grid)");
    qp_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        nlohmann::json man = base_manifest("quasipotential", common, cfg);
        man["T"] = qp_T;
        RunDir run(common.out_dir, man, {"quasipotential.json", "control.csv"});
        const LimitSet ls = analyze_limit(m, false, 1e-3);
        const Orbit* orb = ls.orbits.empty() ? nullptr : &ls.orbits.front();
        const State x = parse_state(qp_from, m, &ls.equilibrium, orb);
        const State y = parse_state(qp_to, m, &ls.equilibrium, orb);
        VtOptions vt;
        vt.seed = common.seed;
        if (common.refine) {
            vt.intervals *= 2;
            vt.restarts *= 2;
        }
        nlohmann::json doc{{"from", state_json(x)}, {"to", state_json(y)}};
        Control best;
        if (qp_T > 0.0) {
            const VtResult r = quasipotential_vt(m, x, y, qp_T, vt);
            doc["T"] = qp_T;
            doc["cost"] = r.cost;
            doc["endpoint_residual"] = r.endpoint_residual;
            doc["steer_action"] = r.steer_action;
            best = r.control;
        } else {
            VOptions vo;
            vo.vt = vt;
            vo.jobs = common.effective_jobs();
            if (common.refine) vo.t_count = 2 * vo.t_count - 1;
            const VResult r = quasipotential_v(m, x, y, vo);
            doc["cost"] = r.cost;
            doc["argmin_T"] = r.argmin_T;
            doc["t_grid"] = r.t_grid;
            doc["costs_per_T"] = r.costs;
            best = r.best_control;
        }
        run.write("quasipotential.json", doc.dump(2) + "\n");
        run.write("control.csv", control_csv(best));
    });

    // ---- class-costs -------------------------------------------------------
    int cc_phases = 16;
    auto* cc_cmd = app.add_subcommand("class-costs", "pairwise class cost matrix V(K_i, K_j)");
    add_common(cc_cmd, common);
    cc_cmd->add_option("--phases", cc_phases, "phase samples per orbit");
    cc_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        nlohmann::json man = base_manifest("class-costs", common, cfg);
        man["phases"] = cc_phases;
        RunDir run(common.out_dir, man, {"costs.json"});
        const LimitSet ls = analyze_limit(m, false, 1e-3);
        CostOptions opts;
        opts.phases_per_orbit = common.refine ? 2 * cc_phases : cc_phases;
        opts.jobs = common.effective_jobs();
        opts.v.vt.seed = common.seed;
        if (common.refine) {
            opts.v.vt.intervals *= 2;
            opts.v.vt.restarts *= 2;
            opts.v.t_count = 2 * opts.v.t_count - 1;
        }
        const CostMatrix costs = class_costs(m, ls, opts);
        nlohmann::json entries = nlohmann::json::array();
        for (int i = 0; i < costs.L; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < costs.L; ++j) row.push_back(costs.entries(i, j));
            entries.push_back(row);
        }
        run.write("costs.json",
                  nlohmann::json{{"L", costs.L}, {"entries", entries}}.dump(2) + "\n");
    });

    // ---- fw-weights ---------------------------------------------------------
    std::string costs_path;
    auto* fw_cmd = app.add_subcommand("fw-weights", "graph-minimized weights W(K_i)");
    add_common(fw_cmd, common, /*needs_config=*/false);
    fw_cmd->add_option("--costs", costs_path, "costs.json from class-costs")->required();
    fw_cmd->callback([&] {
        const nlohmann::json doc = nlohmann::json::parse(read_file(costs_path));
        CostMatrix costs;
        costs.L = doc.at("L").get<int>();
        costs.entries = Eigen::MatrixXd(costs.L, costs.L);
        for (int i = 0; i < costs.L; ++i) {
            for (int j = 0; j < costs.L; ++j) {
                const auto& cell = doc.at("entries").at(i).at(j);
                costs.entries(i, j) = cell.is_null() ? std::numeric_limits<double>::infinity()
                                                     : cell.get<double>();
            }
        }
        nlohmann::json man = base_manifest("fw-weights", common, nlohmann::json::object());
        man["input_hash"] = git_blob_hash(read_file(costs_path));
        RunDir run(common.out_dir, man, {"weights.json"});
        const Weights w = fw_weights(costs);
        nlohmann::json wj = nlohmann::json::array();
        for (int i = 0; i < w.w.size(); ++i) wj.push_back(w.w(i));
        run.write("weights.json",
                  nlohmann::json{{"w", wj}, {"argmin_class", w.argmin_class}}.dump(2) + "\n");
    });

    // ---- exit-times -----------------------------------------------------------
    ExitTimeOptions et;
    auto* et_cmd = app.add_subcommand("exit-times", "tube exit time growth study");
    add_common(et_cmd, common);
    et_cmd->add_option("--Ns", et.Ns, "population ladder");
    et_cmd->add_option("--eps", et.eps, "inner tube radius");
    et_cmd->add_option("--eps-bar", et.eps_bar, "outer tube radius");
    et_cmd->add_option("--replicas", et.replicas, "replicas per N");
    et_cmd->add_option("--cap", et.cap, "per-replica time cap");
    et_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        et.dt = common.effective_dt(1e-3);
        et.seed = common.seed;
        et.jobs = common.effective_jobs();
        if (common.refine) et.replicas *= 2;
        nlohmann::json man = base_manifest("exit-times", common, cfg);
        man["eps"] = et.eps;
        man["eps_bar"] = et.eps_bar;
        man["replicas"] = et.replicas;
        man["dt"] = et.dt;
        RunDir run(common.out_dir, man, {"study.json", "replicas.csv"});
        const LimitSet ls = analyze_limit(m, false, 1e-3);
        const ExitTimeResult res = exit_time_study(m, ls, et);
        nlohmann::json recs = nlohmann::json::array();
        for (const auto& r : res.records) recs.push_back(record_json(r));
        run.write("study.json",
                  nlohmann::json{{"records", recs},
                                 {"fit", fit_json(res.fit)},
                                 {"slope_lower_95", res.slope_lower_95},
                                 {"cap_warning", res.cap_warning},
                                 {"start", state_json(res.start)}}
                          .dump(2) +
                      "\n");
        std::vector<std::vector<double>> rows;
        for (const auto& r : res.replica_rows) rows.push_back({r[0], r[1], r[2], r[3]});
        run.write("replicas.csv", csv_document({"N", "replica", "exit_time", "capped"}, rows));
        if (res.cap_warning) {
            log(LogLevel::warn, "time cap hit in more than half the replicas at the largest N");
        }
    });

    // ---- occupation -------------------------------------------------------------
    OccupationOptions oc;
    auto* oc_cmd = app.add_subcommand("occupation", "invariant-measure occupation study");
    add_common(oc_cmd, common);
    oc_cmd->add_option("--Ns", oc.Ns, "population ladder");
    oc_cmd->add_option("--horizon", oc.horizon, "time-average window");
    oc_cmd->add_option("--burn-in", oc.burn_in, "burn-in time (default 20 periods)");
    oc_cmd->add_option("--replicas", oc.replicas, "independent runs per N");
    oc_cmd->add_option("--eps", oc.eps, "tube radius for mass-near-K fraction");
    oc_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        oc.dt = common.effective_dt(1e-3);
        oc.seed = common.seed;
        oc.jobs = common.effective_jobs();
        if (common.refine) oc.replicas *= 2;
        if (!cfg.contains("occupation") || !cfg.at("occupation").contains("regions")) {
            throw validation_error({"occupation study needs config key occupation.regions"});
        }
        oc.regions.clear();
        for (const auto& reg : cfg.at("occupation").at("regions")) {
            Region r;
            const auto& cvec = reg.at("center");
            r.center = State(static_cast<int>(cvec.size()));
            for (std::size_t i = 0; i < cvec.size(); ++i) r.center[static_cast<int>(i)] = cvec.at(i).get<double>();
            r.radius = reg.at("radius").get<double>();
            oc.regions.push_back(std::move(r));
        }
        nlohmann::json man = base_manifest("occupation", common, cfg);
        man["horizon"] = oc.horizon;
        man["replicas"] = oc.replicas;
        man["dt"] = oc.dt;
        RunDir run(common.out_dir, man, {"study.json", "replicas.csv"});
        const LimitSet ls = analyze_limit(m, false, 1e-3);
        const OccupationResult res = occupation_study(m, ls, oc);
        nlohmann::json tube = nlohmann::json::array();
        for (const auto& r : res.tube_occupation) tube.push_back(record_json(r));
        nlohmann::json regions = nlohmann::json::array();
        for (std::size_t g = 0; g < res.regions.size(); ++g) {
            nlohmann::json recs = nlohmann::json::array();
            for (const auto& r : res.regions[g].records) recs.push_back(record_json(r));
            nlohmann::json entry{{"records", recs}, {"zero_visits", res.regions[g].zero_visits}};
            if (res.regions[g].fit_valid) {
                entry["fit"] = fit_json(res.regions[g].fit);
                entry["slope_upper_95"] = res.regions[g].slope_upper_95;
            }
            regions.push_back(entry);
        }
        run.write("study.json",
                  nlohmann::json{{"tube_occupation", tube},
                                 {"regions", regions},
                                 {"burn_in_used", res.burn_in_used}}
                          .dump(2) +
                      "\n");
        std::vector<std::vector<double>> rows;
        for (const auto& r : res.replica_rows) rows.push_back({r[0], r[1], r[2], r[3]});
        run.write("replicas.csv",
                  csv_document({"region", "N", "replica", "occupation"}, rows));
    });

    // ---- weak-error ----------------------------------------------------------------
    WeakErrorOptions we;
    auto* we_cmd = app.add_subcommand("weak-error", "PDMP vs diffusion weak error study");
    add_common(we_cmd, common);
    we_cmd->add_option("--Ns", we.Ns, "population ladder");
    we_cmd->add_option("--replicas", we.replicas, "replicas per N");
    we_cmd->add_option("--t", we.t, "evaluation time");
    we_cmd->callback([&] {
        const nlohmann::json cfg = parse_config(read_file(common.config_path));
        const Model m = make_model(cfg);
        we.dt = common.effective_dt(1e-3);
        we.seed = common.seed;
        we.jobs = common.effective_jobs();
        if (common.refine) we.replicas *= 2;
        nlohmann::json man = base_manifest("weak-error", common, cfg);
        man["t"] = we.t;
        man["replicas"] = we.replicas;
        man["dt"] = we.dt;
        RunDir run(common.out_dir, man, {"study.json", "records.csv"});
        const Equilibrium eq = find_equilibrium(m);
        double center = eq.point[0], scale = 1.0;
        if (cfg.contains("weak_error")) {
            center = cfg.at("weak_error").value("center", center);
            scale = cfg.at("weak_error").value("scale", scale);
        }
        we.x0 = State::Zero(m.dim());
        const WeakErrorResult res = weak_error_study(m, smoothed_x1(center, scale), we);
        nlohmann::json recs = nlohmann::json::array();
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < res.records.size(); ++i) {
            recs.push_back(record_json(res.records[i]));
            rows.push_back({res.records[i].key, res.records[i].estimate, res.records[i].std_error,
                            res.pdmp_means[i], res.sde_means[i], res.sde_means_half[i]});
        }
        run.write("study.json",
                  nlohmann::json{{"records", recs},
                                 {"fit", fit_json(res.fit)},
                                 {"noise_warning", res.noise_warning},
                                 {"suggested_replicas", res.suggested_replicas}}
                          .dump(2) +
                      "\n");
        run.write("records.csv",
                  csv_document({"N", "gap", "std_error", "pdmp_mean", "sde_mean", "sde_mean_half"}, rows));
        if (res.noise_warning) {
            log(LogLevel::warn, "Monte Carlo error is comparable to the weak-error signal; suggested replicas: " +
                                    std::to_string(res.suggested_replicas));
        }
    });

    std::vector<const char*> argv;
    argv.push_back("osch");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace osch
