#pragma once

// Batch command-line front end. Exit codes: 0 success, 1 usage, 2 scenario
// validation failure, 3 solver non-convergence or infeasibility, 4 internal
// error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "covnet/reports.hpp"
#include "covnet/scenario_io.hpp"

namespace covnet {

namespace cli_detail {

namespace fs = std::filesystem;

struct CommonArgs {
    std::string scenario_file;
    std::string out_dir = "covnet_out";
    double tol_eps = -1.0, tol_eps1 = -1.0, tol_eps2 = -1.0;
    int pwl_breakpoints = -1;
    bool no_departure_choice = false;
    bool no_price_info = false;
};

inline void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("scenario", a.scenario_file, "scenario file (JSON)")->required();
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--tol-eps", a.tol_eps, "fixed-point exit tolerance");
    cmd->add_option("--tol-eps1", a.tol_eps1, "inner-loop flow tolerance, p.u.");
    cmd->add_option("--tol-eps2", a.tol_eps2, "outer-loop latency tolerance, minutes");
    cmd->add_option("--pwl-breakpoints", a.pwl_breakpoints, "cost-curve breakpoints");
    cmd->add_flag("--no-departure-choice", a.no_departure_choice,
                  "pin departures to the first window interval");
    cmd->add_flag("--no-price-info", a.no_price_info,
                  "price loads after assignment instead of iterating");
}

inline LoadedScenario load(const CommonArgs& a) {
    ScenarioDocument doc = parse_and_validate(a.scenario_file);
    LoadedScenario loaded = build_scenario(doc);
    auto& cfg = loaded.sc.config;
    if (a.tol_eps > 0.0) cfg.eps = a.tol_eps;
    if (a.tol_eps1 > 0.0) cfg.eps1 = a.tol_eps1;
    if (a.tol_eps2 > 0.0) cfg.eps2 = a.tol_eps2;
    if (a.pwl_breakpoints >= 2) cfg.pwl_breakpoints = a.pwl_breakpoints;
    if (a.no_departure_choice) cfg.departure_time_choice = false;
    if (a.no_price_info) cfg.price_information = false;
    fs::create_directories(a.out_dir);
    return loaded;
}

inline PriceField load_price_file(const std::string& path, const AugmentedTrafficGraph& g,
                                  const ScenarioConfig& cfg) {
    PriceField lam = broadcast_lambda0(g, cfg);
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open price file " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string station, interval, price;
        std::getline(ss, station, ',');
        std::getline(ss, interval, ',');
        std::getline(ss, price, ',');
        try {
            const int li = g.link_index(station);
            const int t = std::stoi(interval);
            if (t < 1 || t > cfg.t_tn) throw ParseError("price interval out of range: " + line);
            lam[li][t] = std::stod(price);
        } catch (const std::invalid_argument&) {
            continue;  // header or malformed row
        }
    }
    return lam;
}

inline Eigen::MatrixXd load_loads_file(const std::string& path, const GridModel& grid,
                                       const ScenarioConfig& cfg) {
    Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(grid.buses.size(), cfg.t_dn);
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open load file " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string bus, interval, load;
        std::getline(ss, bus, ',');
        std::getline(ss, interval, ',');
        std::getline(ss, load, ',');
        try {
            const int bi = grid.bus_index(std::stoi(bus));
            const int t = std::stoi(interval);
            if (t < 1 || t > cfg.t_dn) throw ParseError("load interval out of range: " + line);
            mw(bi, t - 1) = std::stod(load);
        } catch (const std::invalid_argument&) {
            continue;
        }
    }
    return mw;
}

inline void write_dta_outputs(const fs::path& dir, const DtaSolution& sol,
                              const AugmentedTrafficGraph& g, const ScenarioConfig& cfg) {
    write_link_flows(dir / "link_flows.csv", sol, g, cfg);
    write_path_table(dir / "od_costs.csv", sol, g);
    write_convergence_log(dir / "dta_convergence.csv", sol);
    write_certificates(dir / "due_certificates.csv", sol, g);
}

inline int cmd_validate(const CommonArgs& a) {
    ScenarioDocument doc = parse_and_validate(a.scenario_file);
    std::cout << "scenario valid: " << doc.nodes.size() << " nodes, " << doc.base_links.size()
              << " links, " << doc.stations.size() << " stations, " << doc.grid.buses.size()
              << " buses, " << doc.od_pairs.size() << " O-D pairs\n";
    return 0;
}

inline int cmd_solve_dta(const CommonArgs& a, const std::string& lambda_file, bool dump_tsn_flag) {
    auto loaded = load(a);
    const auto& cfg = loaded.sc.config;
    PriceField lam = lambda_file.empty()
                         ? broadcast_lambda0(loaded.sc.graph, cfg)
                         : load_price_file(lambda_file, loaded.sc.graph, cfg);
    auto sol = nested_solve(loaded.sc.graph, lam, cfg);
    write_dta_outputs(a.out_dir, sol, loaded.sc.graph, cfg);
    if (dump_tsn_flag) {
        auto tsn = build_tsn(loaded.sc.graph, sol.tau_bar, cfg.t_tn);
        std::ofstream out(fs::path(a.out_dir) / "tsn_edges.txt");
        dump_tsn(tsn, loaded.sc.graph, out);
    }
    std::cout << "dta: outer=" << sol.outer_iterations << " due_gap=" << sol.due_gap
              << " converged=" << (sol.outer_converged ? "yes" : "no") << "\n";
    return sol.outer_converged && sol.inner_converged ? 0 : 3;
}

inline int cmd_solve_opf(const CommonArgs& a, const std::string& loads_file) {
    auto loaded = load(a);
    const auto& cfg = loaded.sc.config;
    Eigen::MatrixXd mw = loads_file.empty()
                             ? Eigen::MatrixXd::Zero(loaded.sc.grid.buses.size(), cfg.t_dn)
                             : load_loads_file(loads_file, loaded.sc.grid, cfg);
    auto sol = build_and_solve_opf(loaded.sc.grid, mw, cfg);
    extract_lmp(sol);
    write_opf_buses(fs::path(a.out_dir) / "opf_buses.csv", sol, loaded.sc.grid);
    write_opf_lines(fs::path(a.out_dir) / "opf_lines.csv", sol, loaded.sc.grid);
    write_opf_summary(fs::path(a.out_dir) / "opf_summary.csv", sol);
    std::cout << "opf: objective=" << sol.objective << " soc_gap=" << sol.soc_gap << "\n";
    if (sol.soc_gap > 1e-4)
        std::cerr << "warning: cone relaxation not tight (residual " << sol.soc_gap << ")\n";
    return 0;
}

inline int cmd_solve_eq(const CommonArgs& a) {
    auto loaded = load(a);
    auto res = solve_equilibrium(loaded.sc);
    fixed_point_residual(res, loaded.sc);
    const fs::path dir(a.out_dir);
    write_dta_outputs(dir, res.dta, loaded.sc.graph, loaded.sc.config);
    write_opf_buses(dir / "opf_buses.csv", res.opf, loaded.sc.grid);
    write_opf_lines(dir / "opf_lines.csv", res.opf, loaded.sc.grid);
    write_opf_summary(dir / "opf_summary.csv", res.opf);
    write_equilibrium_fcs(dir / "equilibrium_fcs.csv", res, loaded.sc.graph, loaded.sc.config);
    write_trajectory(dir / "trajectory.csv", res);
    std::cout << "equilibrium: iterations=" << res.iterations
              << " converged=" << (res.converged ? "yes" : "no")
              << " flow_residual=" << res.flow_residual
              << " price_residual=" << res.price_residual << " due_gap=" << res.dta.due_gap
              << "\n";
    return res.converged ? 0 : 3;
}

inline int cmd_mcs(const CommonArgs& a, int samples, std::uint64_t seed, bool seed_set) {
    auto loaded = load(a);
    if (!loaded.has_uncertainty)
        throw ValidationErrors({"scenario carries no uncertainty section"});
    auto dist = build_correlation(loaded.sc.graph.od_pairs, loaded.zones, loaded.correlation,
                                  loaded.cv);
    const std::uint64_t use_seed = seed_set ? seed : loaded.sc.config.master_seed;
    auto rep = run_mcs(loaded.sc, dist, samples, use_seed);
    const fs::path dir(a.out_dir);
    write_mcs_stats(dir / "mcs_fcs_stats.csv", rep);
    write_mcs_histograms(dir / "mcs_histograms.csv", rep);
    write_mcs_samples(dir / "mcs_samples.csv", rep);
    write_mcs_manifest(dir / "mcs_manifest.json", rep, loaded.sc.config);
    std::cout << "mcs: samples=" << rep.samples << " converged=" << rep.converged_count()
              << " failed=" << rep.failed_samples.size() << "\n";
    return 0;
}

inline int cmd_diagnose(const CommonArgs& a, double step, int dim_cap) {
    auto loaded = load(a);
    auto rep = contraction_diagnostic(loaded.sc, step, dim_cap);
    CsvWriter csv(fs::path(a.out_dir) / "contraction.csv",
                  {"dimension", "step_pu", "spectral_radius", "base_shift_pu"});
    csv.field(rep.dimension).field(rep.step).field(rep.spectral_radius).field(rep.base_shift);
    csv.endrow();
    std::cout << "contraction: dimension=" << rep.dimension
              << " spectral_radius=" << rep.spectral_radius
              << (rep.spectral_radius < 1.0 ? " (contraction plausible, uniqueness likely)"
                                            : " (no contraction evidence)")
              << "\n";
    return 0;
}

}  // namespace cli_detail

inline int run_command(std::vector<std::string> args) {
    CLI::App app{"coupled transportation / power-distribution equilibrium solver"};
    app.require_subcommand(1);

    cli_detail::CommonArgs va, da, oa, ea, ma, ga;
    std::string lambda_file, loads_file;
    bool dump_tsn_flag = false;
    int samples = 200;
    std::uint64_t seed = 0;
    double diag_step = 0.1;
    int diag_cap = 30;

    auto* validate_cmd = app.add_subcommand("validate", "check a scenario file");
    validate_cmd->add_option("scenario", va.scenario_file, "scenario file")->required();

    auto* dta_cmd = app.add_subcommand("solve-dta", "traffic assignment at fixed prices");
    cli_detail::add_common(dta_cmd, da);
    dta_cmd->add_option("--lambda", lambda_file, "price file: station,interval,price");
    dta_cmd->add_flag("--dump-tsn", dump_tsn_flag, "write the time-space edge list");

    auto* opf_cmd = app.add_subcommand("solve-opf", "dispatch at fixed charging loads");
    cli_detail::add_common(opf_cmd, oa);
    opf_cmd->add_option("--loads", loads_file, "load file: bus,interval,mw");

    auto* eq_cmd = app.add_subcommand("solve-eq", "coupled fixed-point equilibrium");
    cli_detail::add_common(eq_cmd, ea);

    auto* mcs_cmd = app.add_subcommand("mcs", "Monte Carlo over uncertain demands");
    cli_detail::add_common(mcs_cmd, ma);
    mcs_cmd->add_option("--samples", samples, "sample count");
    auto* seed_opt = mcs_cmd->add_option("--seed", seed, "master seed");

    auto* diag_cmd = app.add_subcommand("diagnose", "contraction diagnostic of the self-map");
    cli_detail::add_common(diag_cmd, ga);
    diag_cmd->add_option("--step", diag_step, "finite-difference step, p.u.");
    diag_cmd->add_option("--dim-cap", diag_cap, "max charging-link-interval variables");

    std::vector<const char*> argv;
    argv.push_back("covnet");
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (validate_cmd->parsed()) return cli_detail::cmd_validate(va);
        if (dta_cmd->parsed()) return cli_detail::cmd_solve_dta(da, lambda_file, dump_tsn_flag);
        if (opf_cmd->parsed()) return cli_detail::cmd_solve_opf(oa, loads_file);
        if (eq_cmd->parsed()) return cli_detail::cmd_solve_eq(ea);
        if (mcs_cmd->parsed()) return cli_detail::cmd_mcs(ma, samples, seed, seed_opt->count() > 0);
        if (diag_cmd->parsed()) return cli_detail::cmd_diagnose(ga, diag_step, diag_cap);
    } catch (const ValidationErrors& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InfeasibleDemand& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const NotConverged& e) {
        std::cerr << "not converged: " << e.what() << "\n";
        return 3;
    } catch (const TooLarge& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
    return 1;
}

}  // namespace covnet
