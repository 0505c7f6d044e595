#pragma once

// Fixed-point coupling of the traffic assignment and the grid dispatch:
// occupancies induce charging loads, the dispatch prices them, prices feed
// back into travel costs. Solved by plain alternation with optional
// flow averaging, plus numerical diagnostics for the self-map.

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "covnet/dta.hpp"
#include "covnet/opf.hpp"

namespace covnet {

struct Scenario {
    AugmentedTrafficGraph graph;
    GridModel grid;
    ScenarioConfig config;
};

// Average charging power per bus per OPF interval, MW. Bridges the finer
// DTA grid by averaging occupancy over the contained intervals.
inline Eigen::MatrixXd map_charging_load(const Grid& occupancy, const AugmentedTrafficGraph& g,
                                         const GridModel& grid, const ScenarioConfig& cfg) {
    Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(grid.buses.size(), cfg.t_dn);
    const int ratio = cfg.tn_per_dn();
    for (int li : g.charging_link_indices()) {
        const int bi = grid.bus_index(g.links[li].supply_bus);
        for (int T = 0; T < cfg.t_dn; ++T) {
            double acc = 0.0;
            for (int s = 1; s <= ratio; ++s)
                acc += charging_power(occupancy[li][T * ratio + s], cfg).mw;
            mw(bi, T) += acc / ratio;
        }
    }
    return mw;
}

// Station prices live on a quarter-dollar-per-MWh lattice: the assignment
// responds to prices through vertex solutions, so sub-lattice dispatch noise
// would flip equivalent routings forever without changing anyone's cost by
// more than a few tenths of a cent.
constexpr double kPriceQuantum = 0.25;  // $/MWh

// Piecewise-constant broadcast of bus prices onto charging links over the
// DTA grid.
inline PriceField map_prices(const Eigen::MatrixXd& lmp, const AugmentedTrafficGraph& g,
                             const GridModel& grid, const ScenarioConfig& cfg) {
    PriceField lam = zero_grid(g.links.size(), cfg.t_tn);
    for (int li : g.charging_link_indices()) {
        const int bus = g.links[li].supply_bus;
        if (!grid.has_bus(bus))
            throw UnmappedFcs("charging link " + g.links[li].id + " feeds from unknown bus " +
                              std::to_string(bus));
        const int bi = grid.bus_index(bus);
        for (int t = 1; t <= cfg.t_tn; ++t) {
            const double price = lmp(bi, cfg.opf_interval_of(t) - 1);
            lam[li][t] = std::round(price / kPriceQuantum) * kPriceQuantum;
        }
    }
    return lam;
}

struct FpRecord {
    int iteration = 0;
    double delta_dn = 0.0;  // price change, $/MWh max-norm
    double delta_tn = 0.0;  // occupancy change, flow p.u. max-norm
    int dta_outer = 0;
    double opf_objective = 0.0;
    double due_gap = 0.0;
    double conservation_worst = 0.0;
};

struct EquilibriumResult {
    DtaSolution dta;
    OpfSolution opf;
    PriceField lambda;
    int iterations = 0;
    bool converged = false;
    std::vector<FpRecord> trajectory;
    double flow_residual = std::numeric_limits<double>::quiet_NaN();
    double price_residual = std::numeric_limits<double>::quiet_NaN();
};

namespace eq_detail {

inline double price_delta(const PriceField& a, const PriceField& b,
                          const AugmentedTrafficGraph& g, int t_tn) {
    double d = 0.0;
    for (int li : g.charging_link_indices())
        for (int t = 1; t <= t_tn; ++t) d = std::max(d, std::abs(a[li][t] - b[li][t]));
    return d;
}

}  // namespace eq_detail

// Alternating decomposition. With price information disabled the traffic
// side runs once on the posted price and a single dispatch pass prices the
// resulting loads (vehicles learn prices only on arrival).
inline EquilibriumResult solve_equilibrium(const Scenario& sc, const OpfOptions& opf_opt = {}) {
    const auto& cfg = sc.config;
    EquilibriumResult res;
    res.lambda = broadcast_lambda0(sc.graph, cfg);
    res.dta = nested_solve(sc.graph, res.lambda, cfg);

    if (!cfg.price_information) {
        auto loads = map_charging_load(res.dta.x, sc.graph, sc.grid, cfg);
        res.opf = build_and_solve_opf(sc.grid, loads, cfg, opf_opt);
        extract_lmp(res.opf);
        res.lambda = map_prices(res.opf.lmp, sc.graph, sc.grid, cfg);
        res.iterations = 1;
        res.converged = true;
        FpRecord rec;
        rec.iteration = 1;
        rec.dta_outer = res.dta.outer_iterations;
        rec.opf_objective = res.opf.objective;
        rec.due_gap = res.dta.due_gap;
        rec.conservation_worst = conservation_residuals(res.dta, sc.graph, cfg).worst();
        res.trajectory.push_back(rec);
        return res;
    }

    Grid x_for_loads = res.dta.x;
    int non_improving = 0;
    double best_delta_tn = std::numeric_limits<double>::infinity();
    bool averaging = false;

    for (int i = 1; i <= cfg.max_fp_iterations; ++i) {
        res.iterations = i;
        auto loads = map_charging_load(x_for_loads, sc.graph, sc.grid, cfg);
        res.opf = build_and_solve_opf(sc.grid, loads, cfg, opf_opt);
        extract_lmp(res.opf);
        PriceField lam_new = map_prices(res.opf.lmp, sc.graph, sc.grid, cfg);
        const double delta_dn = eq_detail::price_delta(lam_new, res.lambda, sc.graph, cfg.t_tn);

        DtaSolution dta_new = nested_solve(sc.graph, lam_new, cfg);
        const double delta_tn = max_abs_diff(dta_new.x, res.dta.x);

        FpRecord rec;
        rec.iteration = i;
        rec.delta_dn = delta_dn;
        rec.delta_tn = delta_tn;
        rec.dta_outer = dta_new.outer_iterations;
        rec.opf_objective = res.opf.objective;
        rec.due_gap = dta_new.due_gap;
        rec.conservation_worst = conservation_residuals(dta_new, sc.graph, cfg).worst();
        res.trajectory.push_back(rec);

        if (cfg.damping) {
            // oscillating iterates rarely rise monotonically; treat three
            // iterations without a new best as the trigger
            if (delta_tn < best_delta_tn) {
                best_delta_tn = delta_tn;
                non_improving = 0;
            } else {
                ++non_improving;
            }
            if (non_improving >= 3) averaging = true;
        }
        if (averaging) {
            for (std::size_t li = 0; li < x_for_loads.size(); ++li)
                for (std::size_t t = 0; t < x_for_loads[li].size(); ++t)
                    x_for_loads[li][t] = 0.5 * (x_for_loads[li][t] + dta_new.x[li][t]);
        } else {
            x_for_loads = dta_new.x;
        }

        res.lambda = std::move(lam_new);
        res.dta = std::move(dta_new);
        if (delta_dn + delta_tn < cfg.eps) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged && res.trajectory.size() >= 1) {
        // caller decides whether a non-converged trajectory is fatal
    }
    return res;
}

// One extra dispatch and assignment at the final point: the literal
// self-map residual of the fixed-point equation.
inline std::pair<double, double> fixed_point_residual(EquilibriumResult& res,
                                                      const Scenario& sc,
                                                      const OpfOptions& opf_opt = {}) {
    const auto& cfg = sc.config;
    auto loads = map_charging_load(res.dta.x, sc.graph, sc.grid, cfg);
    auto opf = build_and_solve_opf(sc.grid, loads, cfg, opf_opt);
    extract_lmp(opf);
    auto lam = map_prices(opf.lmp, sc.graph, sc.grid, cfg);
    const double price_res = eq_detail::price_delta(lam, res.lambda, sc.graph, cfg.t_tn);

    auto dta = nested_solve(sc.graph, res.lambda, cfg);
    const double flow_res = max_abs_diff(dta.x, res.dta.x);

    res.flow_residual = flow_res;
    res.price_residual = price_res;
    return {flow_res, price_res};
}

struct ContractionReport {
    int dimension = 0;          // charging-link-interval variables
    double spectral_radius = 0.0;
    double step = 0.0;          // finite-difference step used, p.u.
    double base_shift = 0.0;    // |F(x*) - x*| max-norm at the expansion point
    Eigen::MatrixXd jacobian;
};

// Forward-difference estimate of the self-map Jacobian on the charging
// occupancies, reported as a spectral radius. Values below one suggest a
// contraction (uniqueness likely); this is a diagnostic, not a proof.
inline ContractionReport contraction_diagnostic(const Scenario& sc, double step = 0.1,
                                                int dimension_cap = 30,
                                                const OpfOptions& opf_opt = {}) {
    const auto& cfg = sc.config;
    const auto charging = sc.graph.charging_link_indices();
    const int dim = static_cast<int>(charging.size()) * cfg.t_tn;
    if (dim > dimension_cap)
        throw TooLarge("contraction diagnostic needs <= " + std::to_string(dimension_cap) +
                       " charging-link-interval variables, got " + std::to_string(dim));

    auto base = solve_equilibrium(sc, opf_opt);

    auto pack = [&](const Grid& x) {
        Eigen::VectorXd z(dim);
        int k = 0;
        for (int li : charging)
            for (int t = 1; t <= cfg.t_tn; ++t) z[k++] = x[li][t];
        return z;
    };
    auto evaluate = [&](const Eigen::VectorXd& z) {
        Grid x = base.dta.x;
        int k = 0;
        for (int li : charging)
            for (int t = 1; t <= cfg.t_tn; ++t) x[li][t] = std::max(0.0, z[k++]);
        auto loads = map_charging_load(x, sc.graph, sc.grid, cfg);
        auto opf = build_and_solve_opf(sc.grid, loads, cfg, opf_opt);
        extract_lmp(opf);
        auto lam = map_prices(opf.lmp, sc.graph, sc.grid, cfg);
        auto dta = nested_solve(sc.graph, lam, cfg);
        return pack(dta.x);
    };

    const Eigen::VectorXd z0 = pack(base.dta.x);
    const Eigen::VectorXd f0 = evaluate(z0);

    ContractionReport rep;
    rep.dimension = dim;
    rep.step = step;
    rep.base_shift = (f0 - z0).cwiseAbs().maxCoeff();
    rep.jacobian.resize(dim, dim);
    for (int j = 0; j < dim; ++j) {
        Eigen::VectorXd z = z0;
        z[j] += step;
        rep.jacobian.col(j) = (evaluate(z) - f0) / step;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> eig(rep.jacobian, /*computeEigenvectors=*/false);
    rep.spectral_radius = eig.eigenvalues().cwiseAbs().maxCoeff();
    return rep;
}

}  // namespace covnet
