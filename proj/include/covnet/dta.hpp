#pragma once

// Dynamic traffic assignment with simultaneous departure-time and route
// choice, solved by nested diagonalization: the outer loop freezes rounded
// travel times and rebuilds the time-space expansion, the inner loop freezes
// cross-interval congestion and solves a piecewise-linear assignment LP over
// path/departure rates.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "covnet/network_model.hpp"
#include "covnet/pwl.hpp"
#include "covnet/simplex.hpp"
#include "covnet/tsn.hpp"

namespace covnet {

using Grid = std::vector<std::vector<double>>;  // [link][interval 0..T], index 0 kept zero

inline Grid zero_grid(std::size_t links, int horizon) {
    return Grid(links, std::vector<double>(horizon + 1, 0.0));
}

inline double max_abs_diff(const Grid& a, const Grid& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t t = 0; t < a[i].size(); ++t) d = std::max(d, std::abs(a[i][t] - b[i][t]));
    return d;
}

// Charging price per (link, DTA interval), $/MWh. Only charging links are read.
using PriceField = Grid;

inline PriceField broadcast_lambda0(const AugmentedTrafficGraph& g, const ScenarioConfig& cfg) {
    PriceField lam = zero_grid(g.links.size(), cfg.t_tn);
    for (int li : g.charging_link_indices())
        for (int t = 1; t <= cfg.t_tn; ++t) lam[li][t] = cfg.lambda0_at(cfg.opf_interval_of(t));
    return lam;
}

// One O-D / vehicle-class demand stream.
struct Commodity {
    int od = -1;
    VehicleClass cls = VehicleClass::Gas;
    double demand = 0.0;  // p.u.
    std::vector<int> departures;  // candidate departure intervals
};

inline std::vector<Commodity> make_commodities(const AugmentedTrafficGraph& g,
                                               const ScenarioConfig& cfg) {
    std::vector<Commodity> out;
    for (int od = 0; od < static_cast<int>(g.od_pairs.size()); ++od) {
        const auto& pair = g.od_pairs[od];
        std::vector<int> deps = pair.departure_window;
        if (!cfg.departure_time_choice && !deps.empty()) deps = {deps.front()};
        for (VehicleClass cls : {VehicleClass::Gas, VehicleClass::Ev}) {
            if (pair.demand(cls) <= 0.0) continue;
            out.push_back({od, cls, pair.demand(cls), deps});
        }
    }
    return out;
}

// A (commodity, path, departure) choice expanded on the current travel times.
struct ChoiceTriple {
    int commodity = -1;
    int path = -1;
    RouteExpansion expansion;
};

struct OdCertificate {
    int od = -1;
    VehicleClass cls = VehicleClass::Gas;
    double c_min = 0.0;           // minimum cost over the choice set, $
    double max_residual = 0.0;    // worst cost excess among used choices, $
    int used_choices = 0;
    int undercut_count = 0;       // unused choices cheaper than c_min - eps
};

struct ConvergenceRecord {
    int outer = 0;
    int inner = 0;
    double flow_delta = std::numeric_limits<double>::quiet_NaN();
    double tau_delta = std::numeric_limits<double>::quiet_NaN();
    double objective = 0.0;
};

// Consistency sample of the inner LP against its own cost curve: the
// epigraph point the LP selected for one (link, interval).
struct LpCurvePoint {
    int link = -1;
    int t = 0;
    double inflow = 0.0;     // own flow chosen by the LP
    double lp_value = 0.0;   // objective contribution of the segment variables
    double curve_value = 0.0;  // chorded integral of the curve at that inflow
};

struct DtaSolution {
    std::vector<Commodity> commodities;
    std::vector<ChoiceTriple> triples;
    std::vector<double> f;  // departure rate per triple, p.u.

    Grid u, x, v;          // inflow / occupancy / exit flow
    Grid tau_minutes;      // latency at the final occupancies
    TravelTimeGrid tau_bar;  // rounded times the final expansion used

    std::vector<std::vector<double>> e;  // arrivals per commodity per interval
    std::vector<std::vector<double>> E;  // cumulative arrivals

    std::vector<double> path_cost;  // exact cost per triple at the final state
    std::vector<OdCertificate> certificates;
    double due_gap = 0.0;  // max complementarity residual, $

    bool inner_converged = false;
    bool outer_converged = false;
    int outer_iterations = 0;
    int inner_iterations_last = 0;
    double lp_objective = 0.0;
    // worst excess of charging occupancy over the saturation guard, p.u.;
    // positive values mean the penalty band was used at the final iterate
    double charging_overshoot = 0.0;
    std::vector<ConvergenceRecord> log;
    std::vector<LpCurvePoint> lp_points;
};

namespace dta_detail {

// Occupancy carried into (link, t) by earlier inflows still on the link.
inline double carryover(const Grid& u_fixed, const TravelTimeGrid& tau_bar, int link, int t) {
    double c = 0.0;
    for (int t0 = 1; t0 < t; ++t0)
        if (t0 + tau_bar[link][t0] > t) c += u_fixed[link][t0];
    return c;
}

struct FlowAggregates {
    Grid u, x, v;
};

inline FlowAggregates aggregate_flows(const AugmentedTrafficGraph& g,
                                      const std::vector<ChoiceTriple>& triples,
                                      const std::vector<double>& f,
                                      const TravelTimeGrid& tau_bar, int horizon) {
    FlowAggregates agg{zero_grid(g.links.size(), horizon), zero_grid(g.links.size(), horizon),
                       zero_grid(g.links.size(), horizon)};
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const double fi = f[i];
        if (fi == 0.0) continue;
        for (auto [li, t] : triples[i].expansion.entries) {
            const bool extra = g.links[li].kind == LinkKind::Extra;
            const int tau = extra ? 0 : tau_bar[li][t];
            agg.u[li][t] += fi;
            if (t + tau <= horizon) agg.v[li][t + tau] += fi;
            for (int s = t; s < t + tau && s <= horizon; ++s) agg.x[li][s] += fi;
        }
    }
    return agg;
}

struct SegmentedLp {
    LpProblem lp;
    std::vector<int> demand_row;                       // per commodity
    std::map<std::pair<int, int>, int> flow_row;       // (link, t) -> row
    std::map<std::pair<int, int>, double> carry;       // (link, t) -> frozen occupancy
    std::vector<std::pair<std::pair<int, int>, int>> seg_col_begin;  // per (link,t): first col
    std::map<std::pair<int, int>, std::pair<int, int>> seg_cols;  // (link,t) -> [begin,end)
    int f_cols = 0;
};

// Builds the diagonalized LP: departure-rate columns feed per-(link,interval)
// flow rows whose cost is carried by bounded segment columns with the chord
// slopes of the Beckmann integral.
inline SegmentedLp assemble_inner_lp(const AugmentedTrafficGraph& g,
                                     const std::vector<Commodity>& commodities,
                                     const std::vector<ChoiceTriple>& triples,
                                     const std::vector<std::vector<const PwlCurve*>>& curve_at,
                                     const Grid& u_fixed, const TravelTimeGrid& tau_bar,
                                     const ScenarioConfig& cfg) {
    SegmentedLp out;
    LpProblem& lp = out.lp;

    for (const auto& c : commodities) out.demand_row.push_back(lp.add_row(c.demand));

    // touched cost-bearing (link, interval) pairs and the demand that can reach them
    std::map<std::pair<int, int>, double> reachable;
    std::map<std::pair<int, int>, int> last_commodity;
    for (const auto& tr : triples) {
        for (auto [li, t] : tr.expansion.entries) {
            if (g.links[li].costless()) continue;
            const auto key = std::make_pair(li, t);
            if (!out.flow_row.count(key)) out.flow_row[key] = lp.add_row(0.0);
            auto lc = last_commodity.find(key);
            if (lc == last_commodity.end() || lc->second != tr.commodity) {
                reachable[key] += commodities[tr.commodity].demand;
                last_commodity[key] = tr.commodity;
            }
        }
    }

    // departure-rate columns
    out.f_cols = static_cast<int>(triples.size());
    for (const auto& tr : triples) {
        std::vector<std::pair<int, double>> entries;
        entries.emplace_back(out.demand_row[tr.commodity], 1.0);
        for (auto [li, t] : tr.expansion.entries)
            if (!g.links[li].costless()) entries.emplace_back(out.flow_row.at({li, t}), 1.0);
        lp.add_col(0.0, 0.0, kLpInf, std::move(entries));
    }

    // segment columns per touched (link, interval)
    for (const auto& [key, row] : out.flow_row) {
        const auto [li, t] = key;
        const TrafficLink& link = g.links[li];
        const PwlCurve& curve = *curve_at[li][t];
        const double carry = carryover(u_fixed, tau_bar, li, t);
        out.carry[key] = carry;

        const bool hard_domain = link.kind == LinkKind::Charging;
        const double need = reachable.at(key) + 1e-9;
        const int begin_col = lp.num_cols();

        double a = carry;
        double covered = 0.0;
        // walk curve breakpoints above the carried occupancy
        for (std::size_t m = 0; m < curve.x.size() && covered < need; ++m) {
            if (curve.x[m] <= a + 1e-12) continue;
            const double b = curve.x[m];
            const double width = b - a;
            const double slope = 0.5 * (curve.value(a) + curve.c[m]);
            lp.add_col(slope, 0.0, width, {{row, -1.0}});
            covered += width;
            a = b;
        }
        if (!hard_domain) {
            // continue the uniform grid past the curve with exact costs so
            // overloaded links stay representable
            const double w = curve.x[1] - curve.x[0];
            while (covered < need) {
                const double b = a + w;
                const double slope =
                    0.5 * (link_cost(link, a, 0.0, cfg) + link_cost(link, b, 0.0, cfg));
                lp.add_col(slope, 0.0, w, {{row, -1.0}});
                covered += w;
                a = b;
            }
        } else if (covered < need) {
            // steep penalty beyond the saturation guard keeps intermediate
            // diagonalization iterates feasible when frozen carryover walls
            // off a station interval; a converged solution using it is
            // reported as saturated
            const double slope = 10.0 * curve.c.back() + 100.0;
            lp.add_col(slope, 0.0, kLpInf, {{row, -1.0}});
        }
        out.seg_cols[key] = {begin_col, lp.num_cols()};
    }
    return out;
}

}  // namespace dta_detail

struct InnerResult {
    std::vector<double> f;
    dta_detail::FlowAggregates flows;
    double objective = 0.0;
    std::vector<LpCurvePoint> lp_points;
};

// One diagonalized sub-problem: other link-intervals' congestion frozen at
// u_fixed, own inflow priced by the chorded Beckmann slopes.
inline InnerResult inner_problem(const AugmentedTrafficGraph& g,
                                 const std::vector<Commodity>& commodities,
                                 const std::vector<ChoiceTriple>& triples,
                                 const std::vector<std::vector<const PwlCurve*>>& curve_at,
                                 const Grid& u_fixed, const TravelTimeGrid& tau_bar,
                                 const ScenarioConfig& cfg) {
    auto built = dta_detail::assemble_inner_lp(g, commodities, triples, curve_at, u_fixed,
                                               tau_bar, cfg);
    auto sol = solve_lp(built.lp);
    if (sol.status == LpStatus::Infeasible)
        throw InfeasibleDemand(
            "demand cannot be routed: charging capacity or horizon insufficient");
    if (sol.status != LpStatus::Optimal)
        throw SolverFailure("assignment LP did not reach optimality (status " +
                            std::to_string(static_cast<int>(sol.status)) + ")");

    InnerResult out;
    out.f.assign(sol.x.begin(), sol.x.begin() + built.f_cols);
    for (auto& v : out.f)
        if (v < 0.0 && v > -1e-9) v = 0.0;
    out.flows = dta_detail::aggregate_flows(g, triples, out.f, tau_bar, cfg.t_tn);
    out.objective = sol.objective;

    // record the epigraph point per (link, interval) for the exactness check
    for (const auto& [key, range] : built.seg_cols) {
        LpCurvePoint pt;
        pt.link = key.first;
        pt.t = key.second;
        double inflow = 0.0, lp_val = 0.0;
        for (int col = range.first; col < range.second; ++col) {
            inflow += sol.x[col];
            lp_val += sol.x[col] * built.lp.cols[col].cost;
        }
        pt.inflow = inflow;
        pt.lp_value = lp_val;
        // greedy fill of the same segments = chorded Beckmann value
        double remain = inflow, curve_val = 0.0;
        for (int col = range.first; col < range.second && remain > 0.0; ++col) {
            const double take = std::min(remain, built.lp.cols[col].upper);
            curve_val += take * built.lp.cols[col].cost;
            remain -= take;
        }
        pt.curve_value = curve_val;
        out.lp_points.push_back(pt);
    }
    return out;
}

namespace dta_detail {

inline double latency_minutes(const AugmentedTrafficGraph& g, int li, double x,
                              const ScenarioConfig& cfg) {
    const TrafficLink& link = g.links[li];
    switch (link.kind) {
        case LinkKind::General: return bpr_time(x, link);
        case LinkKind::Charging: return davidson_time_clamped(x, link, cfg.davidson_guard);
        case LinkKind::Extra: return 0.0;
    }
    return 0.0;
}

inline Grid latencies_at(const AugmentedTrafficGraph& g, const Grid& x,
                         const ScenarioConfig& cfg) {
    Grid tau = zero_grid(g.links.size(), cfg.t_tn);
    for (std::size_t li = 0; li < g.links.size(); ++li)
        for (int t = 1; t <= cfg.t_tn; ++t)
            tau[li][t] = latency_minutes(g, static_cast<int>(li), x[li][t], cfg);
    return tau;
}

inline Grid free_flow_latencies(const AugmentedTrafficGraph& g, const ScenarioConfig& cfg) {
    return latencies_at(g, zero_grid(g.links.size(), cfg.t_tn), cfg);
}

inline std::vector<std::vector<const PwlCurve*>> curve_table(
    const AugmentedTrafficGraph& g, const PriceField& lambda, const ScenarioConfig& cfg,
    std::vector<PwlCurve>& storage) {
    // storage owns the curves; general links share one curve across intervals,
    // charging links get one per interval (prices vary in time)
    storage.clear();
    storage.reserve(g.links.size() * (cfg.t_tn + 1));
    std::vector<std::vector<const PwlCurve*>> table(
        g.links.size(), std::vector<const PwlCurve*>(cfg.t_tn + 1, nullptr));
    for (std::size_t li = 0; li < g.links.size(); ++li) {
        const TrafficLink& link = g.links[li];
        if (link.kind == LinkKind::Extra) continue;
        if (link.kind == LinkKind::General) {
            storage.push_back(build_pwl(link, 0.0, cfg));
            for (int t = 1; t <= cfg.t_tn; ++t) table[li][t] = &storage.back();
        } else {
            for (int t = 1; t <= cfg.t_tn; ++t) {
                storage.push_back(build_pwl(link, lambda[li][t], cfg));
                table[li][t] = &storage.back();
            }
        }
    }
    return table;
}

}  // namespace dta_detail

// Exact (non-PWL) cost of one expanded choice at the given occupancies.
inline double exact_path_cost(const AugmentedTrafficGraph& g, const RouteExpansion& exp,
                              const Grid& x, const PriceField& lambda,
                              const TravelTimeGrid& tau_bar, const ScenarioConfig& cfg) {
    double cost = 0.0;
    for (auto [li, t] : exp.entries) {
        const TrafficLink& link = g.links[li];
        switch (link.kind) {
            case LinkKind::General:
                cost += cfg.omega * bpr_time(x[li][t], link) / 60.0;
                break;
            case LinkKind::Charging: {
                cost += cfg.omega * davidson_time_clamped(x[li][t], link, cfg.davidson_guard) / 60.0;
                const int intervals = cfg.energy_cost_per_entry ? 1 : tau_bar[li][t];
                cost += lambda[li][t] * cfg.p_ev_mw * cfg.dt_hours * intervals;
                break;
            }
            case LinkKind::Extra: break;
        }
    }
    return cost;
}

// Worst per-commodity relative complementarity residual of an assignment,
// exact costs evaluated at its own occupancies.
inline double certificate_residual_rel(const AugmentedTrafficGraph& g,
                                       const std::vector<Commodity>& commodities,
                                       const std::vector<ChoiceTriple>& triples,
                                       const std::vector<double>& f, const Grid& x,
                                       const PriceField& lambda, const TravelTimeGrid& tau_bar,
                                       const ScenarioConfig& cfg) {
    double worst = 0.0;
    std::vector<double> cost(triples.size());
    for (std::size_t i = 0; i < triples.size(); ++i)
        cost[i] = exact_path_cost(g, triples[i].expansion, x, lambda, tau_bar, cfg);
    for (int ci = 0; ci < static_cast<int>(commodities.size()); ++ci) {
        double c_min = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < triples.size(); ++i)
            if (triples[i].commodity == ci) c_min = std::min(c_min, cost[i]);
        if (!std::isfinite(c_min) || c_min <= 0.0) continue;
        for (std::size_t i = 0; i < triples.size(); ++i)
            if (triples[i].commodity == ci && f[i] > cfg.flow_eps)
                worst = std::max(worst, (cost[i] - c_min) / c_min);
    }
    return worst;
}

// Fixed point of inner_problem in the frozen-congestion argument.
struct DiagonalizationResult {
    InnerResult inner;
    bool converged = false;
    int iterations = 0;
};

inline DiagonalizationResult diagonalization_loop(
    const AugmentedTrafficGraph& g, const std::vector<Commodity>& commodities,
    const std::vector<ChoiceTriple>& triples,
    const std::vector<std::vector<const PwlCurve*>>& curve_at, const TravelTimeGrid& tau_bar,
    const PriceField& lambda, const ScenarioConfig& cfg, int outer_index,
    std::vector<ConvergenceRecord>& log) {
    DiagonalizationResult out;
    // freeze the first sub-problem at a uniform spread of each commodity over
    // its choice set, so the initial cost curves already see realistic
    // carryover instead of a free-flow tie
    Grid u_fixed;
    {
        std::vector<int> count(commodities.size(), 0);
        for (const auto& tr : triples) count[tr.commodity]++;
        std::vector<double> f0(triples.size(), 0.0);
        for (std::size_t i = 0; i < triples.size(); ++i)
            f0[i] = commodities[triples[i].commodity].demand / count[triples[i].commodity];
        u_fixed = dta_detail::aggregate_flows(g, triples, f0, tau_bar, cfg.t_tn).u;
    }
    for (int m = 1; m <= cfg.max_inner_iterations; ++m) {
        out.inner = inner_problem(g, commodities, triples, curve_at, u_fixed, tau_bar, cfg);
        out.iterations = m;
        // self-map residual: the sub-problem's answer against the congestion
        // it was priced at
        const double delta = max_abs_diff(out.inner.flows.u, u_fixed);
        log.push_back({outer_index, m, delta, std::numeric_limits<double>::quiet_NaN(),
                       out.inner.objective});
        if (delta < cfg.eps1) {
            out.converged = true;
            break;
        }
        // equally valid near-tied optima chatter across iterations; accept an
        // iterate that already certifies against its own congestion
        if (certificate_residual_rel(g, commodities, triples, out.inner.f, out.inner.flows.x,
                                     lambda, tau_bar, cfg) <= cfg.inner_certificate_exit) {
            out.converged = true;
            break;
        }
        // averaged update of the frozen congestion
        for (std::size_t li = 0; li < u_fixed.size(); ++li)
            for (std::size_t t = 0; t < u_fixed[li].size(); ++t)
                u_fixed[li][t] = 0.5 * (u_fixed[li][t] + out.inner.flows.u[li][t]);
    }
    return out;
}

// Equal-and-minimal certification of the returned assignment.
inline std::vector<OdCertificate> due_certificate(const DtaSolution& sol,
                                                  const ScenarioConfig& cfg) {
    std::vector<OdCertificate> out;
    for (int ci = 0; ci < static_cast<int>(sol.commodities.size()); ++ci) {
        OdCertificate cert;
        cert.od = sol.commodities[ci].od;
        cert.cls = sol.commodities[ci].cls;
        double c_min = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sol.triples.size(); ++i)
            if (sol.triples[i].commodity == ci) c_min = std::min(c_min, sol.path_cost[i]);
        cert.c_min = c_min;
        const double cost_eps = cfg.cost_eps_rel * std::abs(c_min);
        for (std::size_t i = 0; i < sol.triples.size(); ++i) {
            if (sol.triples[i].commodity != ci) continue;
            if (sol.f[i] > cfg.flow_eps) {
                ++cert.used_choices;
                cert.max_residual = std::max(cert.max_residual, sol.path_cost[i] - c_min);
            } else if (sol.path_cost[i] < c_min - cost_eps) {
                ++cert.undercut_count;
            }
        }
        out.push_back(cert);
    }
    return out;
}

// Nested diagonalization: alternate travel-time rounding, route expansion,
// and the diagonalized assignment until the latency estimate settles.
inline DtaSolution nested_solve(const AugmentedTrafficGraph& g, const PriceField& lambda,
                                const ScenarioConfig& cfg) {
    DtaSolution sol;
    sol.commodities = make_commodities(g, cfg);
    const int T = cfg.t_tn;

    Grid tau_prev = dta_detail::free_flow_latencies(g, cfg);
    std::vector<PwlCurve> curve_storage;
    auto curve_at = dta_detail::curve_table(g, lambda, cfg, curve_storage);

    for (int n = 1; n <= cfg.max_outer_iterations; ++n) {
        sol.outer_iterations = n;
        sol.tau_bar = round_travel_times(tau_prev, cfg.dt_hours);
        for (std::size_t li = 0; li < g.links.size(); ++li)
            if (g.links[li].kind == LinkKind::Extra)
                std::fill(sol.tau_bar[li].begin(), sol.tau_bar[li].end(), 0);

        // expand the choice set; horizon-overrunning pairs drop out
        sol.triples.clear();
        for (int ci = 0; ci < static_cast<int>(sol.commodities.size()); ++ci) {
            const auto& com = sol.commodities[ci];
            const auto& paths = g.paths(com.od, com.cls);
            int feasible = 0;
            for (int pi = 0; pi < static_cast<int>(paths.size()); ++pi) {
                for (int k : com.departures) {
                    auto exp = expand_route(g, paths[pi], k, sol.tau_bar, T);
                    if (!exp) continue;
                    ChoiceTriple tr;
                    tr.commodity = ci;
                    tr.path = pi;
                    tr.expansion = *exp;
                    sol.triples.push_back(std::move(tr));
                    ++feasible;
                }
            }
            if (feasible == 0)
                throw InfeasibleDemand("O-D " + std::to_string(g.od_pairs[com.od].origin) + "->" +
                                       std::to_string(g.od_pairs[com.od].destination) + " (" +
                                       to_string(com.cls) +
                                       ") has no feasible route within the horizon");
        }

        auto diag = diagonalization_loop(g, sol.commodities, sol.triples, curve_at, sol.tau_bar,
                                         lambda, cfg, n, sol.log);
        sol.inner_converged = diag.converged;
        sol.inner_iterations_last = diag.iterations;
        sol.f = diag.inner.f;
        sol.u = diag.inner.flows.u;
        sol.x = diag.inner.flows.x;
        sol.v = diag.inner.flows.v;
        sol.lp_objective = diag.inner.objective;
        sol.lp_points = diag.inner.lp_points;

        Grid tau_new = dta_detail::latencies_at(g, sol.x, cfg);
        const double tau_delta = max_abs_diff(tau_new, tau_prev);
        for (auto& rec : sol.log)
            if (rec.outer == n) rec.tau_delta = tau_delta;
        tau_prev = std::move(tau_new);
        if (tau_delta < cfg.eps2) {
            sol.outer_converged = true;
            break;
        }
    }
    sol.tau_minutes = tau_prev;

    for (int li : g.charging_link_indices()) {
        const double guard = (1.0 - cfg.davidson_guard) * g.links[li].capacity;
        for (int t = 1; t <= T; ++t)
            sol.charging_overshoot = std::max(sol.charging_overshoot, sol.x[li][t] - guard);
    }

    // arrivals and cumulative arrivals per commodity
    sol.e.assign(sol.commodities.size(), std::vector<double>(T + 1, 0.0));
    sol.E = sol.e;
    for (std::size_t i = 0; i < sol.triples.size(); ++i)
        sol.e[sol.triples[i].commodity][sol.triples[i].expansion.arrival] += sol.f[i];
    for (std::size_t c = 0; c < sol.commodities.size(); ++c)
        for (int t = 1; t <= T; ++t) sol.E[c][t] = sol.E[c][t - 1] + sol.e[c][t];

    sol.path_cost.resize(sol.triples.size());
    for (std::size_t i = 0; i < sol.triples.size(); ++i)
        sol.path_cost[i] =
            exact_path_cost(g, sol.triples[i].expansion, sol.x, lambda, sol.tau_bar, cfg);

    sol.certificates = due_certificate(sol, cfg);
    for (const auto& c : sol.certificates) sol.due_gap = std::max(sol.due_gap, c.max_residual);
    return sol;
}

// --- conservation diagnostics -------------------------------------------------

struct ConservationReport {
    double state_residual = 0.0;    // |x(t+1) - x(t) - u(t) + v(t)| max
    double node_residual = 0.0;     // per-commodity junction balance
    double demand_residual = 0.0;   // |sum f - F| max
    double arrival_residual = 0.0;  // |E(T) - F| max

    double worst() const {
        return std::max(std::max(state_residual, node_residual),
                        std::max(demand_residual, arrival_residual));
    }
};

inline ConservationReport conservation_residuals(const DtaSolution& sol,
                                                 const AugmentedTrafficGraph& g,
                                                 const ScenarioConfig& cfg) {
    ConservationReport rep;
    const int T = cfg.t_tn;

    // start-of-interval occupancy obeys x(t+1) = x(t) + u(t) - v(t)
    for (std::size_t li = 0; li < g.links.size(); ++li) {
        double state = 0.0;
        for (int t = 1; t <= T; ++t) {
            const double direct = sol.x[li][t] - sol.u[li][t] + sol.v[li][t];
            rep.state_residual = std::max(rep.state_residual, std::abs(direct - state));
            state = state + sol.u[li][t] - sol.v[li][t];
        }
    }

    // junction balance per commodity: exits into a node feed departures from it
    for (std::size_t ci = 0; ci < sol.commodities.size(); ++ci) {
        std::map<std::pair<int, int>, double> in, out;  // (node, t)
        const auto& od = g.od_pairs[sol.commodities[ci].od];
        for (std::size_t i = 0; i < sol.triples.size(); ++i) {
            if (sol.triples[i].commodity != static_cast<int>(ci) || sol.f[i] == 0.0) continue;
            const auto& exp = sol.triples[i].expansion;
            for (auto [li, t] : exp.entries) {
                const bool extra = g.links[li].costless();
                const int tau = extra ? 0 : sol.tau_bar[li][t];
                in[{g.links[li].head, t + tau}] += sol.f[i];
                out[{g.links[li].tail, t}] += sol.f[i];
            }
        }
        for (const auto& [key, v_in] : in) {
            if (key.first == od.origin || key.first == od.destination) continue;
            auto it = out.find(key);
            const double v_out = it == out.end() ? 0.0 : it->second;
            rep.node_residual = std::max(rep.node_residual, std::abs(v_in - v_out));
        }
    }

    for (std::size_t ci = 0; ci < sol.commodities.size(); ++ci) {
        double total = 0.0;
        for (std::size_t i = 0; i < sol.triples.size(); ++i)
            if (sol.triples[i].commodity == static_cast<int>(ci)) total += sol.f[i];
        rep.demand_residual =
            std::max(rep.demand_residual, std::abs(total - sol.commodities[ci].demand));
        rep.arrival_residual = std::max(
            rep.arrival_residual, std::abs(sol.E[ci][T] - sol.commodities[ci].demand));
    }
    return rep;
}

}  // namespace covnet
