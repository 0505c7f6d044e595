#pragma once

// Shared fixture builders for the unit suites.

#include <vector>

#include "covnet/equilibrium.hpp"
#include "covnet/network_model.hpp"

namespace covnet::testing {

inline TrafficLink general_link(std::string id, int tail, int head, double free_min,
                                double cap) {
    TrafficLink l;
    l.id = std::move(id);
    l.tail = tail;
    l.head = head;
    l.kind = LinkKind::General;
    l.free_time_min = free_min;
    l.capacity = cap;
    return l;
}

inline GridModel tiny_grid(int buses = 2) {
    GridModel grid;
    for (int i = 0; i < buses; ++i) {
        GridBus b;
        b.id = i;
        b.p_load = {0.0};
        b.q_load = {0.0};
        grid.buses.push_back(b);
    }
    for (int i = 1; i < buses; ++i) {
        GridLine l;
        l.from = i - 1;
        l.to = i;
        l.r = 0.01;
        l.x = 0.02;
        l.s_lim_sq = 2.25;
        grid.lines.push_back(l);
    }
    grid.rebuild_indexes();
    return grid;
}

// The ring transportation network used by the shipped study scenario:
// twelve nodes, a dense 1..6 core and a periphery reaching nodes 9..12.
inline AugmentedTrafficGraph ring_tn_base() {
    AugmentedTrafficGraph g;
    g.nodes = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    auto add = [&g](const char* id, int a, int b, double t0, double cap) {
        g.links.push_back(general_link(id, a, b, t0, cap));
    };
    add("L1_2", 1, 2, 8, 100);
    add("L1_3", 1, 3, 8, 100);
    add("L1_4", 1, 4, 7, 60);
    add("L2_6", 2, 6, 5, 100);
    add("L2_5", 2, 5, 5, 80);
    add("L3_4", 3, 4, 7, 80);
    add("L3_7", 3, 7, 5, 100);
    add("L4_5", 4, 5, 7, 100);
    add("L4_7", 4, 7, 5, 80);
    add("L4_8", 4, 8, 8, 100);
    add("L5_6", 5, 6, 5, 80);
    add("L5_9", 5, 9, 5, 100);
    add("L6_9", 6, 9, 5, 100);
    add("L7_8", 7, 8, 8, 100);
    add("L8_11", 8, 11, 5, 80);
    add("L8_12", 8, 12, 7, 60);
    add("L9_10", 9, 10, 5, 80);
    add("L10_11", 10, 11, 7, 60);
    add("L11_12", 11, 12, 5, 100);
    g.rebuild_indexes();
    return g;
}

inline std::vector<FcsPlacement> ring_tn_fcs() {
    auto fcs = [](const char* id, const char* host, int bus) {
        FcsPlacement p;
        p.id = id;
        p.host_link = host;
        p.bus = bus;
        p.capacity = 20.0;
        p.charge_time_min = 10.0;
        p.queue_param = 0.1;
        return p;
    };
    return {fcs("FCS1", "L1_2", 2),  fcs("FCS2", "L1_4", 4),  fcs("FCS3", "L3_4", 6),
            fcs("FCS4", "L5_9", 8),  fcs("FCS5", "L7_8", 10), fcs("FCS6", "L5_6", 11)};
}

// Twenty EVs, one O-D, two stations on separate roads supplied by buses of
// different electrical depth. Small enough for exhaustive verification.
inline Scenario toy_two_fcs_scenario() {
    Scenario sc;
    AugmentedTrafficGraph base;
    base.nodes = {1, 2};
    base.links = {general_link("LA", 1, 2, 5.0, 100.0), general_link("LB", 1, 2, 5.0, 100.0)};
    base.rebuild_indexes();

    GridModel grid;
    for (int i = 0; i < 3; ++i) {
        GridBus b;
        b.id = i;
        b.p_load = {i == 0 ? 0.0 : 0.3};
        b.q_load = {i == 0 ? 0.0 : 0.1};
        grid.buses.push_back(b);
    }
    GridLine l01;
    l01.from = 0;
    l01.to = 1;
    l01.r = 0.02;
    l01.x = 0.02;
    l01.s_lim_sq = 2.25;
    GridLine l12;
    l12.from = 1;
    l12.to = 2;
    l12.r = 0.06;
    l12.x = 0.06;
    l12.s_lim_sq = 2.25;
    grid.lines = {l01, l12};
    grid.rebuild_indexes();

    std::vector<FcsPlacement> fcs(2);
    fcs[0] = {"FA", "LA", 1, 3.0, 10.0, 1.0};
    fcs[1] = {"FB", "LB", 2, 3.0, 10.0, 1.0};
    sc.graph = augment_graph(base, fcs, grid);

    ODPair od;
    od.origin = 1;
    od.destination = 2;
    od.demand_ev = 2.0;  // twenty vehicles
    od.departure_window = {1};
    sc.graph.od_pairs.push_back(od);
    enumerate_all_paths(sc.graph, 8, 6);

    sc.grid = grid;
    sc.config.t_tn = 12;
    sc.config.t_dn = 6;
    sc.config.dt_hours = 1.0 / 12.0;
    sc.config.lambda0 = {140.0};
    sc.config.pwl_breakpoints = 301;
    sc.config.eps = 0.15;
    sc.config.eps1 = 0.02;
    sc.config.eps2 = 0.5;
    return sc;
}

// Exhaustive fixed-point search on the toy above: for every whole-vehicle
// split a full dispatch prices the loads and exact link costs decide the
// equilibrium deviation. Returns the best split through station FA, p.u.
inline double brute_force_coupled_split(const Scenario& sc) {
    const auto& cfg = sc.config;
    const auto& g = sc.graph;
    const int fa = g.link_index("FA");
    const int fb = g.link_index("FB");
    const int la = g.link_index("LA");
    const int lb = g.link_index("LB");
    const double total = g.od_pairs[0].demand_ev;

    double best_s = 0.0, best_dev = std::numeric_limits<double>::infinity();
    const int steps = static_cast<int>(std::round(total * 10.0));
    for (int i = 0; i <= steps; ++i) {
        const double sa = 0.1 * i;
        const double sb = total - sa;
        // timing: road entered at interval 1 (one interval), station entered
        // at interval 2 and occupied for two intervals
        Grid x = zero_grid(g.links.size(), cfg.t_tn);
        x[la][1] = sa;
        x[lb][1] = sb;
        x[fa][2] = x[fa][3] = sa;
        x[fb][2] = x[fb][3] = sb;
        auto loads = map_charging_load(x, g, sc.grid, cfg);
        auto opf = build_and_solve_opf(sc.grid, loads, cfg);
        extract_lmp(opf);
        auto lam = map_prices(opf.lmp, g, sc.grid, cfg);

        const double ca = cfg.omega * bpr_time(sa, g.links[la]) / 60.0 +
                          cfg.omega * davidson_time_clamped(sa, g.links[fa]) / 60.0 +
                          lam[fa][2] * cfg.p_ev_mw * cfg.dt_hours;
        const double cb = cfg.omega * bpr_time(sb, g.links[lb]) / 60.0 +
                          cfg.omega * davidson_time_clamped(sb, g.links[fb]) / 60.0 +
                          lam[fb][2] * cfg.p_ev_mw * cfg.dt_hours;
        double dev;
        if (sa <= 0.0)
            dev = std::max(0.0, cb - ca);
        else if (sb <= 0.0)
            dev = std::max(0.0, ca - cb);
        else
            dev = std::abs(ca - cb);
        if (dev < best_dev - 1e-12) {
            best_dev = dev;
            best_s = sa;
        }
    }
    return best_s;
}

}  // namespace covnet::testing
