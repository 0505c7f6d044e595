#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "covnet/errors.hpp"

namespace covnet {

enum class LinkKind { General, Charging, Extra };
enum class VehicleClass { Gas, Ev };

inline const char* to_string(LinkKind k) {
    switch (k) {
        case LinkKind::General: return "general";
        case LinkKind::Charging: return "charging";
        case LinkKind::Extra: return "extra";
    }
    return "?";
}
inline const char* to_string(VehicleClass c) { return c == VehicleClass::Gas ? "gv" : "ev"; }

// A directed road segment, a charging queue, or the zero-cost bypass that
// separates charging from non-charging flow on a station-bearing road.
struct TrafficLink {
    std::string id;
    int tail = -1;
    int head = -1;
    LinkKind kind = LinkKind::General;
    double capacity = 0.0;         // flow p.u. (General, Charging)
    double free_time_min = 0.0;    // General
    double charge_time_min = 0.0;  // Charging
    double queue_param = 0.1;      // Charging (Davidson J)
    int supply_bus = -1;           // Charging only

    bool costless() const { return kind == LinkKind::Extra; }
};

struct ODPair {
    int origin = -1;
    int destination = -1;
    double demand_gv = 0.0;  // p.u. vehicles
    double demand_ev = 0.0;  // p.u. vehicles
    std::vector<int> departure_window;  // 1-based interval indices

    double demand(VehicleClass c) const { return c == VehicleClass::Gas ? demand_gv : demand_ev; }
};

// Ordered link sequence from an O-D origin to its destination.
struct Path {
    std::vector<int> links;  // indices into AugmentedTrafficGraph::links
    double free_time_min = 0.0;
    int charging_links = 0;
};

struct FcsPlacement {
    std::string id;
    std::string host_link;
    int bus = -1;
    double capacity = 0.0;        // flow p.u.
    double charge_time_min = 0.0;
    double queue_param = 0.1;
};

struct AugmentedTrafficGraph {
    std::vector<int> nodes;
    std::vector<TrafficLink> links;
    std::vector<ODPair> od_pairs;
    // Candidate paths per O-D pair, filled by enumerate_paths.
    std::vector<std::vector<Path>> ev_paths;
    std::vector<std::vector<Path>> gv_paths;

    std::unordered_map<std::string, int> link_index_by_id;
    std::unordered_map<int, std::vector<int>> out_links;  // node -> link indices

    void rebuild_indexes() {
        link_index_by_id.clear();
        out_links.clear();
        for (int i = 0; i < static_cast<int>(links.size()); ++i) {
            link_index_by_id[links[i].id] = i;
            out_links[links[i].tail].push_back(i);
        }
    }

    int link_index(const std::string& id) const {
        auto it = link_index_by_id.find(id);
        if (it == link_index_by_id.end()) throw UnknownLink(id);
        return it->second;
    }

    bool has_node(int n) const {
        return std::find(nodes.begin(), nodes.end(), n) != nodes.end();
    }

    std::vector<int> charging_link_indices() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(links.size()); ++i)
            if (links[i].kind == LinkKind::Charging) out.push_back(i);
        return out;
    }

    const std::vector<Path>& paths(int od, VehicleClass c) const {
        return c == VehicleClass::Gas ? gv_paths[od] : ev_paths[od];
    }
};

// --- distribution grid -----------------------------------------------------

struct GridBus {
    int id = -1;
    std::vector<double> p_load;  // grid p.u., one entry per OPF interval
    std::vector<double> q_load;
    double pg_min = 0.0, pg_max = 0.0;  // generation limits, grid p.u.
    double qg_min = 0.0, qg_max = 0.0;
    double p_ramp = 0.0, q_ramp = 0.0;  // per-interval ramp limits
    double cost_a = 0.0;  // $/MW^2 h
    double cost_b = 0.0;  // $/MWh

    bool has_pgen() const { return pg_max > pg_min; }
    bool has_qgen() const { return qg_max > qg_min; }
};

struct GridLine {
    int from = -1;  // parent bus (towards the substation)
    int to = -1;    // child bus
    double r = 0.0, x = 0.0;  // grid p.u.
    double s_lim_sq = 0.0;    // grid p.u.^2

    double z_sq() const { return r * r + x * x; }
};

struct GridModel {
    std::vector<GridBus> buses;
    std::vector<GridLine> lines;
    int substation = 0;  // bus id of the slack / purchase point

    std::unordered_map<int, int> bus_index_by_id;

    void rebuild_indexes() {
        bus_index_by_id.clear();
        for (int i = 0; i < static_cast<int>(buses.size()); ++i) bus_index_by_id[buses[i].id] = i;
    }

    bool has_bus(int id) const { return bus_index_by_id.count(id) > 0; }

    int bus_index(int id) const {
        auto it = bus_index_by_id.find(id);
        if (it == bus_index_by_id.end()) throw UnknownBus(std::to_string(id));
        return it->second;
    }

    // Tree check: every non-substation bus reachable through exactly one
    // parent line, lines oriented parent -> child.
    bool is_radial(std::string* why = nullptr) const {
        if (buses.empty()) { if (why) *why = "no buses"; return false; }
        if (lines.size() + 1 != buses.size()) {
            if (why) *why = "line count must equal bus count minus one";
            return false;
        }
        std::unordered_map<int, int> parent_count;
        for (const auto& l : lines) {
            if (!has_bus(l.from) || !has_bus(l.to)) { if (why) *why = "line references unknown bus"; return false; }
            parent_count[l.to]++;
        }
        for (const auto& b : buses) {
            if (b.id == substation) {
                if (parent_count.count(b.id)) { if (why) *why = "substation has a parent line"; return false; }
            } else if (parent_count[b.id] != 1) {
                if (why) *why = "bus " + std::to_string(b.id) + " must have exactly one parent line";
                return false;
            }
        }
        // reachability from the substation
        std::unordered_map<int, std::vector<int>> children;
        for (const auto& l : lines) children[l.from].push_back(l.to);
        std::vector<int> stack{substation};
        std::set<int> seen{substation};
        while (!stack.empty()) {
            int b = stack.back();
            stack.pop_back();
            for (int c : children[b])
                if (seen.insert(c).second) stack.push_back(c);
        }
        if (seen.size() != buses.size()) { if (why) *why = "grid is not connected from the substation"; return false; }
        return true;
    }
};

// --- study-wide parameters --------------------------------------------------

struct ScenarioConfig {
    int t_tn = 12;                 // DTA interval count
    int t_dn = 6;                  // OPF interval count
    double dt_hours = 1.0 / 12.0;  // DTA interval length
    double omega = 10.0;           // monetary value of time, $/h
    double p_ev_mw = 0.15;         // charging power per vehicle, MW
    double base_power_mva = 100.0;
    double base_flow_vehicles = 10.0;  // vehicles per flow p.u.
    std::vector<double> lambda0;       // substation purchase price, $/MWh per OPF interval
    double u_min_sq = 0.7744;
    double u_max_sq = 1.1025;
    double eps = 1.0;    // fixed-point exit, ΔDN + ΔTN
    double eps1 = 1.0;   // inner diagonalization exit, flow p.u.
    double eps2 = 2.0;   // outer diagonalization exit, minutes
    int pwl_breakpoints = 10;
    bool departure_time_choice = true;
    bool price_information = true;
    // Charging energy billed for a single interval at entry (the literal
    // model) or once per occupied interval.
    bool energy_cost_per_entry = true;
    std::uint64_t master_seed = 42;

    int max_inner_iterations = 50;
    int max_outer_iterations = 20;
    int max_fp_iterations = 50;
    bool damping = false;

    double davidson_guard = 1e-3;  // keep charging flow below (1-guard)*cap
    double flow_eps = 1e-4;        // "used path" threshold, p.u.
    double cost_eps_rel = 0.01;    // equilibrium cost slack, fraction of c_min
    // early inner-loop exit when the iterate already self-certifies as an
    // equilibrium to this relative residual; near-tied vertex optima make the
    // flow-delta test alone unreliable
    double inner_certificate_exit = 0.005;

    int path_limit = 12;
    int hop_limit = 10;

    double opf_q_slack_limit = 5.0;  // reactive import bound at the substation, p.u.

    double study_horizon_hours() const { return dt_hours * t_tn; }
    double dt_dn_hours() const { return study_horizon_hours() / t_dn; }
    int tn_per_dn() const { return t_tn / t_dn; }
    // 1-based OPF interval enclosing 1-based DTA interval t.
    int opf_interval_of(int t) const { return (t - 1) / tn_per_dn() + 1; }

    double lambda0_at(int opf_interval) const {
        if (lambda0.empty()) return 0.0;
        if (static_cast<int>(lambda0.size()) == 1) return lambda0[0];
        return lambda0.at(static_cast<std::size_t>(opf_interval - 1));
    }
};

// --- link performance functions ----------------------------------------------

// Bureau of Public Roads latency, minutes.
inline double bpr_time(double x, const TrafficLink& link) {
    if (link.kind != LinkKind::General)
        throw WrongKind("bpr_time applies to general links only (got " + link.id + ")");
    if (x < 0.0) throw Error("negative occupancy on link " + link.id);
    const double ratio = x / link.capacity;
    return link.free_time_min * (1.0 + 0.15 * ratio * ratio * ratio * ratio);
}

// Davidson queueing delay, minutes. Throws Saturated at the guard band in
// front of the pole at x = cap.
inline double davidson_time(double x, const TrafficLink& link, double guard = 1e-3) {
    if (link.kind != LinkKind::Charging)
        throw WrongKind("davidson_time applies to charging links only (got " + link.id + ")");
    if (x < 0.0) throw Error("negative occupancy on link " + link.id);
    if (x >= (1.0 - guard) * link.capacity)
        throw Saturated("charging link " + link.id + " saturated: x=" + std::to_string(x) +
                        " cap=" + std::to_string(link.capacity));
    return link.charge_time_min * (1.0 + link.queue_param * x / (link.capacity - x));
}

// Saturation-clamped variant used when evaluating latencies at iterates that
// may overshoot the guard band by a solver tolerance.
inline double davidson_time_clamped(double x, const TrafficLink& link, double guard = 1e-3) {
    const double hi = (1.0 - guard) * link.capacity * (1.0 - 1e-9);
    return davidson_time(std::min(x, hi), link, guard);
}

// Travel cost of one vehicle entering the link at occupancy x, dollars.
// lambda is the charging price in $/MWh; ignored except on charging links.
inline double link_cost(const TrafficLink& link, double x, double lambda,
                        const ScenarioConfig& cfg) {
    switch (link.kind) {
        case LinkKind::General:
            return cfg.omega * bpr_time(x, link) / 60.0;
        case LinkKind::Charging:
            return cfg.omega * davidson_time(x, link, cfg.davidson_guard) / 60.0 +
                   lambda * cfg.p_ev_mw * cfg.dt_hours;
        case LinkKind::Extra:
            return 0.0;
    }
    return 0.0;
}

struct ChargingPower {
    double mw = 0.0;
    double pu = 0.0;  // on base_power_mva
};

// EV charging load drawn by an occupancy of x flow p.u.
inline ChargingPower charging_power(double x, const ScenarioConfig& cfg) {
    ChargingPower p;
    p.mw = cfg.p_ev_mw * x * cfg.base_flow_vehicles;
    p.pu = p.mw / cfg.base_power_mva;
    return p;
}

// --- graph augmentation -------------------------------------------------------

// Splits every station-bearing road (i,j) into a general sub-link (i,m)
// followed by a charging / bypass pair (m,j) in parallel.
inline AugmentedTrafficGraph augment_graph(const AugmentedTrafficGraph& base,
                                           const std::vector<FcsPlacement>& placements,
                                           const GridModel& grid) {
    AugmentedTrafficGraph g = base;
    g.rebuild_indexes();

    std::set<std::string> hosts;
    int next_node = g.nodes.empty() ? 1 : *std::max_element(g.nodes.begin(), g.nodes.end()) + 1;

    for (const auto& p : placements) {
        if (!hosts.insert(p.host_link).second) throw DuplicatePlacement(p.host_link);
        const int host_idx = g.link_index(p.host_link);
        TrafficLink& host = g.links[host_idx];
        if (host.kind != LinkKind::General)
            throw WrongKind("station host " + p.host_link + " must be a general link");
        if (!grid.has_bus(p.bus)) throw UnknownBus(std::to_string(p.bus));

        const int mid = next_node++;
        const int old_head = host.head;
        g.nodes.push_back(mid);
        host.head = mid;

        TrafficLink chg;
        chg.id = p.id;
        chg.tail = mid;
        chg.head = old_head;
        chg.kind = LinkKind::Charging;
        chg.capacity = p.capacity;
        chg.charge_time_min = p.charge_time_min;
        chg.queue_param = p.queue_param;
        chg.supply_bus = p.bus;

        TrafficLink ext;
        ext.id = p.host_link + "~ext";
        ext.tail = mid;
        ext.head = old_head;
        ext.kind = LinkKind::Extra;

        g.links.push_back(chg);
        g.links.push_back(ext);
    }
    g.rebuild_indexes();
    return g;
}

// --- candidate path enumeration -----------------------------------------------

namespace detail {

inline void dfs_paths(const AugmentedTrafficGraph& g, int node, int dest, int max_hops,
                      std::vector<int>& link_stack, std::set<int>& visited,
                      int charging_count, std::vector<Path>& out) {
    if (node == dest) {
        Path p;
        p.links = link_stack;
        p.charging_links = charging_count;
        for (int li : link_stack) {
            const auto& l = g.links[li];
            p.free_time_min += l.kind == LinkKind::General ? l.free_time_min
                             : l.kind == LinkKind::Charging ? l.charge_time_min
                                                            : 0.0;
        }
        out.push_back(std::move(p));
        return;
    }
    if (static_cast<int>(link_stack.size()) >= max_hops) return;
    auto it = g.out_links.find(node);
    if (it == g.out_links.end()) return;
    for (int li : it->second) {
        const auto& l = g.links[li];
        const int next_charging = charging_count + (l.kind == LinkKind::Charging ? 1 : 0);
        if (next_charging > 1) continue;  // nobody charges twice
        if (visited.count(l.head)) continue;
        visited.insert(l.head);
        link_stack.push_back(li);
        dfs_paths(g, l.head, dest, max_hops, link_stack, visited, next_charging, out);
        link_stack.pop_back();
        visited.erase(l.head);
    }
}

inline bool path_order(const AugmentedTrafficGraph& g, const Path& a, const Path& b) {
    if (a.free_time_min != b.free_time_min) return a.free_time_min < b.free_time_min;
    // deterministic tie-break on the link id sequence
    const std::size_t n = std::min(a.links.size(), b.links.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a.links[i] != b.links[i]) return g.links[a.links[i]].id < g.links[b.links[i]].id;
    return a.links.size() < b.links.size();
}

}  // namespace detail

struct EnumeratedPaths {
    std::vector<Path> ev;
    std::vector<Path> gv;
};

// Loop-free candidate paths, split by vehicle class. EV paths carry exactly
// one charging link, GV paths none (they pass stations on the bypass links).
inline EnumeratedPaths enumerate_paths(const AugmentedTrafficGraph& g, const ODPair& od,
                                       int max_paths, int max_hops) {
    if (max_paths < 1) throw Error("max_paths must be >= 1");
    std::vector<Path> all;
    std::vector<int> stack;
    std::set<int> visited{od.origin};
    detail::dfs_paths(g, od.origin, od.destination, max_hops, stack, visited, 0, all);

    EnumeratedPaths out;
    for (auto& p : all) {
        if (p.charging_links == 1)
            out.ev.push_back(p);
        else if (p.charging_links == 0)
            out.gv.push_back(p);
    }
    auto order = [&g](const Path& a, const Path& b) { return detail::path_order(g, a, b); };
    std::sort(out.ev.begin(), out.ev.end(), order);
    std::sort(out.gv.begin(), out.gv.end(), order);
    if (static_cast<int>(out.ev.size()) > max_paths) out.ev.resize(max_paths);
    if (static_cast<int>(out.gv.size()) > max_paths) out.gv.resize(max_paths);

    const std::string od_name =
        std::to_string(od.origin) + "->" + std::to_string(od.destination);
    if (od.demand_ev > 0.0 && out.ev.empty())
        throw NoFeasiblePath("no charging-feasible path for EV demand on O-D " + od_name);
    if (od.demand_gv > 0.0 && out.gv.empty())
        throw NoFeasiblePath("no path for GV demand on O-D " + od_name);
    return out;
}

// Fills the per-O-D candidate path lists in place.
inline void enumerate_all_paths(AugmentedTrafficGraph& g, int max_paths, int max_hops) {
    g.ev_paths.assign(g.od_pairs.size(), {});
    g.gv_paths.assign(g.od_pairs.size(), {});
    for (std::size_t i = 0; i < g.od_pairs.size(); ++i) {
        auto ep = enumerate_paths(g, g.od_pairs[i], max_paths, max_hops);
        g.ev_paths[i] = std::move(ep.ev);
        g.gv_paths[i] = std::move(ep.gv);
    }
}

}  // namespace covnet
