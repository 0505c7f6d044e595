#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "covnet/network_model.hpp"

namespace covnet {

// Integer link travel times, intervals, indexed [link][interval 1..T]
// (index 0 unused). Extra links always carry 0.
using TravelTimeGrid = std::vector<std::vector<int>>;

// Minutes per link per interval, same indexing.
using LatencyGrid = std::vector<std::vector<double>>;

// Rounds minute latencies onto the interval grid with the half-open rule
// i - 0.5 <= tau/interval < i + 0.5, clamped to >= 1.
inline TravelTimeGrid round_travel_times(const LatencyGrid& tau_min, double dt_hours) {
    const double interval_min = 60.0 * dt_hours;
    TravelTimeGrid out(tau_min.size());
    for (std::size_t a = 0; a < tau_min.size(); ++a) {
        out[a].assign(tau_min[a].size(), 0);
        for (std::size_t t = 1; t < tau_min[a].size(); ++t) {
            const double ratio = tau_min[a][t] / interval_min;
            // round-half-up: 2.5 -> 3
            int i = static_cast<int>(std::floor(ratio + 0.5));
            out[a][t] = std::max(1, i);
        }
    }
    return out;
}

// One traversal arc: enter link `link` at interval `enter`, leave at `exit`.
// Extra links have exit == enter (zero-time bypass inside a layer).
struct TsnArc {
    int link = -1;
    int enter = 0;
    int exit = 0;
};

struct TimeSpaceNetwork {
    int horizon = 0;
    int num_links = 0;
    std::vector<TsnArc> arcs;
    // arc index by (link, enter); -1 when the traversal would leave the horizon
    std::vector<std::vector<int>> arc_at;

    bool has_arc(int link, int enter) const {
        return enter >= 1 && enter <= horizon && arc_at[link][enter] >= 0;
    }
    const TsnArc& arc(int link, int enter) const { return arcs[arc_at[link][enter]]; }

    bool operator==(const TimeSpaceNetwork& o) const {
        if (horizon != o.horizon || num_links != o.num_links || arcs.size() != o.arcs.size())
            return false;
        for (std::size_t i = 0; i < arcs.size(); ++i)
            if (arcs[i].link != o.arcs[i].link || arcs[i].enter != o.arcs[i].enter ||
                arcs[i].exit != o.arcs[i].exit)
                return false;
        return true;
    }
};

// Expands the layered graph under fixed integer travel times. Arcs that
// would exit beyond the horizon are simply not created. Departure and
// arrival rates live on implicit virtual-origin/destination arcs; they are
// recovered from route expansions rather than stored.
inline TimeSpaceNetwork build_tsn(const AugmentedTrafficGraph& g, const TravelTimeGrid& tau_bar,
                                  int horizon) {
    TimeSpaceNetwork tsn;
    tsn.horizon = horizon;
    tsn.num_links = static_cast<int>(g.links.size());
    tsn.arc_at.assign(tsn.num_links, std::vector<int>(horizon + 1, -1));
    for (int a = 0; a < tsn.num_links; ++a) {
        const bool extra = g.links[a].kind == LinkKind::Extra;
        for (int t = 1; t <= horizon; ++t) {
            const int tau = extra ? 0 : tau_bar[a][t];
            const int exit = t + tau;
            if (exit > horizon) continue;
            tsn.arc_at[a][t] = static_cast<int>(tsn.arcs.size());
            tsn.arcs.push_back({a, t, exit});
        }
    }
    return tsn;
}

// Time-indexed traversal of one candidate path from one departure interval.
struct RouteExpansion {
    int commodity = -1;  // filled by the assignment layer
    int path = -1;
    int departure = 0;
    std::vector<std::pair<int, int>> entries;  // (link index, enter interval)
    int arrival = 0;                           // interval the trip completes
};

// Chains the path's links under tau_bar starting at departure interval k.
// Returns nothing when the arrival would exceed the horizon.
inline std::optional<RouteExpansion> expand_route(const AugmentedTrafficGraph& g, const Path& path,
                                                  int k, const TravelTimeGrid& tau_bar,
                                                  int horizon) {
    RouteExpansion exp;
    exp.departure = k;
    int t = k;
    for (int li : path.links) {
        if (t > horizon) return std::nullopt;
        const bool extra = g.links[li].kind == LinkKind::Extra;
        const int tau = extra ? 0 : tau_bar[li][t];
        if (t + tau > horizon) return std::nullopt;
        exp.entries.emplace_back(li, t);
        t += tau;
    }
    exp.arrival = t;
    return exp;
}

// delta[od, path, departure, link, interval] from Eq.-style route-link-time
// incidence, stored as the expansions themselves plus a lookup.
struct IncidenceMap {
    std::vector<RouteExpansion> expansions;

    bool on_link_at(std::size_t triple, int link, int t) const {
        for (const auto& [li, enter] : expansions[triple].entries)
            if (li == link && enter == t) return true;
        return false;
    }
};

inline void dump_tsn(const TimeSpaceNetwork& tsn, const AugmentedTrafficGraph& g,
                     std::ostream& os) {
    os << "# link enter exit\n";
    for (const auto& a : tsn.arcs)
        os << g.links[a.link].id << " " << a.enter << " " << a.exit << "\n";
}

}  // namespace covnet
