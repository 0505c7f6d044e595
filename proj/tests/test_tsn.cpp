#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "covnet/tsn.hpp"
#include "test_helpers.hpp"

using namespace covnet;
using covnet::testing::general_link;
using Catch::Approx;

namespace {

LatencyGrid constant_latency(int links, int horizon, double minutes) {
    return LatencyGrid(links, std::vector<double>(horizon + 1, minutes));
}

AugmentedTrafficGraph chain3() {
    AugmentedTrafficGraph g;
    g.nodes = {1, 2, 3};
    g.links = {general_link("a", 1, 2, 5.0, 100.0), general_link("b", 2, 3, 5.0, 100.0)};
    g.rebuild_indexes();
    return g;
}

}  // namespace

TEST_CASE("round_travel_times") {
    const double dt = 5.0 / 60.0;  // 5-minute intervals
    LatencyGrid tau(1, std::vector<double>(2, 0.0));

    tau[0][1] = 5.0;
    CHECK(round_travel_times(tau, dt)[0][1] == 1);
    tau[0][1] = 12.4;
    CHECK(round_travel_times(tau, dt)[0][1] == 2);
    tau[0][1] = 12.5;  // half rounds up
    CHECK(round_travel_times(tau, dt)[0][1] == 3);
    tau[0][1] = 1.0;  // clamped to one interval
    CHECK(round_travel_times(tau, dt)[0][1] == 1);
    tau[0][1] = 7.4;
    CHECK(round_travel_times(tau, dt)[0][1] == 1);
    tau[0][1] = 7.5;
    CHECK(round_travel_times(tau, dt)[0][1] == 2);
}

TEST_CASE("build_tsn on a 3-node chain") {
    auto g = chain3();
    const int T = 12;
    auto tau = round_travel_times(constant_latency(2, T, 5.0), 5.0 / 60.0);
    auto tsn = build_tsn(g, tau, T);

    // each link can be entered at 1..T-1 (exit must stay within horizon)
    CHECK(tsn.arcs.size() == 2 * (T - 1));
    for (const auto& a : tsn.arcs) {
        CHECK(a.exit == a.enter + 1);
        CHECK(a.exit <= T);
    }

    // the 1->2->3 route departing at interval 1 chains through the two arcs
    Path p;
    p.links = {0, 1};
    auto exp = expand_route(g, p, 1, tau, T);
    REQUIRE(exp.has_value());
    CHECK(exp->entries == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
    CHECK(exp->arrival == 3);
}

TEST_CASE("build_tsn trivial and horizon cases") {
    SECTION("empty graph") {
        AugmentedTrafficGraph g;
        auto tsn = build_tsn(g, {}, 4);
        CHECK(tsn.arcs.empty());
    }
    SECTION("travel time beyond horizon leaves no arc") {
        AugmentedTrafficGraph g;
        g.nodes = {1, 2};
        g.links = {general_link("a", 1, 2, 15.0, 100.0)};
        g.rebuild_indexes();
        auto tau = round_travel_times(constant_latency(1, 2, 15.0), 5.0 / 60.0);
        REQUIRE(tau[0][1] == 3);
        auto tsn = build_tsn(g, tau, 2);
        CHECK(tsn.arcs.empty());
        CHECK(!tsn.has_arc(0, 1));
    }
}

TEST_CASE("expand_route horizon and zero-time links") {
    auto g = chain3();
    const int T = 12;
    auto tau = round_travel_times(constant_latency(2, T, 5.0), 5.0 / 60.0);
    Path p;
    p.links = {0, 1};

    SECTION("departing at the last interval is infeasible") {
        CHECK(!expand_route(g, p, T, tau, T).has_value());
    }
    SECTION("extra links occupy their predecessor's exit interval") {
        AugmentedTrafficGraph ag;
        ag.nodes = {1, 2, 3};
        ag.links = {general_link("a", 1, 2, 5.0, 100.0)};
        TrafficLink ext;
        ext.id = "e";
        ext.tail = 2;
        ext.head = 3;
        ext.kind = LinkKind::Extra;
        ag.links.push_back(ext);
        ag.rebuild_indexes();
        auto tau2 = round_travel_times(constant_latency(2, T, 5.0), 5.0 / 60.0);
        Path q;
        q.links = {0, 1};
        auto exp = expand_route(ag, q, 3, tau2, T);
        REQUIRE(exp.has_value());
        CHECK(exp->entries == std::vector<std::pair<int, int>>{{0, 3}, {1, 4}});
        CHECK(exp->arrival == 4);  // the bypass costs no time
    }
}

TEST_CASE("expanded route duration equals the sum of rounded times") {
    auto g = covnet::testing::ring_tn_base();
    const int T = 12;
    std::mt19937 rng(7);
    LatencyGrid lat(g.links.size(), std::vector<double>(T + 1, 0.0));
    for (auto& row : lat)
        for (int t = 1; t <= T; ++t) row[t] = std::uniform_real_distribution<>(3.0, 14.0)(rng);
    auto tau = round_travel_times(lat, 5.0 / 60.0);

    ODPair od;
    od.origin = 1;
    od.destination = 12;
    od.demand_gv = 1.0;
    od.departure_window = {1};
    auto paths = enumerate_paths(g, od, 10, 10);
    for (const auto& p : paths.gv) {
        for (int k = 1; k <= 3; ++k) {
            auto exp = expand_route(g, p, k, tau, T);
            if (!exp) continue;
            int sum = 0, t = k;
            for (auto [li, enter] : exp->entries) {
                CHECK(enter == t);
                sum += tau[li][enter];
                t += tau[li][enter];
            }
            CHECK(exp->arrival - exp->departure == sum);
        }
    }
}

TEST_CASE("tsn rebuild is deterministic") {
    auto g = covnet::testing::ring_tn_base();
    const int T = 12;
    auto tau = round_travel_times(constant_latency(static_cast<int>(g.links.size()), T, 7.0),
                                  5.0 / 60.0);
    auto a = build_tsn(g, tau, T);
    auto b = build_tsn(g, tau, T);
    CHECK(a == b);
    std::ostringstream sa, sb;
    dump_tsn(a, g, sa);
    dump_tsn(b, g, sb);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("incidence aggregation matches direct accumulation") {
    auto g = chain3();
    const int T = 8;
    auto tau = round_travel_times(constant_latency(2, T, 5.0), 5.0 / 60.0);

    Path p;
    p.links = {0, 1};
    IncidenceMap inc;
    for (int k = 1; k <= 5; ++k) {
        auto exp = expand_route(g, p, k, tau, T);
        REQUIRE(exp.has_value());
        inc.expansions.push_back(*exp);
    }

    std::mt19937 rng(123);
    std::vector<double> f(inc.expansions.size());
    for (auto& v : f) v = std::uniform_real_distribution<>(0.0, 9.0)(rng);

    // u(link, t) two ways: delta lookup and direct accumulation over entries
    for (int link = 0; link < 2; ++link) {
        for (int t = 1; t <= T; ++t) {
            double via_delta = 0.0, direct = 0.0;
            for (std::size_t i = 0; i < inc.expansions.size(); ++i)
                if (inc.on_link_at(i, link, t)) via_delta += f[i];
            for (std::size_t i = 0; i < inc.expansions.size(); ++i)
                for (auto [li, enter] : inc.expansions[i].entries)
                    if (li == link && enter == t) direct += f[i];
            CHECK(via_delta == Approx(direct));
        }
    }
}

TEST_CASE("expansion traversals are contiguous and time ordered") {
    auto g = covnet::testing::ring_tn_base();
    const int T = 12;
    auto tau = round_travel_times(constant_latency(static_cast<int>(g.links.size()), T, 8.0),
                                  5.0 / 60.0);
    ODPair od;
    od.origin = 1;
    od.destination = 6;
    od.demand_gv = 1.0;
    od.departure_window = {1};
    auto paths = enumerate_paths(g, od, 10, 10);
    for (const auto& p : paths.gv) {
        auto exp = expand_route(g, p, 2, tau, T);
        if (!exp) continue;
        REQUIRE(exp->entries.size() == p.links.size());
        for (std::size_t i = 0; i < exp->entries.size(); ++i) {
            CHECK(exp->entries[i].first == p.links[i]);
            if (i > 0) CHECK(exp->entries[i].second >= exp->entries[i - 1].second);
        }
    }
}
