#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "covnet/equilibrium.hpp"
#include "test_helpers.hpp"

using namespace covnet;
using covnet::testing::general_link;
using covnet::testing::toy_two_fcs_scenario;
using Catch::Approx;

namespace {

// one charging link on bus 1, horizon 2 DTA intervals per OPF interval
struct MiniCoupling {
    AugmentedTrafficGraph graph;
    GridModel grid;
    ScenarioConfig cfg;
};

MiniCoupling mini_coupling() {
    MiniCoupling m;
    AugmentedTrafficGraph base;
    base.nodes = {1, 2};
    base.links = {general_link("L", 1, 2, 5.0, 100.0)};
    base.rebuild_indexes();
    m.grid = covnet::testing::tiny_grid(2);
    std::vector<FcsPlacement> fcs(1);
    fcs[0] = {"F", "L", 1, 20.0, 10.0, 1.0};
    m.graph = augment_graph(base, fcs, m.grid);
    m.cfg.t_tn = 12;
    m.cfg.t_dn = 6;
    m.cfg.dt_hours = 1.0 / 12.0;
    m.cfg.lambda0 = {140.0};
    return m;
}

}  // namespace

TEST_CASE("map_charging_load") {
    auto m = mini_coupling();
    const int f = m.graph.link_index("F");

    SECTION("zero occupancy maps to zero load") {
        auto mw = map_charging_load(zero_grid(m.graph.links.size(), m.cfg.t_tn), m.graph, m.grid,
                                    m.cfg);
        CHECK(mw.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("constant occupancy over both sub-intervals") {
        auto x = zero_grid(m.graph.links.size(), m.cfg.t_tn);
        x[f][1] = 10.0;
        x[f][2] = 10.0;
        auto mw = map_charging_load(x, m.graph, m.grid, m.cfg);
        CHECK(mw(1, 0) == Approx(15.0));  // 0.15 MW * 100 vehicles
        CHECK(mw(1, 1) == 0.0);
    }
    SECTION("occupancy in only one sub-interval averages down") {
        auto x = zero_grid(m.graph.links.size(), m.cfg.t_tn);
        x[f][1] = 10.0;
        auto mw = map_charging_load(x, m.graph, m.grid, m.cfg);
        CHECK(mw(1, 0) == Approx(7.5));
    }
}

TEST_CASE("map_prices broadcast") {
    auto m = mini_coupling();
    const int f = m.graph.link_index("F");
    Eigen::MatrixXd lmp = Eigen::MatrixXd::Constant(2, 6, 140.0);

    SECTION("uniform price") {
        auto lam = map_prices(lmp, m.graph, m.grid, m.cfg);
        for (int t = 1; t <= 12; ++t) CHECK(lam[f][t] == 140.0);
    }
    SECTION("per-interval prices broadcast piecewise-constant") {
        for (int T = 3; T < 6; ++T) lmp(1, T) = 150.0;
        auto lam = map_prices(lmp, m.graph, m.grid, m.cfg);
        for (int t = 1; t <= 6; ++t) CHECK(lam[f][t] == 140.0);
        for (int t = 7; t <= 12; ++t) CHECK(lam[f][t] == 150.0);
    }
    SECTION("unmapped station bus") {
        m.graph.links[f].supply_bus = 99;
        CHECK_THROWS_AS(map_prices(lmp, m.graph, m.grid, m.cfg), UnmappedFcs);
    }
}

TEST_CASE("build_pwl") {
    ScenarioConfig cfg;
    cfg.lambda0 = {140.0};
    auto link = general_link("g", 1, 2, 8.0, 100.0);

    SECTION("degenerate two-point curve is the chord") {
        cfg.pwl_breakpoints = 2;
        auto curve = build_pwl(link, 0.0, cfg);
        REQUIRE(curve.x.size() == 2);
        CHECK(curve.c[0] == Approx(10.0 * 8.0 / 60.0));
        CHECK(curve.c[1] == Approx(10.0 * 9.2 / 60.0));
    }
    SECTION("values are exact at breakpoints") {
        cfg.pwl_breakpoints = 11;
        auto curve = build_pwl(link, 0.0, cfg);
        CHECK(curve.x[5] == Approx(50.0));
        CHECK(curve.c[5] == Approx(8.075 * 10.0 / 60.0));
        CHECK(curve.value(50.0) == Approx(8.075 * 10.0 / 60.0));
    }
    SECTION("charging curves carry the energy price") {
        TrafficLink chg;
        chg.id = "c";
        chg.kind = LinkKind::Charging;
        chg.capacity = 20.0;
        chg.charge_time_min = 10.0;
        chg.queue_param = 0.1;
        cfg.pwl_breakpoints = 5;
        auto c140 = build_pwl(chg, 140.0, cfg);
        auto c150 = build_pwl(chg, 150.0, cfg);
        for (std::size_t i = 0; i < c140.c.size(); ++i)
            CHECK(c150.c[i] - c140.c[i] == Approx(10.0 * cfg.p_ev_mw * cfg.dt_hours));
        // last breakpoint stops at the saturation guard
        CHECK(c140.x.back() == Approx((1.0 - cfg.davidson_guard) * 20.0));
    }
    SECTION("extra links carry no curve") {
        TrafficLink ext;
        ext.kind = LinkKind::Extra;
        CHECK_THROWS_AS(build_pwl(ext, 0.0, cfg), WrongKind);
    }
}

TEST_CASE("decoupled limit: zero charging power") {
    auto sc = toy_two_fcs_scenario();
    sc.config.p_ev_mw = 0.0;
    auto res = solve_equilibrium(sc);
    CHECK(res.converged);
    CHECK(res.iterations <= 2);
    // flows cannot move between iterations when prices carry no weight
    for (const auto& rec : res.trajectory) CHECK(rec.delta_tn <= 1e-8);

    auto rep = contraction_diagnostic(sc, 0.1);
    CHECK(rep.spectral_radius <= 1e-8);
    CHECK(rep.dimension == 24);
}

TEST_CASE("toy coupled equilibrium matches the exhaustive fixed point") {
    auto sc = toy_two_fcs_scenario();
    auto res = solve_equilibrium(sc);
    REQUIRE(res.converged);

    const int fa = sc.graph.link_index("FA");
    double via_a = 0.0;
    for (int t = 1; t <= sc.config.t_tn; ++t) via_a += res.dta.u[fa][t];

    const double oracle = covnet::testing::brute_force_coupled_split(sc);
    INFO("solver " << via_a << " vs oracle " << oracle);
    CHECK(std::abs(via_a - oracle) <= 0.1 + 1e-9);

    // the deeper bus carries the pricier station, so it attracts fewer EVs
    const int fb = sc.graph.link_index("FB");
    double via_b = 0.0;
    for (int t = 1; t <= sc.config.t_tn; ++t) via_b += res.dta.u[fb][t];
    CHECK(via_a > via_b);

    // full-cost certificate with charging included
    for (const auto& cert : res.dta.certificates)
        CHECK(cert.max_residual <= sc.config.cost_eps_rel * cert.c_min);

    // feasible-region invariance along the whole trajectory
    for (const auto& rec : res.trajectory) CHECK(rec.conservation_worst <= 1e-6);

    // self-map residual at the converged point stays within the exit slack
    auto [flow_res, price_res] = fixed_point_residual(res, sc);
    CHECK(flow_res + price_res < sc.config.eps);
}

TEST_CASE("contraction diagnostic on the toy coupling") {
    auto sc = toy_two_fcs_scenario();
    auto rep_h = contraction_diagnostic(sc, 0.1);
    CHECK(std::isfinite(rep_h.spectral_radius));
    CHECK(rep_h.spectral_radius < 1.0);

    auto rep_h2 = contraction_diagnostic(sc, 0.05);
    const double ref = std::max(rep_h.spectral_radius, 1e-6);
    CHECK(std::abs(rep_h.spectral_radius - rep_h2.spectral_radius) <= 0.1 * std::max(ref, 0.05));

    // power iteration cross-check of the spectral radius
    Eigen::VectorXd y = Eigen::VectorXd::Ones(rep_h.dimension);
    double rho_pi = 0.0;
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd z = rep_h.jacobian * y;
        const double n = z.norm();
        if (n < 1e-14) { rho_pi = 0.0; break; }
        rho_pi = n / y.norm() * (y.norm() == 1.0 ? 1.0 : 1.0);
        y = z / n;
        rho_pi = (rep_h.jacobian * y).norm();
    }
    CHECK(rho_pi <= rep_h.spectral_radius + 0.05);
}

TEST_CASE("dimension cap raises TooLarge") {
    auto sc = toy_two_fcs_scenario();
    CHECK_THROWS_AS(contraction_diagnostic(sc, 0.1, 10), TooLarge);
}

TEST_CASE("no-information mode prices after the fact") {
    auto sc = toy_two_fcs_scenario();
    sc.config.price_information = false;
    auto res = solve_equilibrium(sc);
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    CHECK(res.opf.duals_available);

    // with vanishing charging power the two modes assign identically
    auto sc0 = toy_two_fcs_scenario();
    sc0.config.p_ev_mw = 0.0;
    auto no_info = sc0;
    no_info.config.price_information = false;
    auto a = solve_equilibrium(sc0);
    auto b = solve_equilibrium(no_info);
    CHECK(max_abs_diff(a.dta.x, b.dta.x) <= 1e-12);
}
