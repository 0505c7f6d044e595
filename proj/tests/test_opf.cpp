#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "covnet/opf.hpp"

using namespace covnet;
using Catch::Approx;

namespace {

ScenarioConfig opf_cfg(int t_dn, double lambda0 = 140.0) {
    ScenarioConfig cfg;
    cfg.t_dn = t_dn;
    cfg.t_tn = 2 * t_dn;
    cfg.dt_hours = 1.0 / cfg.t_tn;  // one-hour study horizon
    cfg.lambda0 = {lambda0};
    return cfg;
}

GridBus bus(int id, double p_load, double q_load) {
    GridBus b;
    b.id = id;
    b.p_load = {p_load};
    b.q_load = {q_load};
    return b;
}

GridBus gen_bus(int id, double p_load, double q_load, double pmax, double a, double bcost) {
    GridBus b = bus(id, p_load, q_load);
    b.pg_min = 0.0;
    b.pg_max = pmax;
    b.qg_min = -1.0;
    b.qg_max = 1.0;
    b.p_ramp = 0.5;
    b.q_ramp = 0.4;
    b.cost_a = a;
    b.cost_b = bcost;
    return b;
}

GridLine line(int from, int to, double r, double x, double slim_sq = 2.25) {
    GridLine l;
    l.from = from;
    l.to = to;
    l.r = r;
    l.x = x;
    l.s_lim_sq = slim_sq;
    return l;
}

GridModel two_bus(double r, double x, double p_load, double q_load) {
    GridModel g;
    g.buses = {bus(0, 0.0, 0.0), bus(1, p_load, q_load)};
    g.lines = {line(0, 1, r, x)};
    g.rebuild_indexes();
    return g;
}

}  // namespace

TEST_CASE("zero load dispatches nothing") {
    auto grid = two_bus(0.01, 0.02, 0.0, 0.0);
    auto cfg = opf_cfg(1);
    auto sol = build_and_solve_opf(grid, {}, cfg);
    CHECK(sol.objective == Approx(0.0).margin(1e-3));
    CHECK(sol.import_p[0] == Approx(0.0).margin(1e-5));
    CHECK(sol.P(0, 0) == Approx(0.0).margin(1e-5));
    CHECK(check_tightness(sol, grid) <= 1e-6);
}

TEST_CASE("lossless two-bus purchase at the posted price") {
    auto grid = two_bus(0.0, 0.0, 0.1, 0.0);
    auto cfg = opf_cfg(1);
    auto sol = build_and_solve_opf(grid, {}, cfg);
    // 0.1 p.u. on a 100 MVA base for one hour = 10 MWh at 140 $/MWh
    CHECK(sol.import_p[0] == Approx(0.1).margin(1e-6));
    CHECK(sol.objective == Approx(1400.0).margin(0.5));
    auto lmp = extract_lmp(sol);
    CHECK(lmp(0, 0) == Approx(140.0).margin(0.2));
    CHECK(lmp(1, 0) == Approx(140.0).margin(0.2));
}

TEST_CASE("losses raise the downstream price") {
    auto grid = two_bus(0.02, 0.04, 0.5, 0.1);
    auto cfg = opf_cfg(1);
    auto sol = build_and_solve_opf(grid, {}, cfg);
    auto lmp = extract_lmp(sol);
    CHECK(lmp(1, 0) > 140.0 + 0.05);
    CHECK(sol.soc_gap <= 1e-4);  // losses priced, so the cone binds

    // finite-difference marginal cost vs the dual
    const double h = 1e-4;
    auto bumped = grid;
    bumped.buses[1].p_load[0] += h;
    auto sol2 = build_and_solve_opf(bumped, {}, cfg);
    const double mwh = h * cfg.base_power_mva * cfg.dt_dn_hours();
    const double fd = (sol2.objective - sol.objective) / mwh;
    CHECK(fd == Approx(lmp(1, 0)).epsilon(0.01));
}

TEST_CASE("binding cheap generator hands the margin to the grid") {
    // 0 -- 1 -- 2 chain, cheap unit at bus 1, load at bus 2; lossless lines
    // make the dispatch oracle a one-dimensional fill-the-cheapest search
    GridModel grid;
    grid.buses = {bus(0, 0.0, 0.0), gen_bus(1, 0.0, 0.0, 0.2, 0.0, 50.0), bus(2, 0.5, 0.0)};
    grid.lines = {line(0, 1, 0.0, 0.0), line(1, 2, 0.0, 0.0)};
    grid.rebuild_indexes();
    auto cfg = opf_cfg(1);

    // oracle: enumerate dispatch on a dense grid, lossless balance
    double best_cost = 1e30, best_pg = 0.0;
    for (int i = 0; i <= 2000; ++i) {
        const double pg = 0.2 * i / 2000.0;
        const double imp = 0.5 - pg;
        if (imp < 0.0) continue;
        const double cost = (50.0 * pg + 140.0 * imp) * 100.0 * cfg.dt_dn_hours();
        if (cost < best_cost) {
            best_cost = cost;
            best_pg = pg;
        }
    }
    CHECK(best_pg == Approx(0.2));  // the cheap unit saturates

    auto sol = build_and_solve_opf(grid, {}, cfg);
    CHECK(sol.pg(1, 0) == Approx(best_pg).margin(1e-4));
    CHECK(sol.objective == Approx(best_cost).margin(1.0));
    auto lmp = extract_lmp(sol);
    CHECK(lmp(2, 0) == Approx(140.0).margin(0.5));  // grid is marginal, not the 50 $ unit

    // with ample capacity the cheap unit sets the price instead
    grid.buses[1].pg_max = 1.0;
    auto sol2 = build_and_solve_opf(grid, {}, cfg);
    auto lmp2 = extract_lmp(sol2);
    CHECK(sol2.pg(1, 0) == Approx(0.5).margin(1e-3));
    CHECK(lmp2(2, 0) == Approx(50.0).margin(0.5));
}

TEST_CASE("multi-period ramping stays within limits") {
    GridModel grid;
    GridBus g1 = gen_bus(1, 0.0, 0.0, 1.5, 0.3, 130.0);
    g1.p_ramp = 0.05;  // tight ramp so it binds across the load step
    grid.buses = {bus(0, 0.0, 0.0), g1};
    grid.buses[1].p_load = {0.1, 0.5, 0.5};
    grid.buses[1].q_load = {0.05, 0.05, 0.05};
    grid.lines = {line(0, 1, 0.01, 0.02)};
    grid.rebuild_indexes();
    ScenarioConfig cfg = opf_cfg(3);
    auto sol = build_and_solve_opf(grid, {}, cfg);
    for (int t = 1; t < 3; ++t)
        CHECK(std::abs(sol.pg(1, t) - sol.pg(1, t - 1)) <= 0.05 + 1e-6);
    CHECK(sol.soc_gap <= 1e-4);
}

TEST_CASE("charging load enters the balance and the objective is monotone") {
    auto grid = two_bus(0.02, 0.04, 0.3, 0.1);
    auto cfg = opf_cfg(2);
    Eigen::MatrixXd none;
    auto base = build_and_solve_opf(grid, none, cfg);
    double prev = base.objective;
    for (double mw : {5.0, 10.0, 20.0}) {
        Eigen::MatrixXd load = Eigen::MatrixXd::Zero(2, 2);
        load(1, 0) = mw;
        load(1, 1) = mw;
        auto sol = build_and_solve_opf(grid, load, cfg);
        CHECK(sol.objective > prev);
        prev = sol.objective;
    }
}

TEST_CASE("overload is reported infeasible") {
    auto grid = two_bus(0.05, 0.1, 0.2, 0.1);
    auto cfg = opf_cfg(1);
    Eigen::MatrixXd load = Eigen::MatrixXd::Zero(2, 1);
    load(1, 0) = 5000.0;  // 50 p.u. of charging through one feeder
    CHECK_THROWS_AS(build_and_solve_opf(grid, load, cfg), Infeasible);
}

TEST_CASE("negative-cost generation opens the relaxation") {
    GridModel grid;
    GridBus g0 = bus(0, 0.0, 0.0);
    g0.pg_min = 0.0;
    g0.pg_max = 1.0;
    g0.qg_min = -1.0;
    g0.qg_max = 1.0;
    g0.cost_a = 0.0;
    g0.cost_b = -50.0;  // paid to run
    grid.buses = {g0, bus(1, 0.1, 0.02)};
    grid.lines = {line(0, 1, 0.1, 0.1)};
    grid.rebuild_indexes();
    auto cfg = opf_cfg(1);
    auto sol = build_and_solve_opf(grid, {}, cfg);
    CHECK(check_tightness(sol, grid) > 1e-4);  // slack current burns the paid-for output
}

TEST_CASE("lmp requires dual certificates") {
    OpfSolution sol;
    sol.duals_available = false;
    CHECK_THROWS_AS(extract_lmp(sol), DualsUnavailable);
}

TEST_CASE("determinism of the barrier solve") {
    auto grid = two_bus(0.02, 0.04, 0.4, 0.1);
    auto cfg = opf_cfg(2);
    auto a = build_and_solve_opf(grid, {}, cfg);
    auto b = build_and_solve_opf(grid, {}, cfg);
    CHECK(a.objective == b.objective);
    CHECK((a.P - b.P).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.balance_dual - b.balance_dual).cwiseAbs().maxCoeff() == 0.0);
}
