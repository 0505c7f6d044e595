#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "covnet/mcs.hpp"
#include "test_helpers.hpp"

using namespace covnet;
using covnet::testing::toy_two_fcs_scenario;
using Catch::Approx;

namespace {

std::vector<ODPair> odp(std::vector<std::tuple<int, int, double>> rows) {
    std::vector<ODPair> out;
    for (auto [o, d, f] : rows) {
        ODPair p;
        p.origin = o;
        p.destination = d;
        p.demand_gv = f;
        p.departure_window = {1};
        out.push_back(p);
    }
    return out;
}

}  // namespace

TEST_CASE("correlation cells follow the zone rule") {
    CorrelationRule rule;
    std::map<int, std::string> zones{{1, "o1"}, {2, "o2"}, {10, "east"}, {11, "east"}, {12, "west"}};

    SECTION("same origin, destinations in the same zone") {
        auto dist = build_correlation(odp({{1, 10, 5.0}, {1, 11, 5.0}}), zones, rule);
        CHECK(dist.correlation(0, 1) == Approx(0.3));
    }
    SECTION("same origin, destinations in different zones") {
        auto dist = build_correlation(odp({{1, 10, 5.0}, {1, 12, 5.0}}), zones, rule);
        CHECK(dist.correlation(0, 1) == Approx(-0.1));
    }
    SECTION("different origins, same destination zone") {
        auto dist = build_correlation(odp({{1, 10, 5.0}, {2, 11, 5.0}}), zones, rule);
        CHECK(dist.correlation(0, 1) == Approx(0.15));
    }
    SECTION("different origins, different destination zones") {
        auto dist = build_correlation(odp({{1, 10, 5.0}, {2, 12, 5.0}}), zones, rule);
        CHECK(dist.correlation(0, 1) == Approx(-0.05));
    }
    SECTION("single O-D gives the identity") {
        auto dist = build_correlation(odp({{1, 10, 5.0}}), zones, rule);
        CHECK(dist.correlation.rows() == 1);
        CHECK(dist.correlation(0, 0) == 1.0);
    }
    SECTION("missing zone label") {
        CHECK_THROWS_AS(build_correlation(odp({{1, 99, 5.0}}), zones, rule), MissingZone);
    }
}

TEST_CASE("psd repair reports its delta and yields a valid matrix") {
    // three O-Ds pairwise at -0.9: eigenvalues {1.9, 1.9, -0.8}, indefinite
    CorrelationRule rule;
    rule.same_origin_same_zone = -0.9;
    rule.same_origin_diff_zone = -0.9;
    rule.diff_origin_same_zone = -0.9;
    rule.diff_origin_diff_zone = -0.9;
    std::map<int, std::string> zones{{1, "a"}, {2, "b"}, {3, "c"},
                                     {10, "z1"}, {11, "z2"}, {12, "z3"}};
    auto dist =
        build_correlation(odp({{1, 10, 1.0}, {2, 11, 1.0}, {3, 12, 1.0}}), zones, rule);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dist.correlation);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9);
    CHECK(dist.psd_repair_delta > 0.0);
    for (int i = 0; i < 3; ++i) CHECK(dist.correlation(i, i) == Approx(1.0));
}

TEST_CASE("sampling moments and determinism") {
    std::map<int, std::string> zones{{1, "a"}, {3, "b"}, {4, "c"}, {6, "z1"},
                                     {10, "z1"}, {11, "z2"}, {12, "z2"}};
    auto pairs = odp({{1, 6, 40.0}, {1, 10, 65.0}, {3, 11, 55.0}, {4, 12, 50.0}});
    CorrelationRule rule;
    auto dist = build_correlation(pairs, zones, rule, 0.1);

    SECTION("cv = 0 reproduces the means exactly") {
        auto d0 = dist;
        d0.cv = 0.0;
        auto draws = sample_demands(d0, 5, 7);
        for (const auto& q : draws)
            for (int i = 0; i < 4; ++i) CHECK(q[i] == Approx(dist.means[i]));
    }
    SECTION("identity correlation draws are near-uncorrelated") {
        auto di = dist;
        di.correlation = Eigen::MatrixXd::Identity(4, 4);
        const int n = 10000;
        auto draws = sample_demands(di, n, 11);
        Eigen::MatrixXd z(n, 4);
        for (int s = 0; s < n; ++s)
            for (int i = 0; i < 4; ++i)
                z(s, i) = (draws[s][i] - di.means[i]) / (di.cv * di.means[i]);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) {
                const auto zi = z.col(i).array() - z.col(i).mean();
                const auto zj = z.col(j).array() - z.col(j).mean();
                const double rho = (zi * zj).sum() /
                                   std::sqrt(zi.square().sum() * zj.square().sum());
                CHECK(std::abs(rho) <= 0.03);
            }
    }
    SECTION("n = 200 sample means sit within the standard-error bound") {
        const int n = 200;
        auto draws = sample_demands(dist, n, 42);
        for (int i = 0; i < 4; ++i) {
            double mean = 0.0;
            for (const auto& q : draws) mean += q[i];
            mean /= n;
            const double bound = 3.0 * dist.cv * dist.means[i] / std::sqrt(double(n));
            CHECK(std::abs(mean - dist.means[i]) <= bound);
        }
    }
    SECTION("target correlations recovered within a loose band") {
        const int n = 4000;
        auto draws = sample_demands(dist, n, 5);
        Eigen::MatrixXd z(n, 4);
        for (int s = 0; s < n; ++s)
            for (int i = 0; i < 4; ++i) z(s, i) = draws[s][i];
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) {
                const auto zi = z.col(i).array() - z.col(i).mean();
                const auto zj = z.col(j).array() - z.col(j).mean();
                const double rho = (zi * zj).sum() /
                                   std::sqrt(zi.square().sum() * zj.square().sum());
                CHECK(std::abs(rho - dist.correlation(i, j)) <= 0.15);
            }
    }
    SECTION("identical seeds give identical draws, different seeds differ") {
        auto a = sample_demands(dist, 16, 99);
        auto b = sample_demands(dist, 16, 99);
        for (int s = 0; s < 16; ++s) CHECK((a[s] - b[s]).cwiseAbs().maxCoeff() == 0.0);
        auto c = sample_demands(dist, 16, 100);
        CHECK((a[0] - c[0]).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("degenerate single-sample MCS equals the deterministic solve") {
    auto sc = toy_two_fcs_scenario();
    std::map<int, std::string> zones{{1, "o"}, {2, "d"}};
    auto dist = build_correlation(sc.graph.od_pairs, zones, CorrelationRule{}, 0.0);
    auto report = run_mcs(sc, dist, 1, 42);
    REQUIRE(report.samples == 1);
    REQUIRE(report.failed_samples.empty());

    auto res = solve_equilibrium(sc);
    const auto& s = report.sample_summaries[0];
    for (std::size_t f = 0; f < report.fcs_ids.size(); ++f) {
        const int li = sc.graph.link_index(report.fcs_ids[f]);
        double price = 0.0, energy = 0.0;
        for (int t = 1; t <= sc.config.t_tn; ++t) {
            price += res.lambda[li][t];
            energy += charging_power(res.dta.x[li][t], sc.config).mw * sc.config.dt_hours;
        }
        CHECK(s.fcs_price[f] == Approx(price / sc.config.t_tn));
        CHECK(s.fcs_energy[f] == Approx(energy));
    }
}

TEST_CASE("report statistics match an independent recomputation") {
    auto sc = toy_two_fcs_scenario();
    std::map<int, std::string> zones{{1, "o"}, {2, "d"}};
    auto dist = build_correlation(sc.graph.od_pairs, zones, CorrelationRule{}, 0.1);
    auto report = run_mcs(sc, dist, 12, 7);
    REQUIRE(report.failed_samples.empty());
    for (std::size_t f = 0; f < report.fcs_ids.size(); ++f) {
        double mean = 0.0;
        for (const auto& s : report.sample_summaries) mean += s.fcs_price[f];
        mean /= report.samples;
        double sd = 0.0;
        for (const auto& s : report.sample_summaries)
            sd += (s.fcs_price[f] - mean) * (s.fcs_price[f] - mean);
        sd = std::sqrt(sd / (report.samples - 1));
        CHECK(report.price_mean[f] == Approx(mean));
        CHECK(report.price_std[f] == Approx(sd));
    }
    // histogram counts cover every converged sample
    for (const auto& h : report.histograms) {
        int total = 0;
        for (int c : h.counts) total += c;
        CHECK(total == report.converged_count());
    }
}

TEST_CASE("mcs reports are reproducible and thread-count independent") {
    auto sc = toy_two_fcs_scenario();
    std::map<int, std::string> zones{{1, "o"}, {2, "d"}};
    auto dist = build_correlation(sc.graph.od_pairs, zones, CorrelationRule{}, 0.1);

    setenv("COVNET_THREADS", "1", 1);
    auto a = run_mcs(sc, dist, 8, 31);
    setenv("COVNET_THREADS", "4", 1);
    auto b = run_mcs(sc, dist, 8, 31);
    unsetenv("COVNET_THREADS");

    REQUIRE(a.sample_summaries.size() == b.sample_summaries.size());
    for (int i = 0; i < 8; ++i) {
        CHECK(a.sample_summaries[i].fcs_price == b.sample_summaries[i].fcs_price);
        CHECK(a.sample_summaries[i].fcs_energy == b.sample_summaries[i].fcs_energy);
        CHECK((a.sample_summaries[i].demand - b.sample_summaries[i].demand)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    CHECK(a.price_mean == b.price_mean);
    CHECK(a.price_std == b.price_std);
}

TEST_CASE("no-information and full modes coincide when charging power vanishes") {
    auto sc = toy_two_fcs_scenario();
    sc.config.p_ev_mw = 0.0;
    std::map<int, std::string> zones{{1, "o"}, {2, "d"}};
    auto dist = build_correlation(sc.graph.od_pairs, zones, CorrelationRule{}, 0.05);

    auto with_info = run_mcs(sc, dist, 4, 3);
    auto sc5 = sc;
    sc5.config.price_information = false;
    auto no_info = run_mcs(sc5, dist, 4, 3);
    for (int i = 0; i < 4; ++i)
        CHECK(with_info.sample_summaries[i].fcs_energy == no_info.sample_summaries[i].fcs_energy);
}
