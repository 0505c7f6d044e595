#pragma once

#include <cmath>
#include <vector>

#include "covnet/errors.hpp"
#include "covnet/network_model.hpp"

namespace covnet {

// Piecewise-linear approximation of a link cost over occupancy, with the
// running integral needed by the assignment objective. Values must be
// convex nondecreasing so the LP lambda-formulation stays exact without
// integrality.
struct PwlCurve {
    std::vector<double> x;  // ascending breakpoints, flow p.u.
    std::vector<double> c;  // cost at each breakpoint, dollars
    std::vector<double> B;  // exact integral of the interpolant up to x[m]

    PwlCurve() = default;
    PwlCurve(std::vector<double> xs, std::vector<double> cs) : x(std::move(xs)), c(std::move(cs)) {
        if (x.size() < 2 || x.size() != c.size()) throw Error("pwl curve needs >= 2 breakpoints");
        const double scale = std::abs(c.back()) + 1.0;
        for (std::size_t m = 1; m < x.size(); ++m) {
            if (!(x[m] > x[m - 1])) throw Error("pwl breakpoints must ascend");
            if (c[m] < c[m - 1] - 1e-12 * scale) throw Error("pwl values must be nondecreasing");
        }
        for (std::size_t m = 2; m < x.size(); ++m) {
            const double s_prev = (c[m - 1] - c[m - 2]) / (x[m - 1] - x[m - 2]);
            const double s_next = (c[m] - c[m - 1]) / (x[m] - x[m - 1]);
            if (s_next < s_prev - 1e-9 * (1.0 + std::abs(s_prev)))
                throw Error("pwl values must be convex");
        }
        B.resize(x.size());
        B[0] = 0.0;
        for (std::size_t m = 1; m < x.size(); ++m)
            B[m] = B[m - 1] + 0.5 * (c[m] + c[m - 1]) * (x[m] - x[m - 1]);
    }

    int segments() const { return static_cast<int>(x.size()) - 1; }
    double domain_max() const { return x.back(); }

    // Interpolated cost; beyond the last breakpoint the final slope extends.
    double value(double q) const {
        if (q <= x.front()) return c.front();
        for (std::size_t m = 1; m < x.size(); ++m) {
            if (q <= x[m]) {
                const double w = (q - x[m - 1]) / (x[m] - x[m - 1]);
                return c[m - 1] + w * (c[m] - c[m - 1]);
            }
        }
        const std::size_t m = x.size() - 1;
        const double slope = (c[m] - c[m - 1]) / (x[m] - x[m - 1]);
        return c[m] + slope * (q - x[m]);
    }

    // Exact integral of the interpolant from 0 to q (piecewise quadratic).
    double integral(double q) const {
        if (q <= x.front()) return c.front() * q;  // x.front() == 0 in practice
        double acc = 0.0;
        for (std::size_t m = 1; m < x.size(); ++m) {
            if (q <= x[m]) {
                acc = B[m - 1] + 0.5 * (value(q) + c[m - 1]) * (q - x[m - 1]);
                return acc;
            }
        }
        const double tail = q - x.back();
        return B.back() + 0.5 * (value(q) + c.back()) * tail;
    }
};

// Builds the occupancy cost curve of one link. General links span [0, cap];
// charging links stop at the saturation guard in front of the Davidson pole
// so the grid keeps a finite last breakpoint. lambda is ignored except on
// charging links.
inline PwlCurve build_pwl(const TrafficLink& link, double lambda, const ScenarioConfig& cfg) {
    const int M = cfg.pwl_breakpoints;
    if (M < 2) throw Error("pwl_breakpoints must be >= 2");
    double hi = 0.0;
    switch (link.kind) {
        case LinkKind::General: hi = link.capacity; break;
        case LinkKind::Charging: hi = (1.0 - cfg.davidson_guard) * link.capacity; break;
        case LinkKind::Extra: throw WrongKind("extra links carry no cost curve");
    }
    std::vector<double> xs(M), cs(M);
    for (int m = 0; m < M; ++m) {
        xs[m] = hi * m / (M - 1);
        if (link.kind == LinkKind::Charging) {
            cs[m] = cfg.omega * davidson_time_clamped(xs[m], link, cfg.davidson_guard) / 60.0 +
                    lambda * cfg.p_ev_mw * cfg.dt_hours;
        } else {
            cs[m] = link_cost(link, xs[m], 0.0, cfg);
        }
    }
    return PwlCurve(std::move(xs), std::move(cs));
}

}  // namespace covnet
