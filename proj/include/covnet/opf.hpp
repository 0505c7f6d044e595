#pragma once

// Multi-period branch-flow OPF on a radial feeder, relaxed to a second-order
// cone program and solved by an infeasible-start primal barrier method with
// Newton steps on the KKT system. Balance-row multipliers give the
// locational marginal prices.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "covnet/errors.hpp"
#include "covnet/network_model.hpp"

namespace covnet {

struct OpfOptions {
    double mu = 10.0;         // surrogate-gap reduction per Newton round
    double gap_rel = 1e-9;    // target complementarity gap, relative to |objective|
    int newton_max = 400;     // total Newton budget
    double feas_tol = 1e-9;
    double dual_tol = 1e-8;
};

struct OpfSolution {
    int t_dn = 0;
    ScenarioConfig cfg;  // scaling context for dual conversion

    Eigen::MatrixXd P, Q, I;  // per line, per interval (grid p.u., p.u.^2 for I)
    Eigen::MatrixXd U;        // squared voltage per bus per interval
    Eigen::MatrixXd pg, qg;   // dispatch per bus per interval (zero where no unit)
    Eigen::VectorXd import_p, import_q;  // substation exchange per interval

    double objective = 0.0;          // dollars over the study horizon
    Eigen::MatrixXd balance_dual;    // $ per p.u.-interval, active balance rows
    Eigen::MatrixXd lmp;             // $/MWh, filled by extract_lmp
    bool duals_available = false;
    bool lmp_extracted = false;

    double soc_gap = 0.0;  // max relative residual of the cone equality
    double duality_gap = 0.0;
    int newton_iterations = 0;
};

namespace opf_detail {

struct Topology {
    int parent_line_of_bus(int b) const { return parent_line[b]; }
    std::vector<int> parent_line;               // -1 for the substation
    std::vector<std::vector<int>> child_lines;  // per bus
    int substation_index = 0;
};

inline Topology build_topology(const GridModel& grid) {
    std::string why;
    if (!grid.is_radial(&why)) throw Infeasible("grid is not radial: " + why);
    Topology topo;
    const int B = static_cast<int>(grid.buses.size());
    topo.parent_line.assign(B, -1);
    topo.child_lines.assign(B, {});
    topo.substation_index = grid.bus_index(grid.substation);
    for (int l = 0; l < static_cast<int>(grid.lines.size()); ++l) {
        topo.parent_line[grid.bus_index(grid.lines[l].to)] = l;
        topo.child_lines[grid.bus_index(grid.lines[l].from)].push_back(l);
    }
    return topo;
}

// Variable layout: per interval block of [U | P Q I | pg qg | gp gq].
struct Index {
    int T = 0, B = 0, L = 0;
    std::vector<int> pg_of_bus, qg_of_bus;  // -1 when the bus has no unit
    int n_pg = 0, n_qg = 0;
    int per_t = 0;

    void build(const GridModel& grid, int t_dn) {
        T = t_dn;
        B = static_cast<int>(grid.buses.size());
        L = static_cast<int>(grid.lines.size());
        pg_of_bus.assign(B, -1);
        qg_of_bus.assign(B, -1);
        for (int b = 0; b < B; ++b) {
            if (grid.buses[b].has_pgen()) pg_of_bus[b] = n_pg++;
            if (grid.buses[b].has_qgen()) qg_of_bus[b] = n_qg++;
        }
        per_t = B + 3 * L + n_pg + n_qg + 2;
    }
    int total() const { return T * per_t; }
    int u(int t, int b) const { return t * per_t + b; }
    int p(int t, int l) const { return t * per_t + B + l; }
    int q(int t, int l) const { return t * per_t + B + L + l; }
    int i(int t, int l) const { return t * per_t + B + 2 * L + l; }
    int pgv(int t, int g) const { return t * per_t + B + 3 * L + g; }
    int qgv(int t, int g) const { return t * per_t + B + 3 * L + n_pg + g; }
    int gp(int t) const { return t * per_t + B + 3 * L + n_pg + n_qg; }
    int gq(int t) const { return t * per_t + B + 3 * L + n_pg + n_qg + 1; }
};

struct Ineq {
    enum class Type { Linear, Cone, Smax };
    Type type = Type::Linear;
    std::vector<std::pair<int, double>> lin;  // Linear: g = c0 + sum a_k v_k
    double c0 = 0.0;
    int iI = -1, iU = -1, iP = -1, iQ = -1;  // Cone: g = v_I v_U - v_P^2 - v_Q^2
                                             // Smax: g = c0 - v_P^2 - v_Q^2

    double eval(const Eigen::VectorXd& v) const {
        switch (type) {
            case Type::Linear: {
                double g = c0;
                for (auto [k, a] : lin) g += a * v[k];
                return g;
            }
            case Type::Cone:
                return v[iI] * v[iU] - v[iP] * v[iP] - v[iQ] * v[iQ];
            case Type::Smax:
                return c0 - v[iP] * v[iP] - v[iQ] * v[iQ];
        }
        return 0.0;
    }

    // gradient entries of g at v
    void grad(const Eigen::VectorXd& v, std::vector<std::pair<int, double>>& out) const {
        out.clear();
        switch (type) {
            case Type::Linear:
                for (auto [k, a] : lin) out.emplace_back(k, a);
                break;
            case Type::Cone:
                out.emplace_back(iI, v[iU]);
                out.emplace_back(iU, v[iI]);
                out.emplace_back(iP, -2.0 * v[iP]);
                out.emplace_back(iQ, -2.0 * v[iQ]);
                break;
            case Type::Smax:
                out.emplace_back(iP, -2.0 * v[iP]);
                out.emplace_back(iQ, -2.0 * v[iQ]);
                break;
        }
    }

    // largest step alpha with g(v + alpha d) > 0 (inf when unconstrained)
    double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& d) const {
        const double g0 = eval(v);
        double g1 = 0.0, g2 = 0.0;
        switch (type) {
            case Type::Linear:
                for (auto [k, a] : lin) g1 += a * d[k];
                break;
            case Type::Cone:
                g1 = d[iI] * v[iU] + v[iI] * d[iU] - 2.0 * v[iP] * d[iP] - 2.0 * v[iQ] * d[iQ];
                g2 = d[iI] * d[iU] - d[iP] * d[iP] - d[iQ] * d[iQ];
                break;
            case Type::Smax:
                g1 = -2.0 * v[iP] * d[iP] - 2.0 * v[iQ] * d[iQ];
                g2 = -d[iP] * d[iP] - d[iQ] * d[iQ];
                break;
        }
        const double inf = std::numeric_limits<double>::infinity();
        if (std::abs(g2) < 1e-14) {
            if (g1 >= 0.0) return inf;
            return -g0 / g1;
        }
        // roots of g0 + g1 a + g2 a^2 = 0
        const double disc = g1 * g1 - 4.0 * g2 * g0;
        if (disc < 0.0) return g2 > 0.0 ? inf : 0.0;  // no real root
        const double sq = std::sqrt(disc);
        const double r1 = (-g1 - sq) / (2.0 * g2);
        const double r2 = (-g1 + sq) / (2.0 * g2);
        double best = inf;
        if (r1 > 1e-14) best = std::min(best, r1);
        if (r2 > 1e-14) best = std::min(best, r2);
        return best;
    }
};

class BarrierSolver {
  public:
    BarrierSolver(const GridModel& grid, const Eigen::MatrixXd& charging_mw,
                  const ScenarioConfig& cfg, const OpfOptions& opt)
        : grid_(grid), cfg_(cfg), opt_(opt), topo_(build_topology(grid)) {
        idx_.build(grid, cfg.t_dn);
        build_objective();
        build_equalities(charging_mw);
        build_inequalities();
    }

    // Primal-dual interior point (surrogate-gap variant): Newton on the
    // perturbed KKT system with explicit inequality multipliers, so
    // solutions on the boundary (zero flows, binding limits) are reachable.
    OpfSolution solve() {
        const int m = static_cast<int>(ineq_.size());
        Eigen::VectorXd v = initial_point();
        Eigen::VectorXd lam(m);
        for (int i = 0; i < m; ++i) {
            const double g = ineq_[i].eval(v);
            if (g <= 0.0) throw SolverFailure("opf initial point violates an inequality");
            lam[i] = 1.0 / g;
        }
        Eigen::VectorXd w = Eigen::VectorXd::Zero(m_eq_);

        const double grad_ref = std::max(1.0, grad_f_inf(v));
        const double b_ref = std::max(1.0, b_.cwiseAbs().maxCoeff());
        int total_newton = 0;
        double eta = static_cast<double>(m);

        for (int it = 0; it < opt_.newton_max; ++it) {
            Eigen::VectorXd g(m);
            for (int i = 0; i < m; ++i) g[i] = ineq_[i].eval(v);
            eta = lam.dot(g);
            const double tbar = opt_.mu * m / std::max(eta, 1e-300);

            Eigen::VectorXd r_dual, r_cent, r_pri;
            residuals(v, lam, w, g, tbar, r_dual, r_cent, r_pri);
            const double pri_norm = r_pri.cwiseAbs().maxCoeff();
            const double dual_norm = r_dual.cwiseAbs().maxCoeff();
            const double f_now = std::abs(objective_internal(v));
            if (pri_norm <= opt_.feas_tol * b_ref && dual_norm <= opt_.dual_tol * grad_ref &&
                eta <= opt_.gap_rel * (1.0 + f_now))
                return package(v, lam, w, eta, total_newton);

            Eigen::VectorXd dv, dw;
            newton_step(v, lam, g, w, tbar, r_pri, dv, dw);
            ++total_newton;
            Eigen::VectorXd dlam(m);
            std::vector<std::pair<int, double>> gr;
            for (int i = 0; i < m; ++i) {
                double gdotdv = 0.0;
                ineq_[i].grad(v, gr);
                for (auto [k, a] : gr) gdotdv += a * dv[k];
                dlam[i] = (-(lam[i] * g[i] - 1.0 / tbar) - lam[i] * gdotdv) / g[i];
            }

            double amax = 1.0;
            for (int i = 0; i < m; ++i) {
                amax = std::min(amax, 0.99 * ineq_[i].max_step(v, dv));
                if (dlam[i] < 0.0) amax = std::min(amax, -0.99 * lam[i] / dlam[i]);
            }
            const double phi0 =
                std::sqrt(r_dual.squaredNorm() + r_cent.squaredNorm() + r_pri.squaredNorm());
            double alpha = amax;
            bool moved = false;
            while (alpha > 1e-14) {
                Eigen::VectorXd vn = v + alpha * dv;
                Eigen::VectorXd ln = lam + alpha * dlam;
                Eigen::VectorXd wn = w + alpha * dw;
                bool interior = ln.minCoeff() > 0.0;
                Eigen::VectorXd gn(m);
                if (interior)
                    for (int i = 0; i < m; ++i) {
                        gn[i] = ineq_[i].eval(vn);
                        if (gn[i] <= 0.0) { interior = false; break; }
                    }
                if (interior) {
                    Eigen::VectorXd rd, rc, rp;
                    residuals(vn, ln, wn, gn, tbar, rd, rc, rp);
                    const double phi =
                        std::sqrt(rd.squaredNorm() + rc.squaredNorm() + rp.squaredNorm());
                    if (phi <= (1.0 - 0.01 * alpha) * phi0) {
                        v = vn;
                        lam = ln;
                        w = wn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!moved) {
                if (pri_norm > 1e-6 * b_ref)
                    throw Infeasible("opf equality residual stuck at " +
                                     std::to_string(pri_norm));
                throw SolverFailure("opf line search stalled (gap " + std::to_string(eta) + ")");
            }
        }
        const double pri_final = (A_ * v - b_).cwiseAbs().maxCoeff();
        if (pri_final > 1e-6 * b_ref)
            throw Infeasible("opf did not reach equality feasibility (residual " +
                             std::to_string(pri_final) + ")");
        throw SolverFailure("opf iteration budget exhausted (gap " + std::to_string(eta) + ")");
    }

  private:
    const GridModel& grid_;
    const ScenarioConfig& cfg_;
    OpfOptions opt_;
    Topology topo_;
    Index idx_;

    // objective in internal units: dollars / (base_power * dt_dn)
    Eigen::VectorXd lin_cost_;   // linear coefficients
    Eigen::VectorXd quad_cost_;  // quadratic diagonal (1/2 x' diag x form NOT used; plain a x^2)
    Eigen::SparseMatrix<double> A_;
    Eigen::VectorXd b_;
    int m_eq_ = 0;
    std::vector<Ineq> ineq_;
    std::vector<int> balance_row_;  // row of the active balance of (t, bus)

    void build_objective() {
        lin_cost_ = Eigen::VectorXd::Zero(idx_.total());
        quad_cost_ = Eigen::VectorXd::Zero(idx_.total());
        const double base = cfg_.base_power_mva;
        for (int t = 0; t < idx_.T; ++t) {
            for (int b = 0; b < idx_.B; ++b) {
                const int g = idx_.pg_of_bus[b];
                if (g < 0) continue;
                quad_cost_[idx_.pgv(t, g)] = grid_.buses[b].cost_a * base;
                lin_cost_[idx_.pgv(t, g)] = grid_.buses[b].cost_b;
            }
            lin_cost_[idx_.gp(t)] = cfg_.lambda0_at(t + 1);
        }
    }

    double objective_internal(const Eigen::VectorXd& v) const {
        return lin_cost_.dot(v) + quad_cost_.dot(v.cwiseProduct(v));
    }

    double grad_f_inf(const Eigen::VectorXd& v) const {
        return (lin_cost_ + 2.0 * quad_cost_.cwiseProduct(v)).cwiseAbs().maxCoeff();
    }

    void build_equalities(const Eigen::MatrixXd& charging_mw) {
        std::vector<Eigen::Triplet<double>> trip;
        std::vector<double> rhs;
        balance_row_.assign(idx_.T * idx_.B, -1);
        auto add = [&](int row, int col, double a) { trip.emplace_back(row, col, a); };

        for (int t = 0; t < idx_.T; ++t) {
            for (int b = 0; b < idx_.B; ++b) {
                // active power balance
                int row = static_cast<int>(rhs.size());
                balance_row_[t * idx_.B + b] = row;
                double load = grid_.buses[b].p_load.empty()
                                  ? 0.0
                                  : grid_.buses[b].p_load[std::min<std::size_t>(
                                        t, grid_.buses[b].p_load.size() - 1)];
                if (charging_mw.size() > 0) load += charging_mw(b, t) / cfg_.base_power_mva;
                rhs.push_back(load);
                const int pl = topo_.parent_line[b];
                if (pl >= 0) {
                    add(row, idx_.p(t, pl), 1.0);
                    add(row, idx_.i(t, pl), -grid_.lines[pl].r);
                }
                for (int cl : topo_.child_lines[b]) add(row, idx_.p(t, cl), -1.0);
                if (idx_.pg_of_bus[b] >= 0) add(row, idx_.pgv(t, idx_.pg_of_bus[b]), 1.0);
                if (b == topo_.substation_index) add(row, idx_.gp(t), 1.0);
            }
            for (int b = 0; b < idx_.B; ++b) {
                // reactive power balance
                int row = static_cast<int>(rhs.size());
                double load = grid_.buses[b].q_load.empty()
                                  ? 0.0
                                  : grid_.buses[b].q_load[std::min<std::size_t>(
                                        t, grid_.buses[b].q_load.size() - 1)];
                rhs.push_back(load);
                const int pl = topo_.parent_line[b];
                if (pl >= 0) {
                    add(row, idx_.q(t, pl), 1.0);
                    add(row, idx_.i(t, pl), -grid_.lines[pl].x);
                }
                for (int cl : topo_.child_lines[b]) add(row, idx_.q(t, cl), -1.0);
                if (idx_.qg_of_bus[b] >= 0) add(row, idx_.qgv(t, idx_.qg_of_bus[b]), 1.0);
                if (b == topo_.substation_index) add(row, idx_.gq(t), 1.0);
            }
            for (int l = 0; l < idx_.L; ++l) {
                // voltage drop along the line
                int row = static_cast<int>(rhs.size());
                rhs.push_back(0.0);
                const auto& ln = grid_.lines[l];
                add(row, idx_.u(t, grid_.bus_index(ln.from)), 1.0);
                add(row, idx_.u(t, grid_.bus_index(ln.to)), -1.0);
                add(row, idx_.p(t, l), -2.0 * ln.r);
                add(row, idx_.q(t, l), -2.0 * ln.x);
                add(row, idx_.i(t, l), ln.z_sq());
            }
            {
                // substation voltage reference
                int row = static_cast<int>(rhs.size());
                rhs.push_back(1.0);
                add(row, idx_.u(t, topo_.substation_index), 1.0);
            }
        }
        m_eq_ = static_cast<int>(rhs.size());
        A_.resize(m_eq_, idx_.total());
        A_.setFromTriplets(trip.begin(), trip.end());
        A_.makeCompressed();
        b_ = Eigen::Map<Eigen::VectorXd>(rhs.data(), m_eq_);
    }

    void add_lower(int var, double lo) {
        Ineq q;
        q.type = Ineq::Type::Linear;
        q.lin = {{var, 1.0}};
        q.c0 = -lo;
        ineq_.push_back(q);
    }
    void add_upper(int var, double hi) {
        Ineq q;
        q.type = Ineq::Type::Linear;
        q.lin = {{var, -1.0}};
        q.c0 = hi;
        ineq_.push_back(q);
    }

    void build_inequalities() {
        const double i_cap = cfg_.u_min_sq > 0.0
                                 ? 3.0 * 2.25 / cfg_.u_min_sq  // generous current ceiling
                                 : 10.0;
        for (int t = 0; t < idx_.T; ++t) {
            for (int l = 0; l < idx_.L; ++l) {
                const auto& ln = grid_.lines[l];
                Ineq cone;
                cone.type = Ineq::Type::Cone;
                cone.iI = idx_.i(t, l);
                cone.iU = idx_.u(t, grid_.bus_index(ln.from));
                cone.iP = idx_.p(t, l);
                cone.iQ = idx_.q(t, l);
                ineq_.push_back(cone);

                Ineq fwd_p;  // P - r I >= 0 forbids reverse active flow
                fwd_p.type = Ineq::Type::Linear;
                fwd_p.lin = {{idx_.p(t, l), 1.0}, {idx_.i(t, l), -ln.r}};
                ineq_.push_back(fwd_p);
                Ineq fwd_q;
                fwd_q.type = Ineq::Type::Linear;
                fwd_q.lin = {{idx_.q(t, l), 1.0}, {idx_.i(t, l), -ln.x}};
                ineq_.push_back(fwd_q);

                Ineq smax;
                smax.type = Ineq::Type::Smax;
                smax.c0 = ln.s_lim_sq;
                smax.iP = idx_.p(t, l);
                smax.iQ = idx_.q(t, l);
                ineq_.push_back(smax);

                add_lower(idx_.i(t, l), 0.0);
                add_upper(idx_.i(t, l), i_cap);
            }
            for (int b = 0; b < idx_.B; ++b) {
                add_lower(idx_.u(t, b), cfg_.u_min_sq);
                add_upper(idx_.u(t, b), cfg_.u_max_sq);
                const auto& bus = grid_.buses[b];
                if (idx_.pg_of_bus[b] >= 0) {
                    add_lower(idx_.pgv(t, idx_.pg_of_bus[b]), bus.pg_min);
                    add_upper(idx_.pgv(t, idx_.pg_of_bus[b]), bus.pg_max);
                    if (t > 0 && bus.p_ramp > 0.0) {
                        Ineq up, dn;
                        up.type = dn.type = Ineq::Type::Linear;
                        const int cur = idx_.pgv(t, idx_.pg_of_bus[b]);
                        const int prev = idx_.pgv(t - 1, idx_.pg_of_bus[b]);
                        up.lin = {{cur, -1.0}, {prev, 1.0}};
                        up.c0 = bus.p_ramp;
                        dn.lin = {{cur, 1.0}, {prev, -1.0}};
                        dn.c0 = bus.p_ramp;
                        ineq_.push_back(up);
                        ineq_.push_back(dn);
                    }
                }
                if (idx_.qg_of_bus[b] >= 0) {
                    add_lower(idx_.qgv(t, idx_.qg_of_bus[b]), bus.qg_min);
                    add_upper(idx_.qgv(t, idx_.qg_of_bus[b]), bus.qg_max);
                    if (t > 0 && bus.q_ramp > 0.0) {
                        Ineq up, dn;
                        up.type = dn.type = Ineq::Type::Linear;
                        const int cur = idx_.qgv(t, idx_.qg_of_bus[b]);
                        const int prev = idx_.qgv(t - 1, idx_.qg_of_bus[b]);
                        up.lin = {{cur, -1.0}, {prev, 1.0}};
                        up.c0 = bus.q_ramp;
                        dn.lin = {{cur, 1.0}, {prev, -1.0}};
                        dn.c0 = bus.q_ramp;
                        ineq_.push_back(up);
                        ineq_.push_back(dn);
                    }
                }
            }
            add_lower(idx_.gp(t), 0.0);
            add_lower(idx_.gq(t), -cfg_.opf_q_slack_limit);
            add_upper(idx_.gq(t), cfg_.opf_q_slack_limit);
        }
    }

    Eigen::VectorXd initial_point() const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(idx_.total());
        const double u0 = std::min(1.0, 0.5 * (cfg_.u_min_sq + cfg_.u_max_sq) + 0.2);
        for (int t = 0; t < idx_.T; ++t) {
            for (int b = 0; b < idx_.B; ++b) v[idx_.u(t, b)] = u0;
            for (int l = 0; l < idx_.L; ++l) {
                v[idx_.p(t, l)] = 0.1;
                v[idx_.q(t, l)] = 0.1;
                v[idx_.i(t, l)] = 0.05;
            }
            for (int b = 0; b < idx_.B; ++b) {
                if (idx_.pg_of_bus[b] >= 0)
                    v[idx_.pgv(t, idx_.pg_of_bus[b])] =
                        0.5 * (grid_.buses[b].pg_min + grid_.buses[b].pg_max);
                if (idx_.qg_of_bus[b] >= 0)
                    v[idx_.qgv(t, idx_.qg_of_bus[b])] =
                        0.5 * (grid_.buses[b].qg_min + grid_.buses[b].qg_max);
            }
            v[idx_.gp(t)] = 0.5;
            v[idx_.gq(t)] = 0.0;
        }
        return v;
    }

    void residuals(const Eigen::VectorXd& v, const Eigen::VectorXd& lam,
                   const Eigen::VectorXd& w, const Eigen::VectorXd& g, double tbar,
                   Eigen::VectorXd& r_dual, Eigen::VectorXd& r_cent,
                   Eigen::VectorXd& r_pri) const {
        Eigen::VectorXd grad = lin_cost_ + 2.0 * quad_cost_.cwiseProduct(v);
        std::vector<std::pair<int, double>> gr;
        for (std::size_t i = 0; i < ineq_.size(); ++i) {
            ineq_[i].grad(v, gr);
            for (auto [k, a] : gr) grad[k] -= lam[i] * a;
        }
        r_dual = grad + A_.transpose() * w;
        r_cent = lam.cwiseProduct(g).array() - 1.0 / tbar;
        r_pri = A_ * v - b_;
    }

    // Reduced Newton system after eliminating the multiplier steps:
    //   [Hpd A'; A 0] [dv; dw] = [-(grad f + A'w - sum grad g_i / (t g_i)); -r_pri]
    void newton_step(const Eigen::VectorXd& v, const Eigen::VectorXd& lam,
                     const Eigen::VectorXd& g, const Eigen::VectorXd& w, double tbar,
                     const Eigen::VectorXd& r_pri, Eigen::VectorXd& dv,
                     Eigen::VectorXd& dw) const {
        const int n = idx_.total();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(ineq_.size() * 16 + n + A_.nonZeros() * 2 + m_eq_);
        for (int k = 0; k < n; ++k) trip.emplace_back(k, k, 2.0 * quad_cost_[k] + 1e-12);

        Eigen::VectorXd rhs_dual = -(lin_cost_ + 2.0 * quad_cost_.cwiseProduct(v)) -
                                   A_.transpose() * w;
        std::vector<std::pair<int, double>> gr;
        for (std::size_t i = 0; i < ineq_.size(); ++i) {
            const auto& q = ineq_[i];
            q.grad(v, gr);
            const double li_over_gi = lam[i] / g[i];
            for (auto [k1, a1] : gr) {
                rhs_dual[k1] += a1 / (tbar * g[i]);
                for (auto [k2, a2] : gr) trip.emplace_back(k1, k2, a1 * a2 * li_over_gi);
            }
            // -lam_i * hess(g_i)
            if (q.type == Ineq::Type::Cone) {
                trip.emplace_back(q.iI, q.iU, -lam[i]);
                trip.emplace_back(q.iU, q.iI, -lam[i]);
                trip.emplace_back(q.iP, q.iP, 2.0 * lam[i]);
                trip.emplace_back(q.iQ, q.iQ, 2.0 * lam[i]);
            } else if (q.type == Ineq::Type::Smax) {
                trip.emplace_back(q.iP, q.iP, 2.0 * lam[i]);
                trip.emplace_back(q.iQ, q.iQ, 2.0 * lam[i]);
            }
        }
        for (int k = 0; k < A_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(A_, k); it; ++it) {
                trip.emplace_back(n + it.row(), it.col(), it.value());
                trip.emplace_back(it.col(), n + it.row(), it.value());
            }
        for (int r = 0; r < m_eq_; ++r) trip.emplace_back(n + r, n + r, -1e-11);

        Eigen::SparseMatrix<double> kkt(n + m_eq_, n + m_eq_);
        kkt.setFromTriplets(trip.begin(), trip.end());
        kkt.makeCompressed();

        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(kkt);
        if (lu.info() != Eigen::Success) throw SolverFailure("opf KKT factorization failed");
        Eigen::VectorXd rhs(n + m_eq_);
        rhs.head(n) = rhs_dual;
        rhs.tail(m_eq_) = -r_pri;
        Eigen::VectorXd sol = lu.solve(rhs);
        // one round of iterative refinement
        Eigen::VectorXd resid = kkt * sol - rhs;
        sol -= lu.solve(resid);
        dv = sol.head(n);
        dw = sol.tail(m_eq_);
    }

    OpfSolution package(const Eigen::VectorXd& v, const Eigen::VectorXd& lam,
                        const Eigen::VectorXd& w, double gap, int total_newton) const {
        OpfSolution sol;
        sol.t_dn = idx_.T;
        sol.cfg = cfg_;
        sol.P.resize(idx_.L, idx_.T);
        sol.Q.resize(idx_.L, idx_.T);
        sol.I.resize(idx_.L, idx_.T);
        sol.U.resize(idx_.B, idx_.T);
        sol.pg = Eigen::MatrixXd::Zero(idx_.B, idx_.T);
        sol.qg = Eigen::MatrixXd::Zero(idx_.B, idx_.T);
        sol.import_p.resize(idx_.T);
        sol.import_q.resize(idx_.T);
        for (int t = 0; t < idx_.T; ++t) {
            for (int l = 0; l < idx_.L; ++l) {
                sol.P(l, t) = v[idx_.p(t, l)];
                sol.Q(l, t) = v[idx_.q(t, l)];
                sol.I(l, t) = v[idx_.i(t, l)];
            }
            for (int b = 0; b < idx_.B; ++b) {
                sol.U(b, t) = v[idx_.u(t, b)];
                if (idx_.pg_of_bus[b] >= 0) sol.pg(b, t) = v[idx_.pgv(t, idx_.pg_of_bus[b])];
                if (idx_.qg_of_bus[b] >= 0) sol.qg(b, t) = v[idx_.qgv(t, idx_.qg_of_bus[b])];
            }
            sol.import_p[t] = v[idx_.gp(t)];
            sol.import_q[t] = v[idx_.gq(t)];
        }
        const double to_dollars = cfg_.base_power_mva * cfg_.dt_dn_hours();
        sol.objective = to_dollars * objective_internal(v);
        // with rows written as (injections - outflows) = load, the marginal
        // cost of load is the negated multiplier of min f + w'(Av - b)
        (void)lam;
        sol.balance_dual.resize(idx_.B, idx_.T);
        for (int t = 0; t < idx_.T; ++t)
            for (int b = 0; b < idx_.B; ++b)
                sol.balance_dual(b, t) = -to_dollars * w[balance_row_[t * idx_.B + b]];
        sol.duals_available = true;
        sol.duality_gap = gap;
        sol.newton_iterations = total_newton;

        // relaxation tightness of the cone rows
        double worst = 0.0;
        for (int t = 0; t < idx_.T; ++t)
            for (int l = 0; l < idx_.L; ++l) {
                const double pq = sol.P(l, t) * sol.P(l, t) + sol.Q(l, t) * sol.Q(l, t);
                const double lhs = sol.I(l, t) * sol.U(grid_.bus_index(grid_.lines[l].from), t);
                worst = std::max(worst, (lhs - pq) / std::max(1.0, pq));
            }
        sol.soc_gap = worst;
        return sol;
    }
};

}  // namespace opf_detail

// Solves the multi-period dispatch. charging_mw holds the EV load per bus
// (rows follow grid.buses order) per OPF interval in MW; pass an empty
// matrix for none.
inline OpfSolution build_and_solve_opf(const GridModel& grid, const Eigen::MatrixXd& charging_mw,
                                       const ScenarioConfig& cfg, const OpfOptions& opt = {}) {
    if (charging_mw.size() > 0) {
        if (charging_mw.rows() != static_cast<Eigen::Index>(grid.buses.size()) ||
            charging_mw.cols() != cfg.t_dn)
            throw Error("charging load matrix must be buses x t_dn");
        if (charging_mw.minCoeff() < 0.0) throw Error("charging load must be nonnegative");
    }
    opf_detail::BarrierSolver solver(grid, charging_mw, cfg, opt);
    return solver.solve();
}

// Locational marginal prices in $/MWh from the stored balance duals.
inline Eigen::MatrixXd extract_lmp(OpfSolution& sol) {
    if (!sol.duals_available)
        throw DualsUnavailable("opf solution carries no dual certificates");
    const double per_mwh = sol.cfg.base_power_mva * sol.cfg.dt_dn_hours();
    sol.lmp = sol.balance_dual / per_mwh;
    sol.lmp_extracted = true;
    return sol.lmp;
}

// Max relative residual of the cone rows I U = P^2 + Q^2.
inline double check_tightness(const OpfSolution& sol, const GridModel& grid) {
    double worst = 0.0;
    for (int t = 0; t < sol.t_dn; ++t)
        for (int l = 0; l < static_cast<int>(grid.lines.size()); ++l) {
            const double pq = sol.P(l, t) * sol.P(l, t) + sol.Q(l, t) * sol.Q(l, t);
            const double lhs = sol.I(l, t) * sol.U(grid.bus_index(grid.lines[l].from), t);
            worst = std::max(worst, (lhs - pq) / std::max(1.0, pq));
        }
    return worst;
}

}  // namespace covnet
