#pragma once

// Bounded-variable primal revised simplex with a dense basis inverse and a
// phase-1 artificial start. Sized for the assignment LPs this library
// builds (a few hundred rows, a few thousand sparse columns); deterministic
// pivoting so identical inputs give identical vertices.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "covnet/errors.hpp"

namespace covnet {

constexpr double kLpInf = std::numeric_limits<double>::infinity();

struct LpProblem {
    struct Column {
        std::vector<std::pair<int, double>> entries;  // (row, coefficient)
        double cost = 0.0;
        double lower = 0.0;
        double upper = kLpInf;
    };
    std::vector<Column> cols;
    std::vector<double> rhs;  // equality rows A x = rhs

    int add_row(double b) {
        rhs.push_back(b);
        return static_cast<int>(rhs.size()) - 1;
    }
    int add_col(double cost, double lower, double upper,
                std::vector<std::pair<int, double>> entries = {}) {
        Column c;
        c.cost = cost;
        c.lower = lower;
        c.upper = upper;
        c.entries = std::move(entries);
        cols.push_back(std::move(c));
        return static_cast<int>(cols.size()) - 1;
    }
    int num_rows() const { return static_cast<int>(rhs.size()); }
    int num_cols() const { return static_cast<int>(cols.size()); }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

struct LpSolution {
    LpStatus status = LpStatus::IterLimit;
    std::vector<double> x;
    std::vector<double> duals;  // equality-row multipliers
    double objective = 0.0;
    int iterations = 0;
};

struct LpOptions {
    int max_iterations = 200000;
    double tol = 1e-9;
    int refactor_every = 128;
};

namespace lp_detail {

enum class VarStatus : unsigned char { Basic, AtLower, AtUpper };

class Simplex {
  public:
    Simplex(const LpProblem& p, const LpOptions& opt) : p_(p), opt_(opt), m_(p.num_rows()) {
        n_struct_ = p.num_cols();
        cols_ = p.cols;
        // artificials appended after the structural columns
        for (int i = 0; i < m_; ++i) {
            LpProblem::Column a;
            a.lower = 0.0;
            a.upper = kLpInf;
            a.cost = 0.0;
            a.entries = {{i, 1.0}};
            cols_.push_back(a);
        }
        n_ = static_cast<int>(cols_.size());
    }

    LpSolution run() {
        LpSolution out;
        init_phase1();
        LpStatus st = iterate(/*phase1=*/true);
        out.iterations = iters_;
        if (st != LpStatus::Optimal) {
            out.status = st == LpStatus::Unbounded ? LpStatus::Infeasible : st;
            return out;
        }
        if (phase_objective() > 1e-7 * (1.0 + rhs_norm_)) {
            out.status = LpStatus::Infeasible;
            return out;
        }
        to_phase2();
        st = iterate(/*phase1=*/false);
        out.iterations = iters_;
        out.status = st;
        if (st != LpStatus::Optimal) return out;

        out.x = current_x();
        out.x.resize(n_struct_);
        out.objective = 0.0;
        for (int j = 0; j < n_struct_; ++j) out.objective += p_.cols[j].cost * out.x[j];
        Eigen::VectorXd cb(m_);
        for (int i = 0; i < m_; ++i) cb[i] = cost_[basis_[i]];
        Eigen::VectorXd y = binv_.transpose() * cb;
        out.duals.assign(y.data(), y.data() + m_);
        return out;
    }

  private:
    const LpProblem& p_;
    LpOptions opt_;
    int m_ = 0, n_ = 0, n_struct_ = 0;
    std::vector<LpProblem::Column> cols_;
    std::vector<double> cost_;
    std::vector<VarStatus> status_;
    std::vector<int> basis_;        // basic column per row
    Eigen::MatrixXd binv_;          // inverse of the basis matrix
    Eigen::VectorXd xb_;            // values of the basic variables
    double rhs_norm_ = 1.0;
    int iters_ = 0;
    int degen_streak_ = 0;
    int since_refactor_ = 0;

    double bound_value(int j) const {
        return status_[j] == VarStatus::AtUpper ? cols_[j].upper : cols_[j].lower;
    }

    void init_phase1() {
        rhs_norm_ = 0.0;
        for (double b : p_.rhs) rhs_norm_ = std::max(rhs_norm_, std::abs(b));
        status_.assign(n_, VarStatus::AtLower);
        for (int j = 0; j < n_struct_; ++j) {
            if (std::isfinite(cols_[j].lower))
                status_[j] = VarStatus::AtLower;
            else if (std::isfinite(cols_[j].upper))
                status_[j] = VarStatus::AtUpper;
            else
                throw SolverFailure("free variables are not supported");
        }
        // residual of the nonbasic point decides each artificial's sign
        std::vector<double> resid(p_.rhs);
        for (int j = 0; j < n_struct_; ++j) {
            const double v = bound_value(j);
            if (v == 0.0) continue;
            for (auto [r, a] : cols_[j].entries) resid[r] -= a * v;
        }
        cost_.assign(n_, 0.0);
        basis_.resize(m_);
        binv_ = Eigen::MatrixXd::Zero(m_, m_);
        xb_.resize(m_);
        for (int i = 0; i < m_; ++i) {
            const int aj = n_struct_ + i;
            cols_[aj].entries = {{i, resid[i] >= 0.0 ? 1.0 : -1.0}};
            cost_[aj] = 1.0;
            basis_[i] = aj;
            status_[aj] = VarStatus::Basic;
            binv_(i, i) = resid[i] >= 0.0 ? 1.0 : -1.0;
            xb_[i] = std::abs(resid[i]);
        }
    }

    double phase_objective() const {
        double s = 0.0;
        for (int i = 0; i < m_; ++i)
            if (basis_[i] >= n_struct_) s += xb_[i];
        return s;
    }

    void to_phase2() {
        for (int j = 0; j < n_struct_; ++j) cost_[j] = p_.cols[j].cost;
        for (int j = n_struct_; j < n_; ++j) {
            cost_[j] = 0.0;
            cols_[j].upper = 0.0;  // artificials may never carry flow again
        }
    }

    std::vector<double> current_x() const {
        std::vector<double> x(n_);
        for (int j = 0; j < n_; ++j)
            if (status_[j] != VarStatus::Basic) x[j] = bound_value(j);
        for (int i = 0; i < m_; ++i) x[basis_[i]] = xb_[i];
        return x;
    }

    void refactorize() {
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m_, m_);
        for (int i = 0; i < m_; ++i)
            for (auto [r, a] : cols_[basis_[i]].entries) B(r, i) = a;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        binv_ = lu.inverse();
        recompute_xb();
        since_refactor_ = 0;
    }

    void recompute_xb() {
        Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(p_.rhs.data(), m_);
        for (int j = 0; j < n_; ++j) {
            if (status_[j] == VarStatus::Basic) continue;
            const double v = bound_value(j);
            if (v == 0.0) continue;
            for (auto [r, a] : cols_[j].entries) b[r] -= a * v;
        }
        xb_ = binv_ * b;
    }

    LpStatus iterate(bool phase1) {
        const double tol = opt_.tol;
        while (true) {
            if (++iters_ > opt_.max_iterations) return LpStatus::IterLimit;
            if (++since_refactor_ >= opt_.refactor_every) refactorize();

            Eigen::VectorXd cb(m_);
            for (int i = 0; i < m_; ++i) cb[i] = cost_[basis_[i]];
            Eigen::VectorXd y = binv_.transpose() * cb;

            // pricing: Dantzig, Bland after a degenerate stall
            const bool bland = degen_streak_ > 64;
            int q = -1;
            double best = tol;
            int sigma = +1;
            for (int j = 0; j < n_; ++j) {
                if (status_[j] == VarStatus::Basic) continue;
                if (cols_[j].lower == cols_[j].upper) continue;  // pinned
                double rc = cost_[j];
                for (auto [r, a] : cols_[j].entries) rc -= y[r] * a;
                double viol = 0.0;
                int s = 0;
                if (status_[j] == VarStatus::AtLower && rc < -tol) {
                    viol = -rc;
                    s = +1;
                } else if (status_[j] == VarStatus::AtUpper && rc > tol) {
                    viol = rc;
                    s = -1;
                } else {
                    continue;
                }
                if (bland) {
                    q = j;
                    sigma = s;
                    break;
                }
                if (viol > best) {
                    best = viol;
                    q = j;
                    sigma = s;
                }
            }
            if (q < 0) return LpStatus::Optimal;

            // direction through the basis
            Eigen::VectorXd aq = Eigen::VectorXd::Zero(m_);
            for (auto [r, a] : cols_[q].entries) aq[r] = a;
            Eigen::VectorXd d = binv_ * aq;

            // ratio test: how far can the entering variable move
            double limit = cols_[q].upper - cols_[q].lower;  // bound flip
            int leave = -1;      // basic position that blocks first
            int leave_to = 0;    // -1: to lower, +1: to upper
            const double piv_tol = 1e-10;
            for (int i = 0; i < m_; ++i) {
                const double di = sigma * d[i];
                const int bj = basis_[i];
                if (di > piv_tol) {
                    const double room = xb_[i] - cols_[bj].lower;
                    const double ratio = room / di;
                    if (ratio < limit - 1e-12 ||
                        (ratio < limit + 1e-12 && (leave < 0 || std::abs(d[i]) > std::abs(d[leave])))) {
                        limit = std::max(0.0, ratio);
                        leave = i;
                        leave_to = -1;
                    }
                } else if (di < -piv_tol) {
                    if (!std::isfinite(cols_[bj].upper)) continue;
                    const double room = cols_[bj].upper - xb_[i];
                    const double ratio = room / (-di);
                    if (ratio < limit - 1e-12 ||
                        (ratio < limit + 1e-12 && (leave < 0 || std::abs(d[i]) > std::abs(d[leave])))) {
                        limit = std::max(0.0, ratio);
                        leave = i;
                        leave_to = +1;
                    }
                }
            }
            if (!std::isfinite(limit) && leave < 0) return LpStatus::Unbounded;

            degen_streak_ = limit < 1e-11 ? degen_streak_ + 1 : 0;

            if (leave < 0) {
                // bound flip: the entering variable runs to its other bound
                status_[q] = sigma > 0 ? VarStatus::AtUpper : VarStatus::AtLower;
                xb_ -= sigma * limit * d;
                continue;
            }

            // pivot: q enters the basis at position `leave`
            const int out_col = basis_[leave];
            const double enter_val = bound_value(q) + sigma * limit;
            xb_ -= sigma * limit * d;
            status_[out_col] = leave_to < 0 ? VarStatus::AtLower : VarStatus::AtUpper;
            basis_[leave] = q;
            status_[q] = VarStatus::Basic;
            xb_[leave] = enter_val;

            // eta update of the inverse
            const double piv = d[leave];
            if (std::abs(piv) < 1e-11) {
                refactorize();
                continue;
            }
            Eigen::RowVectorXd br = binv_.row(leave) / piv;
            for (int i = 0; i < m_; ++i) {
                if (i == leave) continue;
                const double di = d[i];
                if (di != 0.0) binv_.row(i) -= di * br;
            }
            binv_.row(leave) = br;
            (void)phase1;
        }
    }
};

}  // namespace lp_detail

inline LpSolution solve_lp(const LpProblem& p, const LpOptions& opt = {}) {
    for (const auto& c : p.cols)
        if (c.lower > c.upper) throw SolverFailure("column with lower > upper");
    lp_detail::Simplex s(p, opt);
    return s.run();
}

}  // namespace covnet
