#pragma once

// Correlated travel-demand sampling and Monte Carlo evaluation of the
// coupled-network equilibrium. Samples are independent, deterministically
// seeded from the master seed, and may evaluate in parallel; the report is
// assembled in sample order so results do not depend on scheduling.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "covnet/equilibrium.hpp"

namespace covnet {

struct CorrelationRule {
    double same_origin_same_zone = 0.3;
    double same_origin_diff_zone = -0.1;
    double diff_origin_same_zone = 0.15;
    double diff_origin_diff_zone = -0.05;
};

struct DemandDistribution {
    Eigen::VectorXd means;          // per O-D, total demand p.u.
    double cv = 0.1;                // coefficient of variation
    Eigen::MatrixXd correlation;    // Pearson targets after repair
    double psd_repair_delta = 0.0;  // max entry change from the repair
};

// Zone-rule correlation matrix over the O-D list. Origins compare by their
// zone label, destinations by theirs. Repaired to the nearest positive
// semidefinite matrix by eigenvalue clipping when the block pattern is
// indefinite; the repair magnitude is reported.
inline DemandDistribution build_correlation(const std::vector<ODPair>& od_pairs,
                                            const std::map<int, std::string>& zones,
                                            const CorrelationRule& rule, double cv = 0.1) {
    const int n = static_cast<int>(od_pairs.size());
    DemandDistribution dist;
    dist.cv = cv;
    dist.means.resize(n);
    auto zone_of = [&zones](int node) -> const std::string& {
        auto it = zones.find(node);
        if (it == zones.end())
            throw MissingZone("node " + std::to_string(node) + " has no zone label");
        return it->second;
    };
    for (int i = 0; i < n; ++i) {
        dist.means[i] = od_pairs[i].demand_gv + od_pairs[i].demand_ev;
        zone_of(od_pairs[i].origin);
        zone_of(od_pairs[i].destination);
    }

    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool same_origin = zone_of(od_pairs[i].origin) == zone_of(od_pairs[j].origin);
            const bool same_dest =
                zone_of(od_pairs[i].destination) == zone_of(od_pairs[j].destination);
            const double rho = same_origin ? (same_dest ? rule.same_origin_same_zone
                                                        : rule.same_origin_diff_zone)
                                           : (same_dest ? rule.diff_origin_same_zone
                                                        : rule.diff_origin_diff_zone);
            R(i, j) = R(j, i) = rho;
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
        Eigen::MatrixXd repaired =
            eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        // renormalize the diagonal back to one
        Eigen::VectorXd d = repaired.diagonal().cwiseMax(1e-12).cwiseSqrt();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) repaired(i, j) /= d[i] * d[j];
        dist.psd_repair_delta = (repaired - R).cwiseAbs().maxCoeff();
        R = repaired;
    }
    dist.correlation = R;
    return dist;
}

namespace mcs_detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t sample_seed(std::uint64_t master, int index) {
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

// Portable standard normals: xorshift-free 64-bit generator + Box-Muller,
// so identical seeds give identical draws on any platform.
class NormalSource {
  public:
    explicit NormalSource(std::uint64_t seed) : state_(splitmix64(seed ^ 0xD1B54A32D192ED03ULL)) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;

    double uniform() {
        state_ = splitmix64(state_);
        return (state_ >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
    }
};

inline Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& R) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
    Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
}

}  // namespace mcs_detail

// Correlated demand vectors; negatives truncate at zero (the tails are
// astronomically unlikely at cv = 0.1, so no renormalization).
inline std::vector<Eigen::VectorXd> sample_demands(const DemandDistribution& dist, int n,
                                                   std::uint64_t seed) {
    if (n < 1) throw Error("sample count must be >= 1");
    const int dim = static_cast<int>(dist.means.size());
    const Eigen::MatrixXd B = mcs_detail::correlation_factor(dist.correlation);
    std::vector<Eigen::VectorXd> out;
    out.reserve(n);
    for (int s = 0; s < n; ++s) {
        mcs_detail::NormalSource rng(mcs_detail::sample_seed(seed, s));
        Eigen::VectorXd z(dim);
        for (int i = 0; i < dim; ++i) z[i] = rng.next();
        Eigen::VectorXd q = dist.means + (dist.cv * dist.means.asDiagonal() * (B * z)).eval();
        out.push_back(q.cwiseMax(0.0));
    }
    return out;
}

struct McsSampleSummary {
    int index = -1;
    std::uint64_t seed = 0;
    bool converged = false;
    int fp_iterations = 0;
    double due_gap = 0.0;
    Eigen::VectorXd demand;           // sampled per-O-D totals
    std::vector<double> fcs_price;    // time-average price per station, $/MWh
    std::vector<double> fcs_energy;   // charged energy per station, MWh
    std::vector<double> fcs_peak_mw;  // peak charging load per station, MW
};

struct HistogramSeries {
    std::string station;
    std::string quantity;  // "price" or "load"
    std::vector<double> edges;   // nbins + 1
    std::vector<int> counts;     // nbins
};

struct McsReport {
    int samples = 0;
    std::uint64_t master_seed = 0;
    std::vector<std::string> fcs_ids;
    std::vector<McsSampleSummary> sample_summaries;  // converged and failed alike
    std::vector<int> failed_samples;
    std::vector<std::string> failure_reasons;

    // statistics over converged samples
    std::vector<double> price_mean, price_std;
    std::vector<double> energy_mean, energy_std;
    std::vector<HistogramSeries> histograms;

    int converged_count() const { return samples - static_cast<int>(failed_samples.size()); }
};

namespace mcs_detail {

inline McsSampleSummary summarize(int index, std::uint64_t seed, const Scenario& sc,
                                  const EquilibriumResult& res) {
    const auto& cfg = sc.config;
    McsSampleSummary s;
    s.index = index;
    s.seed = seed;
    s.converged = res.converged;
    s.fp_iterations = res.iterations;
    s.due_gap = res.dta.due_gap;
    for (int li : sc.graph.charging_link_indices()) {
        double price = 0.0, energy = 0.0, peak = 0.0;
        for (int t = 1; t <= cfg.t_tn; ++t) {
            price += res.lambda[li][t];
            const double mw = charging_power(res.dta.x[li][t], cfg).mw;
            energy += mw * cfg.dt_hours;
            peak = std::max(peak, mw);
        }
        s.fcs_price.push_back(price / cfg.t_tn);
        s.fcs_energy.push_back(energy);
        s.fcs_peak_mw.push_back(peak);
    }
    return s;
}

inline void histogram(const std::vector<double>& values, int nbins, HistogramSeries& h) {
    h.counts.assign(nbins, 0);
    h.edges.assign(nbins + 1, 0.0);
    if (values.empty()) return;
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1e-9;
    for (int i = 0; i <= nbins; ++i) h.edges[i] = lo + (hi - lo) * i / nbins;
    for (double v : values) {
        int bin = static_cast<int>((v - lo) / (hi - lo) * nbins);
        bin = std::min(std::max(bin, 0), nbins - 1);
        h.counts[bin]++;
    }
}

inline int thread_budget(int samples) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("COVNET_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return std::min(hw, samples);
}

}  // namespace mcs_detail

// Monte Carlo over correlated demand draws: each sample scales every O-D's
// class demands by its drawn total and solves the full coupled equilibrium
// (or the no-information variant when price_information is off).
inline McsReport run_mcs(const Scenario& base, const DemandDistribution& dist, int n,
                         std::uint64_t seed, const OpfOptions& opf_opt = {}) {
    McsReport report;
    report.samples = n;
    report.master_seed = seed;
    for (int li : base.graph.charging_link_indices())
        report.fcs_ids.push_back(base.graph.links[li].id);

    const auto demands = sample_demands(dist, n, seed);
    report.sample_summaries.resize(n);
    std::vector<std::string> failures(n);

    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            Scenario sc = base;
            for (std::size_t od = 0; od < sc.graph.od_pairs.size(); ++od) {
                auto& pair = sc.graph.od_pairs[od];
                const double mean = dist.means[static_cast<int>(od)];
                const double factor = mean > 0.0 ? demands[i][static_cast<int>(od)] / mean : 0.0;
                pair.demand_gv *= factor;
                pair.demand_ev *= factor;
            }
            McsSampleSummary summary;
            try {
                auto res = solve_equilibrium(sc, opf_opt);
                summary = mcs_detail::summarize(i, mcs_detail::sample_seed(seed, i), sc, res);
                if (!res.converged) failures[i] = "fixed point not converged";
            } catch (const std::exception& e) {
                summary.index = i;
                summary.seed = mcs_detail::sample_seed(seed, i);
                summary.converged = false;
                failures[i] = e.what();
            }
            summary.demand = demands[i];
            report.sample_summaries[i] = std::move(summary);
        }
    };
    const int workers = mcs_detail::thread_budget(n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (int i = 0; i < n; ++i) {
        if (!report.sample_summaries[i].converged) {
            report.failed_samples.push_back(i);
            report.failure_reasons.push_back(failures[i].empty() ? "unknown" : failures[i]);
        }
    }

    const int nf = static_cast<int>(report.fcs_ids.size());
    report.price_mean.assign(nf, 0.0);
    report.price_std.assign(nf, 0.0);
    report.energy_mean.assign(nf, 0.0);
    report.energy_std.assign(nf, 0.0);
    std::vector<std::vector<double>> prices(nf), energies(nf);
    for (const auto& s : report.sample_summaries) {
        if (!s.converged) continue;
        for (int f = 0; f < nf; ++f) {
            prices[f].push_back(s.fcs_price[f]);
            energies[f].push_back(s.fcs_energy[f]);
        }
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        sd = 0.0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() < 2) return;
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
    };
    for (int f = 0; f < nf; ++f) {
        mean_std(prices[f], report.price_mean[f], report.price_std[f]);
        mean_std(energies[f], report.energy_mean[f], report.energy_std[f]);
        HistogramSeries hp, he;
        hp.station = he.station = report.fcs_ids[f];
        hp.quantity = "price";
        he.quantity = "load";
        mcs_detail::histogram(prices[f], 20, hp);
        mcs_detail::histogram(energies[f], 20, he);
        report.histograms.push_back(std::move(hp));
        report.histograms.push_back(std::move(he));
    }
    return report;
}

}  // namespace covnet
