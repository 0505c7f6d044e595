#pragma once

// CSV and manifest emission. Floating-point values are written with nine
// significant digits so identical runs produce byte-identical files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "covnet/equilibrium.hpp"
#include "covnet/mcs.hpp"

namespace covnet {

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) {
        out_.open(path);
        if (!out_) throw Error("cannot write " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }

    CsvWriter& field(const std::string& s) {
        sep();
        out_ << s;
        return *this;
    }
    CsvWriter& field(const char* s) { return field(std::string(s)); }
    CsvWriter& field(int v) {
        sep();
        out_ << v;
        return *this;
    }
    CsvWriter& field(std::uint64_t v) {
        sep();
        out_ << v;
        return *this;
    }
    CsvWriter& field(double v) {
        sep();
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        out_ << buf;
        return *this;
    }
    void endrow() {
        out_ << "\n";
        first_ = true;
    }

  private:
    std::ofstream out_;
    bool first_ = true;
    void sep() {
        if (!first_) out_ << ",";
        first_ = false;
    }
};

inline void write_link_flows(const std::filesystem::path& path, const DtaSolution& sol,
                             const AugmentedTrafficGraph& g, const ScenarioConfig& cfg) {
    CsvWriter csv(path, {"link", "kind", "interval", "inflow_pu", "occupancy_pu", "exit_pu",
                         "latency_min"});
    for (std::size_t li = 0; li < g.links.size(); ++li)
        for (int t = 1; t <= cfg.t_tn; ++t) {
            csv.field(g.links[li].id)
                .field(to_string(g.links[li].kind))
                .field(t)
                .field(sol.u[li][t])
                .field(sol.x[li][t])
                .field(sol.v[li][t])
                .field(sol.tau_minutes[li][t]);
            csv.endrow();
        }
}

inline void write_path_table(const std::filesystem::path& path, const DtaSolution& sol,
                             const AugmentedTrafficGraph& g) {
    CsvWriter csv(path, {"origin", "destination", "class", "path", "departure", "cost_usd",
                         "rate_pu"});
    for (std::size_t i = 0; i < sol.triples.size(); ++i) {
        const auto& tr = sol.triples[i];
        const auto& com = sol.commodities[tr.commodity];
        const auto& od = g.od_pairs[com.od];
        const auto& p = g.paths(com.od, com.cls)[tr.path];
        std::string nodes = std::to_string(g.links[p.links.front()].tail);
        for (int li : p.links) {
            if (g.links[li].kind == LinkKind::Charging) nodes += "[" + g.links[li].id + "]";
            nodes += "-" + std::to_string(g.links[li].head);
        }
        csv.field(od.origin)
            .field(od.destination)
            .field(to_string(com.cls))
            .field(nodes)
            .field(tr.expansion.departure)
            .field(sol.path_cost[i])
            .field(sol.f[i]);
        csv.endrow();
    }
}

inline void write_convergence_log(const std::filesystem::path& path, const DtaSolution& sol) {
    CsvWriter csv(path, {"outer", "inner", "flow_delta_pu", "tau_delta_min", "objective_usd"});
    for (const auto& rec : sol.log) {
        csv.field(rec.outer).field(rec.inner).field(rec.flow_delta);
        csv.field(rec.tau_delta).field(rec.objective);
        csv.endrow();
    }
}

inline void write_certificates(const std::filesystem::path& path, const DtaSolution& sol,
                               const AugmentedTrafficGraph& g) {
    CsvWriter csv(path, {"origin", "destination", "class", "min_cost_usd", "max_residual_usd",
                         "used_choices", "undercuts"});
    for (const auto& c : sol.certificates) {
        const auto& od = g.od_pairs[c.od];
        csv.field(od.origin)
            .field(od.destination)
            .field(to_string(c.cls))
            .field(c.c_min)
            .field(c.max_residual)
            .field(c.used_choices)
            .field(c.undercut_count);
        csv.endrow();
    }
}

inline void write_opf_buses(const std::filesystem::path& path, const OpfSolution& sol,
                            const GridModel& grid) {
    CsvWriter csv(path, {"bus", "interval", "u_sq_pu", "pg_pu", "qg_pu", "lmp_usd_per_mwh"});
    for (std::size_t b = 0; b < grid.buses.size(); ++b)
        for (int t = 0; t < sol.t_dn; ++t) {
            csv.field(grid.buses[b].id)
                .field(t + 1)
                .field(sol.U(b, t))
                .field(sol.pg(b, t))
                .field(sol.qg(b, t))
                .field(sol.lmp_extracted ? sol.lmp(b, t) : 0.0);
            csv.endrow();
        }
}

inline void write_opf_lines(const std::filesystem::path& path, const OpfSolution& sol,
                            const GridModel& grid) {
    CsvWriter csv(path, {"from", "to", "interval", "p_pu", "q_pu", "i_sq_pu", "soc_residual"});
    for (std::size_t l = 0; l < grid.lines.size(); ++l)
        for (int t = 0; t < sol.t_dn; ++t) {
            const double pq = sol.P(l, t) * sol.P(l, t) + sol.Q(l, t) * sol.Q(l, t);
            const double res =
                (sol.I(l, t) * sol.U(grid.bus_index(grid.lines[l].from), t) - pq) /
                std::max(1.0, pq);
            csv.field(grid.lines[l].from)
                .field(grid.lines[l].to)
                .field(t + 1)
                .field(sol.P(l, t))
                .field(sol.Q(l, t))
                .field(sol.I(l, t))
                .field(res);
            csv.endrow();
        }
}

inline void write_opf_summary(const std::filesystem::path& path, const OpfSolution& sol) {
    CsvWriter csv(path, {"objective_usd", "duality_gap", "soc_gap", "newton_iterations"});
    csv.field(sol.objective).field(sol.duality_gap).field(sol.soc_gap).field(sol.newton_iterations);
    csv.endrow();
}

inline void write_equilibrium_fcs(const std::filesystem::path& path, const EquilibriumResult& res,
                                  const AugmentedTrafficGraph& g, const ScenarioConfig& cfg) {
    CsvWriter csv(path, {"station", "bus", "avg_price_usd_per_mwh", "energy_mwh", "peak_mw"});
    for (int li : g.charging_link_indices()) {
        double price = 0.0, energy = 0.0, peak = 0.0;
        for (int t = 1; t <= cfg.t_tn; ++t) {
            price += res.lambda[li][t];
            const double mw = charging_power(res.dta.x[li][t], cfg).mw;
            energy += mw * cfg.dt_hours;
            peak = std::max(peak, mw);
        }
        csv.field(g.links[li].id)
            .field(g.links[li].supply_bus)
            .field(price / cfg.t_tn)
            .field(energy)
            .field(peak);
        csv.endrow();
    }
}

inline void write_trajectory(const std::filesystem::path& path, const EquilibriumResult& res) {
    CsvWriter csv(path, {"iteration", "delta_dn_usd_per_mwh", "delta_tn_pu", "dta_outer",
                         "opf_objective_usd", "due_gap_usd", "conservation_residual"});
    for (const auto& rec : res.trajectory) {
        csv.field(rec.iteration)
            .field(rec.delta_dn)
            .field(rec.delta_tn)
            .field(rec.dta_outer)
            .field(rec.opf_objective)
            .field(rec.due_gap)
            .field(rec.conservation_worst);
        csv.endrow();
    }
}

inline void write_mcs_stats(const std::filesystem::path& path, const McsReport& rep) {
    CsvWriter csv(path, {"station", "price_mean_usd_per_mwh", "price_std", "energy_mean_mwh",
                         "energy_std"});
    for (std::size_t f = 0; f < rep.fcs_ids.size(); ++f) {
        csv.field(rep.fcs_ids[f])
            .field(rep.price_mean[f])
            .field(rep.price_std[f])
            .field(rep.energy_mean[f])
            .field(rep.energy_std[f]);
        csv.endrow();
    }
}

inline void write_mcs_histograms(const std::filesystem::path& path, const McsReport& rep) {
    CsvWriter csv(path, {"station", "quantity", "bin_lo", "bin_hi", "count"});
    for (const auto& h : rep.histograms)
        for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
            csv.field(h.station)
                .field(h.quantity)
                .field(h.edges[b])
                .field(h.edges[b + 1])
                .field(h.counts[b]);
            csv.endrow();
        }
}

inline void write_mcs_samples(const std::filesystem::path& path, const McsReport& rep) {
    CsvWriter csv(path, {"sample", "seed", "converged", "fp_iterations", "due_gap_usd", "station",
                         "avg_price_usd_per_mwh", "energy_mwh", "peak_mw"});
    for (const auto& s : rep.sample_summaries) {
        for (std::size_t f = 0; f < rep.fcs_ids.size(); ++f) {
            csv.field(s.index)
                .field(s.seed)
                .field(s.converged ? 1 : 0)
                .field(s.fp_iterations)
                .field(s.due_gap)
                .field(rep.fcs_ids[f]);
            if (s.converged && f < s.fcs_price.size()) {
                csv.field(s.fcs_price[f]).field(s.fcs_energy[f]).field(s.fcs_peak_mw[f]);
            } else {
                csv.field("").field("").field("");
            }
            csv.endrow();
        }
    }
}

inline void write_mcs_manifest(const std::filesystem::path& path, const McsReport& rep,
                               const ScenarioConfig& cfg) {
    nlohmann::ordered_json j;
    j["samples"] = rep.samples;
    j["master_seed"] = rep.master_seed;
    j["converged"] = rep.converged_count();
    j["failed_samples"] = rep.failed_samples;
    j["failure_reasons"] = rep.failure_reasons;
    j["tolerances"] = {{"eps", cfg.eps}, {"eps1", cfg.eps1}, {"eps2", cfg.eps2}};
    j["pwl_breakpoints"] = cfg.pwl_breakpoints;
    j["price_information"] = cfg.price_information;
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace covnet
