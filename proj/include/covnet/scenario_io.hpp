#pragma once

// Scenario ingestion: one self-contained JSON document carrying the road
// network, stations, grid, coupling, study parameters, and the uncertainty
// model. Validation aggregates every violation instead of failing fast.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "covnet/equilibrium.hpp"
#include "covnet/mcs.hpp"

namespace covnet {

using Json = nlohmann::ordered_json;

constexpr int kScenarioFormatVersion = 1;

struct ScenarioDocument {
    int format_version = kScenarioFormatVersion;

    // traffic
    std::vector<int> nodes;
    std::vector<TrafficLink> base_links;  // general links only, pre-augmentation
    std::vector<ODPair> od_pairs;
    int path_limit = 12;
    int hop_limit = 12;

    // stations and coupling
    std::vector<FcsPlacement> stations;  // bus filled from the coupling map

    // grid
    GridModel grid;

    // study parameters
    ScenarioConfig config;

    // uncertainty
    bool has_uncertainty = false;
    double cv = 0.1;
    std::map<int, std::string> zones;
    CorrelationRule correlation;
};

namespace io_detail {

inline std::vector<double> number_or_array(const Json& j, int expected) {
    std::vector<double> out;
    if (j.is_number()) {
        out.assign(expected, j.get<double>());
    } else {
        out = j.get<std::vector<double>>();
    }
    return out;
}

inline Json loads_to_json(const std::vector<double>& v) {
    bool uniform = true;
    for (double x : v)
        if (x != v.front()) uniform = false;
    if (v.empty()) return Json(0.0);
    if (uniform) return Json(v.front());
    return Json(v);
}

}  // namespace io_detail

inline Json to_json(const ScenarioDocument& doc) {
    Json j;
    j["format_version"] = doc.format_version;

    Json traffic;
    traffic["nodes"] = doc.nodes;
    traffic["links"] = Json::array();
    for (const auto& l : doc.base_links) {
        Json lj;
        lj["id"] = l.id;
        lj["tail"] = l.tail;
        lj["head"] = l.head;
        lj["capacity"] = l.capacity;
        lj["free_time_min"] = l.free_time_min;
        traffic["links"].push_back(lj);
    }
    traffic["od_pairs"] = Json::array();
    for (const auto& od : doc.od_pairs) {
        Json oj;
        oj["origin"] = od.origin;
        oj["destination"] = od.destination;
        oj["demand_gv"] = od.demand_gv;
        oj["demand_ev"] = od.demand_ev;
        oj["departure_intervals"] = od.departure_window;
        traffic["od_pairs"].push_back(oj);
    }
    traffic["path_limit"] = doc.path_limit;
    traffic["hop_limit"] = doc.hop_limit;
    j["traffic"] = traffic;

    j["stations"] = Json::array();
    for (const auto& s : doc.stations) {
        Json sj;
        sj["id"] = s.id;
        sj["host_link"] = s.host_link;
        sj["capacity"] = s.capacity;
        sj["charge_time_min"] = s.charge_time_min;
        sj["queue_param"] = s.queue_param;
        j["stations"].push_back(sj);
    }
    Json coupling;
    for (const auto& s : doc.stations) coupling[s.id] = s.bus;
    j["coupling"] = coupling;

    Json grid;
    grid["substation"] = doc.grid.substation;
    grid["buses"] = Json::array();
    for (const auto& b : doc.grid.buses) {
        Json bj;
        bj["id"] = b.id;
        bj["p_load"] = io_detail::loads_to_json(b.p_load);
        bj["q_load"] = io_detail::loads_to_json(b.q_load);
        if (b.has_pgen() || b.has_qgen()) {
            bj["pg_min"] = b.pg_min;
            bj["pg_max"] = b.pg_max;
            bj["qg_min"] = b.qg_min;
            bj["qg_max"] = b.qg_max;
            bj["p_ramp"] = b.p_ramp;
            bj["q_ramp"] = b.q_ramp;
            bj["cost_a"] = b.cost_a;
            bj["cost_b"] = b.cost_b;
        }
        grid["buses"].push_back(bj);
    }
    grid["lines"] = Json::array();
    for (const auto& l : doc.grid.lines) {
        Json lj;
        lj["from"] = l.from;
        lj["to"] = l.to;
        lj["r"] = l.r;
        lj["x"] = l.x;
        lj["s_lim_sq"] = l.s_lim_sq;
        grid["lines"].push_back(lj);
    }
    j["grid"] = grid;

    Json cfg;
    cfg["t_tn"] = doc.config.t_tn;
    cfg["t_dn"] = doc.config.t_dn;
    cfg["dt_hours"] = doc.config.dt_hours;
    cfg["omega"] = doc.config.omega;
    cfg["p_ev_mw"] = doc.config.p_ev_mw;
    cfg["base_power_mva"] = doc.config.base_power_mva;
    cfg["base_flow_vehicles"] = doc.config.base_flow_vehicles;
    cfg["lambda0"] = doc.config.lambda0;
    cfg["u_min_sq"] = doc.config.u_min_sq;
    cfg["u_max_sq"] = doc.config.u_max_sq;
    cfg["eps"] = doc.config.eps;
    cfg["eps1"] = doc.config.eps1;
    cfg["eps2"] = doc.config.eps2;
    cfg["pwl_breakpoints"] = doc.config.pwl_breakpoints;
    cfg["departure_time_choice"] = doc.config.departure_time_choice;
    cfg["energy_cost_per_entry"] = doc.config.energy_cost_per_entry;
    cfg["damping"] = doc.config.damping;
    cfg["master_seed"] = doc.config.master_seed;
    j["config"] = cfg;

    if (doc.has_uncertainty) {
        Json u;
        u["cv"] = doc.cv;
        Json zj;
        for (const auto& [node, label] : doc.zones) zj[std::to_string(node)] = label;
        u["zones"] = zj;
        Json cj;
        cj["same_origin_same_zone"] = doc.correlation.same_origin_same_zone;
        cj["same_origin_diff_zone"] = doc.correlation.same_origin_diff_zone;
        cj["diff_origin_same_zone"] = doc.correlation.diff_origin_same_zone;
        cj["diff_origin_diff_zone"] = doc.correlation.diff_origin_diff_zone;
        u["correlation"] = cj;
        j["uncertainty"] = u;
    }
    return j;
}

inline std::string emit(const ScenarioDocument& doc) { return to_json(doc).dump(2) + "\n"; }

namespace io_detail {

inline ScenarioDocument from_json(const Json& j, std::vector<std::string>& errors) {
    ScenarioDocument doc;
    auto complain = [&errors](const std::string& msg) { errors.push_back(msg); };

    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        complain("format_version missing");
    else {
        doc.format_version = j["format_version"].get<int>();
        if (doc.format_version != kScenarioFormatVersion)
            complain("unsupported format_version " + std::to_string(doc.format_version));
    }

    try {
        const auto& traffic = j.at("traffic");
        doc.nodes = traffic.at("nodes").get<std::vector<int>>();
        for (const auto& lj : traffic.at("links")) {
            TrafficLink l;
            l.id = lj.at("id").get<std::string>();
            l.tail = lj.at("tail").get<int>();
            l.head = lj.at("head").get<int>();
            l.kind = LinkKind::General;
            l.capacity = lj.at("capacity").get<double>();
            l.free_time_min = lj.at("free_time_min").get<double>();
            doc.base_links.push_back(l);
        }
        for (const auto& oj : traffic.at("od_pairs")) {
            ODPair od;
            od.origin = oj.at("origin").get<int>();
            od.destination = oj.at("destination").get<int>();
            od.demand_gv = oj.value("demand_gv", 0.0);
            od.demand_ev = oj.value("demand_ev", 0.0);
            od.departure_window = oj.at("departure_intervals").get<std::vector<int>>();
            doc.od_pairs.push_back(od);
        }
        doc.path_limit = traffic.value("path_limit", 12);
        doc.hop_limit = traffic.value("hop_limit", 12);
    } catch (const Json::exception& e) {
        complain(std::string("traffic section: ") + e.what());
    }

    try {
        for (const auto& sj : j.value("stations", Json::array())) {
            FcsPlacement s;
            s.id = sj.at("id").get<std::string>();
            s.host_link = sj.at("host_link").get<std::string>();
            s.capacity = sj.at("capacity").get<double>();
            s.charge_time_min = sj.at("charge_time_min").get<double>();
            s.queue_param = sj.value("queue_param", 0.1);
            doc.stations.push_back(s);
        }
        const auto coupling = j.value("coupling", Json::object());
        for (auto& s : doc.stations) {
            if (coupling.contains(s.id))
                s.bus = coupling.at(s.id).get<int>();
            else
                complain("station " + s.id + " has no coupling entry");
        }
    } catch (const Json::exception& e) {
        complain(std::string("stations section: ") + e.what());
    }

    try {
        const auto& grid = j.at("grid");
        doc.grid.substation = grid.value("substation", 0);
        const int t_dn = j.at("config").value("t_dn", 6);
        for (const auto& bj : grid.at("buses")) {
            GridBus b;
            b.id = bj.at("id").get<int>();
            b.p_load = number_or_array(bj.value("p_load", Json(0.0)), t_dn);
            b.q_load = number_or_array(bj.value("q_load", Json(0.0)), t_dn);
            b.pg_min = bj.value("pg_min", 0.0);
            b.pg_max = bj.value("pg_max", 0.0);
            b.qg_min = bj.value("qg_min", 0.0);
            b.qg_max = bj.value("qg_max", 0.0);
            b.p_ramp = bj.value("p_ramp", 0.0);
            b.q_ramp = bj.value("q_ramp", 0.0);
            b.cost_a = bj.value("cost_a", 0.0);
            b.cost_b = bj.value("cost_b", 0.0);
            doc.grid.buses.push_back(b);
        }
        for (const auto& lj : grid.at("lines")) {
            GridLine l;
            l.from = lj.at("from").get<int>();
            l.to = lj.at("to").get<int>();
            l.r = lj.at("r").get<double>();
            l.x = lj.at("x").get<double>();
            l.s_lim_sq = lj.value("s_lim_sq", 2.25);
            doc.grid.lines.push_back(l);
        }
        doc.grid.rebuild_indexes();
    } catch (const Json::exception& e) {
        complain(std::string("grid section: ") + e.what());
    }

    try {
        const auto& cj = j.at("config");
        auto& cfg = doc.config;
        cfg.t_tn = cj.value("t_tn", 12);
        cfg.t_dn = cj.value("t_dn", 6);
        cfg.dt_hours = cj.value("dt_hours", 1.0 / 12.0);
        cfg.omega = cj.value("omega", 10.0);
        cfg.p_ev_mw = cj.value("p_ev_mw", 0.15);
        cfg.base_power_mva = cj.value("base_power_mva", 100.0);
        cfg.base_flow_vehicles = cj.value("base_flow_vehicles", 10.0);
        if (cj.contains("lambda0")) {
            if (cj["lambda0"].is_number())
                cfg.lambda0 = {cj["lambda0"].get<double>()};
            else
                cfg.lambda0 = cj["lambda0"].get<std::vector<double>>();
        }
        cfg.u_min_sq = cj.value("u_min_sq", 0.7744);
        cfg.u_max_sq = cj.value("u_max_sq", 1.1025);
        cfg.eps = cj.value("eps", 1.0);
        cfg.eps1 = cj.value("eps1", 1.0);
        cfg.eps2 = cj.value("eps2", 2.0);
        cfg.pwl_breakpoints = cj.value("pwl_breakpoints", 10);
        cfg.departure_time_choice = cj.value("departure_time_choice", true);
        cfg.energy_cost_per_entry = cj.value("energy_cost_per_entry", true);
        cfg.damping = cj.value("damping", false);
        cfg.master_seed = cj.value("master_seed", std::uint64_t{42});
    } catch (const Json::exception& e) {
        complain(std::string("config section: ") + e.what());
    }

    if (j.contains("uncertainty")) {
        doc.has_uncertainty = true;
        try {
            const auto& u = j.at("uncertainty");
            doc.cv = u.value("cv", 0.1);
            const Json zones_json = u.value("zones", Json::object());
            for (const auto& [key, val] : zones_json.items())
                doc.zones[std::stoi(key)] = val.get<std::string>();
            const auto& c = u.at("correlation");
            doc.correlation.same_origin_same_zone = c.value("same_origin_same_zone", 0.3);
            doc.correlation.same_origin_diff_zone = c.value("same_origin_diff_zone", -0.1);
            doc.correlation.diff_origin_same_zone = c.value("diff_origin_same_zone", 0.15);
            doc.correlation.diff_origin_diff_zone = c.value("diff_origin_diff_zone", -0.05);
        } catch (const Json::exception& e) {
            complain(std::string("uncertainty section: ") + e.what());
        }
    }
    return doc;
}

}  // namespace io_detail

// Every invariant the document must satisfy; returns all violations.
inline std::vector<std::string> validate(const ScenarioDocument& doc) {
    std::vector<std::string> v;
    auto bad = [&v](const std::string& msg) { v.push_back(msg); };

    std::set<int> nodes(doc.nodes.begin(), doc.nodes.end());
    if (nodes.size() != doc.nodes.size()) bad("duplicate node ids");
    if (doc.nodes.empty()) bad("traffic network has no nodes");

    std::set<std::string> link_ids;
    for (const auto& l : doc.base_links) {
        if (!link_ids.insert(l.id).second) bad("duplicate link id " + l.id);
        if (!nodes.count(l.tail) || !nodes.count(l.head))
            bad("link " + l.id + " references an unknown node");
        if (l.capacity <= 0.0) bad("link " + l.id + " needs capacity > 0");
        if (l.free_time_min <= 0.0) bad("link " + l.id + " needs free_time_min > 0");
    }

    std::set<std::string> hosts, station_ids;
    for (const auto& s : doc.stations) {
        if (!station_ids.insert(s.id).second) bad("duplicate station id " + s.id);
        if (!link_ids.count(s.host_link)) bad("station " + s.id + " hosts unknown link " + s.host_link);
        if (!hosts.insert(s.host_link).second)
            bad("link " + s.host_link + " hosts more than one station");
        if (s.capacity <= 0.0) bad("station " + s.id + " needs capacity > 0");
        if (s.charge_time_min <= 0.0) bad("station " + s.id + " needs charge_time_min > 0");
        if (s.queue_param < 0.0) bad("station " + s.id + " needs queue_param >= 0");
        if (s.bus >= 0 && !doc.grid.has_bus(s.bus))
            bad("station " + s.id + " couples to unknown bus " + std::to_string(s.bus));
        if (s.bus < 0) bad("station " + s.id + " has no supply bus");
    }

    for (const auto& od : doc.od_pairs) {
        const std::string name =
            std::to_string(od.origin) + "->" + std::to_string(od.destination);
        if (od.origin == od.destination) bad("O-D " + name + " has equal endpoints");
        if (!nodes.count(od.origin) || !nodes.count(od.destination))
            bad("O-D " + name + " references an unknown node");
        if (od.demand_gv < 0.0 || od.demand_ev < 0.0) bad("O-D " + name + " has negative demand");
        if (od.departure_window.empty()) bad("O-D " + name + " has an empty departure window");
        for (int k : od.departure_window)
            if (k < 1 || k > doc.config.t_tn)
                bad("O-D " + name + " departure interval " + std::to_string(k) +
                    " outside the horizon");
    }

    std::string why;
    if (!doc.grid.buses.empty() && !doc.grid.is_radial(&why)) bad("grid not radial: " + why);
    if (doc.grid.buses.empty()) bad("grid has no buses");
    std::set<int> bus_ids;
    for (const auto& b : doc.grid.buses) {
        if (!bus_ids.insert(b.id).second) bad("duplicate bus id " + std::to_string(b.id));
        if (b.pg_min > b.pg_max) bad("bus " + std::to_string(b.id) + " has pg_min > pg_max");
        if (b.qg_min > b.qg_max) bad("bus " + std::to_string(b.id) + " has qg_min > qg_max");
        if (b.p_ramp < 0.0 || b.q_ramp < 0.0)
            bad("bus " + std::to_string(b.id) + " has negative ramp limits");
        const auto sized = [&](const std::vector<double>& l) {
            return l.size() == 1 || static_cast<int>(l.size()) == doc.config.t_dn;
        };
        if (!sized(b.p_load) || !sized(b.q_load))
            bad("bus " + std::to_string(b.id) + " load series must have 1 or t_dn entries");
    }
    for (const auto& l : doc.grid.lines)
        if (l.r < 0.0 || l.x < 0.0)
            bad("line " + std::to_string(l.from) + "-" + std::to_string(l.to) +
                " has negative impedance");

    const auto& cfg = doc.config;
    if (cfg.t_tn <= 0 || cfg.t_dn <= 0 || cfg.t_tn % cfg.t_dn != 0)
        bad("t_tn must be a positive multiple of t_dn");
    if (cfg.dt_hours <= 0.0) bad("dt_hours must be positive");
    if (cfg.eps <= 0.0 || cfg.eps1 <= 0.0 || cfg.eps2 <= 0.0) bad("tolerances must be positive");
    if (cfg.pwl_breakpoints < 2) bad("pwl_breakpoints must be >= 2");
    if (cfg.lambda0.empty()) bad("lambda0 missing");
    if (static_cast<int>(cfg.lambda0.size()) != 1 &&
        static_cast<int>(cfg.lambda0.size()) != cfg.t_dn)
        bad("lambda0 must have 1 or t_dn entries");
    if (cfg.u_min_sq <= 0.0 || cfg.u_max_sq <= cfg.u_min_sq) bad("voltage bounds are inconsistent");
    if (cfg.p_ev_mw < 0.0) bad("p_ev_mw must be nonnegative");

    if (doc.has_uncertainty) {
        if (doc.cv < 0.0) bad("cv must be nonnegative");
        for (const auto& od : doc.od_pairs) {
            if (!doc.zones.count(od.origin))
                bad("zone label missing for origin " + std::to_string(od.origin));
            if (!doc.zones.count(od.destination))
                bad("zone label missing for destination " + std::to_string(od.destination));
        }
    }

    // graph assembly invariants (augmentation + candidate paths)
    if (v.empty()) {
        try {
            AugmentedTrafficGraph base;
            base.nodes = doc.nodes;
            base.links = doc.base_links;
            base.od_pairs = doc.od_pairs;
            base.rebuild_indexes();
            auto g = augment_graph(base, doc.stations, doc.grid);
            enumerate_all_paths(g, doc.path_limit, doc.hop_limit);
        } catch (const Error& e) {
            bad(e.what());
        }
    }
    return v;
}

inline ScenarioDocument parse(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
    }
    std::vector<std::string> errors;
    ScenarioDocument doc = io_detail::from_json(j, errors);
    if (!errors.empty()) throw ValidationErrors(errors);
    return doc;
}

inline ScenarioDocument parse_and_validate(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str().empty()) throw ParseError("scenario file " + path.string() + " is empty");
    ScenarioDocument doc = parse(ss.str());
    auto violations = validate(doc);
    if (!violations.empty()) throw ValidationErrors(violations);
    return doc;
}

// Assembled, solver-ready scenario.
struct LoadedScenario {
    Scenario sc;
    bool has_uncertainty = false;
    double cv = 0.1;
    std::map<int, std::string> zones;
    CorrelationRule correlation;
};

inline LoadedScenario build_scenario(const ScenarioDocument& doc) {
    LoadedScenario out;
    AugmentedTrafficGraph base;
    base.nodes = doc.nodes;
    base.links = doc.base_links;
    base.od_pairs = doc.od_pairs;
    base.rebuild_indexes();
    out.sc.graph = augment_graph(base, doc.stations, doc.grid);
    enumerate_all_paths(out.sc.graph, doc.path_limit, doc.hop_limit);
    out.sc.grid = doc.grid;
    out.sc.config = doc.config;
    out.has_uncertainty = doc.has_uncertainty;
    out.cv = doc.cv;
    out.zones = doc.zones;
    out.correlation = doc.correlation;
    return out;
}

}  // namespace covnet
