#pragma once

#include "gridstab/network.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace gridstab {

namespace detail {

inline MachineParams machine_from_json(const nlohmann::json& j) {
    MachineParams m;
    m.h = j.value("h", m.h);
    m.d = j.value("d", m.d);
    m.x_d = j.value("x_d", m.x_d);
    m.x_q = j.value("x_q", m.x_q);
    m.xd_t = j.value("xd_t", m.xd_t);
    m.td0_t = j.value("td0_t", m.td0_t);
    if (j.contains("governor")) {
        const auto& g = j.at("governor");
        m.governor.droop_r = g.value("droop_r", m.governor.droop_r);
        m.governor.t_g = g.value("t_g", m.governor.t_g);
        m.governor.t_t = g.value("t_t", m.governor.t_t);
    }
    if (j.contains("exciter")) {
        const auto& e = j.at("exciter");
        m.exciter.k_a = e.value("k_a", m.exciter.k_a);
        m.exciter.t_a = e.value("t_a", m.exciter.t_a);
        m.exciter.efd_min = e.value("efd_min", m.exciter.efd_min);
        m.exciter.efd_max = e.value("efd_max", m.exciter.efd_max);
    }
    return m;
}

inline nlohmann::json machine_to_json(const MachineParams& m) {
    nlohmann::json j;
    j["h"] = m.h;
    j["d"] = m.d;
    j["x_d"] = m.x_d;
    j["x_q"] = m.x_q;
    j["xd_t"] = m.xd_t;
    j["td0_t"] = m.td0_t;
    j["governor"] = {{"droop_r", m.governor.droop_r},
                     {"t_g", m.governor.t_g},
                     {"t_t", m.governor.t_t}};
    j["exciter"] = {{"k_a", m.exciter.k_a},
                    {"t_a", m.exciter.t_a},
                    {"efd_min", m.exciter.efd_min},
                    {"efd_max", m.exciter.efd_max}};
    return j;
}

} // namespace detail

/// Build a Network from the JSON case schema. Loads arrive in engineering
/// units (MW/MVAr) and are converted to per-unit on the system base.
inline Network network_from_json(const nlohmann::json& j) {
    Network net;
    try {
        net.f_sys = j.at("f_sys_hz").get<Real>();
        net.s_base = j.at("s_base_mva").get<Real>();
        for (const auto& jb : j.at("buses")) {
            Bus b;
            b.id = jb.at("id").get<int>();
            b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
            b.base_kv = jb.at("base_kv").get<Real>();
            b.p_load = mw_to_pu(jb.value("p_load_mw", 0.0), net.s_base);
            b.q_load = mw_to_pu(jb.value("q_load_mvar", 0.0), net.s_base);
            b.v_mag = jb.value("v_set_pu", 1.0);
            net.add_bus(b);
        }
        for (const auto& jb : j.at("branches")) {
            Branch br = Branch::make(jb.at("from").get<int>(), jb.at("to").get<int>(),
                                     jb.value("r_pu", 0.0), jb.at("x_pu").get<Real>(),
                                     jb.value("b_pu", 0.0));
            if (jb.contains("rating_mva"))
                br.rating = mw_to_pu(jb.at("rating_mva").get<Real>(), net.s_base);
            net.add_branch(br);
        }
        for (const auto& jg : j.value("generators", nlohmann::json::array())) {
            GeneratorSpec g;
            g.bus = jg.at("bus").get<int>();
            g.p_set = mw_to_pu(jg.value("p_set_mw", 0.0), net.s_base);
            g.v_set = jg.value("v_set_pu", 1.0);
            g.mva_base = jg.value("mva_base", net.s_base);
            if (jg.contains("q_min_mvar"))
                g.q_min = mw_to_pu(jg.at("q_min_mvar").get<Real>(), net.s_base);
            if (jg.contains("q_max_mvar"))
                g.q_max = mw_to_pu(jg.at("q_max_mvar").get<Real>(), net.s_base);
            if (jg.contains("machine"))
                g.dynamic_params = detail::machine_from_json(jg.at("machine"));
            net.generators.push_back(g);
            if (net.has_bus(g.bus)) net.bus(g.bus).v_mag = g.v_set;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("case schema error: ") + e.what());
    }
    net.validate();
    return net;
}

inline Network load_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed JSON in '" + path + "': " + e.what());
    }
    return network_from_json(j);
}

inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["f_sys_hz"] = net.f_sys;
    j["s_base_mva"] = net.s_base;
    j["buses"] = nlohmann::json::array();
    for (const auto& b : net.buses) {
        j["buses"].push_back({{"id", b.id},
                              {"kind", to_string(b.kind)},
                              {"base_kv", b.base_kv},
                              {"p_load_mw", pu_to_mw(b.p_load, net.s_base)},
                              {"q_load_mvar", pu_to_mw(b.q_load, net.s_base)},
                              {"v_set_pu", b.v_mag}});
    }
    j["branches"] = nlohmann::json::array();
    for (const auto& br : net.branches) {
        nlohmann::json jb = {{"from", br.from_bus},
                             {"to", br.to_bus},
                             {"r_pu", br.r},
                             {"x_pu", br.x},
                             {"b_pu", br.b_shunt}};
        if (br.rating) jb["rating_mva"] = pu_to_mw(*br.rating, net.s_base);
        j["branches"].push_back(jb);
    }
    j["generators"] = nlohmann::json::array();
    for (const auto& g : net.generators) {
        j["generators"].push_back({{"bus", g.bus},
                                   {"p_set_mw", pu_to_mw(g.p_set, net.s_base)},
                                   {"v_set_pu", g.v_set},
                                   {"mva_base", g.mva_base},
                                   {"q_min_mvar", pu_to_mw(g.q_min, net.s_base)},
                                   {"q_max_mvar", pu_to_mw(g.q_max, net.s_base)},
                                   {"machine", detail::machine_to_json(g.dynamic_params)}});
    }
    return j;
}

inline std::string serialize_case(const Network& net) {
    return network_to_json(net).dump(2);
}

} // namespace gridstab
