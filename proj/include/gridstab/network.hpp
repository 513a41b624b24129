#pragma once

#include "gridstab/common.hpp"
#include "gridstab/machine_params.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace gridstab {

enum class BusKind { Slack, PV, PQ };

inline std::string to_string(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "Slack";
        case BusKind::PV: return "PV";
        default: return "PQ";
    }
}

inline BusKind bus_kind_from_string(const std::string& s) {
    if (s == "Slack" || s == "slack") return BusKind::Slack;
    if (s == "PV" || s == "pv") return BusKind::PV;
    if (s == "PQ" || s == "pq") return BusKind::PQ;
    throw ParseError("unknown bus kind '" + s + "'");
}

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    Real base_kv = 0.0;
    Real v_mag = 1.0;      // pu, initial guess or solved value
    Real v_ang = 0.0;      // rad
    Real p_load = 0.0;     // pu on system base
    Real q_load = 0.0;     // pu on system base
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    Real r = 0.0;          // pu
    Real x = 0.0;          // pu
    Real b_shunt = 0.0;    // pu, total line charging
    Real z_mag = 0.0;      // pu, sqrt(r^2 + x^2)
    std::optional<Real> rating;  // pu MVA limit

    static Branch make(int from, int to, Real r, Real x, Real b,
                       std::optional<Real> rating = std::nullopt) {
        Branch br;
        br.from_bus = from;
        br.to_bus = to;
        br.r = r;
        br.x = x;
        br.b_shunt = b;
        br.z_mag = std::hypot(r, x);
        br.rating = rating;
        return br;
    }
};

struct GeneratorSpec {
    int bus = 0;
    Real p_set = 0.0;      // pu scheduled active power, system base
    Real v_set = 1.0;      // pu voltage setpoint
    Real mva_base = 100.0; // machine MVA base
    Real q_min = -1e9;     // pu reactive limits, system base
    Real q_max = 1e9;
    MachineParams dynamic_params{};
};

/// What an attached spur feeds (filled in by scenario config).
enum class AttachmentKind { Ev, Pv };

struct Attachment {
    AttachmentKind kind = AttachmentKind::Ev;
    int host_bus = 0;    // bus the spur hangs off
    int spur_bus = 0;    // the new leaf bus
    Real length_km = 0.0;
};

/// Spur-line constants, ohms per km. Typical overhead-line values;
/// overridable per attachment.
struct SpurImpedance {
    Real r_ohm_per_km = 0.05;
    Real x_ohm_per_km = 0.40;
    Real extra_r_ohm = 0.0;  // series lead resistance lumped into the spur
};

// Per-unit conversions.
inline Real mw_to_pu(Real mw, Real s_base_mva) { return mw / s_base_mva; }
inline Real pu_to_mw(Real pu, Real s_base_mva) { return pu * s_base_mva; }
inline Real ohm_to_pu(Real ohm, Real base_kv, Real s_base_mva) {
    return ohm * s_base_mva / (base_kv * base_kv);
}
inline Real pu_to_ohm(Real pu, Real base_kv, Real s_base_mva) {
    return pu * (base_kv * base_kv) / s_base_mva;
}

inline constexpr Real kMinSpurImpedancePu = 1e-6;

class Network {
public:
    Real f_sys = 60.0;       // Hz
    Real s_base = 100.0;     // MVA
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<GeneratorSpec> generators;
    std::vector<Attachment> attachments;

    int bus_index(int id) const {
        auto it = index_.find(id);
        if (it == index_.end())
            throw ValidationError("unknown bus id " + std::to_string(id));
        return it->second;
    }

    bool has_bus(int id) const { return index_.count(id) != 0; }

    const Bus& bus(int id) const { return buses[static_cast<size_t>(bus_index(id))]; }
    Bus& bus(int id) { return buses[static_cast<size_t>(bus_index(id))]; }

    int max_bus_id() const {
        int m = 0;
        for (const auto& b : buses) m = std::max(m, b.id);
        return m;
    }

    void add_bus(const Bus& b) {
        if (index_.count(b.id))
            throw ValidationError("duplicate bus id " + std::to_string(b.id));
        index_[b.id] = static_cast<int>(buses.size());
        buses.push_back(b);
    }

    void add_branch(const Branch& br) { branches.push_back(br); }

    const GeneratorSpec* generator_at(int bus_id) const {
        for (const auto& g : generators)
            if (g.bus == bus_id) return &g;
        return nullptr;
    }

    bool is_connected() const {
        if (buses.empty()) return false;
        std::map<int, std::vector<int>> adj;
        for (const auto& br : branches) {
            adj[br.from_bus].push_back(br.to_bus);
            adj[br.to_bus].push_back(br.from_bus);
        }
        std::map<int, bool> seen;
        std::queue<int> q;
        q.push(buses.front().id);
        seen[buses.front().id] = true;
        size_t count = 0;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            ++count;
            for (int v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    q.push(v);
                }
            }
        }
        return count == buses.size();
    }

    /// Check all structural invariants; throws ValidationError naming the
    /// offending element.
    void validate() const {
        if (buses.empty()) throw ValidationError("network has no buses");
        if (f_sys != 60.0)
            throw ValidationError("system frequency must be 60 Hz, got " +
                                  std::to_string(f_sys));
        if (s_base <= 0.0) throw ValidationError("system MVA base must be positive");

        int n_slack = 0;
        for (const auto& b : buses) {
            if (b.kind == BusKind::Slack) ++n_slack;
            if (b.base_kv <= 0.0)
                throw ValidationError("bus " + std::to_string(b.id) +
                                      " has non-positive base_kv");
        }
        if (n_slack != 1)
            throw ValidationError("expected exactly one slack bus, found " +
                                  std::to_string(n_slack));

        for (const auto& br : branches) {
            std::string tag = "branch " + std::to_string(br.from_bus) + "-" +
                              std::to_string(br.to_bus);
            if (!has_bus(br.from_bus) || !has_bus(br.to_bus))
                throw ValidationError(tag + " references an unknown bus");
            if (br.from_bus == br.to_bus)
                throw ValidationError(tag + " is a self-loop");
            if (br.x == 0.0) throw ValidationError(tag + " has zero reactance");
            if (std::abs(br.z_mag * br.z_mag - (br.r * br.r + br.x * br.x)) > 1e-12)
                throw ValidationError(tag + " has inconsistent impedance magnitude");
        }

        for (const auto& g : generators) {
            if (!has_bus(g.bus))
                throw ValidationError("generator references unknown bus " +
                                      std::to_string(g.bus));
            if (bus(g.bus).kind == BusKind::PQ)
                throw ValidationError("generator attached to PQ bus " +
                                      std::to_string(g.bus));
            if (g.mva_base <= 0.0)
                throw ValidationError("generator at bus " + std::to_string(g.bus) +
                                      " has non-positive MVA base");
        }

        if (!is_connected()) throw ValidationError("network graph is not connected");
    }

    void rebuild_index() {
        index_.clear();
        for (size_t i = 0; i < buses.size(); ++i) {
            if (index_.count(buses[i].id))
                throw ValidationError("duplicate bus id " + std::to_string(buses[i].id));
            index_[buses[i].id] = static_cast<int>(i);
        }
    }

private:
    std::map<int, int> index_;
};

/// Hang a new leaf bus off `host_bus` through a spur line of the given
/// length. Impedance below the floor is clamped to keep the admittance
/// matrix nonsingular. Returns the modified network and the new bus id.
inline Network attach_spur(const Network& net, int host_bus, Real length_km,
                           AttachmentKind kind, const SpurImpedance& z = {}) {
    if (length_km < 0.0) throw ValidationError("spur length must be >= 0 km");
    Network out = net;
    out.rebuild_index();
    const Bus& host = out.bus(host_bus);

    Bus leaf;
    leaf.id = out.max_bus_id() + 1;
    leaf.kind = BusKind::PQ;
    leaf.base_kv = host.base_kv;
    leaf.v_mag = 1.0;
    out.add_bus(leaf);

    Real r_pu = ohm_to_pu(z.r_ohm_per_km * length_km + z.extra_r_ohm,
                          host.base_kv, out.s_base);
    Real x_pu = ohm_to_pu(z.x_ohm_per_km * length_km, host.base_kv, out.s_base);
    if (std::hypot(r_pu, x_pu) < kMinSpurImpedancePu) {
        r_pu = 0.0;
        x_pu = kMinSpurImpedancePu;
    }
    out.add_branch(Branch::make(host_bus, leaf.id, r_pu, x_pu, 0.0));

    Attachment att;
    att.kind = kind;
    att.host_bus = host_bus;
    att.spur_bus = leaf.id;
    att.length_km = length_km;
    out.attachments.push_back(att);
    return out;
}

} // namespace gridstab
