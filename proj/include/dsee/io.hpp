#pragma once

// File formats: JSON documents for models, estimates and solutions; CSV for
// regret traces and event logs.

#include "dsee/dsee.hpp"
#include "dsee/error.hpp"
#include "dsee/estimation.hpp"
#include "dsee/mdp.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dsee::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kModelSchema = "dsee-mdp/1";
inline constexpr const char* kEmpiricalSchema = "dsee-empirical/1";

// --- MdpModel -------------------------------------------------------------

inline json reward_to_json(const RewardDist& dist) {
    struct Visitor {
        json operator()(const ConstantReward& d) const { return {{"kind", "constant"}, {"params", {{"v", d.value}}}}; }
        json operator()(const UniformReward& d) const {
            return {{"kind", "uniform"}, {"params", {{"lo", d.lo}, {"hi", d.hi}}}};
        }
        json operator()(const ScaledBernoulliReward& d) const {
            return {{"kind", "bernoulli_scaled"}, {"params", {{"p", d.p}}}};
        }
    };
    return std::visit(Visitor{}, dist);
}

inline RewardDist reward_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const json& p = j.at("params");
    if (kind == "constant") return ConstantReward{p.at("v").get<double>()};
    if (kind == "uniform") return UniformReward{p.at("lo").get<double>(), p.at("hi").get<double>()};
    if (kind == "bernoulli_scaled") return ScaledBernoulliReward{p.at("p").get<double>()};
    throw ConfigError("unknown reward kind '" + kind + "'");
}

inline json to_json(const MdpModel& m) {
    json transition = json::array();
    json rewards = json::array();
    for (std::size_t s = 0; s < m.num_states(); ++s) {
        json t_s = json::array();
        json r_s = json::array();
        for (std::size_t a = 0; a < m.num_actions(); ++a) {
            const auto row = m.row(s, a);
            t_s.push_back(std::vector<double>(row.begin(), row.end()));
            r_s.push_back(reward_to_json(m.reward_dist(s, a)));
        }
        transition.push_back(std::move(t_s));
        rewards.push_back(std::move(r_s));
    }
    json out = {{"schema", kModelSchema},
                {"num_states", m.num_states()},
                {"num_actions", m.num_actions()},
                {"gamma", m.discount()},
                {"r_max", m.r_max()},
                {"transition", std::move(transition)},
                {"rewards", std::move(rewards)}};
    if (!m.metadata.empty()) out["metadata"] = m.metadata;
    return out;
}

inline MdpModel model_from_json(const json& j) {
    try {
        if (j.contains("schema") && j.at("schema").get<std::string>() != kModelSchema)
            throw ConfigError("unsupported model schema '" + j.at("schema").get<std::string>() + "'");
        const auto ns = j.at("num_states").get<std::size_t>();
        const auto na = j.at("num_actions").get<std::size_t>();
        const json& t = j.at("transition");
        const json& r = j.at("rewards");
        if (t.size() != ns || r.size() != ns) throw ConfigError("model tables do not match num_states");
        std::vector<double> transition;
        std::vector<RewardDist> rewards;
        transition.reserve(ns * na * ns);
        rewards.reserve(ns * na);
        for (std::size_t s = 0; s < ns; ++s) {
            if (t[s].size() != na || r[s].size() != na) throw ConfigError("model tables do not match num_actions");
            for (std::size_t a = 0; a < na; ++a) {
                if (t[s][a].size() != ns) throw ConfigError("transition row has wrong length");
                for (const auto& p : t[s][a]) transition.push_back(p.get<double>());
                rewards.push_back(reward_from_json(r[s][a]));
            }
        }
        MdpModel model(ns, na, std::move(transition), std::move(rewards), j.at("gamma").get<double>(),
                       j.at("r_max").get<double>());
        if (j.contains("metadata")) model.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        return model;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model document: ") + e.what());
    }
}

// --- EmpiricalModel -------------------------------------------------------

inline json to_json(const EmpiricalModel& em) {
    const std::size_t ns = em.num_states();
    const std::size_t na = em.num_actions();
    json n_sa = json::array();
    json n_sas = json::array();
    json sums = json::array();
    for (std::size_t s = 0; s < ns; ++s) {
        json c_s = json::array();
        json t_s = json::array();
        json r_s = json::array();
        for (std::size_t a = 0; a < na; ++a) {
            c_s.push_back(em.count(s, a));
            json row = json::array();
            for (std::size_t next = 0; next < ns; ++next) row.push_back(em.count(s, a, next));
            t_s.push_back(std::move(row));
            r_s.push_back(em.reward_sum(s, a));
        }
        n_sa.push_back(std::move(c_s));
        n_sas.push_back(std::move(t_s));
        sums.push_back(std::move(r_s));
    }
    return {{"schema", kEmpiricalSchema}, {"num_states", ns},         {"num_actions", na}, {"r_max", em.r_max()},
            {"n_sa", std::move(n_sa)},    {"n_sas", std::move(n_sas)}, {"reward_sum", std::move(sums)}};
}

inline EmpiricalModel empirical_from_json(const json& j) {
    try {
        if (j.at("schema").get<std::string>() != kEmpiricalSchema) throw ConfigError("not an empirical-model snapshot");
        const auto ns = j.at("num_states").get<std::size_t>();
        const auto na = j.at("num_actions").get<std::size_t>();
        std::vector<std::uint64_t> n_sa;
        std::vector<std::uint64_t> n_sas;
        std::vector<double> sums;
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                n_sa.push_back(j.at("n_sa").at(s).at(a).get<std::uint64_t>());
                sums.push_back(j.at("reward_sum").at(s).at(a).get<double>());
                const json& row = j.at("n_sas").at(s).at(a);
                if (row.size() != ns) throw ConfigError("n_sas row has wrong length");
                for (const auto& c : row) n_sas.push_back(c.get<std::uint64_t>());
            }
        return EmpiricalModel(ns, na, j.at("r_max").get<double>(), std::move(n_sa), std::move(n_sas), std::move(sums));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed empirical snapshot: ") + e.what());
    }
}

// --- solutions ------------------------------------------------------------

inline json to_json(const ValueFunction& v) { return v.values; }
inline json to_json(const Policy& p) { return p.actions; }

// --- files ----------------------------------------------------------------

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline void write_json_file(const std::string& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

inline MdpModel read_model(const std::string& path) { return model_from_json(read_json_file(path)); }
inline void write_model(const std::string& path, const MdpModel& m) { write_json_file(path, to_json(m)); }

// --- CSV ------------------------------------------------------------------

inline constexpr const char* kTraceHeader = "t,epoch,phase,instantaneous,cumulative";
inline constexpr const char* kEventHeader = "t,s,a,reward,s_next,counted_flag";

/// 64-bit FNV-1a, used to fingerprint written files.
class Fnv1a64 {
public:
    void update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            hash_ ^= c;
            hash_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const noexcept { return hash_; }
    std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out(16, '0');
        for (int i = 0; i < 16; ++i) out[15 - i] = digits[(hash_ >> (4 * i)) & 0xf];
        return out;
    }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

/// Writes the trace and returns the FNV-1a hash of the bytes written.
inline Fnv1a64 write_trace_csv(std::ostream& out, const RegretTrace& trace) {
    Fnv1a64 hash;
    std::string line = std::string(kTraceHeader) + '\n';
    hash.update(line);
    out << line;
    for (const TraceRow& r : trace.rows()) {
        line.clear();
        line += std::to_string(r.t);
        line += ',';
        line += std::to_string(r.epoch);
        line += ',';
        line += to_string(r.phase);
        line += ',';
        line += format_double(r.instantaneous);
        line += ',';
        line += format_double(r.cumulative);
        line += '\n';
        hash.update(line);
        out << line;
    }
    return hash;
}

inline void write_events_csv(std::ostream& out, const std::vector<Event>& events) {
    out << kEventHeader << '\n';
    for (const Event& e : events)
        out << e.t << ',' << e.state << ',' << e.action << ',' << format_double(e.reward) << ',' << e.next_state << ','
            << (e.counted ? 1 : 0) << '\n';
}

namespace detail {

inline double parse_double(const std::string& field) {
    double x = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
        throw ConfigError("bad numeric field '" + field + "'");
    return x;
}

inline std::uint64_t parse_u64(const std::string& field) {
    std::uint64_t x = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
        throw ConfigError("bad integer field '" + field + "'");
    return x;
}

} // namespace detail

inline std::vector<TraceRow> read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) throw ConfigError("trace CSV header mismatch");
    std::vector<TraceRow> rows;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        fields.clear();
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 5) throw ConfigError("trace row needs 5 fields: '" + line + "'");
        TraceRow r;
        r.t = detail::parse_u64(fields[0]);
        r.epoch = static_cast<std::size_t>(detail::parse_u64(fields[1]));
        if (fields[2] == "explore") r.phase = Phase::explore;
        else if (fields[2] == "exploit") r.phase = Phase::exploit;
        else throw ConfigError("unknown phase '" + fields[2] + "'");
        r.instantaneous = detail::parse_double(fields[3]);
        r.cumulative = detail::parse_double(fields[4]);
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<TraceRow> read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return read_trace_csv(in);
}

} // namespace dsee::io
