#pragma once

// JSON encoding of contracts, reserves, agents, bid matrices, outcomes and
// scenarios. Readers throw InvalidInput with the offending field named.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drvcg/agents.hpp"
#include "drvcg/allocation.hpp"
#include "drvcg/contracts.hpp"
#include "drvcg/mechanisms.hpp"
#include "drvcg/simulate.hpp"

namespace drvcg::io {

using nlohmann::json;

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw InvalidInput(where + ": missing field '" + key + "'");
    return j.at(key);
}

inline double number(const json& j, const char* key, const std::string& where) {
    const json& v = field(j, key, where);
    if (!v.is_number()) throw InvalidInput(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
    return j.is_object() && j.contains(key) ? number(j, key, where) : fallback;
}

inline std::string string_or(const json& j, const char* key, std::string fallback) {
    if (j.is_object() && j.contains(key) && j.at(key).is_string()) return j.at(key).get<std::string>();
    return fallback;
}

template <class T>
T count(const json& j, const char* key, const std::string& where) {
    const json& v = field(j, key, where);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw InvalidInput(where + ": field '" + key + "' must be a nonnegative integer");
    return v.get<T>();
}

}  // namespace detail

// --- contracts --------------------------------------------------------------

inline json to_json(const Contract& c) {
    json scheme;
    if (const auto* f = std::get_if<FixedPenalty>(&c.scheme)) {
        scheme = {{"kind", "fixed"}, {"f", f->f}};
    } else {
        const auto& cl = std::get<CliffPenalty>(c.scheme);
        scheme = {{"kind", "cliff"}, {"f", cl.f}, {"alpha", cl.alpha}, {"beta", cl.beta}};
    }
    return {{"id", c.id}, {"ell", c.ell}, {"scheme", scheme}};
}

inline Contract contract_from_json(const json& j) {
    const std::string id = detail::string_or(j, "id", "");
    const std::string where = "contract " + id;
    const double ell = detail::number(j, "ell", where);
    const json& s = detail::field(j, "scheme", where);
    const std::string kind = detail::string_or(s, "kind", "");
    if (kind == "fixed") return make_fixed(ell, detail::number(s, "f", where), id);
    if (kind == "cliff")
        return make_cliff(ell, detail::number(s, "f", where), detail::number(s, "alpha", where),
                          detail::number(s, "beta", where), id);
    throw InvalidInput(where + ": scheme kind must be 'fixed' or 'cliff'");
}

inline ContractFamily family_from_json(const json& j) {
    const std::string kind = detail::string_or(j, "family", "sce");
    if (kind == "sce") return ContractFamily::sce();
    if (kind == "doubled") return ContractFamily::doubled();
    if (kind == "linear") return ContractFamily::linear();
    if (kind == "fixed") return ContractFamily::fixed(detail::number(j, "f", "contract grid"));
    throw InvalidInput("contract grid: family must be sce, doubled, linear or fixed");
}

inline json to_json(const ContractGridSpec& g) {
    json j{{"step", g.step}, {"max", g.max}, {"family", g.family.name()}};
    if (g.family.kind == ContractFamily::Kind::fixed) j["f"] = g.family.f;
    return j;
}

inline ContractGridSpec grid_from_json(const json& j) {
    return {detail::number(j, "step", "contract grid"), detail::number(j, "max", "contract grid"), family_from_json(j)};
}

/// Either an explicit "contracts" list or a "contract_grid" {step, max, family}.
inline std::vector<Contract> contracts_from_json(const json& doc) {
    if (doc.contains("contracts")) {
        std::vector<Contract> out;
        for (const auto& c : doc.at("contracts")) out.push_back(contract_from_json(c));
        return out;
    }
    if (doc.contains("contract_grid")) {
        const auto g = grid_from_json(doc.at("contract_grid"));
        return contract_grid(g.step, g.max, g.family);
    }
    throw InvalidInput("input needs 'contracts' or 'contract_grid'");
}

inline json to_json(const ReserveSchedule& r) {
    if (const auto* lin = std::get_if<LinearReserve>(&r)) return {{"kind", "linear"}, {"slope", lin->slope}};
    if (const auto* aff = std::get_if<AffineReserve>(&r)) return {{"kind", "affine"}, {"fixed", aff->fixed}, {"slope", aff->slope}};
    json pts = json::array();
    for (const auto& [q, c] : std::get<TableReserve>(r).points) pts.push_back({q, c});
    return {{"kind", "table"}, {"points", pts}};
}

inline ReserveSchedule reserve_from_json(const json& j) {
    const std::string kind = detail::string_or(j, "kind", "");
    ReserveSchedule r;
    if (kind == "linear") {
        r = LinearReserve{detail::number(j, "slope", "reserve")};
    } else if (kind == "affine") {
        r = AffineReserve{detail::number(j, "fixed", "reserve"), detail::number(j, "slope", "reserve")};
    } else if (kind == "table") {
        TableReserve t;
        for (const auto& p : detail::field(j, "points", "reserve")) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                throw InvalidInput("reserve: table points must be [quantity, cost] pairs");
            t.points.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
        r = std::move(t);
    } else {
        throw InvalidInput("reserve: kind must be linear, affine or table");
    }
    validate(r);
    return r;
}

inline std::optional<ReserveSchedule> optional_reserve(const json& doc) {
    if (!doc.contains("reserve") || doc.at("reserve").is_null()) return std::nullopt;
    return reserve_from_json(doc.at("reserve"));
}

// --- agents -----------------------------------------------------------------

inline json to_json(const ReductionDistribution& d) {
    if (const auto* b = std::get_if<Bernoulli>(&d)) return {{"kind", "bernoulli"}, {"q", b->q}, {"p", b->p}};
    if (const auto* u = std::get_if<Uniform>(&d)) return {{"kind", "uniform"}, {"lo", u->lo}, {"hi", u->hi}};
    return {{"kind", "point"}, {"q", std::get<Point>(d).q}};
}

inline ReductionDistribution distribution_from_json(const json& j, const std::string& where) {
    const std::string kind = detail::string_or(j, "kind", "");
    ReductionDistribution d;
    if (kind == "bernoulli") d = Bernoulli{detail::number(j, "q", where), detail::number(j, "p", where)};
    else if (kind == "uniform") d = Uniform{detail::number(j, "lo", where), detail::number(j, "hi", where)};
    else if (kind == "point") d = Point{detail::number(j, "q", where)};
    else throw InvalidInput(where + ": outcome kind must be bernoulli, uniform or point");
    validate(d);
    return d;
}

inline json to_json(const EffortLevel& l) { return {{"cost", l.cost}, {"outcome", to_json(l.outcome)}}; }

inline json to_json(const AgentModel& a) {
    json levels = json::array();
    for (const auto& l : a.levels()) levels.push_back(to_json(l));
    return {{"id", a.id()}, {"levels", levels}};
}

inline AgentModel agent_from_json(const json& j) {
    const std::string id = detail::string_or(j, "id", "");
    const std::string where = "agent " + id;
    std::vector<EffortLevel> levels;
    for (const auto& l : detail::field(j, "levels", where))
        levels.push_back({detail::number(l, "cost", where), distribution_from_json(detail::field(l, "outcome", where), where)});
    return AgentModel(id, std::move(levels));
}

inline std::vector<AgentModel> agents_from_json(const json& doc) {
    std::vector<AgentModel> out;
    for (const auto& a : detail::field(doc, "agents", "input")) out.push_back(agent_from_json(a));
    return out;
}

// --- bids and assignments ---------------------------------------------------

inline json to_json(const BidMatrix& b) {
    json agents = json::array();
    for (const auto& a : b.agents) {
        json menu = json::array();
        for (const auto& e : a.menu) menu.push_back({{"units", e.units}, {"bid", e.bid}});
        agents.push_back({{"id", a.id}, {"menu", menu}});
    }
    json j{{"unit", b.unit}, {"agents", agents}};
    if (b.reserve) j["reserve"] = to_json(*b.reserve);
    return j;
}

inline BidMatrix bid_matrix_from_json(const json& j) {
    BidMatrix b;
    b.unit = detail::number_or(j, "unit", 1.0, "bid matrix");
    if (!(b.unit > 0)) throw InvalidInput("bid matrix: unit must be positive");
    b.reserve = optional_reserve(j);
    for (const auto& a : detail::field(j, "agents", "bid matrix")) {
        AgentBids row{detail::string_or(a, "id", std::to_string(b.agents.size() + 1)), {}};
        const std::string where = "bids of agent " + row.id;
        for (const auto& e : detail::field(a, "menu", where)) {
            const double bid = detail::number(e, "bid", where);
            row.menu.push_back({detail::count<int>(e, "units", where), bid});
        }
        b.agents.push_back(std::move(row));
    }
    return b;
}

inline json to_json(const BidMatrix& b, const Solution& s, const RewardVector& rewards) {
    json pairs = json::array();
    for (const auto& p : s.assignment.pairs) {
        pairs.push_back({{"agent", p.agent},
                         {"agent_id", b.agents[p.agent].id},
                         {"entry", p.entry},
                         {"units", p.units},
                         {"ell", p.units * b.unit},
                         {"bid", p.bid},
                         {"reward", rewards[p.agent]}});
    }
    return {{"sb_star", s.sb_star},
            {"pairs", pairs},
            {"reserve_units", s.assignment.reserve_units},
            {"reserve_quantity", s.assignment.reserve_units * b.unit},
            {"reserve_cost", s.assignment.reserve_cost},
            {"total_commitment", s.assignment.total_commitment},
            {"sum_of_bids", s.assignment.sum_of_bids},
            {"rewards", rewards}};
}

// --- outcomes ---------------------------------------------------------------

inline json to_json(const MechanismOutcome& o) {
    json selected = json::array();
    for (const auto& s : o.selected) {
        selected.push_back({{"agent", s.agent},
                            {"id", s.id},
                            {"contract", to_json(s.contract)},
                            {"quantity", s.quantity},
                            {"bid", s.bid},
                            {"level", s.level},
                            {"effort", to_json(s.effort)},
                            {"reward", s.reward},
                            {"expected_penalty", s.expected_penalty}});
    }
    return {{"mechanism", to_string(o.mechanism)},
            {"M", o.M},
            {"gamma", o.gamma},
            {"target", o.target},
            {"selected", selected},
            {"rewards", o.rewards},
            {"reserve_quantity", o.reserve_quantity},
            {"external_cost", o.external_cost},
            {"sum_of_bids", o.sum_of_bids},
            {"total_rewards", o.total_rewards},
            {"expected_penalties", o.expected_penalties},
            {"expected_total_expense", o.expected_total_expense}};
}

inline json to_json(const SceExpectation& ex) {
    json runs = json::array();
    for (const auto& r : ex.runs) runs.push_back({{"weight", r.weight}, {"outcome", to_json(r.outcome)}});
    return {{"mechanism", "sce"},
            {"exact", ex.exact},
            {"expected_total_expense", ex.expected_total_expense},
            {"mean_selected", ex.mean_selected},
            {"mean_external_cost", ex.mean_external_cost},
            {"mean_reserve_quantity", ex.mean_reserve_quantity},
            {"reserve_use_probability", ex.reserve_use_probability},
            {"runs", runs}};
}

/// A selection for reliability queries: {"selected": [...], "reserve_quantity": r}.
/// Each selected item is either a distribution or an object with an "outcome"
/// or "effort": {"outcome"} member, so mechanism outcomes can be fed back in.
struct SelectionInput {
    std::vector<ReductionDistribution> outcomes;
    double reserve_quantity = 0.0;
    std::optional<double> m;
};

inline SelectionInput selection_from_json(const json& doc) {
    SelectionInput in;
    in.reserve_quantity = detail::number_or(doc, "reserve_quantity", 0.0, "selection");
    if (doc.contains("m")) in.m = detail::number(doc, "m", "selection");
    else if (doc.contains("M")) in.m = detail::number(doc, "M", "selection");
    for (const auto& s : detail::field(doc, "selected", "selection")) {
        const json* d = &s;
        if (s.contains("effort")) d = &s.at("effort").at("outcome");
        else if (s.contains("outcome")) d = &s.at("outcome");
        in.outcomes.push_back(distribution_from_json(*d, "selection"));
    }
    return in;
}

// --- scenarios --------------------------------------------------------------

inline json to_json(const PopulationSpec& p) {
    return {{"n", p.n},
            {"t_levels", p.t_levels},
            {"zipf_exponent", p.zipf_exponent},
            {"zipf_max", p.zipf_max},
            {"capacity_scale", p.capacity_scale},
            {"p_lo", p.p_lo},
            {"p_hi", p.p_hi},
            {"unit_cost_lo", p.unit_cost_lo},
            {"unit_cost_hi", p.unit_cost_hi}};
}

inline PopulationSpec population_from_json(const json& j) {
    PopulationSpec p;
    const std::string w = "population";
    if (j.contains("n")) p.n = detail::count<std::size_t>(j, "n", w);
    if (j.contains("t_levels")) p.t_levels = detail::count<std::size_t>(j, "t_levels", w);
    p.zipf_exponent = detail::number_or(j, "zipf_exponent", p.zipf_exponent, w);
    if (j.contains("zipf_max")) p.zipf_max = detail::count<int>(j, "zipf_max", w);
    p.capacity_scale = detail::number_or(j, "capacity_scale", p.capacity_scale, w);
    p.p_lo = detail::number_or(j, "p_lo", p.p_lo, w);
    p.p_hi = detail::number_or(j, "p_hi", p.p_hi, w);
    p.unit_cost_lo = detail::number_or(j, "unit_cost_lo", p.unit_cost_lo, w);
    p.unit_cost_hi = detail::number_or(j, "unit_cost_hi", p.unit_cost_hi, w);
    validate(p);
    return p;
}

inline json to_json(const Scenario& s) {
    return {{"population", to_json(s.population)},
            {"M", s.M},
            {"gamma_grid", s.gamma_grid},
            {"contracts", to_json(s.contracts)},
            {"reserve", to_json(s.reserve)},
            {"instances", s.instances},
            {"mc_samples", s.mc_samples},
            {"order_samples", s.order_samples},
            {"master_seed", s.master_seed}};
}

/// Missing fields keep their defaults.
inline Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw InvalidInput("scenario must be a JSON object");
    static const char* const known[] = {"population", "M",          "gamma_grid",    "contracts",  "reserve",
                                        "instances",  "mc_samples", "order_samples", "master_seed"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw InvalidInput("scenario: unknown field '" + key + "'");
    }
    Scenario s;
    const std::string w = "scenario";
    if (j.contains("population")) s.population = population_from_json(j.at("population"));
    s.M = detail::number_or(j, "M", s.M, w);
    if (j.contains("gamma_grid")) {
        s.gamma_grid.clear();
        for (const auto& g : j.at("gamma_grid")) {
            if (!g.is_number()) throw InvalidInput("scenario: gamma_grid must hold numbers");
            s.gamma_grid.push_back(g.get<double>());
        }
    }
    if (j.contains("contracts")) s.contracts = grid_from_json(j.at("contracts"));
    if (j.contains("reserve")) s.reserve = reserve_from_json(j.at("reserve"));
    if (j.contains("instances")) s.instances = detail::count<std::size_t>(j, "instances", w);
    if (j.contains("mc_samples")) s.mc_samples = detail::count<std::uint64_t>(j, "mc_samples", w);
    if (j.contains("order_samples")) s.order_samples = detail::count<std::size_t>(j, "order_samples", w);
    if (j.contains("master_seed")) s.master_seed = detail::count<std::uint64_t>(j, "master_seed", w);
    validate(s);
    return s;
}

inline json to_json(const ResultTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"gamma", r.gamma},
                        {"mechanism", to_string(r.mechanism)},
                        {"mean_expense", r.mean_expense},
                        {"mean_reliability", r.mean_reliability},
                        {"failure_fraction", r.failure_fraction},
                        {"mean_selected", r.mean_selected},
                        {"instances", r.instances},
                        {"seed", r.seed}});
    }
    return {{"rows", rows}};
}

}  // namespace drvcg::io
