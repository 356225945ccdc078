#pragma once

// End-to-end mechanism runs.
//
// DR-VCG: agents bid their cost types on every offered contract, the grid
// selects the cheapest valid set for the procurement target gamma * M (the
// reserve acting as a virtual bidder) and pays Clarke-pivot rewards. Selected
// agents pay the contract penalty on their realized reduction.
//
// DR-SCE: agents bid a quantity b and are paid $0.5 per kWh reduced between
// b/2 and 3b/2 (capped at 3b/4, nothing below b/2). The grid takes bidders in
// a given order until their bids reach the target and buys any remainder from
// the reserve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "drvcg/agents.hpp"
#include "drvcg/allocation.hpp"
#include "drvcg/common.hpp"
#include "drvcg/contracts.hpp"
#include "drvcg/reliability.hpp"

namespace drvcg {

enum class Mechanism { vcg, sce };

inline const char* to_string(Mechanism m) { return m == Mechanism::vcg ? "vcg" : "sce"; }

struct SelectedAgent {
    std::size_t agent = 0;
    std::string id;
    Contract contract;         ///< VCG: the assigned contract. SCE: the cliff contract equivalent to the bid.
    double quantity = 0.0;     ///< VCG: ell. SCE: the quantity bid b.
    double bid = 0.0;          ///< VCG: B_ij. SCE: 0, bids carry no price.
    std::size_t level = 0;     ///< effort level the agent plays
    EffortLevel effort;
    double reward = 0.0;       ///< VCG: r_i. SCE: expected reward E[r(b, X)].
    double expected_penalty = 0.0;
};

struct MechanismOutcome {
    Mechanism mechanism = Mechanism::vcg;
    double M = 0.0;
    double gamma = 1.0;
    double target = 0.0;  ///< procurement target gamma * M (kWh)
    std::vector<SelectedAgent> selected;
    RewardVector rewards;  ///< one entry per agent, 0 when unselected
    double reserve_quantity = 0.0;
    double external_cost = 0.0;
    double sum_of_bids = 0.0;  ///< VCG: SB* including the reserve bid
    double total_rewards = 0.0;
    double expected_penalties = 0.0;
    double expected_total_expense = 0.0;

    std::vector<ReductionDistribution> selected_outcomes() const {
        std::vector<ReductionDistribution> out;
        out.reserve(selected.size());
        for (const auto& s : selected) out.push_back(s.effort.outcome);
        return out;
    }
};

// ---------------------------------------------------------------------------
// DR-VCG

/// Truthful bids and the plans behind them, computed once per population so
/// several targets can be solved without re-deriving cost types.
struct VcgMarket {
    std::vector<AgentModel> agents;
    std::vector<Contract> contracts;
    std::optional<ReserveSchedule> reserve;
    double unit = 1.0;
    BidMatrix bids;                            ///< menu entry e of every agent is contract entry_contract[e]
    std::vector<std::size_t> entry_contract;
    std::vector<std::vector<CostPlan>> plans;  ///< [agent][entry]
};

inline VcgMarket make_vcg_market(std::vector<AgentModel> agents, std::vector<Contract> contracts,
                                 std::optional<ReserveSchedule> reserve, double unit) {
    if (!(unit > 0)) throw InvalidInput("allocation unit must be positive");
    if (reserve) validate(*reserve);
    VcgMarket m;
    m.unit = unit;
    m.reserve = reserve;
    m.bids.reserve = reserve;
    m.bids.unit = unit;
    std::vector<int> units;
    for (std::size_t j = 0; j < contracts.size(); ++j) {
        if (contracts[j].is_null()) continue;
        m.entry_contract.push_back(j);
        units.push_back(to_units(contracts[j].ell, unit, "contract " + contracts[j].id + " size"));
    }
    for (const auto& a : agents) {
        AgentBids row{a.id(), {}};
        std::vector<CostPlan> plans;
        row.menu.reserve(m.entry_contract.size());
        plans.reserve(m.entry_contract.size());
        for (std::size_t e = 0; e < m.entry_contract.size(); ++e) {
            const CostPlan p = optimal_plan(a, contracts[m.entry_contract[e]]);
            row.menu.push_back({units[e], p.total_cost});
            plans.push_back(p);
        }
        m.bids.agents.push_back(std::move(row));
        m.plans.push_back(std::move(plans));
    }
    m.agents = std::move(agents);
    m.contracts = std::move(contracts);
    return m;
}

/// gamma * M in allocation units, rounded up to the grid.
inline int procurement_units(double M, double gamma, double unit) {
    if (!(M >= 0) || !std::isfinite(M)) throw InvalidInput("reduction goal M must be finite and >= 0");
    if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw InvalidInput("safety margin gamma must be >= 1");
    return static_cast<int>(std::ceil(gamma * M / unit - 1e-9));
}

struct VcgOptions {
    bool naive_rewards = false;  ///< re-solve once per winner instead of using the prefix/suffix tables
};

inline MechanismOutcome run_dr_vcg(const VcgMarket& market, double M, double gamma, VcgOptions opt = {}) {
    const int target = procurement_units(M, gamma, market.unit);
    const AllocationTables tables(market.bids, target);
    const Solution sol = tables.solution(market.bids);
    const RewardVector rewards = opt.naive_rewards ? clarke_rewards(market.bids, target)
                                                   : clarke_rewards_fast(tables, sol, market.agents.size());

    MechanismOutcome out;
    out.mechanism = Mechanism::vcg;
    out.M = M;
    out.gamma = gamma;
    out.target = target * market.unit;
    out.rewards = rewards;
    out.sum_of_bids = sol.sb_star;
    out.reserve_quantity = sol.assignment.reserve_units * market.unit;
    out.external_cost = sol.assignment.reserve_cost;
    for (const auto& p : sol.assignment.pairs) {
        const AgentModel& a = market.agents[p.agent];
        const CostPlan& plan = market.plans[p.agent][p.entry];
        SelectedAgent s;
        s.agent = p.agent;
        s.id = a.id();
        s.contract = market.contracts[market.entry_contract[p.entry]];
        s.quantity = s.contract.ell;
        s.bid = p.bid;
        s.level = plan.level;
        s.effort = a.level(plan.level);
        s.reward = rewards[p.agent];
        s.expected_penalty = plan.expected_penalty;
        out.total_rewards += s.reward;
        out.expected_penalties += s.expected_penalty;
        out.selected.push_back(std::move(s));
    }
    out.expected_total_expense = out.total_rewards + out.external_cost - out.expected_penalties;
    return out;
}

inline MechanismOutcome run_dr_vcg(std::vector<AgentModel> agents, std::vector<Contract> contracts,
                                   std::optional<ReserveSchedule> reserve, double M, double gamma, double unit,
                                   VcgOptions opt = {}) {
    return run_dr_vcg(make_vcg_market(std::move(agents), std::move(contracts), std::move(reserve), unit), M, gamma, opt);
}

// ---------------------------------------------------------------------------
// DR-SCE

inline double sce_reward(double b, double x) {
    if (x < b / 2.0) return 0.0;
    if (x < 1.5 * b) return x / 2.0;
    return 0.75 * b;
}

/// E[sce_reward(b, X)].
inline double sce_expected_reward(double b, const ReductionDistribution& d) {
    if (const auto* pt = std::get_if<Point>(&d)) return sce_reward(b, pt->q);
    if (const auto* br = std::get_if<Bernoulli>(&d)) return br->p * sce_reward(b, br->q) + (1 - br->p) * sce_reward(b, 0.0);
    const auto& u = std::get<Uniform>(d);
    if (u.hi == u.lo) return sce_reward(b, u.lo);
    const double w = u.hi - u.lo;
    const double s = std::max(u.lo, b / 2.0);
    const double e = std::min(u.hi, 1.5 * b);
    double v = 0.0;
    if (e > s) v += (e * e - s * s) / 4.0 / w;
    const double top = std::max(u.lo, 1.5 * b);
    if (u.hi > top) v += 0.75 * b * (u.hi - top) / w;
    return v;
}

struct SceBid {
    double b = 0.0;
    std::size_t level = 0;
    double expected_reward = 0.0;
    double utility = 0.0;  ///< expected reward minus the level's cost
};

namespace detail {

/// Best quantity bid for one reduction distribution and its expected reward.
inline std::pair<double, double> best_sce_quantity(const ReductionDistribution& d) {
    if (const auto* pt = std::get_if<Point>(&d)) return {pt->q, pt->q / 2.0};
    if (const auto* br = std::get_if<Bernoulli>(&d)) return {br->q, br->p * br->q / 2.0};
    const auto& u = std::get<Uniform>(d);
    // Every X in [lo, hi] earns X / 2 when b/2 <= lo and hi < 3b/2.
    const double lo_b = 2.0 * u.hi / 3.0;
    const double hi_b = 2.0 * u.lo;
    if (lo_b <= hi_b) {
        const double b = std::clamp(0.5 * (u.lo + u.hi), lo_b, hi_b);
        return {b, sce_expected_reward(b, d)};
    }
    // Otherwise scan, then refine the best bracket with Brent's method.
    constexpr int kScan = 400;
    const double top = 2.0 * u.hi;
    int best = 1;
    double best_v = -1.0;
    for (int i = 1; i <= kScan; ++i) {
        const double v = sce_expected_reward(top * i / kScan, d);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    const double a = top * (best - 1) / kScan;
    const double c = top * std::min(best + 1, kScan) / kScan;
    const auto neg = [&](double b) { return -sce_expected_reward(b, d); };
    const auto [b, negv] = boost::math::tools::brent_find_minima(neg, a, c, 50);
    std::pair<double, double> out{top * best / kScan, best_v};
    if (-negv >= out.second) out = {b, -negv};
    // the reward is piecewise quadratic in b; a maximum at a kink is exact only when evaluated there
    for (const double k : {2.0 * u.lo / 3.0, 2.0 * u.hi / 3.0, 2.0 * u.lo, 2.0 * u.hi}) {
        if (!(k > 0)) continue;
        const double v = sce_expected_reward(k, d);
        if (v > out.second) out = {k, v};
    }
    return out;
}

}  // namespace detail

/// The agent's dominant-strategy quantity bid, or nullopt when no level earns
/// more in expectation than it costs.
inline std::optional<SceBid> sce_optimal_bid(const AgentModel& a) {
    std::optional<SceBid> best;
    const auto levels = a.levels();
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i].is_null()) continue;
        const auto [b, reward] = detail::best_sce_quantity(levels[i].outcome);
        const SceBid cand{b, i, reward, reward - levels[i].cost};
        if (!best || cand.utility > best->utility + kMoneyTolerance ||
            (money_equal(cand.utility, best->utility) && levels[i].cost < levels[best->level].cost)) {
            best = cand;
        }
    }
    if (!best || best->utility <= 0.0) return std::nullopt;
    return best;
}

struct SceMarket {
    std::vector<AgentModel> agents;
    std::optional<ReserveSchedule> reserve;
    std::vector<std::optional<SceBid>> bids;  ///< per agent, nullopt = does not participate

    std::vector<std::size_t> participants() const {
        std::vector<std::size_t> p;
        for (std::size_t i = 0; i < bids.size(); ++i)
            if (bids[i]) p.push_back(i);
        return p;
    }
};

inline SceMarket make_sce_market(std::vector<AgentModel> agents, std::optional<ReserveSchedule> reserve) {
    if (reserve) validate(*reserve);
    SceMarket m;
    m.bids.reserve(agents.size());
    for (const auto& a : agents) m.bids.push_back(sce_optimal_bid(a));
    m.agents = std::move(agents);
    m.reserve = std::move(reserve);
    return m;
}

/// Selects participants in `order` (agent indices; non-participants are
/// skipped) until their bids reach gamma * M.
inline MechanismOutcome run_dr_sce(const SceMarket& market, double M, double gamma, std::span<const std::size_t> order) {
    if (!(M >= 0) || !std::isfinite(M)) throw InvalidInput("reduction goal M must be finite and >= 0");
    if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw InvalidInput("safety margin gamma must be >= 1");
    std::vector<bool> seen(market.agents.size(), false);
    for (const auto i : order) {
        if (i >= market.agents.size() || seen[i]) throw InvalidInput("selection order must list distinct agent indices");
        seen[i] = true;
    }
    for (const auto i : market.participants())
        if (!seen[i]) throw InvalidInput("selection order omits participating agent " + market.agents[i].id());

    MechanismOutcome out;
    out.mechanism = Mechanism::sce;
    out.M = M;
    out.gamma = gamma;
    out.target = gamma * M;
    out.rewards.assign(market.agents.size(), 0.0);
    const double tol = 1e-9 * std::max(1.0, out.target);
    double covered = 0.0;
    for (const auto i : order) {
        if (covered >= out.target - tol) break;
        const auto& bid = market.bids[i];
        if (!bid) continue;
        const AgentModel& a = market.agents[i];
        SelectedAgent s;
        s.agent = i;
        s.id = a.id();
        s.contract = sce_equivalent_of_bid(bid->b);
        s.quantity = bid->b;
        s.level = bid->level;
        s.effort = a.level(bid->level);
        s.reward = bid->expected_reward;
        out.rewards[i] = s.reward;
        out.total_rewards += s.reward;
        covered += bid->b;
        out.selected.push_back(std::move(s));
    }
    const double shortfall = out.target - covered;
    if (shortfall > tol && market.reserve) {
        out.reserve_quantity = shortfall;
        out.external_cost = reserve_cost(*market.reserve, shortfall);
    }
    out.expected_total_expense = out.total_rewards + out.external_cost;
    return out;
}

/// Fisher-Yates shuffle driven by unit_uniform, so orders are portable.
inline void shuffle_portable(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = std::min(i - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i)));
        std::swap(v[i - 1], v[j]);
    }
}

inline MechanismOutcome run_dr_sce(const SceMarket& market, double M, double gamma, Rng& rng) {
    auto order = market.participants();
    shuffle_portable(order, rng);
    return run_dr_sce(market, M, gamma, order);
}

/// DR-SCE averaged over the random selection order.
struct SceExpectation {
    struct Run {
        MechanismOutcome outcome;
        double weight = 0.0;
    };
    std::vector<Run> runs;
    bool exact = true;  ///< all orders enumerated (otherwise sampled)
    double expected_total_expense = 0.0;
    double mean_selected = 0.0;
    double mean_external_cost = 0.0;
    double mean_reserve_quantity = 0.0;
    double reserve_use_probability = 0.0;  ///< weight of orders that need the reserve
};

struct SceExpectationOptions {
    std::size_t exact_limit = 8;         ///< enumerate all orders up to this many participants
    std::size_t order_samples = 16;      ///< sampled orders beyond it
    std::uint64_t seed = 0;
};

inline SceExpectation expected_dr_sce(const SceMarket& market, double M, double gamma, SceExpectationOptions opt = {}) {
    SceExpectation ex;
    auto order = market.participants();
    if (order.size() <= opt.exact_limit) {
        std::vector<MechanismOutcome> outs;
        do {
            outs.push_back(run_dr_sce(market, M, gamma, order));
        } while (std::next_permutation(order.begin(), order.end()));
        const double w = 1.0 / static_cast<double>(outs.size());
        for (auto& o : outs) ex.runs.push_back({std::move(o), w});
    } else {
        if (opt.order_samples < 1) throw InvalidInput("order sample count must be >= 1");
        ex.exact = false;
        const double w = 1.0 / static_cast<double>(opt.order_samples);
        for (std::size_t s = 0; s < opt.order_samples; ++s) {
            Rng rng(derive_seed(opt.seed, s));
            ex.runs.push_back({run_dr_sce(market, M, gamma, rng), w});
        }
    }
    for (const auto& r : ex.runs) {
        ex.expected_total_expense += r.weight * r.outcome.expected_total_expense;
        ex.mean_selected += r.weight * static_cast<double>(r.outcome.selected.size());
        ex.mean_external_cost += r.weight * r.outcome.external_cost;
        ex.mean_reserve_quantity += r.weight * r.outcome.reserve_quantity;
        if (r.outcome.reserve_quantity > 0.0) ex.reserve_use_probability += r.weight;
    }
    return ex;
}

/// Order-averaged Pr(sum X + reserve >= m) by exact convolution.
inline double expected_success_exact(const SceExpectation& ex, double m, double grid = 1.0) {
    double p = 0.0;
    for (const auto& r : ex.runs) {
        const auto outcomes = r.outcome.selected_outcomes();
        p += r.weight * success_prob_exact(outcomes, r.outcome.reserve_quantity, m, grid).probability;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Ex-post realization

struct RealizedAgent {
    std::size_t agent = 0;
    double reduction = 0.0;
    double penalty = 0.0;  ///< VCG only
    double payment = 0.0;  ///< net transfer from the grid to the agent
};

struct Realization {
    std::vector<RealizedAgent> agents;
    double total_reduction = 0.0;  ///< includes the reserve quantity
    double expense = 0.0;          ///< payments plus external cost
    bool met_target = false;       ///< against M, not gamma * M
};

inline Realization realize(const MechanismOutcome& outcome, Rng& rng) {
    Realization r;
    r.total_reduction = outcome.reserve_quantity;
    r.expense = outcome.external_cost;
    for (const auto& s : outcome.selected) {
        RealizedAgent ra;
        ra.agent = s.agent;
        ra.reduction = sample_reduction(s.effort, rng);
        if (outcome.mechanism == Mechanism::vcg) {
            ra.penalty = penalty(s.contract, ra.reduction);
            ra.payment = s.reward - ra.penalty;
        } else {
            ra.payment = sce_reward(s.quantity, ra.reduction);
        }
        r.total_reduction += ra.reduction;
        r.expense += ra.payment;
        r.agents.push_back(ra);
    }
    r.met_target = r.total_reduction >= outcome.M;
    return r;
}

}  // namespace drvcg
