#pragma once

// Winner determination and Clarke-pivot rewards.
//
// Agents bid on a menu of (quantity, bid) pairs and may hold at most one
// contract. The grid picks the set of contracts with the least total bid
// among those whose committed quantities reach the target. An optional
// reserve schedule acts as one more bidder whose menu is (m, R_m) for every
// m up to the target; it is paid its bid and never receives a reward.
//
// Quantities are integers in allocation units. Coverage is clamped at the
// target, which turns the selection into a covering knapsack over per-agent
// groups solved in O(rows * entries * target).
//
// Ties between equal-cost optima are broken by (1) more reserve units, then
// (2) the lexicographically smallest set of agent indices, where at each agent
// an entry that completes the target on its own wins, then fewer units, then
// the lower menu index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drvcg/common.hpp"
#include "drvcg/contracts.hpp"

namespace drvcg {

struct BidEntry {
    int units = 0;     ///< contract size in allocation units
    double bid = 0.0;  ///< B_ij
};

/// One agent's menu. Contracts it does not bid on are simply absent.
struct AgentBids {
    std::string id;
    std::vector<BidEntry> menu;
};

struct BidMatrix {
    std::vector<AgentBids> agents;
    std::optional<ReserveSchedule> reserve;
    double unit = 1.0;  ///< kWh per allocation unit; reserve prices are R(m * unit)
};

struct Selection {
    std::size_t agent = 0;  ///< index into BidMatrix::agents
    std::size_t entry = 0;  ///< index into that agent's menu
    int units = 0;
    double bid = 0.0;
};

struct Assignment {
    std::vector<Selection> pairs;  ///< sorted by agent index
    int reserve_units = 0;
    double reserve_cost = 0.0;
    int total_commitment = 0;  ///< agent units only
    double sum_of_bids = 0.0;  ///< includes the reserve's bid

    const Selection* find(std::size_t agent) const {
        for (const auto& p : pairs)
            if (p.agent == agent) return &p;
        return nullptr;
    }
};

struct Solution {
    Assignment assignment;
    double sb_star = 0.0;
};

/// Reward per agent, indexed like BidMatrix::agents; 0 for unselected agents.
using RewardVector = std::vector<double>;

namespace detail {

inline double tie_tolerance(double a, double b) {
    return kMoneyTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

/// A DP cell: best cost of a completion plus the reserve units it uses.
struct Cell {
    double cost = 0.0;
    int reserve = 0;
    bool ok = false;
};

/// True when a is strictly preferred to b.
inline bool better(const Cell& a, const Cell& b) {
    if (!a.ok) return false;
    if (!b.ok) return true;
    const double tol = tie_tolerance(a.cost, b.cost);
    if (a.cost < b.cost - tol) return true;
    if (a.cost > b.cost + tol) return false;
    return a.reserve > b.reserve;
}

inline bool same_value(const Cell& a, const Cell& b) {
    return a.ok && b.ok && a.reserve == b.reserve && std::abs(a.cost - b.cost) <= tie_tolerance(a.cost, b.cost);
}

struct CompiledEntry {
    int cover = 0;  ///< units clamped at the target
    int units = 0;
    double bid = 0.0;
    std::size_t index = 0;
    int reserve = 0;  ///< units this entry buys from the reserve
};

struct CompiledRow {
    static constexpr std::size_t kReserve = std::numeric_limits<std::size_t>::max();
    std::size_t agent = kReserve;
    std::vector<CompiledEntry> entries;
};

inline void validate_menu(const AgentBids& a) {
    for (const auto& e : a.menu) {
        if (e.units < 0) throw InvalidInput("agent " + a.id + ": contract units must be >= 0");
        if (!(e.bid >= 0) || !std::isfinite(e.bid)) throw InvalidInput("agent " + a.id + ": bids must be finite and >= 0");
    }
}

/// R(min(a + b, T)) <= R(a) + R(b) for all a, b in [0, T].
inline bool clamped_subadditive(const ReserveSchedule& r, const std::vector<double>& cost, int target) {
    if (std::holds_alternative<LinearReserve>(r) || std::holds_alternative<AffineReserve>(r)) return true;
    for (int a = 1; a <= target; ++a)
        for (int b = a; b <= target; ++b)
            if (cost[static_cast<std::size_t>(std::min(a + b, target))] >
                cost[static_cast<std::size_t>(a)] + cost[static_cast<std::size_t>(b)] + kMoneyTolerance)
                return false;
    return true;
}

}  // namespace detail

/// Reserve menu prices R(m * unit) for m = 0..target.
inline std::vector<double> reserve_menu(const ReserveSchedule& r, double unit, int target) {
    validate(r);
    std::vector<double> cost(static_cast<std::size_t>(target) + 1, 0.0);
    for (int m = 1; m <= target; ++m) cost[static_cast<std::size_t>(m)] = reserve_cost(r, m * unit);
    return cost;
}

/// DP tables for one (bid matrix, target) pair. Entries that can never appear
/// in a tie-broken optimum are dropped first: with a reserve whose prices are
/// subadditive under clamping, an entry is dropped when a smaller entry of the
/// same agent (or no contract) plus reserve for the gap costs no more.
class AllocationTables {
public:
    AllocationTables(const BidMatrix& b, int target) : target_(target), agents_(b.agents.size()) {
        if (target < 0) throw InvalidInput("target must be >= 0");
        for (const auto& a : b.agents) detail::validate_menu(a);
        std::vector<double> rcost;
        bool prune_with_reserve = false;
        if (b.reserve) {
            if (!(b.unit > 0)) throw InvalidInput("allocation unit must be positive");
            rcost = reserve_menu(*b.reserve, b.unit, target);
            prune_with_reserve = detail::clamped_subadditive(*b.reserve, rcost, target);
        }
        rows_.reserve(agents_ + 1);
        for (std::size_t i = 0; i < agents_; ++i) {
            rows_.push_back(compile_agent(b.agents[i], i, prune_with_reserve ? &rcost : nullptr));
        }
        if (b.reserve) {
            detail::CompiledRow row;
            for (int m = 1; m <= target; ++m)
                row.entries.push_back({m, m, rcost[static_cast<std::size_t>(m)], static_cast<std::size_t>(m), m});
            rows_.push_back(std::move(row));
            has_reserve_ = true;
        }
        build_suffix();
    }

    int target() const { return target_; }
    bool feasible() const { return suf(0, target_).ok; }

    double sb_star() const {
        require_feasible();
        return suf(0, target_).cost;
    }

    /// The tie-broken optimum, reconstructed forward from the suffix table.
    Solution solution(const BidMatrix& b) const {
        require_feasible();
        Solution out;
        out.sb_star = suf(0, target_).cost;
        int need = target_;
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            const auto& row = rows_[k];
            const detail::Cell want = suf(k, need);
            if (row.agent == detail::CompiledRow::kReserve) {
                if (want.reserve > 0) {
                    const auto& e = row.entries[static_cast<std::size_t>(want.reserve - 1)];
                    out.assignment.reserve_units = e.units;
                    out.assignment.reserve_cost = e.bid;
                    need = std::max(0, need - e.cover);
                }
                continue;
            }
            if (agent_free_completion(want, need)) continue;  // the empty set is lex-smallest
            const detail::CompiledEntry* pick = nullptr;
            for (const auto& e : row.entries) {
                const int rest = std::max(0, need - e.cover);
                const detail::Cell after = suf(k + 1, rest);
                if (!after.ok) continue;
                const detail::Cell cand{after.cost + e.bid, after.reserve + e.reserve, true};
                if (!detail::same_value(cand, want)) continue;
                if (pick == nullptr || entry_preferred(e, *pick, need)) pick = &e;
            }
            if (pick != nullptr) {
                const auto& src = b.agents[row.agent].menu[pick->index];
                out.assignment.pairs.push_back({row.agent, pick->index, src.units, src.bid});
                out.assignment.total_commitment += src.units;
                need = std::max(0, need - pick->cover);
            }
        }
        double sum = out.assignment.reserve_cost;
        for (const auto& p : out.assignment.pairs) sum += p.bid;
        out.assignment.sum_of_bids = sum;
        return out;
    }

    /// SB* with agent i removed; nullopt when that problem is infeasible.
    std::optional<double> sb_without(std::size_t agent) const { return sb_with_pinned(agent, 0); }

    /// SB* over the other agents when agent i is pinned to a free contract of
    /// the given size (units = 0 removes the agent).
    std::optional<double> sb_with_pinned(std::size_t agent, int units) const {
        if (agent >= agents_) throw InvalidInput("agent index out of range");
        if (units < 0) throw InvalidInput("contract units must be >= 0");
        ensure_prefix();
        const int cover = std::min(units, target_);
        std::optional<double> best;
        for (int a = 0; a <= target_; ++a) {
            const std::size_t at = agent * width() + static_cast<std::size_t>(a);
            if (!pre_ok_[at]) continue;
            const detail::Cell s = suf(agent + 1, std::max(0, target_ - a - cover));
            if (!s.ok) continue;
            const double v = pre_cost_[at] + s.cost;
            if (!best || v < *best) best = v;
        }
        return best;
    }

private:
    /// Whether the reserve alone (or nothing) attains the cell value `want` for `need`.
    bool agent_free_completion(const detail::Cell& want, int need) const {
        if (need == 0) return want.reserve == 0 && std::abs(want.cost) <= detail::tie_tolerance(want.cost, 0.0);
        if (!has_reserve_ || want.reserve < need) return false;
        const double r = rows_.back().entries[static_cast<std::size_t>(want.reserve - 1)].bid;
        return std::abs(want.cost - r) <= detail::tie_tolerance(want.cost, r);
    }

    static bool entry_preferred(const detail::CompiledEntry& a, const detail::CompiledEntry& b, int need) {
        const bool a_done = a.cover >= need;
        const bool b_done = b.cover >= need;
        if (a_done != b_done) return a_done;
        if (a.units != b.units) return a.units < b.units;
        return a.index < b.index;
    }

    detail::CompiledRow compile_agent(const AgentBids& a, std::size_t agent, const std::vector<double>* rcost) const {
        detail::CompiledRow row;
        row.agent = agent;
        std::vector<detail::CompiledEntry> es;
        for (std::size_t j = 0; j < a.menu.size(); ++j) {
            const auto& e = a.menu[j];
            if (e.units == 0) continue;  // the null contract is the same as no contract
            es.push_back({std::min(e.units, target_), e.units, e.bid, j, 0});
        }
        std::vector<bool> drop(es.size(), false);
        for (std::size_t x = 0; x < es.size(); ++x) {
            const auto& e = es[x];
            if (rcost) {
                const auto R = [&](int m) { return (*rcost)[static_cast<std::size_t>(m)]; };
                if (e.bid >= R(e.cover) - kMoneyTolerance) {
                    drop[x] = true;
                    continue;
                }
                for (std::size_t y = 0; y < es.size() && !drop[x]; ++y) {
                    const auto& o = es[y];
                    if (y == x || o.cover >= e.cover) continue;
                    if (o.bid + R(e.cover - o.cover) <= e.bid + kMoneyTolerance) drop[x] = true;
                }
                if (drop[x]) continue;
            }
            for (std::size_t y = 0; y < es.size(); ++y) {
                const auto& o = es[y];
                if (y == x || o.cover < e.cover) continue;
                const bool cheaper = o.bid < e.bid - kMoneyTolerance;
                const bool twin = o.units == e.units && o.bid == e.bid && o.index < e.index;
                if (cheaper || twin) {
                    drop[x] = true;
                    break;
                }
            }
        }
        for (std::size_t x = 0; x < es.size(); ++x)
            if (!drop[x]) row.entries.push_back(es[x]);
        return row;
    }

    std::size_t width() const { return static_cast<std::size_t>(target_) + 1; }

    const detail::Cell& suf(std::size_t k, int need) const { return suf_[k * width() + static_cast<std::size_t>(need)]; }

    void require_feasible() const {
        if (!feasible()) throw Infeasible("no valid contract set reaches the target of " + std::to_string(target_) + " units");
    }

    void build_suffix() {
        const std::size_t rows = rows_.size();
        suf_.assign((rows + 1) * width(), detail::Cell{});
        suf_[rows * width()] = detail::Cell{0.0, 0, true};
        for (std::size_t k = rows; k-- > 0;) {
            const auto& row = rows_[k];
            for (int need = 0; need <= target_; ++need) {
                detail::Cell best = suf(k + 1, need);
                for (const auto& e : row.entries) {
                    const detail::Cell& after = suf(k + 1, std::max(0, need - e.cover));
                    if (!after.ok) continue;
                    const detail::Cell cand{after.cost + e.bid, after.reserve + e.reserve, true};
                    if (detail::better(cand, best)) best = cand;
                }
                suf_[k * width() + static_cast<std::size_t>(need)] = best;
            }
        }
    }

    void ensure_prefix() const {
        if (!pre_cost_.empty()) return;
        const std::size_t w = width();
        pre_cost_.assign((agents_ + 1) * w, 0.0);
        pre_ok_.assign((agents_ + 1) * w, false);
        pre_ok_[0] = true;
        for (std::size_t k = 0; k < agents_; ++k) {
            const std::size_t src = k * w;
            const std::size_t dst = (k + 1) * w;
            for (std::size_t a = 0; a < w; ++a) {
                pre_cost_[dst + a] = pre_cost_[src + a];
                pre_ok_[dst + a] = pre_ok_[src + a];
            }
            for (std::size_t a = 0; a < w; ++a) {
                if (!pre_ok_[src + a]) continue;
                for (const auto& e : rows_[k].entries) {
                    const std::size_t to = std::min(w - 1, a + static_cast<std::size_t>(e.cover));
                    const double v = pre_cost_[src + a] + e.bid;
                    if (!pre_ok_[dst + to] || v < pre_cost_[dst + to]) {
                        pre_cost_[dst + to] = v;
                        pre_ok_[dst + to] = true;
                    }
                }
            }
        }
    }

    int target_ = 0;
    std::size_t agents_ = 0;
    bool has_reserve_ = false;
    std::vector<detail::CompiledRow> rows_;
    std::vector<detail::Cell> suf_;
    mutable std::vector<double> pre_cost_;
    mutable std::vector<bool> pre_ok_;
};

inline Solution solve(const BidMatrix& b, int target) { return AllocationTables(b, target).solution(b); }

/// Exhaustive search over every per-agent choice (including no contract) and
/// every reserve quantity. Testing oracle; returns a minimum-cost set without
/// the tie-breaking rules.
inline Solution brute_force_solve(const BidMatrix& b, int target, std::uint64_t max_combinations = 2'000'000) {
    if (target < 0) throw InvalidInput("target must be >= 0");
    if (b.agents.size() > 12) throw SizeLimit("brute force supports at most 12 agents");
    for (const auto& a : b.agents) detail::validate_menu(a);
    std::vector<double> rcost;
    if (b.reserve) rcost = reserve_menu(*b.reserve, b.unit, target);
    const std::uint64_t reserve_options = b.reserve ? static_cast<std::uint64_t>(target) + 1 : 1;
    std::uint64_t combos = reserve_options;
    for (const auto& a : b.agents) {
        combos *= a.menu.size() + 1;
        if (combos > max_combinations) throw SizeLimit("brute force enumeration exceeds " + std::to_string(max_combinations) + " combinations");
    }

    const std::size_t n = b.agents.size();
    std::vector<std::size_t> choice(n, 0);  // 0 = no contract, else menu index + 1
    std::optional<Solution> best;
    for (std::uint64_t r = 0; r < reserve_options; ++r) {
        std::fill(choice.begin(), choice.end(), 0);
        while (true) {
            long covered = static_cast<long>(r);
            double cost = b.reserve ? rcost[r] : 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (choice[i] == 0) continue;
                const auto& e = b.agents[i].menu[choice[i] - 1];
                covered += e.units;
                cost += e.bid;
            }
            if (covered >= target && (!best || cost < best->sb_star)) {
                Solution s;
                s.sb_star = cost;
                s.assignment.reserve_units = static_cast<int>(r);
                s.assignment.reserve_cost = b.reserve ? rcost[r] : 0.0;
                s.assignment.sum_of_bids = cost;
                for (std::size_t i = 0; i < n; ++i) {
                    if (choice[i] == 0) continue;
                    const auto& e = b.agents[i].menu[choice[i] - 1];
                    s.assignment.pairs.push_back({i, choice[i] - 1, e.units, e.bid});
                    s.assignment.total_commitment += e.units;
                }
                best = std::move(s);
            }
            std::size_t i = 0;
            while (i < n && ++choice[i] > b.agents[i].menu.size()) choice[i++] = 0;
            if (i == n) break;
        }
    }
    if (!best) throw Infeasible("no valid contract set reaches the target of " + std::to_string(target) + " units");
    return *best;
}

/// Clarke-pivot rewards by re-solving once per selected agent.
inline RewardVector clarke_rewards(const BidMatrix& b, int target) {
    const Solution s = solve(b, target);
    RewardVector r(b.agents.size(), 0.0);
    for (const auto& p : s.assignment.pairs) {
        BidMatrix without = b;
        without.agents[p.agent].menu.clear();
        const AllocationTables t(without, target);
        if (!t.feasible()) throw Infeasible("removing agent " + b.agents[p.agent].id + " leaves the target unreachable");
        r[p.agent] = t.sb_star() - (s.sb_star - p.bid);
    }
    return r;
}

/// Same rewards from one set of prefix and suffix tables.
inline RewardVector clarke_rewards_fast(const AllocationTables& t, const Solution& s, std::size_t agents) {
    RewardVector r(agents, 0.0);
    for (const auto& p : s.assignment.pairs) {
        const auto loo = t.sb_without(p.agent);
        if (!loo) throw Infeasible("removing agent " + std::to_string(p.agent) + " leaves the target unreachable");
        r[p.agent] = *loo - (s.sb_star - p.bid);
    }
    return r;
}

inline RewardVector clarke_rewards_fast(const BidMatrix& b, int target) {
    const AllocationTables t(b, target);
    return clarke_rewards_fast(t, t.solution(b), b.agents.size());
}

/// t_i^j: what the mechanism would pay agent i for contract j regardless of
/// i's own bids. SB*(N - i) minus the best cost of the others when i holds j for free.
inline double cost_independent_price(const AllocationTables& t, std::size_t agent, int units) {
    const auto without = t.sb_without(agent);
    const auto pinned = t.sb_with_pinned(agent, units);
    if (!without || !pinned) throw Infeasible("price undefined: target unreachable without agent " + std::to_string(agent));
    return *without - *pinned;
}

inline double cost_independent_price(const BidMatrix& b, int target, std::size_t agent, std::size_t entry) {
    if (agent >= b.agents.size() || entry >= b.agents[agent].menu.size()) throw InvalidInput("no such (agent, contract) pair");
    return cost_independent_price(AllocationTables(b, target), agent, b.agents[agent].menu[entry].units);
}

struct ClearingViolation {
    std::size_t agent = 0;
    std::string message;
};

struct MarketClearingReport {
    std::vector<ClearingViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks that every agent holds a contract maximizing t_i^j - B_ij (or holds
/// none when every such surplus is nonpositive).
inline MarketClearingReport verify_market_clearing(const BidMatrix& b, int target, const Assignment& a,
                                                   double tol = kMoneyTolerance) {
    const AllocationTables t(b, target);
    MarketClearingReport report;
    for (std::size_t i = 0; i < b.agents.size(); ++i) {
        const auto& menu = b.agents[i].menu;
        double best = 0.0;  // no contract
        std::size_t best_entry = menu.size();
        std::vector<double> surplus(menu.size());
        for (std::size_t j = 0; j < menu.size(); ++j) {
            surplus[j] = cost_independent_price(t, i, menu[j].units) - menu[j].bid;
            if (surplus[j] > best) {
                best = surplus[j];
                best_entry = j;
            }
        }
        const Selection* held = a.find(i);
        if (held == nullptr) {
            if (best > tol) {
                report.violations.push_back({i, "agent " + b.agents[i].id + " is unselected but contract " +
                                                    std::to_string(best_entry) + " has surplus " + std::to_string(best)});
            }
            continue;
        }
        const double mine = surplus[held->entry];
        if (mine < -tol) {
            report.violations.push_back({i, "agent " + b.agents[i].id + " holds a contract with negative surplus " +
                                                std::to_string(mine)});
        } else if (mine < best - tol) {
            report.violations.push_back({i, "agent " + b.agents[i].id + " holds contract " + std::to_string(held->entry) +
                                                " but contract " + std::to_string(best_entry) + " pays " +
                                                std::to_string(best - mine) + " more"});
        }
    }
    return report;
}

inline MarketClearingReport verify_market_clearing(const BidMatrix& b, int target) {
    return verify_market_clearing(b, target, solve(b, target).assignment);
}

}  // namespace drvcg
