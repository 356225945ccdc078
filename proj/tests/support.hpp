#pragma once

// Random instance generators shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drvcg/drvcg.hpp"

namespace drvcg::fixtures {

inline double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

inline int int_in(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(unit_uniform(rng) * static_cast<double>(hi - lo + 1));
}

/// k distinct contract sizes in 1..max_units, ascending.
inline std::vector<int> distinct_sizes(Rng& rng, int k, int max_units) {
    std::vector<int> all;
    for (int u = 1; u <= max_units; ++u) all.push_back(u);
    for (int i = 0; i < k && i < max_units; ++i) {
        const int j = int_in(rng, i, max_units - 1);
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(std::min(k, max_units)));
    std::sort(all.begin(), all.end());
    return all;
}

/// Bid matrix with n agents, up to k menu entries each, bids U[0, bid_max].
/// Some agents get partial menus so absent pairs are exercised.
inline BidMatrix random_bids(Rng& rng, int n, int k, int target, double bid_max, std::optional<ReserveSchedule> reserve) {
    BidMatrix b;
    b.unit = 1.0;
    b.reserve = std::move(reserve);
    for (int i = 0; i < n; ++i) {
        AgentBids a{"a" + std::to_string(i), {}};
        const int entries = int_in(rng, 1, k);
        for (const int u : distinct_sizes(rng, entries, std::max(1, target)))
            a.menu.push_back({u, std::round(uniform_in(rng, 0.0, bid_max) * 4.0) / 4.0});
        b.agents.push_back(std::move(a));
    }
    return b;
}

/// A bid matrix that shares one contract list across agents (truthful setting).
inline BidMatrix random_shared_menu(Rng& rng, int n, int k, int target, std::optional<ReserveSchedule> reserve) {
    BidMatrix b;
    b.unit = 1.0;
    b.reserve = std::move(reserve);
    const auto sizes = distinct_sizes(rng, k, std::max(1, target));
    for (int i = 0; i < n; ++i) {
        AgentBids a{"a" + std::to_string(i), {}};
        for (const int u : sizes) a.menu.push_back({u, uniform_in(rng, 0.0, 1.0) * u});
        b.agents.push_back(std::move(a));
    }
    return b;
}

inline double total_bids(const Assignment& a) {
    double s = a.reserve_cost;
    for (const auto& p : a.pairs) s += p.bid;
    return s;
}

/// Outcome of the truthfulness, IR and reward-cap checks over random instances.
struct IncentiveStats {
    int instances = 0;
    long deviations = 0;
    long profitable = 0;          ///< deviations that beat truthful bidding by more than 1e-9
    double worst_gain = 0.0;
    long ir_violations = 0;       ///< selected with r_i < B_ij - 1e-9
    long unselected_paid = 0;     ///< unselected with r_i != 0
    long cap_violations = 0;      ///< r_i > slope * ell * unit + 1e-9
};

/// Random instances with n <= 4 agents, k <= 3 contracts, target <= 20 units
/// and a linear reserve. Each agent's true cost row is replaced by every
/// combination of per-entry deviations {0.25, 0.5, 1.5, 2, 4} x truth or
/// withholding; utility is the reward minus the true cost of the contract won.
inline IncentiveStats incentive_suite(std::uint64_t seed, int instances) {
    static constexpr double kFactors[] = {1.0, 0.25, 0.5, 1.5, 2.0, 4.0, -1.0};  // -1 withholds the entry
    constexpr int kOptions = 7;
    IncentiveStats st;
    Rng rng(seed);
    for (int it = 0; it < instances; ++it) {
        const int n = int_in(rng, 1, 4);
        const int k = int_in(rng, 1, 3);
        const int target = int_in(rng, 1, 20);
        const double slope = uniform_in(rng, 0.2, 1.0);
        const BidMatrix truth = random_shared_menu(rng, n, k, target, LinearReserve{slope});
        ++st.instances;

        const AllocationTables t(truth, target);
        const Solution s = t.solution(truth);
        const RewardVector r = clarke_rewards_fast(t, s, truth.agents.size());
        std::vector<double> u_truth(truth.agents.size(), 0.0);
        for (std::size_t i = 0; i < truth.agents.size(); ++i) {
            const Selection* held = s.assignment.find(i);
            if (held == nullptr) {
                if (r[i] != 0.0) ++st.unselected_paid;
                continue;
            }
            u_truth[i] = r[i] - held->bid;
            if (r[i] < held->bid - 1e-9) ++st.ir_violations;
            if (r[i] > slope * held->units * truth.unit + 1e-9) ++st.cap_violations;
        }

        for (std::size_t i = 0; i < truth.agents.size(); ++i) {
            const auto& menu = truth.agents[i].menu;
            int combos = 1;
            for (std::size_t e = 0; e < menu.size(); ++e) combos *= kOptions;
            for (int code = 1; code < combos; ++code) {
                BidMatrix dev = truth;
                std::vector<std::size_t> origin;  // deviated menu index -> true menu index
                dev.agents[i].menu.clear();
                int c = code;
                for (std::size_t e = 0; e < menu.size(); ++e, c /= kOptions) {
                    const double factor = kFactors[c % kOptions];
                    if (factor < 0) continue;
                    dev.agents[i].menu.push_back({menu[e].units, menu[e].bid * factor});
                    origin.push_back(e);
                }
                const AllocationTables td(dev, target);
                const Solution sd = td.solution(dev);
                const RewardVector rd = clarke_rewards_fast(td, sd, dev.agents.size());
                double u = 0.0;
                if (const Selection* held = sd.assignment.find(i)) u = rd[i] - menu[origin[held->entry]].bid;
                ++st.deviations;
                const double gain = u - u_truth[i];
                st.worst_gain = std::max(st.worst_gain, gain);
                if (gain > 1e-9) ++st.profitable;
            }
        }
    }
    return st;
}

}  // namespace drvcg::fixtures
