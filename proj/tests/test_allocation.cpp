#include <gtest/gtest.h>

#include "drvcg/allocation.hpp"
#include "drvcg/simulate.hpp"
#include "support.hpp"

using namespace drvcg;

namespace {

BidMatrix three_bidders() {
    BidMatrix b;
    b.unit = 100;
    b.agents = {{"1", {{1, 0}}}, {"2", {{1, 5}}}, {"3", {{1, 15}}}};
    return b;
}

/// Two-uniform agents on the 50 kWh linear grid up to 1000 kWh, reserve at 0.5/kWh.
BidMatrix two_uniform_bids() {
    const VcgMarket m = make_vcg_market(two_uniform_agents(), contract_grid(50, 1000, ContractFamily::linear()),
                                        LinearReserve{0.5}, 50);
    return m.bids;
}

std::vector<std::size_t> agents_of(const Solution& s) {
    std::vector<std::size_t> out;
    for (const auto& p : s.assignment.pairs) out.push_back(p.agent);
    return out;
}

}  // namespace

TEST(Solve, ThreeBidders) {
    const Solution s = solve(three_bidders(), 2);
    EXPECT_EQ(agents_of(s), (std::vector<std::size_t>{0, 1}));
    EXPECT_DOUBLE_EQ(s.sb_star, 5);
    EXPECT_EQ(s.assignment.total_commitment, 2);
    EXPECT_DOUBLE_EQ(s.assignment.sum_of_bids, 5);
    EXPECT_DOUBLE_EQ(brute_force_solve(three_bidders(), 2).sb_star, 5);
}

TEST(Solve, TwoUniformGoal150) {
    const BidMatrix b = two_uniform_bids();
    const Solution s = solve(b, 3);
    ASSERT_EQ(s.assignment.pairs.size(), 2u);
    EXPECT_EQ(s.assignment.pairs[0].units, 2);
    EXPECT_EQ(s.assignment.pairs[1].units, 1);
    EXPECT_EQ(s.assignment.reserve_units, 0);
    EXPECT_DOUBLE_EQ(s.sb_star, 0);
}

TEST(Solve, TwoUniformGoal400) {
    const Solution s = solve(two_uniform_bids(), 8);
    ASSERT_EQ(s.assignment.pairs.size(), 2u);
    EXPECT_EQ(s.assignment.pairs[0].units, 3);
    EXPECT_EQ(s.assignment.pairs[1].units, 3);
    EXPECT_EQ(s.assignment.reserve_units, 2);
    EXPECT_DOUBLE_EQ(s.assignment.reserve_cost, 50);
    EXPECT_DOUBLE_EQ(s.sb_star, 87.5);
}

TEST(Solve, ZeroTargetIsEmpty) {
    const Solution s = solve(three_bidders(), 0);
    EXPECT_TRUE(s.assignment.pairs.empty());
    EXPECT_EQ(s.assignment.reserve_units, 0);
    EXPECT_DOUBLE_EQ(s.sb_star, 0);
}

TEST(Solve, SingleLargeContract) {
    BidMatrix b;
    b.agents = {{"a", {{10, 7}}}};
    EXPECT_DOUBLE_EQ(solve(b, 4).sb_star, 7);
    EXPECT_DOUBLE_EQ(brute_force_solve(b, 4).sb_star, 7);
}

TEST(Solve, InfeasibleWithoutReserve) {
    EXPECT_THROW(solve(three_bidders(), 4), Infeasible);
    EXPECT_THROW(brute_force_solve(three_bidders(), 4), Infeasible);
    EXPECT_FALSE(AllocationTables(three_bidders(), 4).feasible());
}

TEST(Solve, RejectsBadMenus) {
    BidMatrix b;
    b.agents = {{"a", {{1, -1}}}};
    EXPECT_THROW(solve(b, 1), InvalidInput);
    b.agents = {{"a", {{-1, 1}}}};
    EXPECT_THROW(solve(b, 1), InvalidInput);
    b.agents = {{"a", {{1, std::numeric_limits<double>::infinity()}}}};
    EXPECT_THROW(solve(b, 1), InvalidInput);
}

TEST(Solve, BruteForceSizeLimit) {
    BidMatrix b;
    for (int i = 0; i < 13; ++i) b.agents.push_back({"a", {{1, 1}}});
    EXPECT_THROW(brute_force_solve(b, 3), SizeLimit);
}

TEST(Solve, PrefersFewerAgentsOnTies) {
    // reserve alone and agent 0 both cost 2: the empty agent set wins
    BidMatrix b;
    b.unit = 1;
    b.reserve = LinearReserve{1.0};
    b.agents = {{"a", {{2, 2}}}};
    const Solution s = solve(b, 2);
    EXPECT_TRUE(s.assignment.pairs.empty());
    EXPECT_EQ(s.assignment.reserve_units, 2);
}

TEST(Solve, MatchesBruteForceOnRandomInstances) {
    Rng rng(31);
    for (int it = 0; it < 500; ++it) {
        const int n = fixtures::int_in(rng, 1, 8);
        const int k = fixtures::int_in(rng, 1, 4);
        const int target = fixtures::int_in(rng, 0, 30);
        std::optional<ReserveSchedule> reserve;
        switch (it % 4) {
            case 0: break;
            case 1: reserve = LinearReserve{fixtures::uniform_in(rng, 0.1, 1.0)}; break;
            case 2: reserve = AffineReserve{fixtures::uniform_in(rng, 0, 10), fixtures::uniform_in(rng, 0, 1)}; break;
            default: reserve = TableReserve{{{10, 2}, {20, 3}, {40, 30}}}; break;
        }
        BidMatrix b = fixtures::random_bids(rng, n, k, target, 10.0, reserve);
        std::optional<Solution> want;
        try {
            want = brute_force_solve(b, target, 20'000'000);
        } catch (const Infeasible&) {
            EXPECT_THROW(solve(b, target), Infeasible);
            continue;
        }
        const Solution got = solve(b, target);
        EXPECT_NEAR(got.sb_star, want->sb_star, 1e-9) << "instance " << it;
        // the returned set is valid and its cost is what it claims
        int cover = got.assignment.reserve_units;
        for (const auto& p : got.assignment.pairs) cover += p.units;
        EXPECT_GE(cover, target);
        EXPECT_NEAR(fixtures::total_bids(got.assignment), got.sb_star, 1e-9);
        std::vector<bool> seen(b.agents.size(), false);
        for (const auto& p : got.assignment.pairs) {
            EXPECT_FALSE(seen[p.agent]);
            seen[p.agent] = true;
        }
    }
}

TEST(Rewards, ThreeBidders) {
    const RewardVector r = clarke_rewards(three_bidders(), 2);
    EXPECT_EQ(r, (RewardVector{15, 15, 0}));
    EXPECT_EQ(clarke_rewards_fast(three_bidders(), 2), r);
}

TEST(Rewards, TwoUniformGoal250) {
    const RewardVector r = clarke_rewards(two_uniform_bids(), 5);
    EXPECT_DOUBLE_EQ(r[0], 68.75);
    EXPECT_DOUBLE_EQ(r[1], 50);
}

TEST(Rewards, SingleAgentAgainstLinearReserve) {
    BidMatrix b;
    b.unit = 10;
    b.reserve = LinearReserve{0.5};
    b.agents = {{"a", {{4, 3}}}};
    const RewardVector naive = clarke_rewards(b, 4);
    EXPECT_DOUBLE_EQ(naive[0], 0.5 * 4 * 10);
    EXPECT_EQ(clarke_rewards_fast(b, 4), naive);
}

TEST(Rewards, InfeasibleLeaveOneOut) {
    BidMatrix b;
    b.agents = {{"a", {{2, 1}}}};
    EXPECT_THROW(clarke_rewards(b, 2), Infeasible);
    EXPECT_THROW(clarke_rewards_fast(b, 2), Infeasible);
}

TEST(Rewards, FastMatchesNaiveOnRandomInstances) {
    Rng rng(32);
    for (int it = 0; it < 200; ++it) {
        const int n = fixtures::int_in(rng, 1, 30);
        const int k = fixtures::int_in(rng, 1, 10);
        const int target = fixtures::int_in(rng, 1, 100);
        std::optional<ReserveSchedule> reserve;
        if (it % 3 == 0) reserve = LinearReserve{fixtures::uniform_in(rng, 0.1, 1.0)};
        else if (it % 3 == 1) reserve = AffineReserve{fixtures::uniform_in(rng, 0, 20), fixtures::uniform_in(rng, 0, 1)};
        else reserve = TableReserve{{{20, 30}, {60, 31}, {100, 90}}};
        const BidMatrix b = fixtures::random_bids(rng, n, k, target, 10.0 * k, reserve);
        const RewardVector naive = clarke_rewards(b, target);
        const RewardVector fast = clarke_rewards_fast(b, target);
        ASSERT_EQ(naive.size(), fast.size());
        for (std::size_t i = 0; i < naive.size(); ++i) EXPECT_NEAR(naive[i], fast[i], 1e-9) << "instance " << it;
    }
}

TEST(Prices, ThreeBidders) {
    EXPECT_DOUBLE_EQ(cost_independent_price(three_bidders(), 2, 0, 0), 15);
    EXPECT_DOUBLE_EQ(cost_independent_price(three_bidders(), 2, 1, 0), 15);
}

TEST(Prices, NullPinIsFree) {
    const AllocationTables t(three_bidders(), 2);
    EXPECT_DOUBLE_EQ(cost_independent_price(t, 2, 0), 0);
}

TEST(Prices, IndependentOfOwnBids) {
    Rng rng(33);
    for (int it = 0; it < 100; ++it) {
        const int target = fixtures::int_in(rng, 1, 20);
        const BidMatrix b = fixtures::random_bids(rng, fixtures::int_in(rng, 1, 6), 3, target, 10, LinearReserve{0.5});
        for (std::size_t i = 0; i < b.agents.size(); ++i) {
            BidMatrix scaled = b;
            for (auto& e : scaled.agents[i].menu) e.bid *= 10;
            for (std::size_t j = 0; j < b.agents[i].menu.size(); ++j)
                EXPECT_NEAR(cost_independent_price(b, target, i, j), cost_independent_price(scaled, target, i, j), 1e-9);
        }
    }
}

TEST(Prices, RewardDecomposition) {
    Rng rng(34);
    for (int it = 0; it < 100; ++it) {
        const int target = fixtures::int_in(rng, 1, 20);
        const BidMatrix b = fixtures::random_bids(rng, fixtures::int_in(rng, 1, 6), 3, target, 10, LinearReserve{0.5});
        const AllocationTables t(b, target);
        const Solution s = t.solution(b);
        const RewardVector r = clarke_rewards_fast(t, s, b.agents.size());
        for (const auto& p : s.assignment.pairs) {
            // SB*(N) = SB*_{-i}(N_{-i} + i pinned to j(i)) + B_{i,j(i)}
            EXPECT_NEAR(s.sb_star, *t.sb_with_pinned(p.agent, p.units) + p.bid, 1e-9);
            EXPECT_NEAR(r[p.agent], cost_independent_price(t, p.agent, p.units), 1e-9);
        }
    }
}

TEST(MarketClearing, WorkedInstances) {
    EXPECT_TRUE(verify_market_clearing(three_bidders(), 2).ok());
    EXPECT_TRUE(verify_market_clearing(two_uniform_bids(), 3).ok());
}

TEST(MarketClearing, RandomOptimaClear) {
    Rng rng(35);
    for (int it = 0; it < 100; ++it) {
        const int target = fixtures::int_in(rng, 1, 20);
        const BidMatrix b = fixtures::random_bids(rng, fixtures::int_in(rng, 1, 6), 3, target, 10, LinearReserve{0.5});
        const auto report = verify_market_clearing(b, target);
        EXPECT_TRUE(report.ok()) << (report.violations.empty() ? "" : report.violations.front().message);
    }
}

TEST(MarketClearing, FlagsNonOptimalAssignment) {
    // give the goal to agents 2 and 3 instead of 1 and 2
    Assignment bad;
    bad.pairs = {{1, 0, 1, 5}, {2, 0, 1, 15}};
    const auto report = verify_market_clearing(three_bidders(), 2, bad);
    EXPECT_FALSE(report.ok());
    bool agent1_flagged = false;
    for (const auto& v : report.violations) agent1_flagged |= v.agent == 0;
    EXPECT_TRUE(agent1_flagged);
}
