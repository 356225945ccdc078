#include <gtest/gtest.h>

#include <cmath>

#include "drvcg/drvcg.hpp"
#include "support.hpp"

using namespace drvcg;

TEST(Vcg, ThreeBiddersFixedContract) {
    const MechanismOutcome o = run_dr_vcg(three_bidder_agents(), {make_fixed(100, 50)}, std::nullopt, 200, 1.0, 100);
    ASSERT_EQ(o.selected.size(), 2u);
    EXPECT_EQ(o.selected[0].agent, 0u);
    EXPECT_EQ(o.selected[1].agent, 1u);
    EXPECT_NEAR(o.sum_of_bids, 5, 1e-9);
    EXPECT_NEAR(o.total_rewards, 30, 1e-9);
    EXPECT_NEAR(o.expected_penalties, 5, 1e-9);
    EXPECT_NEAR(o.expected_total_expense, 25, 1e-9);
    EXPECT_EQ(o.rewards[2], 0.0);
}

TEST(Vcg, TwoUniformGoals) {
    const auto agents = two_uniform_agents();
    const auto grid = contract_grid(50, 1000, ContractFamily::linear());
    const MechanismOutcome a = run_dr_vcg(agents, grid, LinearReserve{0.5}, 150, 1.0, 50);
    EXPECT_NEAR(a.rewards[0], 25, 1e-9);
    EXPECT_NEAR(a.rewards[1], 12.5, 1e-9);
    EXPECT_NEAR(a.expected_total_expense, 37.5, 1e-9);

    const MechanismOutcome b = run_dr_vcg(agents, grid, LinearReserve{0.5}, 1000, 1.0, 50);
    EXPECT_NEAR(b.expected_total_expense, 462.5, 1e-9);
    EXPECT_EQ(b.reserve_quantity, 700);
    EXPECT_NEAR(b.external_cost, 350, 1e-9);
}

TEST(Vcg, NaiveAndFastRewardsAgree) {
    const auto agents = sample_population({.n = 40, .zipf_max = 60}, 5);
    const VcgMarket m = make_vcg_market(agents, contract_grid(10, 600, ContractFamily::sce()), LinearReserve{0.5}, 10);
    for (double g : {1.0, 1.5}) {
        const auto fast = run_dr_vcg(m, 2000, g);
        const auto naive = run_dr_vcg(m, 2000, g, {.naive_rewards = true});
        for (std::size_t i = 0; i < fast.rewards.size(); ++i) EXPECT_NEAR(fast.rewards[i], naive.rewards[i], 1e-9);
    }
}

TEST(Vcg, RejectsInvalidInputs) {
    EXPECT_THROW(run_dr_vcg(three_bidder_agents(), {make_fixed(100, 50)}, std::nullopt, 200, 0.9, 100), InvalidInput);
    EXPECT_THROW(run_dr_vcg(three_bidder_agents(), {make_fixed(150, 50)}, std::nullopt, 200, 1.0, 100), InvalidInput);
    EXPECT_THROW(run_dr_vcg(three_bidder_agents(), {make_fixed(100, 50)}, std::nullopt, 400, 1.0, 100), Infeasible);
}

TEST(Vcg, ProcurementTargetRoundsUp) {
    EXPECT_EQ(procurement_units(1000, 1.05, 100), 11);
    EXPECT_EQ(procurement_units(1000, 1.1, 100), 11);
    EXPECT_EQ(procurement_units(1000, 1.0, 100), 10);
}

TEST(SceReward, Branches) {
    EXPECT_DOUBLE_EQ(sce_reward(150, 160), 80);
    EXPECT_DOUBLE_EQ(sce_reward(150, 70), 0);
    EXPECT_DOUBLE_EQ(sce_reward(150, 240), 112.5);
    EXPECT_DOUBLE_EQ(sce_reward(150, 75), 37.5);
    EXPECT_DOUBLE_EQ(sce_reward(150, 225), 112.5);
}

TEST(SceReward, ExpectationMatchesQuadrature) {
    Rng rng(61);
    for (int it = 0; it < 100; ++it) {
        const double lo = fixtures::uniform_in(rng, 0, 200);
        const Uniform u{lo, lo + fixtures::uniform_in(rng, 1, 300)};
        const double b = fixtures::uniform_in(rng, 1, 500);
        constexpr int kPoints = 20000;
        double sum = 0;
        for (int k = 0; k < kPoints; ++k) sum += sce_reward(b, u.lo + (k + 0.5) * (u.hi - u.lo) / kPoints);
        EXPECT_NEAR(sce_expected_reward(b, u), sum / kPoints, 1e-6 + 0.75 * b / kPoints);
    }
}

TEST(SceBidding, WorkedBids) {
    const auto b1 = sce_optimal_bid(AgentModel("1", {{0, Uniform{100, 200}}}));
    ASSERT_TRUE(b1);
    EXPECT_NEAR(b1->b, 150, 1e-9);
    EXPECT_NEAR(b1->expected_reward, 75, 1e-9);

    const auto b2 = sce_optimal_bid(AgentModel("2", {{0, Uniform{50, 250}}}));
    ASSERT_TRUE(b2);
    EXPECT_NEAR(b2->b, 150, 1e-3);
    EXPECT_NEAR(b2->expected_reward, 70.3125, 1e-9);

    EXPECT_FALSE(sce_optimal_bid(AgentModel("3", {{60, Bernoulli{100, 0.9}}})));
    const auto b4 = sce_optimal_bid(AgentModel("4", {{40, Bernoulli{100, 0.9}}, {10, Bernoulli{40, 0.9}}}));
    ASSERT_TRUE(b4);
    EXPECT_EQ(b4->b, 40);
    EXPECT_NEAR(b4->utility, 8, 1e-12);
}

TEST(SceBidding, SearchBeatsDenseGrid) {
    Rng rng(62);
    for (int it = 0; it < 100; ++it) {
        const double lo = fixtures::uniform_in(rng, 0, 100);
        const Uniform u{lo, lo + fixtures::uniform_in(rng, 1, 400)};
        const auto bid = sce_optimal_bid(AgentModel("u", {{0, u}}));
        ASSERT_TRUE(bid);
        double dense = 0;
        for (int k = 1; k <= 20000; ++k) dense = std::max(dense, sce_expected_reward(2 * u.hi * k / 20000.0, u));
        EXPECT_GE(bid->expected_reward, dense - 1e-6) << "lo " << u.lo << " hi " << u.hi;
    }
}

TEST(Sce, TwoUniformOrders) {
    const SceMarket m = make_sce_market(two_uniform_agents(), LinearReserve{0.5});
    const std::vector<std::size_t> first{0, 1}, second{1, 0};
    EXPECT_NEAR(run_dr_sce(m, 50, 1.0, first).expected_total_expense, 75, 1e-9);
    EXPECT_NEAR(run_dr_sce(m, 50, 1.0, second).expected_total_expense, 70.3125, 1e-9);
    const MechanismOutcome both = run_dr_sce(m, 400, 1.0, first);
    EXPECT_EQ(both.selected.size(), 2u);
    EXPECT_NEAR(both.reserve_quantity, 100, 1e-6);
    EXPECT_NEAR(both.expected_total_expense, 195.3125, 1e-9);
}

TEST(Sce, ExpectationOverOrders) {
    const SceMarket m = make_sce_market(two_uniform_agents(), LinearReserve{0.5});
    const SceExpectation a = expected_dr_sce(m, 50, 1.0);
    EXPECT_TRUE(a.exact);
    EXPECT_EQ(a.runs.size(), 2u);
    EXPECT_NEAR(a.expected_total_expense, 72.65625, 1e-9);
    EXPECT_NEAR(expected_dr_sce(m, 200, 1.0).expected_total_expense, 145.3125, 1e-9);
    EXPECT_NEAR(expected_success_exact(expected_dr_sce(m, 100, 1.0), 100), 0.875, 1e-12);

    const SceMarket one = make_sce_market({AgentModel("1", {{0, Uniform{100, 200}}})}, LinearReserve{0.5});
    const SceExpectation e = expected_dr_sce(one, 300, 1.0);
    const std::vector<std::size_t> order{0};
    EXPECT_NEAR(e.expected_total_expense, run_dr_sce(one, 300, 1.0, order).expected_total_expense, 1e-12);
}

TEST(Sce, NoParticipantsFallsBackToReserve) {
    const SceMarket m = make_sce_market({AgentModel("x", {{60, Bernoulli{100, 0.9}}})}, LinearReserve{0.5});
    EXPECT_TRUE(m.participants().empty());
    Rng rng(1);
    const MechanismOutcome o = run_dr_sce(m, 300, 1.2, rng);
    EXPECT_TRUE(o.selected.empty());
    EXPECT_NEAR(o.external_cost, 180, 1e-9);
    EXPECT_NEAR(o.expected_total_expense, 180, 1e-9);
}

TEST(Sce, ThreeBernoulliExample) {
    // unit bids of 100, goal 200, no reserve: pay 2/3 of each agent's expected reward
    const SceMarket m = make_sce_market(three_bidder_agents(), std::nullopt);
    const SceExpectation ex = expected_dr_sce(m, 200, 1.0);
    EXPECT_NEAR(ex.expected_total_expense, (50 + 45 + 35) * 2.0 / 3.0, 1e-9);
    const double failure = 1 - expected_success_exact(ex, 200, 100);
    EXPECT_NEAR(failure, (0.1 + 0.3 + (1 - 0.9 * 0.7)) / 3.0, 1e-9);
}

TEST(Sce, OrderValidation) {
    const SceMarket m = make_sce_market(two_uniform_agents(), LinearReserve{0.5});
    const std::vector<std::size_t> partial{0}, repeated{0, 0}, out_of_range{0, 5};
    EXPECT_THROW(run_dr_sce(m, 50, 1.0, partial), InvalidInput);
    EXPECT_THROW(run_dr_sce(m, 50, 1.0, repeated), InvalidInput);
    EXPECT_THROW(run_dr_sce(m, 50, 1.0, out_of_range), InvalidInput);
}

TEST(Equivalence, SceRewardIsReserveMinusCliffPenalty) {
    Rng rng(63);
    for (int it = 0; it < 1000; ++it) {
        const double b = fixtures::uniform_in(rng, 0.5, 500);
        const double x = fixtures::uniform_in(rng, 0, 2 * b);
        const Contract j = sce_equivalent_of_bid(b);
        EXPECT_NEAR(sce_reward(b, x), reserve_cost(LinearReserve{0.5}, 1.5 * b) - penalty(j, x), 1e-9) << "b " << b << " x " << x;
    }
    EXPECT_DOUBLE_EQ(0.5 * 225 - penalty(sce_equivalent_of_bid(150), 160), 80);
}

TEST(Equivalence, SingleBidderContractChoice) {
    Rng rng(64);
    constexpr double kStep = 10;
    const auto grid = contract_grid(kStep, 1200, ContractFamily::sce());
    for (int it = 0; it < 50; ++it) {
        AgentModel a;
        bool unique_optimum = false;
        if (it % 2 == 0) {
            const double q = kStep * fixtures::int_in(rng, 1, 40);
            a = AgentModel("b", {{fixtures::uniform_in(rng, 0, 0.4) * q, Bernoulli{q, fixtures::uniform_in(rng, 0.5, 1)}}});
        } else {
            const double lo = kStep * fixtures::int_in(rng, 0, 20);
            const double hi = lo + kStep * fixtures::int_in(rng, 1, 40);
            a = AgentModel("u", {{fixtures::uniform_in(rng, 0, 0.2) * lo, Uniform{lo, hi}}});
            unique_optimum = 2 * hi / 3 > 2 * lo;  // support does not fit one middle branch
        }
        const MechanismOutcome o = run_dr_vcg({a}, grid, LinearReserve{0.5}, 2000, 1.0, kStep);
        double u_vcg = 0, ell_vcg = 0;
        if (!o.selected.empty()) {
            u_vcg = o.selected[0].reward - o.selected[0].bid;
            ell_vcg = o.selected[0].contract.ell;
            EXPECT_NEAR(o.selected[0].reward, ell_vcg / 2, 1e-9);
        }
        // the same choice scored with SCE rewards at b = 2 ell / 3
        double u_grid = 0;
        for (const auto& c : grid)
            for (const auto& l : a.levels())
                u_grid = std::max(u_grid, sce_expected_reward(2 * c.ell / 3, l.outcome) - l.cost);
        EXPECT_NEAR(u_vcg, u_grid, 1e-9) << "agent " << it;

        const auto bid = sce_optimal_bid(a);
        const double u_sce = bid ? bid->utility : 0.0;
        EXPECT_GE(u_sce, u_vcg - 1e-9);
        if (unique_optimum && bid && !o.selected.empty()) {
            EXPECT_LE(std::abs(ell_vcg - 1.5 * bid->b), kStep + 1e-6) << "agent " << it;
        }
    }
}

TEST(Accounting, ExpenseRecomposes) {
    const auto agents = sample_population({.n = 60, .t_levels = 2, .zipf_max = 80}, 9);
    const VcgMarket vm = make_vcg_market(agents, contract_grid(10, 800, ContractFamily::sce()), LinearReserve{0.5}, 10);
    const SceMarket sm = make_sce_market(agents, LinearReserve{0.5});
    for (double g : {1.0, 1.3, 2.0}) {
        const MechanismOutcome v = run_dr_vcg(vm, 3000, g);
        double rewards = 0, penalties = 0;
        for (const auto& s : v.selected) {
            rewards += s.reward;
            penalties += s.expected_penalty;
        }
        EXPECT_NEAR(v.expected_total_expense, rewards + v.external_cost - penalties, 1e-9);
        EXPECT_NEAR(v.total_rewards, rewards, 1e-9);
        Rng rng(2);
        const MechanismOutcome s = run_dr_sce(sm, 3000, g, rng);
        double paid = 0;
        for (const auto& a : s.selected) paid += a.reward;
        EXPECT_NEAR(s.expected_total_expense, paid + s.external_cost, 1e-9);
    }
}

TEST(Realization, MatchesExpectationInTheMean) {
    const auto agents = sample_population({.n = 30, .zipf_max = 40}, 4);
    const MechanismOutcome v =
        run_dr_vcg(agents, contract_grid(10, 400, ContractFamily::sce()), LinearReserve{0.5}, 800, 1.2, 10);
    Rng order(3);
    const MechanismOutcome s = run_dr_sce(make_sce_market(agents, LinearReserve{0.5}), 800, 1.2, order);
    for (const MechanismOutcome* o : {&v, &s}) {
        Rng rng(77);
        constexpr int kDraws = 100000;
        double sum = 0, sq = 0;
        for (int i = 0; i < kDraws; ++i) {
            const Realization r = realize(*o, rng);
            sum += r.expense;
            sq += r.expense * r.expense;
        }
        const double mean = sum / kDraws;
        const double se = std::sqrt(std::max(0.0, sq / kDraws - mean * mean) / kDraws);
        EXPECT_LE(std::abs(mean - o->expected_total_expense), 4 * se + 1e-9) << to_string(o->mechanism);
    }
}

TEST(Realization, PenaltiesAndPayments) {
    const MechanismOutcome o = run_dr_vcg(three_bidder_agents(), {make_fixed(100, 50)}, std::nullopt, 200, 1.0, 100);
    Rng rng(5);
    bool saw_failure = false;
    for (int i = 0; i < 500; ++i) {
        const Realization r = realize(o, rng);
        for (const auto& a : r.agents) {
            EXPECT_EQ(a.penalty, a.reduction >= 100 ? 0.0 : 50.0);
            EXPECT_DOUBLE_EQ(a.payment, o.rewards[a.agent] - a.penalty);
            saw_failure |= a.reduction == 0.0;
        }
        EXPECT_EQ(r.met_target, r.total_reduction >= 200);
    }
    EXPECT_TRUE(saw_failure);
}
