#pragma once

// Synthetic populations, safety-margin sweeps for both mechanisms, and the
// two-agent worked tables.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "drvcg/agents.hpp"
#include "drvcg/allocation.hpp"
#include "drvcg/common.hpp"
#include "drvcg/contracts.hpp"
#include "drvcg/mechanisms.hpp"
#include "drvcg/reliability.hpp"

namespace drvcg {

struct PopulationSpec {
    std::size_t n = 100;
    std::size_t t_levels = 1;
    double zipf_exponent = 1.0;
    int zipf_max = 500;
    double capacity_scale = 10.0;  ///< kWh per Zipf rank
    double p_lo = 0.7;
    double p_hi = 1.0;
    double unit_cost_lo = 0.2;  ///< $ per kWh of the level's capacity
    double unit_cost_hi = 1.0;
};

inline void validate(const PopulationSpec& s) {
    if (s.t_levels < 1) throw InvalidInput("population needs at least one effort level per agent");
    if (s.zipf_max < 1 || !(s.zipf_exponent >= 0)) throw InvalidInput("zipf needs max >= 1 and exponent >= 0");
    if (!(s.capacity_scale > 0)) throw InvalidInput("capacity scale must be positive");
    if (!(0 <= s.p_lo && s.p_lo <= s.p_hi && s.p_hi <= 1)) throw InvalidInput("reliability range must lie in [0, 1]");
    if (!(0 <= s.unit_cost_lo && s.unit_cost_lo <= s.unit_cost_hi)) throw InvalidInput("unit cost range is invalid");
}

/// Finite Zipf on {1..max}: Pr(k) proportional to k^-s.
class ZipfSampler {
public:
    ZipfSampler(double exponent, int max) {
        cdf_.reserve(static_cast<std::size_t>(max));
        double total = 0.0;
        for (int k = 1; k <= max; ++k) {
            total += std::pow(static_cast<double>(k), -exponent);
            cdf_.push_back(total);
        }
    }
    int operator()(Rng& rng) const {
        const double u = unit_uniform(rng) * cdf_.back();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(), std::ssize(cdf_) - 1)) + 1;
    }
    double probability(int k) const {
        const double prev = k > 1 ? cdf_[static_cast<std::size_t>(k - 2)] : 0.0;
        return (cdf_[static_cast<std::size_t>(k - 1)] - prev) / cdf_.back();
    }

private:
    std::vector<double> cdf_;
};

/// Agents with T levels (c_it, Bernoulli{q_it, p_i}). p_i is drawn once per
/// agent, then each level draws its capacity and unit cost. Levels are sorted
/// by capacity.
inline std::vector<AgentModel> sample_population(const PopulationSpec& spec, std::uint64_t seed) {
    validate(spec);
    const ZipfSampler zipf(spec.zipf_exponent, spec.zipf_max);
    Rng rng(seed);
    std::vector<AgentModel> agents;
    agents.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double p = spec.p_lo + (spec.p_hi - spec.p_lo) * unit_uniform(rng);
        std::vector<EffortLevel> levels;
        for (std::size_t t = 0; t < spec.t_levels; ++t) {
            const double q = zipf(rng) * spec.capacity_scale;
            const double unit_cost = spec.unit_cost_lo + (spec.unit_cost_hi - spec.unit_cost_lo) * unit_uniform(rng);
            levels.push_back({unit_cost * q, Bernoulli{q, p}});
        }
        std::stable_sort(levels.begin(), levels.end(), [](const EffortLevel& a, const EffortLevel& b) {
            return std::get<Bernoulli>(a.outcome).q < std::get<Bernoulli>(b.outcome).q;
        });
        agents.emplace_back("a" + std::to_string(i), std::move(levels));
    }
    return agents;
}

struct ContractGridSpec {
    double step = 10.0;
    double max = 5000.0;
    ContractFamily family = ContractFamily::sce();
};

struct Scenario {
    PopulationSpec population;
    double M = 10000.0;
    std::vector<double> gamma_grid{1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0};
    ContractGridSpec contracts;
    ReserveSchedule reserve = LinearReserve{0.5};
    std::size_t instances = 100;
    std::uint64_t mc_samples = 2000;
    std::size_t order_samples = 16;  ///< DR-SCE selection orders per instance
    std::uint64_t master_seed = 0;
};

inline void validate(const Scenario& s) {
    validate(s.population);
    validate(s.reserve);
    if (!(s.M >= 0)) throw InvalidInput("scenario M must be >= 0");
    if (s.gamma_grid.empty()) throw InvalidInput("gamma grid is empty");
    for (const double g : s.gamma_grid)
        if (!(g >= 1.0 && g <= 2.0)) throw InvalidInput("gamma values must lie in [1, 2]");
    if (!(s.contracts.step > 0) || !(s.contracts.max >= s.contracts.step)) throw InvalidInput("invalid contract grid");
    if (s.instances < 1) throw InvalidInput("scenario needs at least one instance");
    if (s.mc_samples < 1) throw InvalidInput("mc_samples must be >= 1");
    if (s.order_samples < 1) throw InvalidInput("order_samples must be >= 1");
}

struct ResultRow {
    double gamma = 1.0;
    Mechanism mechanism = Mechanism::vcg;
    double mean_expense = 0.0;
    double mean_reliability = 0.0;
    double failure_fraction = 0.0;  ///< share of instances (or SCE orders) that buy from the reserve
    double mean_selected = 0.0;
    std::size_t instances = 0;
    std::uint64_t seed = 0;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    const ResultRow& at(double gamma, Mechanism m) const {
        for (const auto& r : rows)
            if (r.mechanism == m && std::abs(r.gamma - gamma) < 1e-12) return r;
        throw InvalidInput("no result row for gamma " + std::to_string(gamma));
    }
};

/// Per-instance, per-gamma measurements for one mechanism.
struct InstancePoint {
    double expense = 0.0;
    double rewards = 0.0;
    double external_cost = 0.0;
    double expected_penalties = 0.0;
    double reliability = 0.0;
    double failure = 0.0;
    double selected = 0.0;
};

struct InstanceResult {
    std::vector<InstancePoint> vcg;  ///< one per gamma
    std::vector<InstancePoint> sce;
};

namespace detail {

inline std::uint64_t stream_seed(std::uint64_t instance_seed, std::uint64_t purpose, std::uint64_t index) {
    return derive_seed(derive_seed(instance_seed, purpose), index);
}

}  // namespace detail

inline InstanceResult run_instance(const Scenario& s, std::size_t index) {
    const std::uint64_t seed = derive_seed(s.master_seed, index);
    auto agents = sample_population(s.population, detail::stream_seed(seed, 0, 0));
    const auto grid = contract_grid(s.contracts.step, s.contracts.max, s.contracts.family);
    const VcgMarket vcg = make_vcg_market(agents, grid, s.reserve, s.contracts.step);
    const SceMarket sce = make_sce_market(std::move(agents), s.reserve);

    InstanceResult out;
    for (std::size_t g = 0; g < s.gamma_grid.size(); ++g) {
        const double gamma = s.gamma_grid[g];
        {
            const MechanismOutcome o = run_dr_vcg(vcg, s.M, gamma);
            InstancePoint pt;
            pt.expense = o.expected_total_expense;
            pt.rewards = o.total_rewards;
            pt.external_cost = o.external_cost;
            pt.expected_penalties = o.expected_penalties;
            pt.reliability = success_prob_mc(o.selected_outcomes(), o.reserve_quantity, s.M, s.mc_samples,
                                             detail::stream_seed(seed, 1, g))
                                 .probability;
            pt.failure = o.reserve_quantity > 0.0 ? 1.0 : 0.0;
            pt.selected = static_cast<double>(o.selected.size());
            out.vcg.push_back(pt);
        }
        {
            const SceExpectation ex = expected_dr_sce(sce, s.M, gamma, {8, s.order_samples, detail::stream_seed(seed, 2, g)});
            InstancePoint pt;
            pt.expense = ex.expected_total_expense;
            pt.external_cost = ex.mean_external_cost;
            pt.rewards = ex.expected_total_expense - ex.mean_external_cost;
            pt.failure = ex.reserve_use_probability;
            pt.selected = ex.mean_selected;
            for (std::size_t r = 0; r < ex.runs.size(); ++r) {
                const auto& run = ex.runs[r];
                pt.reliability += run.weight * success_prob_mc(run.outcome.selected_outcomes(), run.outcome.reserve_quantity,
                                                               s.M, s.mc_samples,
                                                               detail::stream_seed(seed, 3, g * ex.runs.size() + r))
                                                   .probability;
            }
            out.sce.push_back(pt);
        }
    }
    return out;
}

/// Runs every instance (in parallel when threads > 1) and averages per gamma.
/// Results depend only on the scenario: each instance has its own seed and
/// aggregation runs in instance order.
inline ResultTable run_scenario(const Scenario& s, unsigned threads = 1) {
    validate(s);
    std::vector<InstanceResult> results(s.instances);
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(s.instances)));
    if (workers == 1) {
        for (std::size_t i = 0; i < s.instances; ++i) results[i] = run_instance(s, i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = next++; i < s.instances; i = next++) results[i] = run_instance(s, i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    ResultTable table;
    const double n = static_cast<double>(s.instances);
    for (std::size_t g = 0; g < s.gamma_grid.size(); ++g) {
        for (const Mechanism m : {Mechanism::vcg, Mechanism::sce}) {
            ResultRow row;
            row.gamma = s.gamma_grid[g];
            row.mechanism = m;
            row.instances = s.instances;
            row.seed = s.master_seed;
            for (const auto& r : results) {
                const InstancePoint& pt = m == Mechanism::vcg ? r.vcg[g] : r.sce[g];
                row.mean_expense += pt.expense;
                row.mean_reliability += pt.reliability;
                row.failure_fraction += pt.failure;
                row.mean_selected += pt.selected;
            }
            row.mean_expense /= n;
            row.mean_reliability /= n;
            row.failure_fraction /= n;
            row.mean_selected /= n;
            table.rows.push_back(row);
        }
    }
    return table;
}

/// Six significant digits, '.' decimal point.
inline std::string format_number(double v) {
    if (v == 0.0) return "0";
    return fmt::format("{:.6g}", v);
}

inline std::string to_csv(const ResultTable& t) {
    std::string out = "gamma,mechanism,mean_expense,mean_reliability,failure_fraction,mean_selected,instances,seed\n";
    for (const auto& r : t.rows) {
        out += fmt::format("{},{},{},{},{},{},{},{}\n", format_number(r.gamma), to_string(r.mechanism),
                           format_number(r.mean_expense), format_number(r.mean_reliability),
                           format_number(r.failure_fraction), format_number(r.mean_selected), r.instances, r.seed);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Worked examples

/// Three agents that reduce 100 kWh with probability 1, 0.9 and 0.7 at no cost.
inline std::vector<AgentModel> three_bidder_agents() {
    return {AgentModel("1", {{0.0, Bernoulli{100.0, 1.0}}}), AgentModel("2", {{0.0, Bernoulli{100.0, 0.9}}}),
            AgentModel("3", {{0.0, Bernoulli{100.0, 0.7}}})};
}

/// X1 ~ U[100, 200] and X2 ~ U[50, 250], both at no cost.
inline std::vector<AgentModel> two_uniform_agents() {
    return {AgentModel("1", {{0.0, Uniform{100.0, 200.0}}}), AgentModel("2", {{0.0, Uniform{50.0, 250.0}}})};
}

inline const std::vector<double>& appendix_goals() {
    static const std::vector<double> goals{50, 100, 150, 200, 250, 300, 400, 1000};
    return goals;
}

struct ExampleOneResult {
    std::vector<double> bids;
    std::vector<std::size_t> selected;  ///< 1-based agent numbers
    double sb_star = 0.0;
    RewardVector rewards;
    double total_expense = 0.0;
    double failure_probability = 0.0;
    double failure_bound = 0.0;
};

/// One Fixed(100, 50) contract, goal 200 kWh, no reserve.
inline ExampleOneResult reproduce_example_one() {
    const Contract c = make_fixed(100.0, 50.0, "fixed-100");
    const MechanismOutcome o = run_dr_vcg(three_bidder_agents(), {c}, std::nullopt, 200.0, 1.0, 100.0);
    ExampleOneResult r;
    for (const auto& a : three_bidder_agents()) r.bids.push_back(optimal_plan(a, c).total_cost);
    for (const auto& s : o.selected) r.selected.push_back(s.agent + 1);
    r.sb_star = o.sum_of_bids;
    r.rewards = o.rewards;
    r.total_expense = o.expected_total_expense;
    r.failure_probability = 1.0 - success_prob_exact(o.selected_outcomes(), 0.0, 200.0, 100.0).probability;
    r.failure_bound = failure_bound_fixed(o.sum_of_bids, 50.0);
    return r;
}

struct TableOneRow {
    double M = 0.0;
    std::vector<std::size_t> selected;  ///< 1-based agent numbers
    double reserve_quantity = 0.0;
    double social_cost = 0.0;
    std::optional<double> ell1, ell2;
    std::optional<double> r1, r2;
    double expense = 0.0;
    double p_full = 0.0;           ///< Pr(sum X + reserve >= M)
    double p_three_quarters = 0.0; ///< ... >= 3M/4
    double p_half = 0.0;           ///< ... >= M/2
};

struct TableTwoRow {
    double M = 0.0;
    double mean_selected = 0.0;
    double mean_reserve = 0.0;
    double expense = 0.0;
    double p_full = 0.0;
    double p_three_quarters = 0.0;
    double p_half = 0.0;
};

struct AppendixTables {
    std::vector<TableOneRow> table1;
    std::vector<TableTwoRow> table2;
};

/// Linear-penalty contracts on a 50 kWh grid with reserve at $0.5/kWh
/// (DR-VCG), and the same agents under DR-SCE averaged over selection order.
inline AppendixTables reproduce_appendix_tables(double grid = 1.0) {
    AppendixTables t;
    const auto agents = two_uniform_agents();
    const VcgMarket vcg = make_vcg_market(agents, contract_grid(50.0, 1000.0, ContractFamily::linear()),
                                          LinearReserve{0.5}, 50.0);
    const SceMarket sce = make_sce_market(agents, LinearReserve{0.5});
    for (const double M : appendix_goals()) {
        const MechanismOutcome o = run_dr_vcg(vcg, M, 1.0);
        TableOneRow row;
        row.M = M;
        row.reserve_quantity = o.reserve_quantity;
        row.social_cost = o.sum_of_bids;
        row.expense = o.expected_total_expense;
        for (const auto& s : o.selected) {
            row.selected.push_back(s.agent + 1);
            (s.agent == 0 ? row.ell1 : row.ell2) = s.quantity;
            (s.agent == 0 ? row.r1 : row.r2) = s.reward;
        }
        const auto outcomes = o.selected_outcomes();
        row.p_full = success_prob_exact(outcomes, o.reserve_quantity, M, grid).probability;
        row.p_three_quarters = success_prob_exact(outcomes, o.reserve_quantity, 0.75 * M, grid).probability;
        row.p_half = success_prob_exact(outcomes, o.reserve_quantity, 0.5 * M, grid).probability;
        t.table1.push_back(row);

        const SceExpectation ex = expected_dr_sce(sce, M, 1.0);
        TableTwoRow row2;
        row2.M = M;
        row2.mean_selected = ex.mean_selected;
        row2.mean_reserve = ex.mean_reserve_quantity;
        row2.expense = ex.expected_total_expense;
        row2.p_full = expected_success_exact(ex, M, grid);
        row2.p_three_quarters = expected_success_exact(ex, 0.75 * M, grid);
        row2.p_half = expected_success_exact(ex, 0.5 * M, grid);
        t.table2.push_back(row2);
    }
    return t;
}

namespace detail {

inline std::string join_agents(const std::vector<std::size_t>& s) {
    std::string out;
    for (const auto a : s) out += (out.empty() ? "" : " ") + std::to_string(a);
    return out;
}

inline std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace detail

inline std::string table1_csv(const AppendixTables& t) {
    std::string out = "M,selected,reserve,social_cost,ell1,ell2,r1,r2,expense,p_M,p_3M4,p_M2\n";
    for (const auto& r : t.table1) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", format_number(r.M), detail::join_agents(r.selected),
                           format_number(r.reserve_quantity), format_number(r.social_cost), detail::opt_number(r.ell1),
                           detail::opt_number(r.ell2), detail::opt_number(r.r1), detail::opt_number(r.r2),
                           format_number(r.expense), format_number(r.p_full), format_number(r.p_three_quarters),
                           format_number(r.p_half));
    }
    return out;
}

inline std::string table2_csv(const AppendixTables& t) {
    std::string out = "M,mean_selected,mean_reserve,expense,p_M,p_3M4,p_M2\n";
    for (const auto& r : t.table2) {
        out += fmt::format("{},{},{},{},{},{},{}\n", format_number(r.M), format_number(r.mean_selected),
                           format_number(r.mean_reserve), format_number(r.expense), format_number(r.p_full),
                           format_number(r.p_three_quarters), format_number(r.p_half));
    }
    return out;
}

inline std::string example_one_csv(const ExampleOneResult& r) {
    std::string out = "quantity,value\n";
    for (std::size_t i = 0; i < r.bids.size(); ++i) out += fmt::format("bid_{},{}\n", i + 1, format_number(r.bids[i]));
    out += fmt::format("selected,{}\n", detail::join_agents(r.selected));
    out += fmt::format("sb_star,{}\n", format_number(r.sb_star));
    for (std::size_t i = 0; i < r.rewards.size(); ++i)
        out += fmt::format("reward_{},{}\n", i + 1, format_number(r.rewards[i]));
    out += fmt::format("total_expense,{}\n", format_number(r.total_expense));
    out += fmt::format("failure_probability,{}\n", format_number(r.failure_probability));
    out += fmt::format("failure_bound,{}\n", format_number(r.failure_bound));
    return out;
}

}  // namespace drvcg
