#pragma once

// Agent types: finite menus of effort levels, each with an investment cost and
// a distribution over the realized reduction. From a type and a contract we
// derive the optimal investment and the cost type C*(j), which is the
// agent's truthful bid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "drvcg/common.hpp"
#include "drvcg/contracts.hpp"

namespace drvcg {

/// Reduce q with probability p, otherwise 0.
struct Bernoulli {
    double q = 0.0;
    double p = 1.0;
};

/// Continuous uniform reduction on [lo, hi].
struct Uniform {
    double lo = 0.0;
    double hi = 0.0;
};

/// Deterministic reduction q.
struct Point {
    double q = 0.0;
};

using ReductionDistribution = std::variant<Bernoulli, Uniform, Point>;

inline void validate(const ReductionDistribution& d) {
    std::visit(
        [](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Bernoulli>) {
                if (!(v.q >= 0) || !std::isfinite(v.q)) throw InvalidInput("bernoulli q must be finite and >= 0");
                if (!(v.p >= 0 && v.p <= 1)) throw InvalidInput("bernoulli p must lie in [0, 1]");
            } else if constexpr (std::is_same_v<T, Uniform>) {
                if (!(v.lo >= 0) || !(v.hi >= v.lo) || !std::isfinite(v.hi))
                    throw InvalidInput("uniform needs 0 <= lo <= hi < inf");
            } else {
                if (!(v.q >= 0) || !std::isfinite(v.q)) throw InvalidInput("point q must be finite and >= 0");
            }
        },
        d);
}

inline double mean(const ReductionDistribution& d) {
    if (const auto* b = std::get_if<Bernoulli>(&d)) return b->p * b->q;
    if (const auto* u = std::get_if<Uniform>(&d)) return 0.5 * (u->lo + u->hi);
    return std::get<Point>(d).q;
}

struct EffortLevel {
    double cost = 0.0;
    ReductionDistribution outcome = Point{0.0};

    bool is_null() const {
        const auto* pt = std::get_if<Point>(&outcome);
        return cost == 0.0 && pt != nullptr && pt->q == 0.0;
    }
};

/// An agent's private type. Level 0 is always the null level (cost 0, reduce 0):
/// any agent can sign a contract, invest nothing and absorb the penalty.
class AgentModel {
public:
    AgentModel() : AgentModel("", {}) {}

    AgentModel(std::string id, std::vector<EffortLevel> levels) : id_(std::move(id)) {
        for (const auto& lvl : levels) {
            if (!(lvl.cost >= 0) || !std::isfinite(lvl.cost)) throw InvalidInput("effort cost must be finite and >= 0");
            validate(lvl.outcome);
        }
        const bool has_null = std::any_of(levels.begin(), levels.end(), [](const EffortLevel& l) { return l.is_null(); });
        if (!has_null) levels_.push_back(EffortLevel{});
        for (auto& lvl : levels) levels_.push_back(std::move(lvl));
    }

    const std::string& id() const { return id_; }
    std::span<const EffortLevel> levels() const { return levels_; }
    const EffortLevel& level(std::size_t i) const { return levels_.at(i); }

private:
    std::string id_;
    std::vector<EffortLevel> levels_;
};

/// The cost-minimizing response to a contract.
struct CostPlan {
    std::size_t level = 0;         ///< index into AgentModel::levels()
    double investment = 0.0;       ///< c*(j)
    double expected_penalty = 0.0; ///< EF(j, c*(j))
    double total_cost = 0.0;       ///< C*(j) = investment + expected penalty
};

/// E[F(j, X)] for X drawn from the distribution. Exact in all cases: atoms are
/// evaluated directly and uniform supports are integrated piece by piece.
inline double expected_penalty(const ReductionDistribution& d, const Contract& c) {
    if (const auto* pt = std::get_if<Point>(&d)) return penalty(c, pt->q);
    if (const auto* b = std::get_if<Bernoulli>(&d)) {
        return b->p * penalty(c, b->q) + (1.0 - b->p) * penalty(c, 0.0);
    }
    const auto& u = std::get<Uniform>(d);
    if (u.hi == u.lo) return penalty(c, u.lo);
    double integral = 0.0;
    for (const auto& piece : penalty_pieces(c)) {
        const double s = std::max(piece.lo, u.lo);
        const double e = std::min(piece.hi, u.hi);
        if (e <= s) continue;
        integral += piece.intercept * (e - s) + piece.slope * 0.5 * (e * e - s * s);
    }
    return integral / (u.hi - u.lo);
}

inline double expected_penalty(const EffortLevel& level, const Contract& c) {
    return expected_penalty(level.outcome, c);
}

/// Minimizes investment + expected penalty over the agent's levels. Ties go to
/// the cheaper investment, then to the lower level index.
inline CostPlan optimal_plan(const AgentModel& a, const Contract& c) {
    CostPlan best;
    bool have = false;
    const auto levels = a.levels();
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const double ef = expected_penalty(levels[i], c);
        const CostPlan cand{i, levels[i].cost, ef, levels[i].cost + ef};
        if (!have || cand.total_cost < best.total_cost - kMoneyTolerance ||
            (money_equal(cand.total_cost, best.total_cost) && cand.investment < best.investment - kMoneyTolerance)) {
            best = cand;
            have = true;
        }
    }
    return best;
}

/// Truthful bid row: C*(j) for each offered contract.
inline std::vector<double> true_bids(const AgentModel& a, std::span<const Contract> contracts) {
    std::vector<double> row;
    row.reserve(contracts.size());
    for (const auto& c : contracts) row.push_back(optimal_plan(a, c).total_cost);
    return row;
}

inline double sample_reduction(const ReductionDistribution& d, Rng& rng) {
    if (const auto* pt = std::get_if<Point>(&d)) return pt->q;
    if (const auto* b = std::get_if<Bernoulli>(&d)) return unit_uniform(rng) < b->p ? b->q : 0.0;
    const auto& u = std::get<Uniform>(d);
    return u.lo + (u.hi - u.lo) * unit_uniform(rng);
}

inline double sample_reduction(const EffortLevel& level, Rng& rng) { return sample_reduction(level.outcome, rng); }

}  // namespace drvcg
