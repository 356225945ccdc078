#pragma once

// Probability that independent reductions plus a deterministic reserve reach a
// goal, computed exactly by convolution or estimated by sampling, and the
// analytic failure bounds for Fixed and Cliff contract sets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drvcg/agents.hpp"
#include "drvcg/common.hpp"
#include "drvcg/contracts.hpp"

namespace drvcg {

struct ReliabilityResult {
    enum class Method { exact, monte_carlo };
    double probability = 1.0;
    Method method = Method::exact;
    std::uint64_t samples = 0;   ///< Monte Carlo only
    double half_width_95 = 0.0;  ///< Monte Carlo only
};

namespace detail {

/// Probability mass on integer positions 0..size-1.
using Pmf = std::vector<double>;

inline Pmf convolve(const Pmf& a, const Pmf& b) {
    Pmf out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) continue;
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

inline std::size_t grid_index(double q, double grid) {
    const double ratio = q / grid;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw ResolutionError("atom at " + std::to_string(q) + " kWh is not a multiple of the grid step " +
                              std::to_string(grid));
    }
    return static_cast<std::size_t>(rounded);
}

/// Mass of U[lo, hi] in each cell [k g, (k+1) g), reported at the cell midpoint.
inline Pmf uniform_cells(const Uniform& u, double grid) {
    const auto first = static_cast<std::size_t>(std::floor(u.lo / grid));
    const auto last = static_cast<std::size_t>(std::max(std::ceil(u.hi / grid), static_cast<double>(first + 1)));
    Pmf pmf(last, 0.0);
    const double width = u.hi - u.lo;
    for (std::size_t k = first; k < last; ++k) {
        const double s = std::max(u.lo, static_cast<double>(k) * grid);
        const double e = std::min(u.hi, static_cast<double>(k + 1) * grid);
        if (e > s) pmf[k] = (e - s) / width;
    }
    return pmf;
}

}  // namespace detail

/// Pr(sum of X_i + reserve >= m) for independent X_i.
///
/// Atoms (Point, Bernoulli) must lie on multiples of `grid` and are handled
/// exactly. Uniform supports are split into grid cells whose mass sits at the
/// cell midpoint; the resulting sum lives on a lattice offset by half a cell
/// per uniform, and mass landing exactly on the goal counts half (the
/// continuous sum has no atom there).
inline ReliabilityResult success_prob_exact(std::span<const ReductionDistribution> selected, double reserve_quantity,
                                            double m, double grid = 1.0) {
    if (!(grid > 0)) throw InvalidInput("grid resolution must be positive");
    if (!(reserve_quantity >= 0)) throw InvalidInput("reserve quantity must be >= 0");
    detail::Pmf atoms{1.0};
    detail::Pmf cells{1.0};
    int uniforms = 0;
    for (const auto& d : selected) {
        validate(d);
        if (const auto* pt = std::get_if<Point>(&d)) {
            detail::Pmf one(detail::grid_index(pt->q, grid) + 1, 0.0);
            one.back() = 1.0;
            atoms = detail::convolve(atoms, one);
        } else if (const auto* b = std::get_if<Bernoulli>(&d)) {
            detail::Pmf one(detail::grid_index(b->q, grid) + 1, 0.0);
            one.front() += 1.0 - b->p;
            one.back() += b->p;
            atoms = detail::convolve(atoms, one);
        } else {
            const auto& u = std::get<Uniform>(d);
            if (u.hi == u.lo) {
                detail::Pmf one(detail::grid_index(u.lo, grid) + 1, 0.0);
                one.back() = 1.0;
                atoms = detail::convolve(atoms, one);
            } else {
                cells = detail::convolve(cells, detail::uniform_cells(u, grid));
                ++uniforms;
            }
        }
    }

    const double need = m - reserve_quantity;
    double prob = 0.0;
    for (std::size_t d = 0; d < atoms.size(); ++d) {
        if (atoms[d] == 0.0) continue;
        const double rest = need - static_cast<double>(d) * grid;  // the continuous part must cover this
        double tail = 0.0;
        if (uniforms == 0) {
            tail = rest <= 1e-9 * std::max(1.0, std::abs(need)) ? 1.0 : 0.0;
        } else {
            // cell sums K sit at (K + uniforms / 2) * grid
            const double k_edge = rest / grid - 0.5 * uniforms;
            for (std::size_t k = 0; k < cells.size(); ++k) {
                const double kk = static_cast<double>(k);
                if (std::abs(kk - k_edge) <= 1e-9 * std::max(1.0, kk)) tail += 0.5 * cells[k];
                else if (kk > k_edge) tail += cells[k];
            }
        }
        prob += atoms[d] * tail;
    }
    return {std::clamp(prob, 0.0, 1.0), ReliabilityResult::Method::exact, 0, 0.0};
}

/// Sampled estimate with a binomial 95% half-width. Draws are taken in fixed
/// blocks with per-block seeds, so the result depends only on (inputs, seed).
inline ReliabilityResult success_prob_mc(std::span<const ReductionDistribution> selected, double reserve_quantity,
                                         double m, std::uint64_t samples, std::uint64_t seed) {
    if (samples < 1) throw InvalidInput("sample count must be >= 1");
    for (const auto& d : selected) validate(d);
    constexpr std::uint64_t kBlock = 4096;
    std::uint64_t hits = 0;
    for (std::uint64_t start = 0, block = 0; start < samples; start += kBlock, ++block) {
        Rng rng(derive_seed(seed, block));
        const std::uint64_t end = std::min(samples, start + kBlock);
        for (std::uint64_t s = start; s < end; ++s) {
            double total = reserve_quantity;
            for (const auto& d : selected) total += sample_reduction(d, rng);
            if (total >= m) ++hits;
        }
    }
    const double n = static_cast<double>(samples);
    const double p = static_cast<double>(hits) / n;
    return {p, ReliabilityResult::Method::monte_carlo, samples, 1.96 * std::sqrt(p * (1.0 - p) / n)};
}

/// Worst-case failure probability of an optimal set of Fixed contracts sharing penalty f.
inline double failure_bound_fixed(double sb_star, double f) {
    if (!(f > 0)) throw InvalidInput("penalty f must be positive");
    if (!(sb_star >= 0)) throw InvalidInput("sum of bids must be >= 0");
    return std::min(1.0, sb_star / f);
}

struct CliffBound {
    double threshold = 0.0;  ///< alpha * m
    double bound = 0.0;      ///< upper bound on Pr(sum X < threshold)
};

/// For a set of Cliff contracts sharing (f, alpha): Pr(sum X < alpha m) <= SB / f.
inline CliffBound failure_bound_cliff(double sb, double f, double alpha, double m) {
    if (!(f > 0)) throw InvalidInput("penalty f must be positive");
    if (!(alpha >= 0 && alpha < 1)) throw InvalidInput("alpha must lie in [0, 1)");
    if (!(sb >= 0)) throw InvalidInput("sum of bids must be >= 0");
    return {alpha * m, std::min(1.0, sb / f)};
}

/// The (f, alpha) shared by every non-null contract of a Cliff set; throws otherwise.
inline std::pair<double, double> shared_cliff_parameters(std::span<const Contract> set) {
    std::pair<double, double> shared{0.0, 0.0};
    bool have = false;
    for (const auto& c : set) {
        if (c.is_null()) continue;
        const auto* cliff = std::get_if<CliffPenalty>(&c.scheme);
        if (cliff == nullptr) throw InvalidInput("contract " + c.id + " is not a cliff contract");
        if (!have) {
            shared = {cliff->f, cliff->alpha};
            have = true;
        } else if (!money_equal(cliff->f, shared.first) || cliff->alpha != shared.second) {
            throw InvalidInput("cliff bound needs one shared f and alpha across the contract set");
        }
    }
    return shared;
}

/// Upper bound on m' - E[sum X] for agents holding unit Fixed contracts with penalty f.
inline double expected_shortfall_bound(double sb_star, double f, double m_prime) {
    if (!(f > 0)) throw InvalidInput("penalty f must be positive");
    if (!(sb_star >= 0)) throw InvalidInput("sum of bids must be >= 0");
    (void)m_prime;
    return sb_star / f;
}

}  // namespace drvcg
