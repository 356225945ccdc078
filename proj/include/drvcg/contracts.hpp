#pragma once

// Penalty contracts, contract grids and reserve (fallback) cost schedules.
//
// A contract pairs a commitment ell (kWh) with a penalty function F(X) of the
// realized reduction X. Two families are supported:
//
//   Fixed(ell, f):              F(X) = f for X < ell, 0 otherwise
//   Cliff(ell, f, alpha, beta): F(X) = f              for X < alpha ell
//                                      (ell - X) beta for alpha ell <= X < ell
//                                      0              for X >= ell
//
// Cliff contracts with alpha > 0 must satisfy f >= ell (1 - alpha) beta so the
// penalty never increases with X. With alpha = 0 the plateau is empty and the
// contract is a pure linear penalty [ell - X]_+ beta.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "drvcg/common.hpp"

namespace drvcg {

struct FixedPenalty {
    double f = 0.0;
};

struct CliffPenalty {
    double f = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

using PenaltyScheme = std::variant<FixedPenalty, CliffPenalty>;

struct Contract {
    std::string id;
    double ell = 0.0;
    PenaltyScheme scheme = FixedPenalty{};

    /// Headline penalty f (the plateau value for cliffs).
    double max_penalty() const {
        return std::visit([](const auto& s) { return s.f; }, scheme);
    }
    bool is_null() const { return ell == 0.0; }
};

/// One affine piece of a penalty function: value(x) = intercept + slope * x on [lo, hi).
struct PenaltyPiece {
    double lo;
    double hi;
    double intercept;
    double slope;
};

/// "<prefix>-<ell>" with ell printed compactly (%g).
inline std::string contract_label(const char* prefix, double ell) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s-%g", prefix, ell);
    return buf;
}

inline Contract null_contract(std::string id = "null") {
    return Contract{std::move(id), 0.0, FixedPenalty{0.0}};
}

inline Contract make_fixed(double ell, double f, std::string id = {}) {
    if (!(ell >= 0) || !std::isfinite(ell)) throw InvalidInput("contract size must be finite and >= 0");
    if (!(f >= 0) || !std::isfinite(f)) throw InvalidInput("fixed penalty must be finite and >= 0");
    if (ell == 0.0) return null_contract(id.empty() ? "null" : std::move(id));
    return Contract{std::move(id), ell, FixedPenalty{f}};
}

inline Contract make_cliff(double ell, double f, double alpha, double beta, std::string id = {}) {
    if (!(ell >= 0) || !std::isfinite(ell)) throw InvalidInput("contract size must be finite and >= 0");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidInput("cliff alpha must lie in [0, 1)");
    if (!(beta >= 0) || !std::isfinite(beta)) throw InvalidInput("cliff beta must be finite and >= 0");
    if (!std::isfinite(f) || f < 0) throw InvalidInput("cliff penalty f must be finite and >= 0");
    // Only meaningful when the plateau exists; the linear-penalty family uses f = 0, alpha = 0.
    if (alpha > 0.0 && f < ell * (1.0 - alpha) * beta - kMoneyTolerance) {
        throw ConstraintViolation("cliff contract violates f >= ell (1 - alpha) beta: f = " +
                                  std::to_string(f) + ", ell (1 - alpha) beta = " +
                                  std::to_string(ell * (1.0 - alpha) * beta));
    }
    if (ell == 0.0) return null_contract(id.empty() ? "null" : std::move(id));
    return Contract{std::move(id), ell, CliffPenalty{f, alpha, beta}};
}

/// Penalty paid when a contract holder reduces x kWh.
inline double penalty(const Contract& c, double x) {
    if (x >= c.ell) return 0.0;
    if (const auto* fixed = std::get_if<FixedPenalty>(&c.scheme)) return fixed->f;
    const auto& cliff = std::get<CliffPenalty>(c.scheme);
    if (x < cliff.alpha * c.ell) return cliff.f;
    return (c.ell - x) * cliff.beta;
}

/// The penalty function over [0, ell) as affine pieces; zero elsewhere.
inline std::vector<PenaltyPiece> penalty_pieces(const Contract& c) {
    std::vector<PenaltyPiece> pieces;
    if (c.ell <= 0.0) return pieces;
    if (const auto* fixed = std::get_if<FixedPenalty>(&c.scheme)) {
        if (fixed->f != 0.0) pieces.push_back({0.0, c.ell, fixed->f, 0.0});
        return pieces;
    }
    const auto& cliff = std::get<CliffPenalty>(c.scheme);
    const double edge = cliff.alpha * c.ell;
    if (edge > 0.0 && cliff.f != 0.0) pieces.push_back({0.0, edge, cliff.f, 0.0});
    if (cliff.beta != 0.0) pieces.push_back({edge, c.ell, c.ell * cliff.beta, -cliff.beta});
    return pieces;
}

/// The cliff contract the deployed $0.5/kWh program is equivalent to: (ell, ell/2, 1/3, 1/2).
inline Contract sce_contract_for_quantity(double ell) {
    if (!(ell >= 0)) throw InvalidInput("contract size must be >= 0");
    if (ell == 0.0) return null_contract();
    return make_cliff(ell, ell / 2.0, 1.0 / 3.0, 0.5, contract_label("sce", ell));
}

/// Contract matching a quantity bid b in the deployed program: ell = 3b/2.
inline Contract sce_equivalent_of_bid(double b) {
    if (!(b >= 0)) throw InvalidInput("bid quantity must be >= 0");
    return sce_contract_for_quantity(1.5 * b);
}

struct ContractFamily {
    enum class Kind {
        sce,      ///< Cliff(ell, ell/2, 1/3, 1/2)
        doubled,  ///< Cliff(ell, ell, 1/3, 1/2): plateau penalty doubled
        linear,   ///< Cliff(ell, 0, 0, 1) = [ell - X]_+
        fixed,    ///< Fixed(ell, f) with one shared f
    };
    Kind kind = Kind::sce;
    double f = 0.0;  ///< only used by Kind::fixed

    static ContractFamily sce() { return {Kind::sce, 0.0}; }
    static ContractFamily doubled() { return {Kind::doubled, 0.0}; }
    static ContractFamily linear() { return {Kind::linear, 0.0}; }
    static ContractFamily fixed(double f) { return {Kind::fixed, f}; }

    Contract instantiate(double ell) const {
        switch (kind) {
            case Kind::sce: return sce_contract_for_quantity(ell);
            case Kind::doubled: return make_cliff(ell, ell, 1.0 / 3.0, 0.5);
            case Kind::linear: return make_cliff(ell, 0.0, 0.0, 1.0);
            case Kind::fixed: return make_fixed(ell, f);
        }
        throw InvalidInput("unknown contract family");
    }

    const char* name() const {
        switch (kind) {
            case Kind::sce: return "sce";
            case Kind::doubled: return "doubled";
            case Kind::linear: return "linear";
            case Kind::fixed: return "fixed";
        }
        return "?";
    }
};

/// Contracts at ell = step, 2 step, ..., max, ids "<family>-<ell>".
inline std::vector<Contract> contract_grid(double step, double max, ContractFamily family) {
    if (!(step > 0)) throw InvalidInput("contract grid step must be positive");
    if (!(max >= step)) throw InvalidInput("contract grid max must be >= step");
    const auto count = static_cast<long>(std::floor(max / step + 1e-9));
    std::vector<Contract> grid;
    grid.reserve(static_cast<std::size_t>(count));
    for (long i = 1; i <= count; ++i) {
        const double ell = static_cast<double>(i) * step;
        Contract c = family.instantiate(ell);
        c.id = contract_label(family.name(), ell);
        grid.push_back(std::move(c));
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Reserve schedules: the grid's cost R_m of covering m kWh itself.

struct LinearReserve {
    double slope = 0.5;
};

/// fixed + slope m for m > 0, and 0 at m = 0 (a generator with a start-up cost).
struct AffineReserve {
    double fixed = 0.0;
    double slope = 0.0;
};

/// Piecewise-linear through (0, 0) and the given (quantity, cost) points.
/// Quantities beyond the last point are rejected.
struct TableReserve {
    std::vector<std::pair<double, double>> points;
};

using ReserveSchedule = std::variant<LinearReserve, AffineReserve, TableReserve>;

inline void validate(const ReserveSchedule& r) {
    if (const auto* lin = std::get_if<LinearReserve>(&r)) {
        if (!(lin->slope >= 0)) throw InvalidInput("reserve slope must be >= 0");
    } else if (const auto* aff = std::get_if<AffineReserve>(&r)) {
        if (!(aff->slope >= 0) || !(aff->fixed >= 0)) throw InvalidInput("affine reserve needs fixed, slope >= 0");
    } else {
        const auto& pts = std::get<TableReserve>(r).points;
        if (pts.empty()) throw InvalidInput("reserve table is empty");
        double prev_q = 0.0, prev_cost = 0.0;
        for (const auto& [q, cost] : pts) {
            if (!(q > prev_q)) throw InvalidInput("reserve table quantities must be strictly increasing and > 0");
            if (!(cost >= prev_cost)) throw InvalidInput("reserve table costs must be nondecreasing and >= 0");
            prev_q = q;
            prev_cost = cost;
        }
    }
}

inline double reserve_cost(const ReserveSchedule& r, double m) {
    if (!(m >= 0)) throw InvalidInput("reserve quantity must be >= 0");
    if (m == 0.0) return 0.0;
    if (const auto* lin = std::get_if<LinearReserve>(&r)) return lin->slope * m;
    if (const auto* aff = std::get_if<AffineReserve>(&r)) return aff->fixed + aff->slope * m;
    const auto& pts = std::get<TableReserve>(r).points;
    double prev_q = 0.0, prev_cost = 0.0;
    for (const auto& [q, cost] : pts) {
        if (m <= q) return prev_cost + (cost - prev_cost) * (m - prev_q) / (q - prev_q);
        prev_q = q;
        prev_cost = cost;
    }
    throw InvalidInput("reserve quantity " + std::to_string(m) + " exceeds the reserve table");
}

}  // namespace drvcg
