#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace drvcg {

/// Absolute tolerance for comparing money amounts.
inline constexpr double kMoneyTolerance = 1e-9;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range input. The CLI maps this to exit status 2.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A contract whose parameters break the cliff constraint f >= ell (1 - alpha) beta.
class ConstraintViolation : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// A distribution atom that does not sit on the requested convolution grid.
class ResolutionError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// No valid contract set reaches the target. The CLI maps this to exit status 1.
class Infeasible : public Error {
public:
    using Error::Error;
};

/// Exhaustive enumeration would exceed its configured bound.
class SizeLimit : public Error {
public:
    using Error::Error;
};

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of the engine output.
/// mt19937_64 output is fixed by the standard, so draws are portable across
/// standard libraries (std::uniform_real_distribution is not).
inline double unit_uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Stable derivation of a task seed from a master seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline bool money_equal(double a, double b, double tol = kMoneyTolerance) {
    return std::abs(a - b) <= tol;
}

/// Converts an energy quantity to a whole number of allocation units.
/// Throws InvalidInput when the quantity is not a multiple of the unit.
inline int to_units(double energy, double unit, const std::string& what) {
    if (!(unit > 0)) throw InvalidInput("allocation unit must be positive");
    const double ratio = energy / unit;
    const double rounded = std::round(ratio);
    if (!(energy >= 0) || std::abs(ratio - rounded) > 1e-6) {
        throw InvalidInput(what + " (" + std::to_string(energy) +
                           ") is not a nonnegative multiple of the allocation unit " +
                           std::to_string(unit));
    }
    return static_cast<int>(rounded);
}

}  // namespace drvcg
