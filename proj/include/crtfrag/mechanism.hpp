#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace crtfrag {

// ---------------------------------------------------------------------------
// Lévy measures
// ---------------------------------------------------------------------------

/// No jumps.
struct ZeroMeasure {
    bool operator==(const ZeroMeasure&) const = default;
};

/// Density c * l^(-1-a) * exp(-damping * l) on (0, inf), 1 < a < 2.
/// `damping` accumulates exponential tilts so that tilting stays closed.
struct StablePower {
    double c = 0.0;
    double a = 1.5;
    double damping = 0.0;
    bool operator==(const StablePower&) const = default;
};

struct Atom {
    double size = 0.0;
    double rate = 0.0;
    bool operator==(const Atom&) const = default;
};

/// Sum of point masses rate_i * delta_{size_i}.
struct FiniteAtoms {
    std::vector<Atom> atoms;
    bool operator==(const FiniteAtoms&) const = default;
};

/// Density c * exp(-gamma * l).
struct ExpDensity {
    double c = 0.0;
    double gamma = 1.0;
    bool operator==(const ExpDensity&) const = default;
};

using LevyMeasure = std::variant<ZeroMeasure, StablePower, FiniteAtoms, ExpDensity>;

/// Scale making the untilted stable part of psi exactly lambda^a.
double stable_unit_scale(double a);

// ---------------------------------------------------------------------------
// Branching mechanism
// ---------------------------------------------------------------------------

/// psi(l) = alpha*l + beta*l^2 + int (e^{-l x} - 1 + l x) pi(dx).
///
/// Construction validates every invariant (positivity, infinite variation,
/// lambda/psi(lambda) -> 0), so a live object is always usable.
class BranchingMechanism {
public:
    static BranchingMechanism create(double alpha, double beta, LevyMeasure levy);

    static BranchingMechanism brownian(double beta = 0.5) { return create(0.0, beta, ZeroMeasure{}); }

    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    const LevyMeasure& levy() const noexcept { return levy_; }

    bool has_jumps() const noexcept { return !std::holds_alternative<ZeroMeasure>(levy_); }
    bool finite_activity() const noexcept;
    /// Total jump rate pi((0, inf)); infinite for stable measures.
    double total_jump_rate() const;

    bool operator==(const BranchingMechanism&) const = default;

private:
    BranchingMechanism(double alpha, double beta, LevyMeasure levy)
        : alpha_(alpha), beta_(beta), levy_(std::move(levy)) {}

    double alpha_ = 0.0;
    double beta_ = 0.0;
    LevyMeasure levy_;
};

enum class IntegralMethod { Auto, Quadrature };

/// Integrals against pi used by psi, psi', tilting and the oracles.
struct LevyIntegral {
    enum class Kind {
        LMinL2,                        // int (l ^ l^2) pi(dl)
        OneMinusExpTimesL,             // int (1 - e^{-p l}) l pi(dl)
        LTimesOneMinusExp,             // int l (1 - e^{-p l}) pi(dl)
        OneMinusExp,                   // int (1 - e^{-p l}) pi(dl)
        FirstMoment,                   // int l pi(dl)
        CompensatedExp,                // int (e^{-p l} - 1 + p l) pi(dl)
    };
    Kind kind = Kind::LMinL2;
    double parameter = 0.0;

    static LevyIntegral l_min_l2() { return {Kind::LMinL2, 0.0}; }
    static LevyIntegral one_minus_exp_times_l(double theta) { return {Kind::OneMinusExpTimesL, theta}; }
    static LevyIntegral l_times_one_minus_exp(double lambda) { return {Kind::LTimesOneMinusExp, lambda}; }
    static LevyIntegral one_minus_exp(double theta) { return {Kind::OneMinusExp, theta}; }
    static LevyIntegral first_moment() { return {Kind::FirstMoment, 0.0}; }
    static LevyIntegral compensated_exp(double lambda) { return {Kind::CompensatedExp, lambda}; }
};

double levy_integral(const LevyMeasure& levy, LevyIntegral what, IntegralMethod method = IntegralMethod::Auto);
double levy_integral(const BranchingMechanism& m, LevyIntegral what, IntegralMethod method = IntegralMethod::Auto);

double psi(const BranchingMechanism& m, double lambda, IntegralMethod method = IntegralMethod::Auto);
double psi_prime(const BranchingMechanism& m, double lambda, IntegralMethod method = IntegralMethod::Auto);
double psi_inverse(const BranchingMechanism& m, double v);

/// Esscher tilt: psi^(theta)(l) = psi(theta + l) - psi(theta).
BranchingMechanism tilt(const BranchingMechanism& m, double theta);

struct PsiPrimeOfInverse {
    double value = 0.0;              // psi'(psi^{-1}(lambda))
    double inverse_derivative = 0.0; // (psi^{-1})'(lambda)
};

PsiPrimeOfInverse psi_prime_of_inverse(const BranchingMechanism& m, double lambda);

/// Tail t(c) = pi_*((c, inf)) of the Lévy measure of the psi^{-1}
/// subordinator, where a closed form is known (pure Brownian with any drift).
std::optional<double> excursion_length_tail(const BranchingMechanism& m, double c);

// JSON schema: {"alpha": x, "beta": x, "levy": {"kind": "zero"|"stable"|"atoms"|"exp", ...}}
nlohmann::json to_json(const BranchingMechanism& m);
BranchingMechanism mechanism_from_json(const nlohmann::json& j);

std::string describe(const BranchingMechanism& m);

} // namespace crtfrag
