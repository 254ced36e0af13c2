#include "crtfrag/mechanism.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "crtfrag/error.hpp"

namespace crtfrag {

namespace {

constexpr double kQuadTol = 1e-10;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// e^{-x} - 1 + x without cancellation for small x.
double compensated_exp(double x) {
    if (x < 1e-4) return x * x * (0.5 - x * (1.0 / 6.0 - x / 24.0));
    return std::expm1(-x) + x;
}

double one_minus_exp(double x) { return -std::expm1(-x); }

// The integrand of `what`, excluding the density of pi.
double kernel(const LevyIntegral& what, double l) {
    using K = LevyIntegral::Kind;
    switch (what.kind) {
    case K::LMinL2: return l < 1.0 ? l * l : l;
    case K::OneMinusExpTimesL:
    case K::LTimesOneMinusExp: return l * one_minus_exp(what.parameter * l);
    case K::OneMinusExp: return one_minus_exp(what.parameter * l);
    case K::FirstMoment: return l;
    case K::CompensatedExp: return compensated_exp(what.parameter * l);
    }
    return 0.0;
}

template <class F>
double integrate_half_line(F f) {
    boost::math::quadrature::tanh_sinh<double> ts;
    boost::math::quadrature::exp_sinh<double> es;
    double near = ts.integrate(f, 0.0, 1.0, kQuadTol);
    double far = es.integrate([&](double x) { return f(1.0 + x); }, kQuadTol);
    return near + far;
}

// (1+x)^a - 1 - a x
double binomial_tail(double a, double x) {
    if (x > 0.1) return std::expm1(a * std::log1p(x)) - a * x;
    double term = a * (a - 1.0) / 2.0 * x * x, sum = 0.0;
    for (int k = 2; k < 200 && std::abs(term) > 1e-18 * std::abs(sum); ++k) {
        sum += term;
        term *= (a - k) / (k + 1.0) * x;
    }
    return sum;
}

bool stable_divergent(LevyIntegral::Kind k) {
    return k == LevyIntegral::Kind::OneMinusExp || k == LevyIntegral::Kind::FirstMoment;
}

double stable_closed(const StablePower& s, const LevyIntegral& what, bool& ok) {
    using K = LevyIntegral::Kind;
    const double a = s.a, c = s.c, d = s.damping, p = what.parameter;
    ok = true;
    switch (what.kind) {
    case K::CompensatedExp: {
        double g = boost::math::tgamma(-a);
        if (d == 0.0) return c * g * std::pow(p, a);
        return c * g * std::pow(d, a) * binomial_tail(a, p / d);
    }
    case K::OneMinusExpTimesL:
    case K::LTimesOneMinusExp: {
        double g = boost::math::tgamma(1.0 - a);
        if (d == 0.0) return -c * g * std::pow(p, a - 1.0);
        return -c * g * std::pow(d, a - 1.0) * std::expm1((a - 1.0) * std::log1p(p / d));
    }
    case K::LMinL2:
        if (d == 0.0) return c * (1.0 / (2.0 - a) + 1.0 / (a - 1.0));
        break;
    default: break;
    }
    ok = false;
    return 0.0;
}

double exp_closed(const ExpDensity& e, const LevyIntegral& what) {
    using K = LevyIntegral::Kind;
    const double c = e.c, g = e.gamma, p = what.parameter;
    switch (what.kind) {
    case K::LMinL2: {
        double eg = std::exp(-g);
        return c * ((2.0 - eg * (g * g + 2.0 * g + 2.0)) / (g * g * g) + eg * (g + 1.0) / (g * g));
    }
    case K::OneMinusExpTimesL:
    case K::LTimesOneMinusExp: return c * p * (2.0 * g + p) / (g * g * (g + p) * (g + p));
    case K::OneMinusExp: return c * p / (g * (g + p));
    case K::FirstMoment: return c / (g * g);
    case K::CompensatedExp: return c * p * p / (g * g * (g + p));
    }
    return 0.0;
}

void require(bool cond, const std::string& what) {
    if (!cond) fail(Errc::InvalidMechanism, what);
}

} // namespace

double stable_unit_scale(double a) { return a * (a - 1.0) / std::tgamma(2.0 - a); }

BranchingMechanism BranchingMechanism::create(double alpha, double beta, LevyMeasure levy) {
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be finite and >= 0");
    require(std::isfinite(beta) && beta >= 0.0, "beta must be finite and >= 0");
    bool stable = false;
    std::visit(overloaded{
                   [](const ZeroMeasure&) {},
                   [&](const StablePower& s) {
                       stable = true;
                       require(std::isfinite(s.c) && s.c > 0.0, "stable scale c must be > 0");
                       require(s.a > 1.0 && s.a < 2.0, "stable index a must lie in (1,2)");
                       require(std::isfinite(s.damping) && s.damping >= 0.0, "stable damping must be >= 0");
                   },
                   [](const FiniteAtoms& f) {
                       require(!f.atoms.empty(), "atoms list is empty");
                       for (const auto& at : f.atoms) {
                           require(std::isfinite(at.size) && at.size > 0.0, "atom size must be > 0");
                           require(std::isfinite(at.rate) && at.rate > 0.0, "atom rate must be > 0");
                       }
                   },
                   [](const ExpDensity& e) {
                       require(std::isfinite(e.c) && e.c > 0.0, "exp scale c must be > 0");
                       require(std::isfinite(e.gamma) && e.gamma > 0.0, "exp gamma must be > 0");
                   },
               },
               levy);
    if (!(beta > 0.0 || stable))
        fail(Errc::InfiniteVariationViolated, "beta = 0 requires a stable component");
    BranchingMechanism m(alpha, beta, std::move(levy));
    if (beta > 0.0) {
        const double big = 1e6;
        double r = big / psi(m, big);
        require(std::isfinite(r) && r < 1e-2 / beta, "lambda/psi(lambda) does not vanish");
    }
    return m;
}

bool BranchingMechanism::finite_activity() const noexcept {
    return !std::holds_alternative<StablePower>(levy_);
}

double BranchingMechanism::total_jump_rate() const {
    return std::visit(overloaded{
                          [](const ZeroMeasure&) { return 0.0; },
                          [](const StablePower&) { return std::numeric_limits<double>::infinity(); },
                          [](const FiniteAtoms& f) {
                              double w = 0.0;
                              for (const auto& at : f.atoms) w += at.rate;
                              return w;
                          },
                          [](const ExpDensity& e) { return e.c / e.gamma; },
                      },
                      levy_);
}

double levy_integral(const LevyMeasure& levy, LevyIntegral what, IntegralMethod method) {
    if (what.parameter < 0.0 || !std::isfinite(what.parameter))
        fail(Errc::InvalidArgument, "levy integral parameter must be >= 0");
    return std::visit(
        overloaded{
            [](const ZeroMeasure&) { return 0.0; },
            [&](const FiniteAtoms& f) {
                double s = 0.0;
                for (const auto& at : f.atoms) s += at.rate * kernel(what, at.size);
                return s;
            },
            [&](const StablePower& s) {
                if (stable_divergent(what.kind))
                    fail(Errc::DivergentIntegral, "integral diverges at 0 for a stable measure");
                if (method == IntegralMethod::Auto) {
                    bool ok = false;
                    double v = stable_closed(s, what, ok);
                    if (ok) return v;
                }
                return integrate_half_line([&](double l) {
                    // the integrand is O(l^{1-a}) here, so this cut is far below tolerance
                    if (l < 1e-100) return 0.0;
                    return kernel(what, l) * s.c * std::pow(l, -1.0 - s.a) * std::exp(-s.damping * l);
                });
            },
            [&](const ExpDensity& e) {
                if (method == IntegralMethod::Auto) return exp_closed(e, what);
                return integrate_half_line(
                    [&](double l) { return kernel(what, l) * e.c * std::exp(-e.gamma * l); });
            },
        },
        levy);
}

double levy_integral(const BranchingMechanism& m, LevyIntegral what, IntegralMethod method) {
    return levy_integral(m.levy(), what, method);
}

double psi(const BranchingMechanism& m, double lambda, IntegralMethod method) {
    if (!(lambda >= 0.0)) fail(Errc::InvalidArgument, "psi needs lambda >= 0");
    if (lambda == 0.0) return 0.0;
    double jumps = m.has_jumps() ? levy_integral(m, LevyIntegral::compensated_exp(lambda), method) : 0.0;
    return m.alpha() * lambda + m.beta() * lambda * lambda + jumps;
}

double psi_prime(const BranchingMechanism& m, double lambda, IntegralMethod method) {
    if (!(lambda >= 0.0)) fail(Errc::InvalidArgument, "psi_prime needs lambda >= 0");
    double jumps = (m.has_jumps() && lambda > 0.0)
                       ? levy_integral(m, LevyIntegral::l_times_one_minus_exp(lambda), method)
                       : 0.0;
    return m.alpha() + 2.0 * m.beta() * lambda + jumps;
}

double psi_inverse(const BranchingMechanism& m, double v) {
    if (!(v >= 0.0)) fail(Errc::InvalidArgument, "psi_inverse needs v >= 0");
    if (v == 0.0) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (psi(m, hi) <= v) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) fail(Errc::InvalidArgument, "psi_inverse bracket overflow");
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double f = psi(m, x) - v;
        if (f == 0.0) return x;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        if (hi - lo <= 1e-15 * hi) break;
        double d = psi_prime(m, x);
        double next = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * x) return next;
        x = next;
    }
    return 0.5 * (lo + hi);
}

BranchingMechanism tilt(const BranchingMechanism& m, double theta) {
    if (!(theta >= 0.0)) fail(Errc::InvalidArgument, "tilt needs theta >= 0");
    if (theta == 0.0) return m;
    LevyMeasure tilted = std::visit(
        overloaded{
            [](const ZeroMeasure& z) -> LevyMeasure { return z; },
            [&](const StablePower& s) -> LevyMeasure { return StablePower{s.c, s.a, s.damping + theta}; },
            [&](const FiniteAtoms& f) -> LevyMeasure {
                FiniteAtoms out = f;
                for (auto& at : out.atoms) at.rate *= std::exp(-theta * at.size);
                return out;
            },
            [&](const ExpDensity& e) -> LevyMeasure { return ExpDensity{e.c, e.gamma + theta}; },
        },
        m.levy());
    return BranchingMechanism::create(psi_prime(m, theta), m.beta(), std::move(tilted));
}

PsiPrimeOfInverse psi_prime_of_inverse(const BranchingMechanism& m, double lambda) {
    if (!(lambda >= 0.0)) fail(Errc::InvalidArgument, "psi_prime_of_inverse needs lambda >= 0");
    if (lambda == 0.0 && m.alpha() == 0.0)
        fail(Errc::DegenerateAtZero, "psi'(0) = 0 when alpha = 0");
    double value = psi_prime(m, psi_inverse(m, lambda));
    return {value, 1.0 / value};
}

std::optional<double> excursion_length_tail(const BranchingMechanism& m, double c) {
    if (!(c > 0.0)) fail(Errc::InvalidArgument, "tail needs c > 0");
    if (std::holds_alternative<ZeroMeasure>(m.levy())) {
        const double b = m.beta(), q = m.alpha() * m.alpha() / (4.0 * b);
        const double pi = 3.14159265358979323846;
        double t = std::exp(-q * c) / std::sqrt(c);
        if (q > 0.0) t -= std::sqrt(pi * q) * std::erfc(std::sqrt(q * c));
        return t / std::sqrt(pi * b);
    }
    if (const auto* s = std::get_if<StablePower>(&m.levy())) {
        if (m.alpha() == 0.0 && m.beta() == 0.0 && s->damping == 0.0) {
            double k = s->c * boost::math::tgamma(-s->a);
            double inv = 1.0 / s->a;
            return std::pow(k, -inv) * std::pow(c, -inv) / std::tgamma(1.0 - inv);
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

double number_field(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) fail(Errc::InvalidField, path + key + ": missing");
    const auto& v = j.at(key);
    if (!v.is_number()) fail(Errc::InvalidField, path + key + ": expected a number");
    return v.get<double>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) fail(Errc::UnknownKey, path + it.key());
    }
}

void positive(double v, const std::string& name) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(Errc::InvalidField, name + ": must be > 0");
}

} // namespace

nlohmann::json to_json(const BranchingMechanism& m) {
    json levy = std::visit(overloaded{
                               [](const ZeroMeasure&) { return json{{"kind", "zero"}}; },
                               [](const StablePower& s) {
                                   return json{{"kind", "stable"}, {"c", s.c}, {"a", s.a}, {"damping", s.damping}};
                               },
                               [](const FiniteAtoms& f) {
                                   json atoms = json::array();
                                   for (const auto& at : f.atoms) atoms.push_back({{"size", at.size}, {"rate", at.rate}});
                                   return json{{"kind", "atoms"}, {"atoms", atoms}};
                               },
                               [](const ExpDensity& e) { return json{{"kind", "exp"}, {"c", e.c}, {"gamma", e.gamma}}; },
                           },
                           m.levy());
    return json{{"alpha", m.alpha()}, {"beta", m.beta()}, {"levy", levy}};
}

BranchingMechanism mechanism_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(Errc::InvalidField, "mechanism: expected an object");
    check_keys(j, {"alpha", "beta", "levy"}, "mechanism.");
    double alpha = j.contains("alpha") ? number_field(j, "alpha", "") : 0.0;
    double beta = j.contains("beta") ? number_field(j, "beta", "") : 0.0;
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail(Errc::InvalidField, "alpha: must be >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) fail(Errc::InvalidField, "beta: must be >= 0");

    LevyMeasure levy = ZeroMeasure{};
    if (j.contains("levy")) {
        const json& l = j.at("levy");
        if (!l.is_object() || !l.contains("kind") || !l.at("kind").is_string())
            fail(Errc::InvalidField, "levy.kind: missing");
        std::string kind = l.at("kind").get<std::string>();
        if (kind == "zero") {
            check_keys(l, {"kind"}, "levy.");
        } else if (kind == "stable") {
            check_keys(l, {"kind", "c", "a", "damping"}, "levy.");
            StablePower s;
            s.a = number_field(l, "a", "levy.");
            if (!(s.a > 1.0 && s.a < 2.0)) fail(Errc::InvalidField, "levy.a: must lie in (1,2)");
            s.c = l.contains("c") ? number_field(l, "c", "levy.") : stable_unit_scale(s.a);
            positive(s.c, "levy.c");
            s.damping = l.contains("damping") ? number_field(l, "damping", "levy.") : 0.0;
            if (!(s.damping >= 0.0)) fail(Errc::InvalidField, "levy.damping: must be >= 0");
            levy = s;
        } else if (kind == "atoms") {
            check_keys(l, {"kind", "atoms"}, "levy.");
            if (!l.contains("atoms") || !l.at("atoms").is_array() || l.at("atoms").empty())
                fail(Errc::InvalidField, "levy.atoms: expected a non-empty array");
            FiniteAtoms f;
            for (const auto& a : l.at("atoms")) {
                if (!a.is_object()) fail(Errc::InvalidField, "levy.atoms: expected objects");
                check_keys(a, {"size", "rate"}, "levy.atoms[].");
                Atom at{number_field(a, "size", "levy.atoms[]."), number_field(a, "rate", "levy.atoms[].")};
                positive(at.size, "levy.atoms[].size");
                positive(at.rate, "levy.atoms[].rate");
                f.atoms.push_back(at);
            }
            levy = f;
        } else if (kind == "exp") {
            check_keys(l, {"kind", "c", "gamma"}, "levy.");
            ExpDensity e{number_field(l, "c", "levy."), number_field(l, "gamma", "levy.")};
            positive(e.c, "levy.c");
            positive(e.gamma, "levy.gamma");
            levy = e;
        } else {
            fail(Errc::InvalidField, "levy.kind: unknown kind '" + kind + "'");
        }
    }
    try {
        return BranchingMechanism::create(alpha, beta, std::move(levy));
    } catch (const Error& e) {
        if (e.code() == Errc::InfiniteVariationViolated) throw;
        fail(Errc::InvalidField, std::string("mechanism: ") + e.what());
    }
}

std::string describe(const BranchingMechanism& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "alpha=%g beta=%g", m.alpha(), m.beta());
    std::string out = buf;
    std::visit(overloaded{
                   [&](const ZeroMeasure&) { out += " levy=zero"; },
                   [&](const StablePower& s) {
                       std::snprintf(buf, sizeof buf, " levy=stable(c=%g,a=%g,damping=%g)", s.c, s.a, s.damping);
                       out += buf;
                   },
                   [&](const FiniteAtoms& f) {
                       out += " levy=atoms(";
                       for (std::size_t i = 0; i < f.atoms.size(); ++i) {
                           std::snprintf(buf, sizeof buf, "%s%g@%g", i ? "," : "", f.atoms[i].size, f.atoms[i].rate);
                           out += buf;
                       }
                       out += ")";
                   },
                   [&](const ExpDensity& e) {
                       std::snprintf(buf, sizeof buf, " levy=exp(c=%g,gamma=%g)", e.c, e.gamma);
                       out += buf;
                   },
               },
               m.levy());
    return out;
}

} // namespace crtfrag
