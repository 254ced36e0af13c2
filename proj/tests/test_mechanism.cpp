#include <doctest.h>

#include <cmath>

#include "crtfrag/error.hpp"
#include "crtfrag/mechanism.hpp"

using namespace crtfrag;

namespace {

const double kStableC = 3.0 / (4.0 * std::sqrt(M_PI));

BranchingMechanism stable32() { return BranchingMechanism::create(0.0, 0.0, StablePower{kStableC, 1.5, 0.0}); }
BranchingMechanism brownian_atoms() { return BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{1.0, 1.0}}}); }
BranchingMechanism hybrid() { return BranchingMechanism::create(0.0, 0.5, StablePower{kStableC, 1.5, 0.0}); }
BranchingMechanism exp_mech() { return BranchingMechanism::create(0.3, 0.5, ExpDensity{2.0, 1.5}); }

std::vector<BranchingMechanism> shipped() {
    return {BranchingMechanism::brownian(), brownian_atoms(), stable32(), hybrid(), exp_mech(),
            BranchingMechanism::create(0.0, 0.0, StablePower{kStableC, 1.5, 0.7})};
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
    return g;
}

} // namespace

TEST_CASE("psi examples") {
    CHECK(psi(BranchingMechanism::brownian(), 2.0) == doctest::Approx(2.0));
    for (const auto& m : shipped()) CHECK(psi(m, 0.0) == 0.0);
    CHECK(psi(stable32(), 4.0) == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(psi(stable32(), 4.0, IntegralMethod::Quadrature) == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(stable_unit_scale(1.5) == doctest::Approx(kStableC).epsilon(1e-14));
}

TEST_CASE("psi_prime examples") {
    CHECK(psi_prime(BranchingMechanism::brownian(), 2.0) == doctest::Approx(2.0));
    CHECK(psi_prime(exp_mech(), 0.0) == doctest::Approx(0.3));
    CHECK(psi_prime(stable32(), 4.0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(psi_prime(stable32(), 4.0, IntegralMethod::Quadrature) == doctest::Approx(3.0).epsilon(1e-9));
    const double h = 1e-5;
    double fd = (psi(stable32(), 4.0 + h) - psi(stable32(), 4.0 - h)) / (2 * h);
    CHECK(std::abs(fd - 3.0) / 3.0 < 1e-6);
}

TEST_CASE("psi_inverse examples") {
    CHECK(psi_inverse(BranchingMechanism::brownian(), 2.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(psi_inverse(stable32(), 0.0) == 0.0);
    double x = psi_inverse(stable32(), 8.0);
    CHECK(x == doctest::Approx(4.0).epsilon(1e-11));
    CHECK(std::abs(psi(stable32(), x) - 8.0) <= 1e-10 * 8.0);
}

TEST_CASE("tilt examples") {
    auto t = tilt(BranchingMechanism::brownian(), 1.0);
    CHECK(t.alpha() == doctest::Approx(1.0));
    CHECK(t.beta() == 0.5);
    CHECK(std::holds_alternative<ZeroMeasure>(t.levy()));
    CHECK(tilt(brownian_atoms(), 0.0) == brownian_atoms());
    auto s = tilt(stable32(), 1.0);
    CHECK(s.alpha() == doctest::Approx(1.5).epsilon(1e-12));
    for (const auto& m : shipped())
        for (double th : {0.1, 1.0, 3.0}) CHECK(tilt(m, th).alpha() == psi_prime(m, th));
}

TEST_CASE("repeated tilts accumulate") {
    for (const auto& m : shipped()) {
        auto a = tilt(tilt(m, 0.4), 0.9);
        auto b = tilt(m, 1.3);
        for (double l : {0.5, 2.0, 7.0}) CHECK(psi(a, l) == doctest::Approx(psi(b, l)).epsilon(1e-10));
    }
}

TEST_CASE("levy_integral examples") {
    auto atoms = BranchingMechanism::create(0.0, 1.0, FiniteAtoms{{{1.0, 1.0}}});
    CHECK(levy_integral(atoms, LevyIntegral::l_min_l2()) == doctest::Approx(1.0));
    for (auto k : {LevyIntegral::l_min_l2(), LevyIntegral::one_minus_exp_times_l(1.0),
                   LevyIntegral::l_times_one_minus_exp(2.0), LevyIntegral::first_moment()})
        CHECK(levy_integral(BranchingMechanism::brownian(), k) == 0.0);
    // theta^{a-1} c Gamma(2-a) / (a-1)
    double oracle = kStableC * std::tgamma(0.5) / 0.5;
    CHECK(oracle == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(levy_integral(stable32(), LevyIntegral::one_minus_exp_times_l(1.0)) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(levy_integral(stable32(), LevyIntegral::one_minus_exp_times_l(1.0), IntegralMethod::Quadrature) ==
          doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("levy_integral closed forms agree with quadrature") {
    std::vector<LevyIntegral> kinds = {LevyIntegral::l_min_l2(), LevyIntegral::one_minus_exp_times_l(0.7),
                                       LevyIntegral::l_times_one_minus_exp(3.0), LevyIntegral::compensated_exp(2.5)};
    for (const auto& m : shipped()) {
        for (const auto& k : kinds) {
            double a = levy_integral(m, k);
            double q = levy_integral(m, k, IntegralMethod::Quadrature);
            CHECK(a == doctest::Approx(q).epsilon(1e-8));
        }
    }
    auto e = exp_mech();
    CHECK(levy_integral(e, LevyIntegral::one_minus_exp(1.2)) ==
          doctest::Approx(levy_integral(e, LevyIntegral::one_minus_exp(1.2), IntegralMethod::Quadrature)).epsilon(1e-8));
    CHECK(levy_integral(e, LevyIntegral::first_moment()) == doctest::Approx(2.0 / 2.25));
}

TEST_CASE("divergent stable integrals are rejected") {
    auto check_code = [](auto f, Errc code) {
        try {
            f();
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };
    check_code([] { levy_integral(stable32(), LevyIntegral::first_moment()); }, Errc::DivergentIntegral);
    check_code([] { levy_integral(stable32(), LevyIntegral::one_minus_exp(1.0)); }, Errc::DivergentIntegral);
}

TEST_CASE("psi_prime_of_inverse examples") {
    auto b = BranchingMechanism::brownian();
    CHECK(psi_prime_of_inverse(b, 2.0).value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(psi_prime_of_inverse(b, 8.0).value == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(psi_prime_of_inverse(b, 8.0).inverse_derivative == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(psi_prime_of_inverse(stable32(), 8.0).value == doctest::Approx(3.0).epsilon(1e-10));
    try {
        psi_prime_of_inverse(b, 0.0);
        FAIL("expected degenerate at zero");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DegenerateAtZero);
    }
    auto drifted = BranchingMechanism::create(0.5, 0.5, ZeroMeasure{});
    CHECK(psi_prime_of_inverse(drifted, 0.0).value == doctest::Approx(0.5));
}

TEST_CASE("construction invariants") {
    auto code_of = [](auto f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::Io;
    };
    CHECK(code_of([] { BranchingMechanism::create(0.0, 0.0, FiniteAtoms{{{1.0, 1.0}}}); }) ==
          Errc::InfiniteVariationViolated);
    CHECK(code_of([] { BranchingMechanism::create(0.0, 0.0, ZeroMeasure{}); }) == Errc::InfiniteVariationViolated);
    CHECK(code_of([] { BranchingMechanism::create(-1.0, 0.5, ZeroMeasure{}); }) == Errc::InvalidMechanism);
    CHECK(code_of([] { BranchingMechanism::create(0.0, 0.5, StablePower{1.0, 2.0, 0.0}); }) == Errc::InvalidMechanism);
    CHECK(code_of([] { BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{1.0, -1.0}}}); }) == Errc::InvalidMechanism);
}

TEST_CASE("round trip, tilt consistency, convexity, finite differences") {
    for (const auto& m : shipped()) {
        CAPTURE(describe(m));
        for (double l : log_grid(1e-3, 1e3, 25)) {
            CHECK(std::abs(psi_inverse(m, psi(m, l)) - l) <= 1e-8 * (1 + l));
            const double h = 1e-5 * std::min(1.0, l);
            double fd = (psi(m, l + h) - psi(m, l - h)) / (2 * h);
            CHECK(std::abs(fd - psi_prime(m, l)) <= 1e-6 * std::max(psi_prime(m, l), 1e-3));
        }
        for (double th : {0.25, 1.0, 4.0}) {
            auto t = tilt(m, th);
            for (double l : log_grid(1e-2, 1e2, 9)) {
                double lhs = psi(t, l), rhs = psi(m, th + l) - psi(m, th);
                CHECK(std::abs(lhs - rhs) <= 1e-8 * (1 + psi(m, th + l)));
            }
        }
        auto g = log_grid(1e-3, 1e3, 40);
        for (std::size_t i = 1; i + 1 < g.size(); ++i) {
            // divided second difference on a nonuniform grid
            double s1 = (psi(m, g[i]) - psi(m, g[i - 1])) / (g[i] - g[i - 1]);
            double s2 = (psi(m, g[i + 1]) - psi(m, g[i])) / (g[i + 1] - g[i]);
            CHECK(s2 - s1 >= -1e-8);
        }
    }
}

TEST_CASE("excursion length tail matches the subordinator exponent") {
    // N[1 - e^{-lambda sigma}] = int lambda e^{-lambda c} t(c) dc
    auto check = [](const BranchingMechanism& m) {
        for (double lam : {0.5, 2.0}) {
            double s = 0.0;
            const int n = 200000;
            // substitute c = x^2 to tame the c^{-1/2} singularity
            const double xmax = std::sqrt(60.0 / lam);
            for (int i = 0; i < n; ++i) {
                double x = (i + 0.5) * xmax / n;
                double c = x * x;
                s += lam * std::exp(-lam * c) * *excursion_length_tail(m, c) * 2 * x * (xmax / n);
            }
            CHECK(s == doctest::Approx(psi_inverse(m, lam)).epsilon(1e-4));
        }
    };
    check(BranchingMechanism::brownian());
    check(BranchingMechanism::create(1.0, 0.5, ZeroMeasure{}));
    check(BranchingMechanism::create(0.3, 2.0, ZeroMeasure{}));
    CHECK(*excursion_length_tail(BranchingMechanism::brownian(), 0.1) == doctest::Approx(std::sqrt(2 / (M_PI * 0.1))));
    CHECK_FALSE(excursion_length_tail(brownian_atoms(), 1.0).has_value());
}

TEST_CASE("json round trip and field errors") {
    for (const auto& m : shipped()) CHECK(mechanism_from_json(to_json(m)) == m);
    auto j = nlohmann::json::parse(R"({"alpha":0,"beta":0.5})");
    CHECK(std::holds_alternative<ZeroMeasure>(mechanism_from_json(j).levy()));
    auto s = mechanism_from_json(nlohmann::json::parse(R"({"beta":0,"levy":{"kind":"stable","a":1.5}})"));
    CHECK(std::get<StablePower>(s.levy()).c == doctest::Approx(kStableC));
    try {
        mechanism_from_json(nlohmann::json::parse(R"({"beta":-1})"));
        FAIL("expected field error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidField);
        CHECK(std::string(e.what()).find("beta") != std::string::npos);
    }
    try {
        mechanism_from_json(nlohmann::json::parse(R"({"beta":1,"gamma":2})"));
        FAIL("expected unknown key");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownKey);
        CHECK(std::string(e.what()).find("gamma") != std::string::npos);
    }
}
