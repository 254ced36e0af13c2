#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crtfrag/error.hpp"
#include "crtfrag/sampler.hpp"
#include "crtfrag/stats.hpp"

using namespace crtfrag;

namespace {

const double kStableC = 3.0 / (4.0 * std::sqrt(M_PI));

// |mean - target| <= 3 stderr
void check_z(const MeanAccumulator& acc, double target, const char* what) {
    double se = acc.stderr_of_mean();
    CAPTURE(what);
    CAPTURE(acc.mean());
    CAPTURE(target);
    CAPTURE(se);
    CHECK(std::abs(acc.mean() - target) <= 3.0 * se);
}

// One step of size t: X_t has exactly the law of the Lévy process for
// compound-Poisson + Gaussian parts, so the step size does not bias e^{-lX}.
double sample_x(const BranchingMechanism& m, double t, double dt, RngStream& rng, const SamplerOptions& o) {
    LevyStepper st(m, dt, o);
    std::vector<double> jumps;
    double x = 0.0;
    for (std::size_t k = 0, n = std::size_t(std::llround(t / dt)); k < n; ++k) {
        jumps.clear();
        x += st.step(rng, jumps);
        for (double j : jumps) x += j;
    }
    return x;
}

} // namespace

TEST_CASE("characteristic function e^{t psi(lambda)}") {
    struct Case {
        BranchingMechanism m;
        double dt;
        SamplerOptions o;
    };
    std::vector<Case> cases = {
        {BranchingMechanism::brownian(), 1e-3, {}},
        {BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{1.0, 1.0}}}), 1e-3, {}},
        {BranchingMechanism::create(0.2, 0.5, ExpDensity{1.0, 2.0}), 1e-2, {}},
        // pure stable: truncation at 1e-2 with the Gaussian small-jump correction
        {BranchingMechanism::create(0.0, 0.0, StablePower{kStableC, 1.5, 0.0}), 1e-1, {1e-2, true}},
    };
    int id = 0;
    for (auto& c : cases) {
        CAPTURE(describe(c.m));
        const int n = 100000;
        MeanAccumulator acc[3];
        const double lam[3] = {0.5, 1.0, 2.0};
        for (int i = 0; i < n; ++i) {
            RngStream rng(11, StreamTag::Test, std::uint64_t(id) << 32 | std::uint64_t(i));
            double x = sample_x(c.m, 1.0, c.dt, rng, c.o);
            for (int q = 0; q < 3; ++q) acc[q].add(std::exp(-lam[q] * x));
        }
        for (int q = 0; q < 3; ++q) check_z(acc[q], std::exp(psi(c.m, lam[q])), "E e^{-lambda X_1}");
        ++id;
    }
}

TEST_CASE("stable truncation without the small-jump correction is biased") {
    auto m = BranchingMechanism::create(0.0, 0.0, StablePower{kStableC, 1.5, 0.0});
    const int n = 20000;
    MeanAccumulator acc;
    for (int i = 0; i < n; ++i) {
        RngStream rng(12, StreamTag::Test, i);
        acc.add(std::exp(-2.0 * sample_x(m, 1.0, 1e-1, rng, {1e-2, false})));
    }
    // the truncated compensated small jumps carry exponent ~ 2c eps^{1/2} at lambda = 2
    CHECK(std::abs(acc.mean() - std::exp(psi(m, 2.0))) > 3.0 * acc.stderr_of_mean());
}

TEST_CASE("centered Gaussian increments and the jump count") {
    auto b = BranchingMechanism::brownian();
    MeanAccumulator mean_x;
    for (int i = 0; i < 20000; ++i) {
        RngStream rng(13, StreamTag::Test, i);
        mean_x.add(sample_path(b, 1e-2, 1.0, rng).values.back());
    }
    check_z(mean_x, 0.0, "E X_1");

    auto a = BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{1.0, 0.5}}});
    MeanAccumulator count;
    for (int i = 0; i < 20000; ++i) {
        RngStream rng(14, StreamTag::Test, i);
        count.add(double(sample_path(a, 1e-3, 1.0, rng).jumps.size()));
    }
    check_z(count, 0.5, "jump count");
}

TEST_CASE("path invariants and determinism") {
    auto m = BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{0.5, 2.0}, {1.5, 0.5}}});
    RngStream r1(5, StreamTag::Path, 3), r2(5, StreamTag::Path, 3);
    auto p = sample_path(m, 1e-3, 5.0, r1);
    auto q = sample_path(m, 1e-3, 5.0, r2);
    CHECK(p.values == q.values);
    CHECK(p.jumps == q.jumps);
    CHECK(p.values[0] == 0.0);
    for (std::size_t k = 0; k <= p.n; ++k) {
        CHECK(p.infimum[k] <= p.values[k]);
        if (k) CHECK(p.infimum[k] <= p.infimum[k - 1]);
    }
    for (const auto& j : p.jumps) CHECK(j.size > p.epsilon);
}

TEST_CASE("extract_excursions basics") {
    PathGrid down;
    down.dt = 0.01;
    down.n = 100;
    for (std::size_t k = 0; k <= down.n; ++k) {
        down.values.push_back(-double(k) * down.dt);
        down.infimum.push_back(-double(k) * down.dt);
    }
    auto ex = extract_excursions(down);
    CHECK(ex.excursions.empty());
    CHECK(ex.local_time == doctest::Approx(1.0));

    auto m = BranchingMechanism::brownian();
    RngStream rng(21, StreamTag::Path, 0);
    auto p = sample_path(m, 1e-3, 20.0, rng);
    auto all = extract_excursions(p, true);
    double total = 0.0;
    for (const auto& e : all.excursions) {
        total += e.sigma;
        CHECK(e.values.front() == 0.0);
        CHECK(e.values.back() == 0.0);
        for (std::size_t i = 1; i + 1 < e.values.size(); ++i) CHECK(e.values[i] > 0.0);
    }
    // records tile [0, time of last minimum]
    CHECK(total == doctest::Approx(all.excursions.back().end * p.dt));
    auto proper = extract_excursions(p);
    CHECK(proper.excursions.size() < all.excursions.size());
    CHECK(proper.descent_time == doctest::Approx(all.descent_time));

    // same multiset as the subordinator jumps of this path
    auto sp = subordinator_from_path(p);
    std::vector<double> a, b = sp.jumps;
    for (const auto& e : proper.excursions) a.push_back(e.sigma);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(sp.drift_time == doctest::Approx(proper.descent_time));
}

TEST_CASE("harvest matches extraction on the same stream") {
    auto m = BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{1.0, 1.0}}});
    RngStream r1(31, StreamTag::Path, 0), r2(31, StreamTag::Path, 0);
    auto p = sample_path(m, 1e-3, 30.0, r1);
    auto ex = extract_excursions(p, true);
    const double budget = ex.local_time * 0.5;
    std::vector<ExcursionRecord> got;
    harvest_excursions(m, 1e-3, budget, r2, [&](const ExcursionRecord& e) { got.push_back(e); });
    REQUIRE(!got.empty());
    REQUIRE(got.size() <= ex.excursions.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].start == ex.excursions[i].start);
        CHECK(got[i].end == ex.excursions[i].end);
        CHECK(got[i].values == ex.excursions[i].values);
        CHECK(got[i].jumps == ex.excursions[i].jumps);
    }
}

TEST_CASE("excursion law per unit local time, Brownian") {
    auto m = BranchingMechanism::brownian();
    const double budget = 50.0;
    const int blocks = 8;
    MeanAccumulator tail, expo;
    for (int b = 0; b < blocks; ++b) {
        RngStream rng(41, StreamTag::Excursion, b);
        double t = 0.0, s = 0.0;
        HarvestOptions o;
        o.keep_paths = false;
        o.length_cap = 20.0;
        harvest_excursions(
            m, 1e-3, budget, rng,
            [&](const ExcursionRecord& e) {
                if (e.sigma > 0.1) t += 1.0;
                s += -std::expm1(-2.0 * e.sigma);
            },
            o);
        tail.add(t / budget);
        expo.add(s / budget);
    }
    check_z(tail, std::sqrt(2.0 / (M_PI * 0.1)), "tail at c = 0.1");
    check_z(expo, 2.0, "N[1 - e^{-2 sigma}]");
}

TEST_CASE("first passage subordinator") {
    auto m = BranchingMechanism::brownian();
    RngStream z(1, StreamTag::Subordinator, 0);
    auto s0 = first_passage_subordinator(m, 0.0, 1e-3, z);
    CHECK(s0.s_at_v_max == 0.0);
    CHECK(s0.jumps.empty());

    MeanAccumulator acc;
    FirstPassageOptions o;
    o.bridge_correction = true;
    o.time_cap = 40.0;
    for (int i = 0; i < 10000; ++i) {
        RngStream rng(51, StreamTag::Subordinator, i);
        auto fp = first_passage_time(m, 1.0, 1e-3, rng, o);
        acc.add(fp.exhausted ? 0.0 : std::exp(-fp.time));
    }
    check_z(acc, std::exp(-std::sqrt(2.0)), "E e^{-S_1}");

    FirstPassageOptions cap;
    cap.time_cap = 1e-3;
    RngStream rng(52, StreamTag::Subordinator, 0);
    try {
        first_passage_subordinator(m, 5.0, 1e-3, rng, cap);
        FAIL("expected horizon exhausted");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::HorizonExhausted);
    }

    RngStream r3(53, StreamTag::Subordinator, 0);
    auto sp = first_passage_subordinator(m, 2.0, 1e-3, r3);
    for (std::size_t i = 1; i < sp.values.size(); ++i) CHECK(sp.values[i] >= sp.values[i - 1]);
    double sum = sp.drift_time;
    for (double j : sp.jumps) sum += j;
    CHECK(sum == doctest::Approx(sp.s_at_v_max));
}

TEST_CASE("subordinator additivity, two-sample KS") {
    auto m = BranchingMechanism::brownian();
    FirstPassageOptions o;
    o.bridge_correction = true;
    o.time_cap = 50.0;
    const double dt = 1e-3;
    auto s_of = [&](double v, StreamTag tag, std::uint64_t rep) {
        RngStream rng(61, tag, rep);
        auto fp = first_passage_time(m, v, dt, rng, o);
        return fp.exhausted ? o.time_cap : fp.time;
    };
    std::vector<double> whole, parts;
    for (int i = 0; i < 10000; ++i) {
        whole.push_back(s_of(1.0, StreamTag::Subordinator, i));
        parts.push_back(std::min(o.time_cap, s_of(0.5, StreamTag::Test, 2 * i) + s_of(0.5, StreamTag::Test, 2 * i + 1)));
    }
    // both samples are min(S, cap)
    auto ks = ks_two_sample(whole, parts);
    CAPTURE(ks.statistic);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("Brownian excursion via Vervaat") {
    RngStream rng(71, StreamTag::BrownianExcursion, 0);
    auto e = brownian_excursion(2.0, 1e-3, rng);
    CHECK(e.values.front() == 0.0);
    CHECK(e.values.back() == 0.0);
    CHECK(e.sigma == 2.0);
    for (std::size_t i = 1; i + 1 < e.values.size(); ++i) CHECK(e.values[i] >= 0.0);

    // Oracle: the norm of a 3d Brownian bridge has the excursion's law.
    const int n = 2000;
    const std::size_t steps = 10000;
    const double h = 1.0 / steps;
    MeanAccumulator vmax, vint, omax, oint;
    for (int r = 0; r < n; ++r) {
        RngStream a(72, StreamTag::BrownianExcursion, r);
        auto x = brownian_excursion(1.0, h, a);
        double mx = 0.0, in = 0.0;
        for (std::size_t k = 0; k < x.values.size(); ++k) {
            mx = std::max(mx, x.values[k]);
            in += x.values[k] * h;
        }
        vmax.add(mx);
        vint.add(in);

        RngStream b(73, StreamTag::Test, r);
        double w[3] = {0, 0, 0}, path[3][steps + 1];
        for (int d = 0; d < 3; ++d) {
            path[d][0] = 0.0;
            for (std::size_t k = 0; k < steps; ++k) path[d][k + 1] = path[d][k] + std::sqrt(h) * b.normal();
            w[d] = path[d][steps];
        }
        double bm = 0.0, bi = 0.0;
        for (std::size_t k = 0; k <= steps; ++k) {
            double r2 = 0.0;
            for (int d = 0; d < 3; ++d) {
                double y = path[d][k] - double(k) * h * w[d];
                r2 += y * y;
            }
            bm = std::max(bm, std::sqrt(r2));
            bi += std::sqrt(r2) * h;
        }
        omax.add(bm);
        oint.add(bi);
    }
    auto z2 = [](const MeanAccumulator& u, const MeanAccumulator& v) {
        return (u.mean() - v.mean()) / std::hypot(u.stderr_of_mean(), v.stderr_of_mean());
    };
    CHECK(std::abs(z2(vmax, omax)) < 3.0);
    CHECK(std::abs(z2(vint, oint)) < 3.0);
    // grid monitoring lowers the max and raises the min of the bridge, each by
    // -zeta(1/2)/sqrt(2 pi) * sqrt(h) to first order
    const double monitoring = 2.0 * 0.5825971579390106 * std::sqrt(h);
    check_z(vmax, std::sqrt(M_PI / 2.0) - monitoring, "E max");
    check_z(vint, std::sqrt(M_PI / 8.0), "E integral");
}
