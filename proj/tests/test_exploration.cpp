#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crtfrag/error.hpp"
#include "crtfrag/exploration.hpp"

using namespace crtfrag;

namespace {

ExcursionRecord from_values(std::vector<double> v, double dt, std::vector<Jump> jumps = {}) {
    ExcursionRecord e;
    e.dt = dt;
    e.end = v.size() - 1;
    e.sigma = dt * double(e.end);
    e.values = std::move(v);
    e.jumps = std::move(jumps);
    return e;
}

// A long excursion with many jumps for the consistency checks.
ExcursionRecord jumpy_excursion(std::uint64_t rep, std::size_t min_jumps) {
    auto m = BranchingMechanism::create(0.0, 0.5, FiniteAtoms{{{0.5, 2.0}, {0.2, 3.0}}});
    for (std::uint64_t r = rep;; ++r) {
        RngStream rng(81, StreamTag::Test, r);
        ExcursionRecord best;
        HarvestOptions o;
        o.length_cap = 20.0;
        harvest_excursions(
            m, 1e-3, 5.0, rng,
            [&](const ExcursionRecord& e) {
                if (!e.censored && e.jumps.size() > best.jumps.size()) best = e;
            },
            o);
        if (best.jumps.size() >= min_jumps) return best;
    }
}

// Components of {H > a} by a direct scan, with the same interpolation.
std::vector<Interval> scan_components(const HeightSeries& h, double a) {
    std::vector<Interval> out;
    const auto& v = h.values();
    const double dt = h.dt();
    bool in = false;
    double g = 0.0;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        if (!in && v[i] <= a && v[i + 1] > a) {
            in = true;
            g = (double(i) + (a - v[i]) / (v[i + 1] - v[i])) * dt;
        } else if (in && v[i + 1] <= a) {
            in = false;
            out.push_back({g, (double(i) + (v[i] - a) / (v[i] - v[i + 1])) * dt});
        }
    }
    if (in) out.push_back({g, h.duration()});
    return out;
}

// Ancestral interval by a linear scan.
Interval scan_ancestral(const HeightSeries& h, std::size_t s, double a) {
    const auto& v = h.values();
    Interval iv{0.0, h.duration()};
    for (std::size_t i = s; i-- > 0;)
        if (v[i] < a) {
            iv.g = (double(i) + (a - v[i]) / (v[i + 1] - v[i])) * h.dt();
            break;
        }
    for (std::size_t j = s + 1; j < v.size(); ++j)
        if (v[j] < a) {
            iv.d = (double(j - 1) + (v[j - 1] - a) / (v[j - 1] - v[j])) * h.dt();
            break;
        }
    return iv;
}

} // namespace

TEST_CASE("stack examples") {
    ExplorationStack st(0.5);
    st.grow(1.0);
    CHECK(st.height() == doctest::Approx(2.0));
    CHECK(st.layers().size() == 1);

    ExplorationStack a(1.0);
    a.grow(1.0);
    a.push_jump(2.0);
    CHECK(a.height() == doctest::Approx(1.0));
    a.erase(2.0);
    CHECK(a.atom_count() == 0);
    CHECK(a.total_mass() == doctest::Approx(1.0));

    ExplorationStack b(0.5);
    b.grow(0.3);
    b.push_jump(0.7);
    b.grow(0.2);
    ExplorationStack copy = b;
    b.push_jump(1.5);
    b.erase(1.5);
    CHECK(b.layers() == copy.layers());
    CHECK(b.total_mass() == doctest::Approx(copy.total_mass()).epsilon(1e-15));

    ExplorationStack c(0.5);
    c.grow(1.0);
    try {
        c.erase(2.0);
        FAIL("expected underflow");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::Underflow);
    }
}

TEST_CASE("height series examples") {
    auto m = BranchingMechanism::brownian();
    RngStream rng(82, StreamTag::Path, 0);
    auto p = sample_path(m, 1e-3, 10.0, rng);
    auto h = height_series(p, m);
    for (std::size_t k = 0; k <= p.n; ++k) CHECK(h[k] == doctest::Approx(2.0 * (p.values[k] - p.infimum[k])).epsilon(1e-12));

    auto flat = height_series(from_values(std::vector<double>(50, 0.0), 0.01), 0.5);
    CHECK(flat.max() == 0.0);

    // one jump: H is continuous across it
    auto e = from_values({0.0, 0.1, 0.15, 1.2, 1.1, 0.9, 0.5, 0.2, 0.0}, 0.01, {{2, 1.0}});
    auto he = height_series(e, 0.5);
    CHECK(he[3] == doctest::Approx(he[2] + 2.0 * (1.2 - 0.15 - 1.0)));
}

TEST_CASE("mass identity and from-scratch rebuild") {
    auto e = jumpy_excursion(0, 20);
    const double beta = 0.5;
    ExplorationStack st(beta);
    std::size_t jp = 0;
    std::vector<double> sizes;
    std::vector<ExplorationStack> states{st};
    for (std::size_t k = 0; k + 1 < e.values.size(); ++k) {
        sizes.clear();
        for (; jp < e.jumps.size() && e.jumps[jp].index == k; ++jp) sizes.push_back(e.jumps[jp].size);
        double jumped = 0.0;
        for (double s : sizes) jumped += s;
        evolve_stack(st, e.values[k + 1] - e.values[k] - jumped, sizes);
        CHECK(std::abs(st.total_mass() - e.values[k + 1]) <= 1e-9 * (1 + e.values[k + 1]));
        states.push_back(st);
    }
    auto h = height_series(e, beta);
    RngStream pick(83, StreamTag::Test, 0);
    for (int q = 0; q < 100; ++q) {
        std::size_t t = pick.below(e.values.size());
        auto scratch = exploration_measure_at(e, t, beta);
        const auto& evolved = states[t];
        CHECK(scratch.total_mass() == doctest::Approx(e.values[t]).epsilon(1e-9));
        CHECK(scratch.height() == doctest::Approx(h[t]).epsilon(1e-9));
        REQUIRE(scratch.layers().size() == evolved.layers().size());
        for (std::size_t i = 0; i < scratch.layers().size(); ++i) {
            const auto& x = scratch.layers()[i];
            const auto& y = evolved.layers()[i];
            CHECK(x.kind == y.kind);
            CHECK(x.height == doctest::Approx(y.height).epsilon(1e-9));
            CHECK(x.mass == doctest::Approx(y.mass).epsilon(1e-9));
            CHECK(x.kappa_mass == y.kappa_mass);
            if (x.kind == StackLayer::Kind::Atom) CHECK(x.kappa_mass >= x.mass);
        }
    }
    // before the first jump the measure is purely continuous
    std::size_t t0 = e.jumps.front().index;
    auto early = exploration_measure_at(e, t0, beta);
    CHECK(early.atom_count() == 0);
    CHECK(early.height() == doctest::Approx(e.values[t0] / beta));
}

TEST_CASE("small rebuild around a single surviving jump") {
    // v: 0 -> 0.2, jump 1 at step 1 (pre 0.2), then down to 0.5: atom keeps 0.3
    auto e = from_values({0.0, 0.2, 0.6, 0.5, 0.0}, 0.1, {{1, 1.0}});
    auto st = exploration_measure_at(e, 3, 0.5);
    REQUIRE(st.atom_count() == 1);
    CHECK(st.layers()[1].mass == doctest::Approx(0.3));
    CHECK(st.layers()[1].kappa_mass == 1.0);
    CHECK(st.total_mass() == doctest::Approx(0.5));
}

TEST_CASE("ancestral intervals") {
    auto uni = HeightSeries(0.1, {0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0});
    auto root = ancestral_interval(uni, 3, 0.0);
    CHECK(root.g == 0.0);
    CHECK(root.d == doctest::Approx(0.6));
    auto leaf = ancestral_interval(uni, 3, 3.0);
    CHECK(leaf.length() <= 2 * 0.1);
    try {
        ancestral_interval(uni, 3, 3.5);
        FAIL("expected above the point");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::AboveThePoint);
    }

    auto e = jumpy_excursion(5, 5);
    auto h = height_series(e, 0.5);
    RngStream rng(84, StreamTag::Test, 0);
    for (int q = 0; q < 1000; ++q) {
        std::size_t s = rng.below(h.n() + 1);
        double a = rng.uniform() * h[s];
        auto fast = ancestral_interval(h, s, a);
        auto slow = scan_ancestral(h, s, a);
        CHECK(fast.g == doctest::Approx(slow.g).epsilon(1e-12));
        CHECK(fast.d == doctest::Approx(slow.d).epsilon(1e-12));
        double a2 = a + rng.uniform() * (h[s] - a);
        auto inner = ancestral_interval(h, s, a2);
        CHECK(inner.g >= fast.g);
        CHECK(inner.d <= fast.d);
    }
}

TEST_CASE("level census") {
    auto uni = HeightSeries(0.01, {0.0, 0.5, 1.0, 1.5, 2.0, 1.5, 1.0, 0.5, 0.0});
    auto c = level_census(uni, 0.1);
    for (std::size_t k = 0; k < c.levels.size(); ++k) CHECK(c.count(k) == 1);
    CHECK(c.length == doctest::Approx(2.0).epsilon(0.06));
    CHECK(up_variation(uni) == doctest::Approx(2.0));

    auto two = HeightSeries(0.01, {0.0, 1.0, 2.0, 1.0, 0.5, 1.0, 2.0, 1.0, 0.0});
    auto c2 = level_census(two, 0.1);
    for (std::size_t k = 0; k < c2.levels.size(); ++k) {
        if (c2.levels[k] > 0.5 && c2.levels[k] < 2.0) CHECK(c2.count(k) == 2);
        if (c2.levels[k] < 0.5) CHECK(c2.count(k) == 1);
    }

    auto e = jumpy_excursion(9, 5);
    auto h = height_series(e, 0.5);
    for (double off : {0.0, 0.5}) {
        auto cen = level_census(h, 0.0, off);
        CHECK(cen.da == doctest::Approx(h.max() / 256));
        if (off == 0.0) CHECK(cen.count(0) == 1);
        for (std::size_t k = 0; k < cen.levels.size(); k += 17) {
            auto slow = scan_components(h, cen.levels[k]);
            REQUIRE(slow.size() == cen.count(k));
            for (std::size_t i = 0; i < slow.size(); ++i) {
                CHECK(cen.components[k][i].g == doctest::Approx(slow[i].g).epsilon(1e-12));
                CHECK(cen.components[k][i].d == doctest::Approx(slow[i].d).epsilon(1e-12));
            }
            // nesting into the level below
            if (k > 0) {
                for (const auto& in : cen.components[k]) {
                    bool inside = false;
                    for (const auto& out : cen.components[k - 1]) inside = inside || (out.g <= in.g && in.d <= out.d);
                    CHECK(inside);
                }
            }
        }
    }
    // component_end agrees with the census
    auto cen = level_census(h, 0.0, 0.5);
    std::size_t k = cen.levels.size() / 3;
    for (const auto& iv : cen.components[k]) {
        auto i = std::size_t(std::floor(iv.g / h.dt()));
        CHECK(component_end(h, i, cen.levels[k]) == doctest::Approx(iv.d).epsilon(1e-12));
    }
}
