#include "crtfrag/exploration.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "crtfrag/error.hpp"

namespace crtfrag {

// ---------------------------------------------------------------------------
// ExplorationStack
// ---------------------------------------------------------------------------

ExplorationStack::ExplorationStack(double beta) : beta_(beta) {
    if (!(beta > 0.0)) fail(Errc::InvalidArgument, "the exploration stack needs beta > 0");
}

double ExplorationStack::height() const noexcept {
    if (layers_.empty()) return 0.0;
    const auto& top = layers_.back();
    return top.kind == StackLayer::Kind::Atom ? top.height : top.height + top.mass / beta_;
}

std::size_t ExplorationStack::atom_count() const noexcept {
    return std::size_t(std::count_if(layers_.begin(), layers_.end(),
                                     [](const StackLayer& l) { return l.kind == StackLayer::Kind::Atom; }));
}

void ExplorationStack::push_jump(double delta) {
    if (!(delta > 0.0)) fail(Errc::InvalidArgument, "jump size must be > 0");
    layers_.push_back({StackLayer::Kind::Atom, height(), delta, delta});
    total_ += delta;
    atoms_ += delta;
}

void ExplorationStack::grow(double mass) {
    if (!(mass > 0.0)) return;
    if (!layers_.empty() && layers_.back().kind == StackLayer::Kind::Continuous)
        layers_.back().mass += mass;
    else
        layers_.push_back({StackLayer::Kind::Continuous, height(), mass, 0.0});
    total_ += mass;
}

double ExplorationStack::erase_clamped(double a) {
    while (a > 0.0 && !layers_.empty()) {
        auto& top = layers_.back();
        double take = std::min(a, top.mass);
        top.mass -= take;
        a -= take;
        total_ -= take;
        if (top.kind == StackLayer::Kind::Atom) atoms_ -= take;
        if (top.mass <= 0.0) layers_.pop_back();
    }
    if (layers_.empty()) total_ = atoms_ = 0.0;
    return a;
}

void ExplorationStack::erase(double a) {
    double before = total_;
    double left = erase_clamped(a);
    if (left > 1e-12 * (1.0 + before)) fail(Errc::Underflow, "erasure below zero mass");
}

double ExplorationStack::apply(double increment) {
    if (increment > 0.0) {
        grow(increment);
        return 0.0;
    }
    return erase_clamped(-increment);
}

void evolve_stack(ExplorationStack& stack, double increment, const std::vector<double>& jumps) {
    for (double j : jumps) stack.push_jump(j);
    stack.apply(increment);
}

// ---------------------------------------------------------------------------
// RangeMin / HeightSeries
// ---------------------------------------------------------------------------

RangeMin::RangeMin(const std::vector<double>& values) : n_(values.size()) {
    if (n_ == 0) return;
    table_.push_back(values);
    for (std::size_t w = 1; 2 * w <= n_; w *= 2) {
        const auto& prev = table_.back();
        std::vector<double> next(n_ - 2 * w + 1);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::min(prev[i], prev[i + w]);
        table_.push_back(std::move(next));
    }
}

double RangeMin::query(std::size_t l, std::size_t r) const {
    if (l > r || r >= n_) fail(Errc::InvalidArgument, "range-min query out of range");
    const std::size_t len = r - l + 1;
    const unsigned k = unsigned(std::bit_width(len) - 1);
    return std::min(table_[k][l], table_[k][r + 1 - (std::size_t(1) << k)]);
}

HeightSeries::HeightSeries(double dt, std::vector<double> h) : dt_(dt), h_(std::move(h)) {
    if (h_.empty()) h_.push_back(0.0);
    max_ = *std::max_element(h_.begin(), h_.end());
    rmq_ = RangeMin(h_);
}

HeightSeries height_series(const ExcursionRecord& e, double beta) {
    ExplorationStack st(beta);
    const std::size_t n = e.values.size() - 1;
    std::vector<double> h(n + 1, 0.0);
    std::size_t jp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double jumped = 0.0;
        for (; jp < e.jumps.size() && e.jumps[jp].index == k; ++jp) {
            st.push_jump(e.jumps[jp].size);
            jumped += e.jumps[jp].size;
        }
        st.apply(e.values[k + 1] - e.values[k] - jumped);
        h[k + 1] = st.height();
    }
    return HeightSeries(e.dt, std::move(h));
}

HeightSeries height_series(const PathGrid& path, const BranchingMechanism& m) {
    ExplorationStack st(m.beta());
    std::vector<double> h(path.n + 1, 0.0);
    std::size_t jp = 0;
    for (std::size_t k = 0; k < path.n; ++k) {
        double jumped = 0.0;
        for (; jp < path.jumps.size() && path.jumps[jp].index == k; ++jp) {
            st.push_jump(path.jumps[jp].size);
            jumped += path.jumps[jp].size;
        }
        double r0 = path.values[k] - path.infimum[k];
        double r1 = path.values[k + 1] - path.infimum[k + 1];
        st.apply(r1 - r0 - jumped);
        if (r1 == 0.0) st.erase_clamped(st.total_mass());
        h[k + 1] = st.height();
    }
    return HeightSeries(path.dt, std::move(h));
}

std::vector<double> pre_jump_values(const ExcursionRecord& e) {
    std::vector<double> pre(e.jumps.size());
    std::size_t last = std::size_t(-1);
    double acc = 0.0;
    for (std::size_t j = 0; j < e.jumps.size(); ++j) {
        if (e.jumps[j].index != last) {
            last = e.jumps[j].index;
            acc = e.values[last];
        }
        pre[j] = acc;
        acc += e.jumps[j].size;
    }
    return pre;
}

namespace {

// Largest i <= to with H_i < a (or <= a), or npos.
std::size_t last_below(const HeightSeries& h, std::size_t to, double a, bool strict) {
    auto hit = [&](std::size_t l) {
        double m = h.range_min(l, to);
        return strict ? m < a : m <= a;
    };
    if (!hit(0)) return std::size_t(-1);
    if (hit(to)) return to;
    // gallop left from `to`, then bisect with hit(lo) and !hit(hi)
    std::size_t step = 1, lo = 0, hi = to;
    while (step <= to) {
        std::size_t j = to - step;
        if (hit(j)) {
            lo = j;
            break;
        }
        hi = j;
        step *= 2;
    }
    while (hi - lo > 1) {
        std::size_t mid = lo + (hi - lo) / 2;
        if (hit(mid))
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

// Smallest j >= from with H_j < a (or <= a), or npos.
std::size_t first_below(const HeightSeries& h, std::size_t from, double a, bool strict) {
    const std::size_t n = h.n();
    if (from > n) return std::size_t(-1);
    auto hit = [&](std::size_t r) {
        double m = h.range_min(from, r);
        return strict ? m < a : m <= a;
    };
    if (!hit(n)) return std::size_t(-1);
    if (hit(from)) return from;
    std::size_t step = 1, lo = from, hi = n;
    while (from + step <= n) {
        std::size_t j = from + step;
        if (hit(j)) {
            hi = j;
            break;
        }
        lo = j;
        step *= 2;
    }
    while (hi - lo > 1) {
        std::size_t mid = lo + (hi - lo) / 2;
        if (hit(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

} // namespace

Interval ancestral_interval(const HeightSeries& h, std::size_t s, double a) {
    if (s > h.n()) fail(Errc::InvalidArgument, "ancestral interval: index outside the series");
    if (a > h[s]) fail(Errc::AboveThePoint, "level above the height of the point");
    const double dt = h.dt();
    Interval iv{0.0, h.duration()};
    std::size_t i = last_below(h, s, a, true);
    if (i != std::size_t(-1)) iv.g = (double(i) + (a - h[i]) / (h[i + 1] - h[i])) * dt;
    std::size_t j = first_below(h, s, a, true);
    if (j != std::size_t(-1)) iv.d = (double(j - 1) + (h[j - 1] - a) / (h[j - 1] - h[j])) * dt;
    return iv;
}

double up_variation(const HeightSeries& h) {
    double u = 0.0;
    const auto& v = h.values();
    for (std::size_t i = 0; i + 1 < v.size(); ++i) u += std::max(0.0, v[i + 1] - v[i]);
    return u;
}

double component_end(const HeightSeries& h, std::size_t i, double a) {
    std::size_t j = first_below(h, i + 1, a, false);
    if (j == std::size_t(-1)) return h.duration();
    return (double(j - 1) + (h[j - 1] - a) / (h[j - 1] - h[j])) * h.dt();
}

LevelCensus level_census(const HeightSeries& h, double da, double offset) {
    LevelCensus c;
    c.offset = offset;
    c.da = da > 0.0 ? da : h.max() / 256.0;
    if (!(c.da > 0.0)) {
        c.da = 0.0;
        return c;
    }
    for (long k = 0; (double(k) + offset) * c.da < h.max(); ++k) c.levels.push_back((double(k) + offset) * c.da);
    c.components.resize(c.levels.size());
    for_each_component(h, c.da, offset, [&](double a, Interval iv) {
        auto k = std::size_t(std::llround(a / c.da - offset));
        if (k < c.components.size()) c.components[k].push_back(iv);
    });
    for (auto& comps : c.components) {
        std::sort(comps.begin(), comps.end(), [](const Interval& x, const Interval& y) { return x.g < y.g; });
        c.length += double(comps.size()) * c.da;
    }
    return c;
}

ExplorationStack exploration_measure_at(const ExcursionRecord& e, std::size_t t, double beta) {
    if (t >= e.values.size()) fail(Errc::InvalidArgument, "time index outside the excursion");
    const auto pre = pre_jump_values(e);
    struct Alive {
        std::size_t k;
        double mass, kappa;
    };
    // atoms of rho_u: jumps s <= u with X_{s-} < I_u^s
    auto atoms_at = [&](std::size_t u) {
        std::vector<Alive> out;
        double suffix_min = e.values[u];
        std::vector<double> post_min(u + 1);
        for (std::size_t i = u + 1; i-- > 0;) {
            suffix_min = std::min(suffix_min, e.values[i]);
            post_min[i] = suffix_min; // min over v[i..u]
        }
        for (std::size_t j = 0; j < e.jumps.size() && e.jumps[j].index < u; ++j) {
            const std::size_t k = e.jumps[j].index;
            double inf = std::min(pre[j] + e.jumps[j].size, post_min[k + 1]);
            double m = inf - pre[j];
            if (m > 0.0) out.push_back({k, std::min(m, e.jumps[j].size), e.jumps[j].size});
        }
        return out;
    };
    auto height_at = [&](std::size_t u) {
        double mass = 0.0;
        for (const auto& a : atoms_at(u)) mass += a.mass;
        return std::max(0.0, (e.values[u] - mass) / beta);
    };
    ExplorationStack st(beta);
    // continuous gaps below rounding are not layers
    auto fill_to = [&](double target) {
        double m = beta * (target - st.height());
        if (m > 1e-12 * (1.0 + st.total_mass())) st.grow(m);
    };
    for (const auto& a : atoms_at(t)) {
        fill_to(height_at(a.k));
        st.push_jump(a.kappa);
        st.erase_clamped(a.kappa - a.mass);
    }
    fill_to(height_at(t));
    return st;
}

} // namespace crtfrag
