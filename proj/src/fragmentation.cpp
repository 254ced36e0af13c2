#include "crtfrag/fragmentation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "crtfrag/error.hpp"
#include "crtfrag/stats.hpp"

namespace crtfrag {

std::vector<NodeMark> sample_node_marks(const ExcursionRecord& e, const HeightSeries& h, double theta_max,
                                        RngStream& rng) {
    std::vector<NodeMark> out;
    if (!(theta_max > 0.0)) return out;
    for (std::size_t j = 0; j < e.jumps.size(); ++j) {
        const auto& jp = e.jumps[j];
        double theta = rng.exponential(jp.size);
        if (theta > theta_max) continue;
        const double level = h[jp.index];
        Interval iv = ancestral_interval(h, jp.index, level);
        iv.g = double(jp.index) * h.dt();
        out.push_back({j, jp.index, jp.size, theta, level, iv});
    }
    return out;
}

std::vector<SkeletonMark> sample_skeleton_marks(const HeightSeries& h, const LevelCensus& census, double beta,
                                                double theta_max, RngStream& rng) {
    std::vector<SkeletonMark> out;
    if (!(beta > 0.0) || !(theta_max > 0.0) || !(census.length > 0.0)) return out;
    (void)h;
    std::vector<double> cum;
    double acc = 0.0;
    for (std::size_t k = 0; k < census.levels.size(); ++k) {
        acc += double(census.count(k));
        cum.push_back(acc);
    }
    const auto n = rng.poisson(2.0 * beta * theta_max * census.length);
    for (std::uint64_t i = 0; i < n; ++i) {
        double u = rng.uniform() * acc;
        auto k = std::size_t(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        k = std::min(k, cum.size() - 1);
        const auto& comps = census.components[k];
        const auto& iv = comps[rng.below(comps.size())];
        out.push_back({rng.uniform() * theta_max, census.levels[k], iv});
    }
    return out;
}

std::vector<SkeletonMark> sample_skeleton_marks_continuous(const HeightSeries& h, double beta, double theta_max,
                                                           RngStream& rng) {
    std::vector<SkeletonMark> out;
    if (!(beta > 0.0) || !(theta_max > 0.0)) return out;
    const auto& v = h.values();
    std::vector<double> cum(v.size() > 0 ? v.size() - 1 : 0);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        acc += std::max(0.0, v[i + 1] - v[i]);
        cum[i] = acc;
    }
    if (!(acc > 0.0)) return out;
    const auto n = rng.poisson(2.0 * beta * theta_max * acc);
    for (std::uint64_t m = 0; m < n; ++m) {
        double u = rng.uniform() * acc;
        auto i = std::size_t(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        i = std::min(i, cum.size() - 1);
        while (v[i + 1] <= v[i]) --i; // skip flat or falling steps hit by rounding
        double f = rng.uniform();
        double a = v[i] + f * (v[i + 1] - v[i]);
        Interval iv{(double(i) + f) * h.dt(), component_end(h, i, a)};
        out.push_back({rng.uniform() * theta_max, a, iv});
    }
    return out;
}

MarkSet sample_marks(const ExcursionRecord& e, const HeightSeries& h, double beta, double theta_max, RngStream& rng,
                     SkeletonSampler sampler) {
    MarkSet ms;
    ms.theta_max = theta_max;
    ms.sigma = e.sigma;
    ms.dt = e.dt;
    RngStream node_rng = rng.split(1), ske_rng = rng.split(2);
    ms.nodes = sample_node_marks(e, h, theta_max, node_rng);
    if (sampler == SkeletonSampler::Census)
        ms.skeleton = sample_skeleton_marks(h, level_census(h), beta, theta_max, ske_rng);
    else
        ms.skeleton = sample_skeleton_marks_continuous(h, beta, theta_max, ske_rng);
    return ms;
}

CutIntervalSet make_laminar(std::vector<Cut> cuts, double sigma, double tol) {
    std::sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) {
        if (a.interval.g != b.interval.g) return a.interval.g < b.interval.g;
        return a.interval.d > b.interval.d;
    });
    std::vector<long> stack;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        auto& c = cuts[i];
        while (!stack.empty() && cuts[std::size_t(stack.back())].interval.d <= c.interval.g + tol) stack.pop_back();
        if (!stack.empty()) {
            const auto& top = cuts[std::size_t(stack.back())].interval;
            if (c.interval.d > top.d + tol) fail(Errc::NotLaminar, "cut intervals overlap without nesting");
            c.parent = stack.back();
        } else {
            c.parent = -1;
        }
        stack.push_back(long(i));
    }
    return {sigma, std::move(cuts)};
}

CutIntervalSet active_cuts(const MarkSet& marks, double theta) {
    if (theta > marks.theta_max) fail(Errc::BeyondSampledHorizon, "theta beyond the sampled horizon");
    if (theta < 0.0) fail(Errc::InvalidArgument, "theta must be >= 0");
    std::vector<Cut> cuts;
    for (const auto& n : marks.nodes)
        if (n.theta <= theta) cuts.push_back({n.interval, n.level, n.theta, CutOrigin::Node, -1});
    for (const auto& s : marks.skeleton)
        if (s.theta <= theta) cuts.push_back({s.interval, s.level, s.theta, CutOrigin::Skeleton, -1});
    return make_laminar(std::move(cuts), marks.sigma, 1e-9 * marks.dt);
}

double FragmentSequence::sum() const {
    NeumaierSum s;
    for (double m : masses) s.add(m);
    return s.value();
}

FragmentSequence make_fragments(std::vector<double> masses) {
    masses.erase(std::remove_if(masses.begin(), masses.end(), [](double m) { return !(m > 0.0); }), masses.end());
    std::sort(masses.begin(), masses.end(), std::greater<>());
    FragmentSequence f{std::move(masses), 0.0};
    f.total = f.sum();
    return f;
}

FragmentParts fragment_parts(const CutIntervalSet& cuts, double sigma) {
    FragmentParts p;
    p.root = sigma;
    p.own.resize(cuts.cuts.size());
    for (std::size_t i = 0; i < cuts.cuts.size(); ++i) p.own[i] = cuts.cuts[i].interval.length();
    for (const auto& c : cuts.cuts) {
        if (c.parent < 0)
            p.root -= c.interval.length();
        else
            p.own[std::size_t(c.parent)] -= c.interval.length();
    }
    return p;
}

FragmentSequence fragment_masses(const CutIntervalSet& cuts, double sigma) {
    auto p = fragment_parts(cuts, sigma);
    p.own.push_back(p.root);
    return make_fragments(std::move(p.own));
}

std::vector<FragmentSequence> trajectory(const MarkSet& marks, const std::vector<double>& theta_grid) {
    std::vector<FragmentSequence> out;
    for (std::size_t i = 0; i < theta_grid.size(); ++i) {
        if (i && theta_grid[i] < theta_grid[i - 1]) fail(Errc::InvalidArgument, "theta grid must be increasing");
        out.push_back(fragment_masses(active_cuts(marks, theta_grid[i]), marks.sigma));
    }
    return out;
}

double pruned_length(const MarkSet& marks, double theta) {
    return fragment_parts(active_cuts(marks, theta), marks.sigma).root;
}

std::vector<long> fragment_labels(const CutIntervalSet& cuts, const std::vector<double>& times) {
    // cuts are in preorder: the innermost cut containing t is the last one in
    // that order whose interval contains t
    std::vector<long> out;
    out.reserve(times.size());
    for (double t : times) {
        long label = -1;
        for (std::size_t i = 0; i < cuts.cuts.size(); ++i) {
            const auto& iv = cuts.cuts[i].interval;
            if (iv.g < t && t < iv.d) label = long(i);
        }
        out.push_back(label);
    }
    return out;
}

bool refines(const MarkSet& marks, double theta_lo, double theta_hi) {
    auto lo = active_cuts(marks, theta_lo);
    auto hi = active_cuts(marks, theta_hi);
    std::vector<double> ends{0.0, marks.sigma};
    for (const auto* set : {&lo, &hi})
        for (const auto& c : set->cuts) {
            ends.push_back(c.interval.g);
            ends.push_back(c.interval.d);
        }
    std::sort(ends.begin(), ends.end());
    std::vector<double> mids;
    for (std::size_t i = 0; i + 1 < ends.size(); ++i)
        if (ends[i + 1] - ends[i] > 4e-9 * marks.dt) mids.push_back(0.5 * (ends[i] + ends[i + 1]));
    auto a = fragment_labels(lo, mids);
    auto b = fragment_labels(hi, mids);
    std::map<long, long> coarse_of;
    for (std::size_t i = 0; i < mids.size(); ++i) {
        auto [it, fresh] = coarse_of.emplace(b[i], a[i]);
        if (!fresh && it->second != a[i]) return false;
    }
    return true;
}

FragmentSequence merge_dislocation(const FragmentSequence& x, std::size_t i, const FragmentSequence& s) {
    if (i < 1 || i > x.masses.size()) fail(Errc::IndexOutOfRange, "fragment index out of range");
    std::vector<double> out;
    out.reserve(x.masses.size() - 1 + s.masses.size());
    for (std::size_t k = 0; k < x.masses.size(); ++k)
        if (k + 1 != i) out.push_back(x.masses[k]);
    out.insert(out.end(), s.masses.begin(), s.masses.end());
    return make_fragments(std::move(out));
}

} // namespace crtfrag
