#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "crtfrag/sampler.hpp"

namespace crtfrag {

// ---------------------------------------------------------------------------
// Exploration measure rho_t as a LIFO stack
// ---------------------------------------------------------------------------

struct StackLayer {
    enum class Kind : std::uint8_t { Continuous, Atom };
    Kind kind = Kind::Continuous;
    double height = 0.0;     // base height (continuous) or atom position
    double mass = 0.0;       // rho mass carried by the layer
    double kappa_mass = 0.0; // atoms: the full jump size
    bool operator==(const StackLayer&) const = default;
};

class ExplorationStack {
public:
    explicit ExplorationStack(double beta);

    /// A jump of size delta: atom at the current height.
    void push_jump(double delta);
    /// Positive continuous move: grows the top continuous layer.
    void grow(double mass);
    /// k_a: removes exactly mass a from the top. Throws Underflow if a exceeds
    /// the total mass by more than rounding.
    void erase(double a);
    /// Like erase but stops at the empty stack; returns the part not erased.
    double erase_clamped(double a);
    /// Signed continuous increment (grow or erase_clamped).
    double apply(double increment);

    double beta() const noexcept { return beta_; }
    double total_mass() const noexcept { return total_; }
    double atom_mass() const noexcept { return atoms_; }
    /// H(rho): the top of the support.
    double height() const noexcept;
    bool empty() const noexcept { return layers_.empty(); }
    const std::vector<StackLayer>& layers() const noexcept { return layers_; }
    std::size_t atom_count() const noexcept;

    bool operator==(const ExplorationStack&) const = default;

private:
    double beta_;
    std::vector<StackLayer> layers_;
    double total_ = 0.0;
    double atoms_ = 0.0;
};

/// One grid step of the exploration: jumps first, then the continuous part.
void evolve_stack(ExplorationStack& stack, double increment, const std::vector<double>& jumps);

// ---------------------------------------------------------------------------
// Height series with range-minimum index
// ---------------------------------------------------------------------------

/// Static sparse table of minima over a fixed array.
class RangeMin {
public:
    RangeMin() = default;
    explicit RangeMin(const std::vector<double>& values);
    /// min over [l, r], inclusive
    double query(std::size_t l, std::size_t r) const;
    std::size_t size() const noexcept { return n_; }

private:
    std::size_t n_ = 0;
    std::vector<std::vector<double>> table_;
};

struct Interval {
    double g = 0.0;
    double d = 0.0;
    double length() const noexcept { return d - g; }
    bool operator==(const Interval&) const = default;
};

class HeightSeries {
public:
    HeightSeries() = default;
    HeightSeries(double dt, std::vector<double> h);

    double dt() const noexcept { return dt_; }
    std::size_t n() const noexcept { return h_.size() - 1; } // steps
    double duration() const noexcept { return dt_ * double(n()); }
    const std::vector<double>& values() const noexcept { return h_; }
    double operator[](std::size_t i) const { return h_[i]; }
    double max() const noexcept { return max_; }
    /// inf of H over grid indices [l, r]
    double range_min(std::size_t l, std::size_t r) const { return rmq_.query(l, r); }

private:
    double dt_ = 0.0;
    std::vector<double> h_;
    double max_ = 0.0;
    RangeMin rmq_;
};

/// H_t = (X_t - I_t - atom mass of rho_t) / beta by one stack sweep over an excursion.
HeightSeries height_series(const ExcursionRecord& e, double beta);
HeightSeries height_series(const PathGrid& path, const BranchingMechanism& m);

/// The pre-jump value X_{s-} - I of every ledger jump of an excursion.
std::vector<double> pre_jump_values(const ExcursionRecord& e);

/// Maximal interval around grid index s on which H >= a, with linearly
/// interpolated ends. Throws AboveThePoint if a > H_s.
Interval ancestral_interval(const HeightSeries& h, std::size_t s, double a);

// ---------------------------------------------------------------------------
// Level census
// ---------------------------------------------------------------------------

struct LevelCensus {
    double da = 0.0;
    double offset = 0.0;                         // levels are (k + offset) * da
    std::vector<double> levels;
    std::vector<std::vector<Interval>> components; // of {H > a}, sorted by g
    double length = 0.0;                         // sum N(a) da

    std::size_t count(std::size_t k) const { return components[k].size(); }
};

/// Components of {H > a} per level. da <= 0 selects max(H)/256.
LevelCensus level_census(const HeightSeries& h, double da = 0.0, double offset = 0.0);

/// Visits every component of {H > a} for the levels a = (k + offset) da in
/// time order of their ends; cost O(n + #components).
template <class F>
void for_each_component(const HeightSeries& h, double da, double offset, F&& f);

/// Upcrossing measure U = sum of positive increments of H (the skeleton
/// length seen by a continuous level sweep).
double up_variation(const HeightSeries& h);

/// End of the component of {H > a} that starts with the upcrossing of
/// level a during step i (H_i <= a < H_{i+1}).
double component_end(const HeightSeries& h, std::size_t i, double a);

// ---------------------------------------------------------------------------
// From-scratch exploration measure
// ---------------------------------------------------------------------------

/// rho_t at grid index t of an excursion, rebuilt from the ledger with
/// atom masses I_t^s - X_{s-} (kappa mass Delta_s alongside).
ExplorationStack exploration_measure_at(const ExcursionRecord& e, std::size_t t, double beta);

// ---------------------------------------------------------------------------

template <class F>
void for_each_component(const HeightSeries& h, double da, double offset, F&& f) {
    const auto& v = h.values();
    const double dt = h.dt();
    struct Open {
        double level, g;
    };
    std::vector<Open> open;
    auto level_of = [&](long k) { return (double(k) + offset) * da; };
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        const double a0 = v[i], a1 = v[i + 1];
        if (a1 > a0) {
            // levels with H_i <= a < H_{i+1} open here, in increasing order
            long k = std::max(0L, long(std::ceil(a0 / da - offset)));
            while (k > 0 && level_of(k - 1) >= a0) --k;
            while (level_of(k) < a0) ++k;
            for (; level_of(k) < a1; ++k) {
                const double a = level_of(k);
                open.push_back({a, (double(i) + (a - a0) / (a1 - a0)) * dt});
            }
        } else if (a1 < a0) {
            // open levels >= H_{i+1} close inside this step
            while (!open.empty() && open.back().level >= a1) {
                const double a = open.back().level;
                double d = (double(i) + (a0 - a) / (a0 - a1)) * dt;
                f(a, Interval{open.back().g, d});
                open.pop_back();
            }
        }
    }
    const double end = h.duration();
    while (!open.empty()) {
        f(open.back().level, Interval{open.back().g, end});
        open.pop_back();
    }
}

} // namespace crtfrag
