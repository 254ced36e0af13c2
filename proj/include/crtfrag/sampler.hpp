#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "crtfrag/mechanism.hpp"
#include "crtfrag/rng.hpp"

namespace crtfrag {

/// A ledger jump. It happens inside step `index`, i.e. right after grid time
/// t_index and before that step's Gaussian increment. Several jumps in one
/// step are kept in the order they occurred.
struct Jump {
    std::size_t index = 0;
    double size = 0.0;
    bool operator==(const Jump&) const = default;
};

struct SamplerOptions {
    /// Jump truncation level; negative selects the default (1e-3 for stable
    /// measures, 0 for finite activity).
    double epsilon = -1.0;
    /// Add the variance of the truncated small jumps to the Gaussian part.
    bool small_jump_gaussian = false;
};

/// One Euler step of X: compound-Poisson jumps above epsilon, then a Gaussian
/// move with the compensating drift. Finite-rate jumps run on an exponential
/// clock carried across steps, so a stepper is tied to one rng stream.
class LevyStepper {
public:
    LevyStepper(const BranchingMechanism& m, double dt, const SamplerOptions& opts = {});

    /// Appends this step's jump sizes to `jumps` and returns the Gaussian part.
    double step(RngStream& rng, std::vector<double>& jumps);

    double dt() const noexcept { return dt_; }
    double epsilon() const noexcept { return eps_; }
    double drift() const noexcept { return mean_ / dt_; }
    double gaussian_sd() const noexcept { return sd_; }
    double jump_rate() const noexcept { return rate_; }

private:
    double draw_size(RngStream& rng) const;

    BranchingMechanism m_;
    double dt_;
    double eps_ = 0.0;
    double mean_ = 0.0;
    double sd_ = 0.0;
    double rate_ = 0.0;
    std::vector<double> cumulative_; // atoms: cumulative rates
    double clock_ = -1.0;            // time left until the next jump
};

struct PathGrid {
    double dt = 0.0;
    std::size_t n = 0;
    std::vector<double> values;   // X at t_0..t_n, X_0 = 0
    std::vector<Jump> jumps;      // sorted by index
    std::vector<double> infimum;  // running minimum of the grid values
    double epsilon = 0.0;
};

PathGrid sample_path(const BranchingMechanism& m, double dt, double horizon, RngStream& rng,
                     const SamplerOptions& opts = {});

struct ExcursionRecord {
    std::size_t start = 0;     // grid index in the parent path
    std::size_t end = 0;
    double dt = 0.0;
    double sigma = 0.0;        // (end - start) * dt
    double local_time = 0.0;   // -I at the start
    std::vector<double> values; // X - I_start on start..end
    std::vector<Jump> jumps;    // indices relative to start
    bool censored = false;      // cut at the length cap; values.back() need not be 0
    bool descent = false;       // a single step from one new minimum to the next
};

struct ExcursionList {
    std::vector<ExcursionRecord> excursions;
    double local_time = 0.0;   // -I at the horizon
    double descent_time = 0.0; // time spent in single-step descents
};

/// Maximal grid intervals on which X - I > 0. Single-step descents have no
/// interior point; they are skipped unless `include_descents` is set, in which
/// case the lengths of all records add up to the time of the last minimum.
ExcursionList extract_excursions(const PathGrid& path, bool include_descents = false);

struct HarvestOptions {
    SamplerOptions sampler;
    /// Excursions reaching this length are emitted censored and X is reset to I.
    double length_cap = std::numeric_limits<double>::infinity();
    /// Stop on a Brownian-bridge crossing of the budget level inside a step.
    bool bridge_stop = false;
    /// Keep the local slices and ledgers (otherwise only lengths are filled).
    bool keep_paths = true;
    /// Also report single-step descents (flagged `descent`).
    bool include_descents = true;
};

struct HarvestSummary {
    double local_time = 0.0;
    double elapsed = 0.0;
    std::size_t excursions = 0;
    std::size_t censored = 0;
    double descent_time = 0.0;
};

using ExcursionCallback = std::function<void(const ExcursionRecord&)>;

/// Streams the excursions of X - I until -I reaches `local_time_budget`.
HarvestSummary harvest_excursions(const BranchingMechanism& m, double dt, double local_time_budget, RngStream& rng,
                                  const ExcursionCallback& on_excursion, const HarvestOptions& opts = {});

struct SubordinatorPath {
    std::vector<double> levels;      // ladder heights of -I
    std::vector<double> values;      // S at each ladder height
    std::vector<double> jumps;       // excursion lengths
    std::vector<double> jump_levels; // ladder height at which each jump starts
    double v_max = 0.0;
    double s_at_v_max = 0.0;
    double drift_time = 0.0; // time spent in single-step descents
};

struct FirstPassageOptions {
    SamplerOptions sampler;
    double time_cap = std::numeric_limits<double>::infinity();
    /// Detect crossings of -v inside a step with the Brownian-bridge probability.
    bool bridge_correction = false;
    bool include_descents = false;
};

/// S_v for v in (0, v_max] on the path's own ladder grid. Every descent step
/// is recorded as a ladder point; its jump is listed only if it is a real
/// excursion or `include_descents` is set in the options. Throws
/// HorizonExhausted when the time cap is hit first.
SubordinatorPath first_passage_subordinator(const BranchingMechanism& m, double v_max, double dt, RngStream& rng,
                                            const FirstPassageOptions& opts = {});

/// Ladder structure of an already sampled path. Its jumps are the lengths of
/// the path's excursions; single-step descents count as drift unless
/// `include_descents` is set.
SubordinatorPath subordinator_from_path(const PathGrid& path, bool include_descents = false);

struct FirstPassage {
    double time = 0.0;
    bool exhausted = false;
};

/// First time X <= -v, non-throwing.
FirstPassage first_passage_time(const BranchingMechanism& m, double v, double dt, RngStream& rng,
                                const FirstPassageOptions& opts = {});

/// Standard Brownian excursion of length sigma_target on a grid of step ~dt
/// (Vervaat transform of a bridge).
ExcursionRecord brownian_excursion(double sigma_target, double dt, RngStream& rng);

} // namespace crtfrag
