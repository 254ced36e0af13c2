#pragma once

#include <cstddef>
#include <vector>

#include "crtfrag/exploration.hpp"

namespace crtfrag {

enum class CutOrigin { Node, Skeleton };

struct NodeMark {
    std::size_t jump = 0;  // position in the excursion's ledger
    std::size_t index = 0; // grid step of the jump
    double mass = 0.0;     // Delta_s
    double theta = 0.0;    // first mark time, Exp(Delta_s)
    double level = 0.0;    // H_s
    Interval interval;     // (s, d_{s,H_s})
};

struct SkeletonMark {
    double theta = 0.0;
    double level = 0.0;
    Interval interval; // component of {H > a} through the mark
};

struct MarkSet {
    double theta_max = 0.0;
    double sigma = 0.0;
    double dt = 0.0;
    std::vector<NodeMark> nodes;
    std::vector<SkeletonMark> skeleton;
};

/// Node marks: theta_s ~ Exp(Delta_s) per ledger jump, kept if <= theta_max.
std::vector<NodeMark> sample_node_marks(const ExcursionRecord& e, const HeightSeries& h, double theta_max,
                                        RngStream& rng);

/// Skeleton marks from a level census: K ~ Poisson(2 beta theta_max L), level
/// with probability N(a) da / L, component uniform at that level.
std::vector<SkeletonMark> sample_skeleton_marks(const HeightSeries& h, const LevelCensus& census, double beta,
                                                double theta_max, RngStream& rng);

/// Same law with continuous levels: K ~ Poisson(2 beta theta_max U) with U the
/// up-variation of H, each mark uniform on the upcrossing measure.
std::vector<SkeletonMark> sample_skeleton_marks_continuous(const HeightSeries& h, double beta, double theta_max,
                                                           RngStream& rng);

enum class SkeletonSampler { Census, Continuous };

/// Both mark families for one excursion.
MarkSet sample_marks(const ExcursionRecord& e, const HeightSeries& h, double beta, double theta_max, RngStream& rng,
                     SkeletonSampler sampler = SkeletonSampler::Continuous);

struct Cut {
    Interval interval;
    double level = 0.0;
    double theta = 0.0;
    CutOrigin origin = CutOrigin::Skeleton;
    long parent = -1; // index into CutIntervalSet::cuts, -1 for top level
};

struct CutIntervalSet {
    double sigma = 0.0;
    std::vector<Cut> cuts; // sorted by (g asc, d desc); parents precede children
};

/// Orders the cuts and links each to its smallest enclosing cut. Throws
/// NotLaminar if two intervals overlap without nesting.
CutIntervalSet make_laminar(std::vector<Cut> cuts, double sigma, double tolerance);

/// Marks active at theta as a laminar family. Throws BeyondSampledHorizon if
/// theta exceeds the sampled horizon.
CutIntervalSet active_cuts(const MarkSet& marks, double theta);

struct FragmentSequence {
    std::vector<double> masses; // nonincreasing
    double total = 0.0;
    double sum() const;
    bool operator==(const FragmentSequence&) const = default;
};

FragmentSequence make_fragments(std::vector<double> masses);

/// Each cut's interval minus its children, plus the root part; zeros dropped.
FragmentSequence fragment_masses(const CutIntervalSet& cuts, double sigma);

/// Own mass of every cut (same order as cuts) and of the root.
struct FragmentParts {
    double root = 0.0;
    std::vector<double> own;
};
FragmentParts fragment_parts(const CutIntervalSet& cuts, double sigma);

std::vector<FragmentSequence> trajectory(const MarkSet& marks, const std::vector<double>& theta_grid);

/// sigma^(theta): mass of the root fragment.
double pruned_length(const MarkSet& marks, double theta);

/// Innermost cut containing each time (-1 for the root fragment).
std::vector<long> fragment_labels(const CutIntervalSet& cuts, const std::vector<double>& times);

/// True if every fragment at theta_hi lies inside one fragment at theta_lo,
/// checked on the midpoints of the elementary intervals of both families.
bool refines(const MarkSet& marks, double theta_lo, double theta_hi);

/// Remove x_i (1-based), merge in s, sort nonincreasing.
FragmentSequence merge_dislocation(const FragmentSequence& x, std::size_t i, const FragmentSequence& s);

} // namespace crtfrag
