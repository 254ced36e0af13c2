#pragma once

#include <cstddef>
#include <limits>

#include "crtfrag/exploration.hpp"

namespace crtfrag {

struct LaplaceQuery {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    /// Throws InvalidArgument unless both are > 0.
    void validate() const;
};

struct DislocationEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
    double oracle = 0.0;
    double z = 0.0;
    /// Fills z from value, stderr and oracle (0 when stderr is 0).
    void finish();
};

struct SkeletonClosed {
    double lemma_form = 0.0; // 2b / (psi'psi^{-1}(l1) psi'psi^{-1}(l2))
    double a2_form = 0.0;    // 2b / (psi'psi^{-1}(l2) psi'psi^{-1}(l1 + l2))
};

SkeletonClosed oracle_ske_closed(const BranchingMechanism& m, const LaplaceQuery& q);

/// Spine rate of the Bismut decomposition, computed from its parts:
/// alpha + 2 beta u + int l (1 - e^{-u l}) pi(dl) with u = psi^{-1}(lambda).
double spine_rate(const BranchingMechanism& m, double lambda);

/// 2 beta int_0^inf db int_0^b da exp(-(b - a) r(l1 + l2) - a r(l2)), inner
/// integral in closed form, outer by exp-sinh quadrature.
double oracle_ske_quadrature(const BranchingMechanism& m, const LaplaceQuery& q);

/// 2 beta psi^{-1}(l1) psi^{-1}(l2).
double oracle_nu_ske_laplace(const BranchingMechanism& m, const LaplaceQuery& q);

/// (psi^{-1})'(lambda) int v e^{-v psi^{-1}(lambda)} pi(dv).
double oracle_nod_moment(const BranchingMechanism& m, double lambda);

/// 1 / (4 sqrt(l2 (l1 + l2))); defined for l1 >= 0, l2 > 0.
double brownian_reference(const LaplaceQuery& q);

struct NodMcOptions {
    double dt = 1e-3;
    /// Passage times beyond the cap score 0; <= 0 picks 40 / lambda.
    double time_cap = 0.0;
    /// Score S_v e^{-lambda S_v} 1{max jump of S on [0, v] <= max_jump}.
    double max_jump = std::numeric_limits<double>::infinity();
    SamplerOptions sampler;
};

/// w * mean of S_v e^{-lambda S_v} with v ~ pi / w. Finite activity only.
DislocationEstimate estimate_nod_mc(const BranchingMechanism& m, double lambda, std::size_t n, RngStream& rng,
                                    const NodMcOptions& opts = {});

/// 2 beta sum_levels da sum_{components e of {H > a}} |e| e^{-l1 |e| - l2 (sigma - |e|)}.
/// da <= 0 selects max(H)/256; levels sit at (k + offset) da.
double ske_functional(const HeightSeries& h, double sigma, double beta, const LaplaceQuery& q, double da = 0.0,
                      double offset = 0.5);

struct SkeSweepOptions {
    double dt = 1e-3;
    double da = 0.0;      // <= 0: per-excursion max(H)/256
    double offset = 0.5;  // midpoint levels
    double budget = 10.0; // local time per block
    std::size_t blocks = 100;
    double length_cap = 0.0; // <= 0 picks 40 / min(lambda1, lambda2)
    SamplerOptions sampler;
};

/// Per-block estimate of (1/L) sum over excursions of ske_functional; the
/// blocks are independent and the estimate is their mean. n counts blocks.
DislocationEstimate estimate_ske_sweep(const BranchingMechanism& m, const LaplaceQuery& q, RngStream& rng,
                                       const SkeSweepOptions& opts = {});

/// One block of estimate_ske_sweep, for callers that run blocks in parallel.
double ske_sweep_block(const BranchingMechanism& m, const LaplaceQuery& q, RngStream& rng,
                       const SkeSweepOptions& opts, std::size_t* excursions = nullptr);

/// One replicate of estimate_nod_mc, unweighted by the total rate.
double nod_replicate(const BranchingMechanism& m, double lambda, RngStream& rng, const NodMcOptions& opts);

} // namespace crtfrag
