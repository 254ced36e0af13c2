#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace crtfrag {

// Purpose tags keep the streams of different consumers disjoint even when
// they share a master seed and a replicate index.
enum class StreamTag : std::uint64_t {
    Path = 1,
    Excursion = 2,
    Subordinator = 3,
    BrownianExcursion = 4,
    NodeMarks = 5,
    SkeletonMarks = 6,
    NodeMonteCarlo = 7,
    SkeletonSweep = 8,
    PrunedLaw = 9,
    SpecialMarkov = 10,
    PoissonRepresentation = 11,
    Fragmentation = 12,
    Test = 99,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Philox4x32-10 keyed by (master seed, tag), with the replicate index in the
/// upper half of the counter. A stream is a value: copying it forks the
/// sequence, and two streams built from the same triple are bit-identical.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, StreamTag tag, std::uint64_t replicate) noexcept;
    RngStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t replicate) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal() noexcept;
    double exponential(double rate) noexcept;
    std::uint64_t poisson(double mean);
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Derive an independent child stream (e.g. one per excursion).
    RngStream split(std::uint64_t child) const noexcept;

private:
    void refill() noexcept;

    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 4> buffer_{};
    unsigned used_ = 4;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

} // namespace crtfrag
