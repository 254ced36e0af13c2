#include "crtfrag/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace crtfrag {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept
{
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) noexcept
{
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

} // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, StreamTag tag, std::uint64_t replicate) noexcept
    : RngStream(seed, static_cast<std::uint64_t>(tag), replicate)
{
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t replicate) noexcept
{
    const std::uint64_t k = splitmix64(seed ^ splitmix64(tag));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    counter_ = {0u, 0u, static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
}

void RngStream::refill() noexcept
{
    buffer_ = philox(counter_, key_);
    if (++counter_[0] == 0) {
        ++counter_[1];
    }
    used_ = 0;
}

RngStream::result_type RngStream::operator()() noexcept
{
    if (used_ > 2) {
        refill();
    }
    const std::uint64_t lo = buffer_[used_];
    const std::uint64_t hi = buffer_[used_ + 1];
    used_ += 2;
    return (hi << 32) | lo;
}

double RngStream::uniform() noexcept
{
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept
{
    if (has_spare_normal_) {
        has_spare_normal_ = false;
        return spare_normal_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_normal_ = r * std::sin(phi);
    has_spare_normal_ = true;
    return r * std::cos(phi);
}

double RngStream::exponential(double rate) noexcept { return -std::log(uniform()) / rate; }

std::uint64_t RngStream::poisson(double mean)
{
    if (!(mean > 0.0)) {
        return 0;
    }
    if (mean < 30.0) {
        // Inversion by sequential search.
        double p = std::exp(-mean);
        double cdf = p;
        const double u = uniform();
        std::uint64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(*this);
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept
{
    const auto u = static_cast<unsigned __int128>((*this)()) * n;
    return static_cast<std::uint64_t>(u >> 64);
}

RngStream RngStream::split(std::uint64_t child) const noexcept
{
    RngStream out = *this;
    const std::uint64_t k = splitmix64((static_cast<std::uint64_t>(key_[1]) << 32 | key_[0]) ^ splitmix64(child + 0x632BE59BD9B4E019ull));
    out.key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    out.counter_ = {0u, 0u, counter_[2], counter_[3]};
    out.used_ = 4;
    out.has_spare_normal_ = false;
    return out;
}

} // namespace crtfrag
