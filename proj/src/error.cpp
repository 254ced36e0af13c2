#include "crtfrag/error.hpp"

namespace crtfrag {

std::string_view errc_name(Errc code) noexcept
{
    switch (code) {
    case Errc::InvalidArgument: return "invalid argument";
    case Errc::InvalidMechanism: return "invalid mechanism";
    case Errc::InfiniteVariationViolated: return "infinite-variation violated";
    case Errc::DivergentIntegral: return "divergent integral";
    case Errc::DegenerateAtZero: return "degenerate at zero";
    case Errc::HorizonExhausted: return "horizon exhausted";
    case Errc::Underflow: return "underflow";
    case Errc::AboveThePoint: return "above the point";
    case Errc::BeyondSampledHorizon: return "beyond sampled horizon";
    case Errc::NotLaminar: return "not laminar";
    case Errc::IndexOutOfRange: return "index out of range";
    case Errc::NoSkeletonPart: return "no skeleton part";
    case Errc::NoNodePart: return "no node part";
    case Errc::UnsupportedForMonteCarlo: return "unsupported for MC";
    case Errc::UnknownKey: return "unknown key";
    case Errc::InvalidField: return "invalid field";
    case Errc::SuiteMismatch: return "suite mismatch";
    case Errc::Io: return "I/O error";
    }
    return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code)
{
}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace crtfrag
